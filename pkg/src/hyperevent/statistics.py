"""Author-model and citation-model statistics, and their transformation.

Statistics are evaluated for many candidate sets at once: a candidate block
is an integer array of shape ``(m, k)`` holding sorted actor positions (author
model) or work positions (citation model). The single-set functions
``eval_author_stats`` and ``eval_citation_stats`` wrap the block evaluators
for id-based use.

Statistics that average over pairs or triples of a set are 0 when the set is
too small to contain one.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

from .history import WORK_KEY_BASE, HistoryIndex, encode_keys


class AuthorStat(enum.Enum):
    RatioChilean = "Ratio Chileans"
    HeterogeneityChilean = "Heterogeneity Chilean"
    CitationPopAuthor = "Citation Popularity of Author"
    PublicationActivity = "Publication Activity"
    CoauthorPairRep = "Coauthor-pair Repetition"
    CoauthorTripleRep = "Coauthor-triple Repetition"
    CoauthorQuartetRep = "Coauthor-quartet Repetition"
    CollabWithCitingAuthor = "Collaborate with Citing Author"
    ClosureByCoauthor = "Closure by Coauthor"
    ClosureByCitingSameWork = "Closure by Citing same Work"

    @property
    def label(self) -> str:
        return self.value

    @property
    def exogenous(self) -> bool:
        return self in (AuthorStat.RatioChilean, AuthorStat.HeterogeneityChilean)


class CitationStat(enum.Enum):
    CitationPopWork = "Citation Popularity of Work"
    CocitationPopPair = "Cocitation Popularity: Pair"
    CocitationPopTriple = "Cocitation Popularity: Triple"
    CitationRepetition = "Citation Repetition"
    OutdegreePop = "Outdegree Popularity"
    CiteWorkAndItsCitations = "Cite Work and its Citations"
    SelfCitation = "Self Citation"
    AdoptCitationOfCoauthor = "Adopt Citation of Coauthor"
    CiteWorkOfCoauthor = "Cite Work of Coauthor"
    AuthorCitesAuthorRep = "Author cites Author Repetition"
    AuthorCitesAuthorRec = "Author cites Author Reciprocation"
    CiteMuchCitedAuthors = "Cite much Cited Authors"
    CociteCoauthorPairs = "Cocite Coauthor Pairs"
    AuthorCocitation = "Author Cocitation"

    @property
    def label(self) -> str:
        return self.value

    @property
    def exogenous(self) -> bool:
        return False


ALL_AUTHOR_STATS = tuple(AuthorStat)
ALL_CITATION_STATS = tuple(CitationStat)


def parse_kind(name, model: str | None = None):
    """Resolve a kind from its member name or display label."""
    if isinstance(name, (AuthorStat, CitationStat)):
        return name
    enums = {"author": (AuthorStat,), "citation": (CitationStat,)}.get(model, (AuthorStat, CitationStat))
    for e in enums:
        if name in e.__members__:
            return e[name]
        for member in e:
            if member.value.lower() == str(name).lower():
                return member
    raise ValueError(f"unknown statistic kind {name!r}")


# --------------------------------------------------------------------------- helpers


def _column_mean(values: np.ndarray, cands: np.ndarray, order: int, fn) -> np.ndarray:
    """Average ``fn(cols)`` over all size-``order`` column subsets of ``cands``."""
    m, k = cands.shape
    if k < order:
        return np.zeros(m)
    acc = np.zeros(m)
    n = 0
    for cols in combinations(range(k), order):
        acc += fn(*(cands[:, c] for c in cols))
        n += 1
    return acc / n


def _pair_mean(mat: np.ndarray, cands: np.ndarray) -> np.ndarray:
    return _column_mean(None, cands, 2, lambda x, y: mat[x, y])


def _table_mean(table, cands: np.ndarray, order: int) -> np.ndarray:
    m, k = cands.shape
    if k < order:
        return np.zeros(m)
    acc = np.zeros(m)
    n = 0
    for cols in combinations(range(k), order):
        acc += table.lookup(encode_keys(cands[:, cols], table.base))
        n += 1
    return acc / n


def _as_block(cands) -> np.ndarray:
    block = np.asarray(cands, dtype=np.int64)
    if block.ndim != 2:
        raise ValueError("candidate block must be two-dimensional")
    return np.sort(block, axis=1)


# --------------------------------------------------------------------------- author model


def author_stat_block(index: HistoryIndex, cands, kinds: Sequence[AuthorStat]) -> np.ndarray:
    """Raw author statistics for each row of a ``(m, k)`` block of actor positions."""
    cands = _as_block(cands)
    m, k = cands.shape
    if k < 1:
        raise ValueError("author sets must be non-empty")
    out = np.zeros((m, len(kinds)))
    for col, kind in enumerate(kinds):
        kind = parse_kind(kind, "author")
        if kind is AuthorStat.RatioChilean:
            v = index.chilean[cands].mean(axis=1)
        elif kind is AuthorStat.HeterogeneityChilean:
            ch = index.chilean
            v = _column_mean(None, cands, 2, lambda x, y: np.abs(ch[x] - ch[y]))
        elif kind is AuthorStat.CitationPopAuthor:
            v = index.popularity[cands].mean(axis=1)
        elif kind is AuthorStat.PublicationActivity:
            v = index.pubcount[cands].mean(axis=1)
        elif kind is AuthorStat.CoauthorPairRep:
            v = _pair_mean(index.coauth_mat, cands)
        elif kind is AuthorStat.CoauthorTripleRep:
            v = _table_mean(index.actor_sets[3], cands, 3)
        elif kind is AuthorStat.CoauthorQuartetRep:
            v = _table_mean(index.actor_sets[4], cands, 4)
        elif kind is AuthorStat.CollabWithCitingAuthor:
            ca = index.cite_aa_mat
            v = _column_mean(None, cands, 2, lambda x, y: (ca[x, y] + ca[y, x]) / 2.0)
        elif kind is AuthorStat.ClosureByCoauthor:
            v = _pair_mean(index.closure_coauth_mat, cands)
        elif kind is AuthorStat.ClosureByCitingSameWork:
            v = _pair_mean(index.closure_work_mat, cands)
        else:  # pragma: no cover
            raise ValueError(kind)
        out[:, col] = v
    return out


def eval_author_stats(index: HistoryIndex, authors: Iterable[str], kinds: Sequence[AuthorStat]) -> np.ndarray:
    """Raw author statistic vector for one author set given by actor ids."""
    ids = set(authors)
    if not ids:
        raise ValueError("author set is empty")
    pos = sorted(index.registry.position(a) for a in ids)
    return author_stat_block(index, np.array([pos]), kinds)[0]


# --------------------------------------------------------------------------- citation model


class _WorkScores:
    """Per-work score vectors for one author set, computed on demand."""

    def __init__(self, index: HistoryIndex, authors: np.ndarray):
        self.index = index
        self.authors = authors
        self.nw = index.n_works
        self._cache = {}

    def get(self, name):
        if name not in self._cache:
            self._cache[name] = getattr(self, "_" + name)()
        return self._cache[name]

    def _coauth_min(self, weights: np.ndarray, target: np.ndarray) -> np.ndarray:
        # sum over i in A and j != i of min(weights[i, j], target[j, l]); weights diagonal must be 0
        acc = np.zeros(self.nw)
        for i in self.authors.tolist():
            acc += np.minimum(weights[i][:, None], target).sum(axis=0)
        return acc

    def _cite_rep(self):
        return self.index.aw_cite[self.authors, : self.nw].sum(axis=0).astype(float)

    def _self_cite(self):
        return self.index.aw_auth[self.authors, : self.nw].sum(axis=0).astype(float)

    def _adopt(self):
        idx = self.index
        return self._coauth_min(idx.coauth_mat, idx.aw_cite[:, : self.nw])

    def _coauthor_work(self):
        idx = self.index
        return self._coauth_min(idx.coauth_mat, idx.aw_auth[:, : self.nw].astype(np.int64))

    def _cites_author(self):
        ca = self.index.cite_aa_mat.copy()
        np.fill_diagonal(ca, 0)
        return self._coauth_min(ca, self.index.aw_auth[:, : self.nw].astype(np.int64))

    def _cited_by_author(self):
        ca = self.index.cite_aa_mat.T.copy()
        np.fill_diagonal(ca, 0)
        return self._coauth_min(ca, self.index.aw_auth[:, : self.nw].astype(np.int64))

    def _max_pop(self):
        idx = self.index
        auth = idx.aw_auth[:, : self.nw].astype(bool)
        pop = np.where(auth, idx.popularity[:, None], -1)
        return pop.max(axis=0).astype(float) if self.nw else np.zeros(0)

    def _coauthor_reach(self):
        # reach[l, j] > 0 iff some author i of l has coauthored with j != i
        idx = self.index
        auth = idx.aw_auth[:, : self.nw].astype(float)
        return auth.T @ (idx.coauth_mat > 0).astype(float)

    def _cocite_reach(self):
        idx = self.index
        auth = idx.aw_auth[:, : self.nw].astype(float)
        return auth.T @ (idx.cocite_aa_mat > 0).astype(float)


def _reach_pairs(reach: np.ndarray, auth: np.ndarray, cands: np.ndarray) -> np.ndarray:
    def fn(x, y):
        return ((reach[x] * auth[:, y].T).sum(axis=1) > 0).astype(float)

    return _column_mean(None, cands, 2, fn)


def citation_stat_block(
    index: HistoryIndex,
    cands,
    authors,
    kinds: Sequence[CitationStat],
    scores: _WorkScores | None = None,
) -> np.ndarray:
    """Raw citation statistics for each row of a ``(m, k)`` block of work positions.

    ``authors`` holds the actor positions of the citing author set.
    """
    cands = _as_block(cands)
    m, k = cands.shape
    authors = np.unique(np.asarray(authors, dtype=np.int64))
    if k < 1:
        raise ValueError("citation sets must be non-empty")
    if len(authors) < 1:
        raise ValueError("author set is empty")
    if m and (cands.min() < 0 or cands.max() >= index.n_works):
        raise ValueError("candidate works must precede the snapshot position")
    if scores is None:
        scores = _WorkScores(index, authors)
    nw = index.n_works
    na = float(len(authors))
    out = np.zeros((m, len(kinds)))
    for col, kind in enumerate(kinds):
        kind = parse_kind(kind, "citation")
        if kind is CitationStat.CitationPopWork:
            v = index.indegree[:nw][cands].mean(axis=1)
        elif kind is CitationStat.CocitationPopPair:
            v = _table_mean(index.work_sets[2], cands, 2)
        elif kind is CitationStat.CocitationPopTriple:
            v = _table_mean(index.work_sets[3], cands, 3)
        elif kind is CitationStat.CitationRepetition:
            v = scores.get("cite_rep")[cands].mean(axis=1) / na
        elif kind is CitationStat.OutdegreePop:
            v = index.outdeg[:nw][cands].mean(axis=1)
        elif kind is CitationStat.CiteWorkAndItsCitations:
            edges = index.cite_edges

            def fn(x, y):
                return (
                    edges.lookup(x * WORK_KEY_BASE + y) + edges.lookup(y * WORK_KEY_BASE + x)
                ).astype(float)

            v = _column_mean(None, cands, 2, fn)
        elif kind is CitationStat.SelfCitation:
            v = scores.get("self_cite")[cands].mean(axis=1) / na
        elif kind is CitationStat.AdoptCitationOfCoauthor:
            v = scores.get("adopt")[cands].mean(axis=1) / na
        elif kind is CitationStat.CiteWorkOfCoauthor:
            v = scores.get("coauthor_work")[cands].mean(axis=1) / na
        elif kind is CitationStat.AuthorCitesAuthorRep:
            v = scores.get("cites_author")[cands].mean(axis=1) / na
        elif kind is CitationStat.AuthorCitesAuthorRec:
            v = scores.get("cited_by_author")[cands].mean(axis=1) / na
        elif kind is CitationStat.CiteMuchCitedAuthors:
            v = scores.get("max_pop")[cands].mean(axis=1)
        elif kind is CitationStat.CociteCoauthorPairs:
            v = _reach_pairs(scores.get("coauthor_reach"), index.aw_auth[:, :nw], cands)
        elif kind is CitationStat.AuthorCocitation:
            v = _reach_pairs(scores.get("cocite_reach"), index.aw_auth[:, :nw], cands)
        else:  # pragma: no cover
            raise ValueError(kind)
        out[:, col] = v
    return out


def eval_citation_stats(
    index: HistoryIndex, works: Iterable[str], authors: Iterable[str], kinds: Sequence[CitationStat]
) -> np.ndarray:
    """Raw citation statistic vector for one citation set given by work ids."""
    wids = set(works)
    if not wids:
        raise ValueError("citation set is empty")
    pos = []
    for w in wids:
        if w not in index.work_pos:
            raise KeyError(f"unknown work {w!r} (not published before the snapshot)")
        pos.append(index.work_pos[w])
    apos = [index.registry.position(a) for a in set(authors)]
    return citation_stat_block(index, np.array([sorted(pos)]), apos, kinds)[0]


# --------------------------------------------------------------------------- design rows


@dataclass
class RawDesignRow:
    stratum: int
    is_event: bool
    members: tuple
    values: dict


@dataclass
class RawDesign:
    """Column-oriented raw design for one model.

    Rows of a stratum are contiguous and the event row comes first.
    ``members`` is ragged: row ``r`` owns ``member_flat[member_offsets[r]:member_offsets[r+1]]``.
    """

    model: str
    kinds: tuple
    stratum: np.ndarray
    is_event: np.ndarray
    values: np.ndarray
    member_flat: np.ndarray
    member_offsets: np.ndarray
    member_names: Sequence[str] = field(repr=False, default=())

    def __len__(self) -> int:
        return len(self.stratum)

    def members(self, r: int) -> tuple:
        pos = self.member_flat[self.member_offsets[r] : self.member_offsets[r + 1]]
        if len(self.member_names):
            return tuple(self.member_names[p] for p in pos)
        return tuple(int(p) for p in pos)

    def rows(self):
        for r in range(len(self)):
            yield RawDesignRow(
                int(self.stratum[r]),
                bool(self.is_event[r]),
                self.members(r),
                {k: float(v) for k, v in zip(self.kinds, self.values[r])},
            )


# --------------------------------------------------------------------------- transform


@dataclass
class TransformSpec:
    """Per-kind sqrt / standardize flags and the fitted scaling constants."""

    kinds: tuple
    sqrt: tuple
    standardize: tuple
    means: np.ndarray | None = None
    sds: np.ndarray | None = None

    @classmethod
    def default(
        cls,
        kinds: Sequence,
        sqrt: bool = True,
        standardize: bool = True,
        citation_repetition_sqrt: bool = True,
    ) -> "TransformSpec":
        """Endogenous kinds get sqrt and standardization; exogenous kinds are left as is."""
        kinds = tuple(parse_kind(k) for k in kinds)
        sq, st = [], []
        for k in kinds:
            endo = not k.exogenous
            use_sqrt = sqrt and endo
            if k is CitationStat.CitationRepetition and not citation_repetition_sqrt:
                use_sqrt = False
            sq.append(use_sqrt)
            st.append(standardize and endo)
        return cls(kinds, tuple(sq), tuple(st))

    @classmethod
    def identity(cls, kinds: Sequence) -> "TransformSpec":
        kinds = tuple(parse_kind(k) for k in kinds)
        n = len(kinds)
        return cls(kinds, (False,) * n, (False,) * n, np.zeros(n), np.ones(n))

    @property
    def fitted(self) -> bool:
        return self.means is not None and self.sds is not None

    @property
    def degenerate(self) -> list:
        if not self.fitted:
            return []
        return [k for k, s, sd in zip(self.kinds, self.standardize, self.sds) if s and sd == 0]

    def _root(self, values: np.ndarray) -> np.ndarray:
        values = np.array(values, dtype=float, copy=True)
        cols = np.flatnonzero(self.sqrt)
        if len(cols):
            sub = values[..., cols]
            if np.any(sub < 0):
                raise ArithmeticError("negative raw value for a square-root transformed statistic")
            values[..., cols] = np.sqrt(sub)
        return values

    def to_dict(self) -> dict:
        return {
            "kinds": [k.name for k in self.kinds],
            "sqrt": list(self.sqrt),
            "standardize": list(self.standardize),
            "means": None if self.means is None else [float(x) for x in self.means],
            "sds": None if self.sds is None else [float(x) for x in self.sds],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TransformSpec":
        return cls(
            tuple(parse_kind(k) for k in d["kinds"]),
            tuple(bool(x) for x in d["sqrt"]),
            tuple(bool(x) for x in d["standardize"]),
            None if d.get("means") is None else np.array(d["means"], dtype=float),
            None if d.get("sds") is None else np.array(d["sds"], dtype=float),
        )


def _values_of(rows, kinds) -> np.ndarray:
    if isinstance(rows, RawDesign):
        return rows.values
    if isinstance(rows, np.ndarray):
        return rows
    rows = list(rows)
    return np.array([[r.values[k] for k in kinds] for r in rows], dtype=float)


def fit_transform(rows, spec: TransformSpec) -> TransformSpec:
    """Fit mean and sd (n-1 denominator) of the root-transformed columns over all rows."""
    values = _values_of(rows, spec.kinds)
    if values.ndim != 2 or values.shape[0] == 0:
        raise ValueError("cannot fit a transform on an empty design")
    root = spec._root(values)
    p = len(spec.kinds)
    means = np.zeros(p)
    sds = np.ones(p)
    for j in range(p):
        if spec.standardize[j]:
            means[j] = root[:, j].mean()
            sds[j] = root[:, j].std(ddof=1) if root.shape[0] > 1 else 0.0
            if not np.isfinite(sds[j]) or sds[j] <= 1e-12 * max(1.0, abs(means[j])):
                sds[j] = 0.0
    return TransformSpec(spec.kinds, spec.sqrt, spec.standardize, means, sds)


def apply_transform(row, spec: TransformSpec):
    """Map raw values through the fitted transform.

    Accepts a ``RawDesignRow``, a 1-d vector or a 2-d matrix of raw values.
    Standardized columns with zero sd map to 0.
    """
    if not spec.fitted:
        raise ValueError("transform spec has not been fitted")
    if isinstance(row, RawDesignRow):
        vec = np.array([row.values[k] for k in spec.kinds], dtype=float)
        out = apply_transform(vec, spec)
        return RawDesignRow(row.stratum, row.is_event, row.members, dict(zip(spec.kinds, out.tolist())))
    values = spec._root(np.asarray(row, dtype=float))
    std = np.asarray(spec.standardize)
    safe_sd = np.where(spec.sds > 0, spec.sds, 1.0)
    scaled = (values - spec.means) / safe_sd
    scaled = np.where(std & (spec.sds == 0), 0.0, scaled)
    return np.where(std, scaled, values)
