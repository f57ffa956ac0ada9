"""Incremental store of the past coauthorship and citation network.

``HistoryIndex`` is fed publications in sequence order and answers queries
about everything published strictly before its ``as_of`` position. Actors are
addressed by their registry position and works by their publication order
internally; the public query methods take the original string ids.

Pairwise attributes over actors are dense ``N x N`` arrays and author/work
attributes are dense ``N x W`` arrays. Joint counts over actor triples and
quartets, and cocitation counts over work pairs and triples, are sparse tables
keyed by an integer encoding of the sorted index tuple.
"""

from __future__ import annotations

import hashlib
import io
import pickle
from itertools import combinations
from math import comb
from pathlib import Path

import numpy as np

from .core import ActorRegistry, EventStream, Publication

# work-index base for encoding work tuples as int64 keys (triples need 3*20 bits)
WORK_KEY_BASE = 1 << 20
SNAPSHOT_MAGIC = b"HYEVIDX\x00"
SNAPSHOT_VERSION = 1


class HistoryError(ValueError):
    pass


class StaleSnapshotError(RuntimeError):
    pass


def encode_keys(tuples: np.ndarray, base: int) -> np.ndarray:
    """Encode rows of sorted non-negative ints as scalar int64 keys."""
    tuples = np.asarray(tuples, dtype=np.int64)
    key = np.zeros(tuples.shape[0], dtype=np.int64)
    for col in range(tuples.shape[1]):
        key = key * base + tuples[:, col]
    return key


class CountTable:
    """Sparse counts keyed by encoded sorted tuples, with vectorized lookup."""

    def __init__(self, base: int):
        self.base = base
        self.counts: dict[int, int] = {}
        self._frozen = None

    def add(self, key: int, amount: int = 1) -> None:
        self.counts[key] = self.counts.get(key, 0) + amount
        self._frozen = None

    def get(self, key: int) -> int:
        return self.counts.get(key, 0)

    def lookup(self, keys: np.ndarray) -> np.ndarray:
        if self._frozen is None:
            if self.counts:
                k = np.fromiter(self.counts.keys(), dtype=np.int64, count=len(self.counts))
                v = np.fromiter(self.counts.values(), dtype=np.int64, count=len(self.counts))
                order = np.argsort(k)
                self._frozen = (k[order], v[order])
            else:
                self._frozen = (np.zeros(0, np.int64), np.zeros(0, np.int64))
        k, v = self._frozen
        if len(k) == 0:
            return np.zeros(len(keys), dtype=np.int64)
        pos = np.searchsorted(k, keys)
        pos = np.minimum(pos, len(k) - 1)
        hit = k[pos] == keys
        return np.where(hit, v[pos], 0)

    def __getstate__(self):
        return {"base": self.base, "counts": self.counts}

    def __setstate__(self, state):
        self.base = state["base"]
        self.counts = state["counts"]
        self._frozen = None


class HistoryIndex:
    """All network attributes of the publication history before ``as_of``."""

    def __init__(self, registry: ActorRegistry, capacity: int = 64):
        n = len(registry)
        if n ** 4 >= 2 ** 63:
            raise HistoryError("actor universe too large for quartet key encoding")
        self.registry = registry
        self.n_actors = n
        self.chilean = np.array(registry.chilean, dtype=float)
        self.as_of: int | None = None
        self.version = 0

        self.works: list[str] = []
        self.work_pos: dict[str, int] = {}
        self.work_seq: list[int] = []
        self.work_authors: list[np.ndarray] = []
        self.work_cites: list[np.ndarray] = []
        self.actor_works: list[set[int]] = [set() for _ in range(n)]
        self.citers: list[set[int]] = []

        self.pubcount = np.zeros(n, dtype=np.int64)
        self.coauth_mat = np.zeros((n, n), dtype=np.int64)  # zero diagonal
        self.cite_aa_mat = np.zeros((n, n), dtype=np.int64)
        self.popularity = np.zeros(n, dtype=np.int64)
        self.cocite_aa_mat = np.zeros((n, n), dtype=np.int64)  # zero diagonal
        self.closure_work_mat = np.zeros((n, n), dtype=np.int64)
        self._closure_coauth = None

        self.aw_cite = np.zeros((n, capacity), dtype=np.int64)
        self.aw_auth = np.zeros((n, capacity), dtype=np.int8)
        self.indegree = np.zeros(capacity, dtype=np.int64)
        self.outdeg = np.zeros(capacity, dtype=np.int64)

        self.actor_sets = {3: CountTable(max(n, 1)), 4: CountTable(max(n, 1))}
        self.work_sets = {2: CountTable(WORK_KEY_BASE), 3: CountTable(WORK_KEY_BASE)}
        self.cite_edges = CountTable(WORK_KEY_BASE)

    # ------------------------------------------------------------------ building

    @classmethod
    def from_stream(cls, stream: EventStream, upto: int | None = None) -> "HistoryIndex":
        idx = cls(stream.registry, capacity=max(len(stream), 1))
        for p in stream.publications[:upto]:
            idx.apply_event(p)
        return idx

    @property
    def n_works(self) -> int:
        return len(self.works)

    def _grow(self, need: int) -> None:
        cap = self.indegree.shape[0]
        if need <= cap:
            return
        new = max(need, 2 * cap)
        n = self.n_actors
        for name in ("aw_cite", "aw_auth"):
            old = getattr(self, name)
            arr = np.zeros((n, new), dtype=old.dtype)
            arr[:, :cap] = old
            setattr(self, name, arr)
        for name in ("indegree", "outdeg"):
            old = getattr(self, name)
            arr = np.zeros(new, dtype=old.dtype)
            arr[:cap] = old
            setattr(self, name, arr)

    def apply_event(self, pub: Publication) -> "HistoryIndex":
        """Add one publication; afterwards ``as_of == pub.seq + 1``."""
        if self.as_of is not None and pub.seq < self.as_of:
            raise HistoryError(f"out-of-order event: seq {pub.seq} before as-of {self.as_of}")
        if pub.work in self.work_pos:
            raise HistoryError(f"work {pub.work!r} already applied")
        if not pub.authors:
            raise HistoryError(f"work {pub.work!r} has no authors")
        try:
            a = np.array(sorted(self.registry.position(x) for x in pub.authors), dtype=np.int64)
        except KeyError as exc:
            raise HistoryError(str(exc)) from None
        cited = []
        for c in pub.citations:
            if c not in self.work_pos:
                raise HistoryError(f"unknown cited work {c!r} in {pub.work!r}")
            cited.append(self.work_pos[c])
        c = np.array(sorted(cited), dtype=np.int64)
        w = self.n_works
        self._grow(w + 1)

        # authors of cited works: targets of author-to-author citations
        if len(c):
            targets = np.unique(np.concatenate([self.work_authors[h] for h in c]))
        else:
            targets = np.zeros(0, dtype=np.int64)
        self.cite_aa_mat[np.ix_(a, targets)] += 1
        self.popularity[targets] += 1
        if len(targets) > 1:
            self.cocite_aa_mat[np.ix_(targets, targets)] += 1
            self.cocite_aa_mat[targets, targets] -= 1

        self.pubcount[a] += 1
        if len(a) > 1:
            self.coauth_mat[np.ix_(a, a)] += 1
            self.coauth_mat[a, a] -= 1
        for order in (3, 4):
            if len(a) >= order:
                table = self.actor_sets[order]
                for sub in combinations(a.tolist(), order):
                    table.add(int(encode_keys(np.array([sub]), table.base)[0]))
        self._closure_coauth = None

        self.aw_auth[a, w] = 1
        if len(c):
            self.aw_cite[np.ix_(a, c)] += 1
            m = self.aw_cite[:, :w]
            for i in a.tolist():
                row = np.minimum(m[i][None, :], m).sum(axis=1)
                self.closure_work_mat[i, :] = row
                self.closure_work_mat[:, i] = row
            self.indegree[c] += 1
            for order in (2, 3):
                if len(c) >= order:
                    subs = np.array(list(combinations(c.tolist(), order)), dtype=np.int64)
                    table = self.work_sets[order]
                    for key in encode_keys(subs, WORK_KEY_BASE).tolist():
                        table.add(key)
            for h in c.tolist():
                self.cite_edges.add(w * WORK_KEY_BASE + h)
                self.citers[h].add(w)
        self.outdeg[w] = len(c)

        self.works.append(pub.work)
        self.work_pos[pub.work] = w
        self.work_seq.append(pub.seq)
        self.work_authors.append(a)
        self.work_cites.append(c)
        self.citers.append(set())
        for i in a.tolist():
            self.actor_works[i].add(w)
        self.as_of = pub.seq + 1
        self.version += 1
        return self

    def snapshot(self) -> "Snapshot":
        return Snapshot(self)

    # ------------------------------------------------------------------ derived arrays

    @property
    def closure_coauth_mat(self) -> np.ndarray:
        """Pairwise sum over third actors k of min(coauth(i,k), coauth(j,k))."""
        if self._closure_coauth is None:
            co = self.coauth_mat
            n = self.n_actors
            out = np.zeros((n, n), dtype=np.int64)
            chunk = max(1, 2_000_000 // max(n * n, 1))
            for start in range(0, n, chunk):
                stop = min(n, start + chunk)
                out[start:stop] = np.minimum(co[start:stop, None, :], co[None, :, :]).sum(axis=2)
            self._closure_coauth = out
        return self._closure_coauth

    # ------------------------------------------------------------------ id resolution

    def _actor(self, i) -> int:
        try:
            return self.registry.position(i)
        except KeyError as exc:
            raise KeyError(str(exc)) from None

    def _work(self, h) -> int:
        try:
            return self.work_pos[h]
        except KeyError:
            raise KeyError(f"unknown work {h!r}") from None

    # ------------------------------------------------------------------ attribute queries

    def cite_aw(self, authors=(), works=()) -> int:
        """Number of past works authored by all of ``authors`` and citing all of ``works``."""
        a = {self._actor(i) for i in authors}
        c = {self._work(h) for h in works}
        return self._cite_aw(a, c)

    def _cite_aw(self, a, c) -> int:
        sets = [self.actor_works[i] for i in a] + [self.citers[h] for h in c]
        if not sets:
            return self.n_works
        sets.sort(key=len)
        result = set(sets[0])
        for s in sets[1:]:
            result &= s
            if not result:
                break
        return len(result)

    def subrep(self, authors=(), works=(), k: int = 1, kstar: int = 0) -> float:
        """Average of ``cite_aw`` over all size-k author subsets times size-kstar work subsets."""
        if k < 0 or kstar < 0:
            raise ValueError("subset orders must be non-negative")
        if k == 0 and kstar == 0:
            raise ValueError("subset orders k and kstar cannot both be zero")
        a = sorted({self._actor(i) for i in authors})
        c = sorted({self._work(h) for h in works})
        if len(a) < k or len(c) < kstar:
            return 0.0
        total = 0
        for sa in combinations(a, k):
            for sc in combinations(c, kstar):
                total += self._cite_aw(sa, sc)
        return total / (comb(len(a), k) * comb(len(c), kstar))

    def auth(self, i, h) -> int:
        return int(self.aw_auth[self._actor(i), self._work(h)])

    def coauth(self, i, j) -> int:
        pi, pj = self._actor(i), self._actor(j)
        if pi == pj:
            return int(self.pubcount[pi])
        return int(self.coauth_mat[pi, pj])

    def cite_aa(self, i, j) -> int:
        """Number of past works by i whose references include a work by j."""
        pi, pj = self._actor(i), self._actor(j)
        if pi == pj:
            raise ValueError("cite_aa is not defined for i == j")
        return int(self.cite_aa_mat[pi, pj])

    def citation_popularity(self, i) -> int:
        return int(self.popularity[self._actor(i)])

    def cocite_aa(self, i, j) -> int:
        pi, pj = self._actor(i), self._actor(j)
        if pi == pj:
            raise ValueError("cocite_aa is not defined for i == j")
        return int(self.cocite_aa_mat[pi, pj])

    def cite_ww(self, k, h) -> int:
        """1 if work k cites work h."""
        pk, ph = self._work(k), self._work(h)
        return int(self.cite_edges.get(pk * WORK_KEY_BASE + ph) > 0)

    def outdegree(self, h) -> int:
        return int(self.outdeg[self._work(h)])

    def in_citations(self, h) -> int:
        return int(self.indegree[self._work(h)])

    def publication_count(self, i) -> int:
        return int(self.pubcount[self._actor(i)])

    # ------------------------------------------------------------------ persistence

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_closure_coauth"] = None
        return state

    def save(self, path) -> None:
        payload = pickle.dumps(self, protocol=pickle.HIGHEST_PROTOCOL)
        digest = hashlib.sha256(payload).digest()
        with open(path, "wb") as fh:
            fh.write(SNAPSHOT_MAGIC)
            fh.write(SNAPSHOT_VERSION.to_bytes(2, "little"))
            fh.write(digest)
            fh.write(payload)

    @classmethod
    def load(cls, path) -> "HistoryIndex":
        data = Path(path).read_bytes()
        buf = io.BytesIO(data)
        if buf.read(len(SNAPSHOT_MAGIC)) != SNAPSHOT_MAGIC:
            raise HistoryError("not a history snapshot file")
        version = int.from_bytes(buf.read(2), "little")
        if version != SNAPSHOT_VERSION:
            raise HistoryError(f"unsupported snapshot version {version}")
        digest = buf.read(32)
        payload = buf.read()
        if hashlib.sha256(payload).digest() != digest:
            raise HistoryError("snapshot checksum mismatch")
        obj = pickle.loads(payload)
        if not isinstance(obj, cls):
            raise HistoryError("snapshot does not contain a HistoryIndex")
        return obj


class Snapshot:
    """Read handle pinned to the index state at creation time.

    Any attribute access after the underlying index has advanced raises
    ``StaleSnapshotError``.
    """

    def __init__(self, index: HistoryIndex):
        object.__setattr__(self, "_index", index)
        object.__setattr__(self, "_version", index.version)
        object.__setattr__(self, "pinned_as_of", index.as_of)

    def __getattr__(self, name):
        index = object.__getattribute__(self, "_index")
        if index.version != object.__getattribute__(self, "_version"):
            raise StaleSnapshotError("history index advanced past the pinned position")
        return getattr(index, name)

    def __setattr__(self, name, value):
        raise AttributeError("snapshots are read-only")
