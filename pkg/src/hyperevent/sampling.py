"""Size-matched case-control sampling of non-event sets.

For each event the risk set is every set of the observed size drawn from the
available universe: all registered actors for the author model, all
previously published works for the citation model. When the risk set holds
at most ``m + 1`` sets every alternative is used; otherwise ``m`` distinct
alternatives are drawn uniformly without replacement.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations
from math import comb, prod

import numpy as np

from .core import ActorRegistry, Publication
from .history import HistoryIndex

MODEL_CODES = {"author": 0, "citation": 1}
# enumerate-then-choose when the risk set is at most this multiple of m
ENUMERATE_FACTOR = 4
ENUMERATE_LIMIT = 2_000_000


@dataclass
class ControlConfig:
    m_author: int = 30000
    m_citation: int = 10000
    seed: int = 0
    distinct: bool = True

    def __post_init__(self):
        if self.m_author < 1 or self.m_citation < 1:
            raise ValueError("control counts must be at least 1")


@dataclass
class Stratum:
    event_index: int
    model: str
    observed: tuple
    controls: np.ndarray  # (m, k) sorted positions
    risk_set_size: int
    full_enumeration: bool

    @property
    def informative(self) -> bool:
        return len(self.controls) > 0

    @property
    def size(self) -> int:
        return len(self.observed)

    def block(self) -> np.ndarray:
        """Event row followed by the control rows."""
        obs = np.array([self.observed], dtype=np.int64).reshape(1, len(self.observed))
        return np.vstack([obs, self.controls])


def risk_set_size(n: int, k: int) -> int:
    if k < 0 or n < 0:
        raise ValueError("sizes must be non-negative")
    if k > n:
        raise ValueError(f"set size {k} exceeds universe size {n}")
    return comb(n, k)


def stratum_rng(seed: int, model: str, event_index: int) -> np.random.Generator:
    """Independent stream per (seed, model, event) so strata do not depend on processing order."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), MODEL_CODES[model], int(event_index)]))


@lru_cache(maxsize=32)
def _all_subsets(n: int, k: int) -> np.ndarray:
    arr = np.fromiter(
        (x for c in combinations(range(n), k) for x in c), dtype=np.int64, count=comb(n, k) * k
    )
    arr = arr.reshape(-1, k)
    arr.flags.writeable = False
    return arr


def _alternatives(n: int, k: int, observed: np.ndarray) -> np.ndarray:
    allsets = _all_subsets(n, k)
    keep = ~np.all(allsets == observed[None, :], axis=1)
    return allsets[keep]


def sample_subsets(
    n: int,
    k: int,
    m: int,
    observed,
    rng: np.random.Generator,
    method: str = "auto",
) -> tuple[np.ndarray, bool]:
    """Draw ``m`` distinct sorted k-subsets of ``range(n)`` other than ``observed``.

    Returns ``(controls, full_enumeration)``. ``method`` is ``auto``,
    ``enumerate`` (choose from the explicit list of alternatives) or
    ``reject`` (draw-and-reject on canonical keys).
    """
    observed = np.sort(np.asarray(observed, dtype=np.int64))
    total = risk_set_size(n, k)
    if k == 0:
        return np.zeros((0, 0), dtype=np.int64), True
    if total - 1 <= m:
        return _alternatives(n, k, observed).copy(), True
    if method == "auto":
        method = "enumerate" if total <= min(ENUMERATE_FACTOR * m, ENUMERATE_LIMIT) else "reject"
    if method == "enumerate":
        alts = _alternatives(n, k, observed)
        pick = np.sort(rng.choice(len(alts), size=m, replace=False))
        return alts[pick].copy(), False
    if method != "reject":
        raise ValueError(f"unknown sampling method {method!r}")
    return _reject_sample(n, k, m, observed, rng), False


def _reject_sample(n, k, m, observed, rng) -> np.ndarray:
    p_distinct = prod((n - i) / n for i in range(k))
    seen = {observed.tobytes()}
    out = np.empty((m, k), dtype=np.int64)
    filled = 0
    while filled < m:
        need = m - filled
        if p_distinct >= 0.5:
            batch = int(need / p_distinct * 1.2) + 16
            rows = rng.integers(0, n, size=(batch, k))
            rows.sort(axis=1)
            if k > 1:
                rows = rows[np.all(np.diff(rows, axis=1) > 0, axis=1)]
        else:
            batch = need + 16
            rows = np.argsort(rng.random((batch, n)), axis=1)[:, :k]
            rows.sort(axis=1)
        rows = np.ascontiguousarray(rows, dtype=np.int64)
        for row in rows:
            key = row.tobytes()
            if key in seen:
                continue
            seen.add(key)
            out[filled] = row
            filled += 1
            if filled == m:
                break
    return out


def sample_author_controls(
    registry: ActorRegistry | int,
    event: Publication,
    cfg: ControlConfig,
    rng: np.random.Generator | None = None,
    event_index: int = 0,
) -> Stratum:
    """Author-model stratum over size-matched subsets of the fixed actor universe."""
    if isinstance(registry, ActorRegistry):
        n = len(registry)
        obs = sorted(registry.position(a) for a in event.authors)
    else:
        n = int(registry)
        obs = sorted(event.authors)
    k = len(obs)
    if k > n:
        raise ValueError(f"author set of size {k} exceeds universe of {n} actors")
    if rng is None:
        rng = stratum_rng(cfg.seed, "author", event_index)
    controls, full = sample_subsets(n, k, cfg.m_author, obs, rng)
    return Stratum(event_index, "author", tuple(obs), controls, comb(n, k), full)


def sample_citation_controls(
    index: HistoryIndex,
    event: Publication,
    cfg: ControlConfig,
    rng: np.random.Generator | None = None,
    event_index: int = 0,
) -> Stratum:
    """Citation-model stratum over size-matched subsets of previously published works."""
    n = index.n_works
    try:
        obs = sorted(index.work_pos[w] for w in event.citations)
    except KeyError as exc:
        raise ValueError(f"event cites a work not yet published: {exc}") from None
    k = len(obs)
    if k > n:
        raise ValueError(f"citation set of size {k} exceeds the {n} available works")
    if rng is None:
        rng = stratum_rng(cfg.seed, "citation", event_index)
    controls, full = sample_subsets(n, k, cfg.m_citation, obs, rng)
    return Stratum(event_index, "citation", tuple(obs), controls, comb(n, k), full)


def dump_strata(strata, names_for, fh) -> None:
    """Write strata as one JSON record per set: event index, event flag, member ids."""
    for s in strata:
        names = names_for(s.model)
        block = s.block()
        for r, row in enumerate(block):
            rec = {
                "event": s.event_index,
                "model": s.model,
                "is_event": r == 0,
                "members": [names[p] for p in row.tolist()],
            }
            fh.write(json.dumps(rec) + "\n")
