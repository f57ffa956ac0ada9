"""Synthetic publication streams from known author and citation coefficients.

Events are generated one at a time. The author set size is drawn from a
categorical distribution, then the author set is chosen among all sets of
that size with probability proportional to ``exp(theta . s)``; the citation
list size is drawn (truncated to the current corpus) and the citation set is
chosen given the authors with probability proportional to ``exp(gamma . h)``.
Statistics enter the linear predictor raw, or through a fixed transform.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from math import comb

import numpy as np

from .core import ActorRegistry, EventStream, Publication
from .estimation import FitOptions
from .history import HistoryIndex
from .pipeline import ModelSpec, build_designs, fit_design
from .sampling import ControlConfig, _all_subsets
from .statistics import (
    TransformSpec,
    apply_transform,
    author_stat_block,
    citation_stat_block,
    parse_kind,
)

logger = logging.getLogger(__name__)


class SimulationError(ValueError):
    pass


@dataclass
class SimulationConfig:
    n_actors: int = 30
    chilean_fraction: float = 0.5
    n_events: int = 500
    # probabilities of author-set sizes 1, 2, 3, ...
    author_size_probs: tuple = (0.25, 0.4, 0.25, 0.1)
    # probabilities of citation-list sizes 0, 1, 2, ... (truncated to the corpus)
    citation_size_probs: tuple = (0.2, 0.4, 0.4)
    n_seed_works: int = 5
    theta: dict = field(default_factory=dict)
    gamma: dict = field(default_factory=dict)
    # "raw", or "sqrt" (sqrt of endogenous kinds, no centring or scaling)
    transform: str = "sqrt"
    author_transform: TransformSpec | None = None
    citation_transform: TransformSpec | None = None
    sampler: str = "exact"
    burn_in: int = 200
    enumeration_bound: int = 2_000_000

    def __post_init__(self):
        self.theta = {parse_kind(k, "author"): float(v) for k, v in dict(self.theta).items()}
        self.gamma = {parse_kind(k, "citation"): float(v) for k, v in dict(self.gamma).items()}
        for name in ("author_size_probs", "citation_size_probs"):
            probs = np.asarray(getattr(self, name), dtype=float)
            if np.any(probs < 0) or not math.isclose(probs.sum(), 1.0, abs_tol=1e-9):
                raise SimulationError(f"{name} must be non-negative and sum to 1")
            setattr(self, name, tuple(probs.tolist()))
        if len(self.author_size_probs) > self.n_actors:
            raise SimulationError("author sets larger than the actor universe")
        if self.sampler not in ("exact", "chain"):
            raise SimulationError("sampler must be 'exact' or 'chain'")
        if self.transform not in ("raw", "sqrt"):
            raise SimulationError("transform must be 'raw' or 'sqrt'")
        if self.sampler == "exact":
            top = len(self.author_size_probs)
            if any(self.theta.values()) and comb(self.n_actors, top) > self.enumeration_bound:
                raise SimulationError("author risk set exceeds the enumeration bound")
        if self.author_transform is None:
            self.author_transform = self._fixed_transform(tuple(self.theta))
        if self.citation_transform is None:
            self.citation_transform = self._fixed_transform(tuple(self.gamma))

    def _fixed_transform(self, kinds) -> TransformSpec:
        spec = TransformSpec.identity(kinds)
        if self.transform == "sqrt":
            spec = TransformSpec(spec.kinds, tuple(not k.exogenous for k in kinds), spec.standardize, spec.means, spec.sds)
        return spec

    def registry(self, rng: np.random.Generator) -> ActorRegistry:
        n_ch = int(round(self.chilean_fraction * self.n_actors))
        flags = np.zeros(self.n_actors, dtype=bool)
        flags[rng.choice(self.n_actors, size=n_ch, replace=False)] = True
        width = len(str(self.n_actors - 1))
        return ActorRegistry(tuple(f"a{i:0{width}d}" for i in range(self.n_actors)), tuple(flags.tolist()))


@dataclass
class SimulatedStream:
    stream: EventStream
    # probability of the chosen author set and citation set per event (exact mode only)
    author_probs: list = field(default_factory=list)
    citation_probs: list = field(default_factory=list)


def _choose(weights_logit: np.ndarray, rng) -> tuple[int, float]:
    z = weights_logit - weights_logit.max()
    p = np.exp(z)
    p /= p.sum()
    i = int(rng.choice(len(p), p=p))
    return i, float(p[i])


def _chain_select(n, k, logit_of, rng, steps) -> np.ndarray:
    """Swap-one-element Metropolis chain on k-subsets of range(n)."""
    current = np.sort(rng.choice(n, size=k, replace=False))
    cur_val = logit_of(current[None, :])[0]
    if k == n:
        return current
    for _ in range(steps):
        out_pos = rng.integers(k)
        outside = np.setdiff1d(np.arange(n), current, assume_unique=True)
        new = current.copy()
        new[out_pos] = outside[rng.integers(len(outside))]
        new.sort()
        val = logit_of(new[None, :])[0]
        if np.log(rng.random()) < val - cur_val:
            current, cur_val = new, val
    return current


def simulate_stream(cfg: SimulationConfig, rng: np.random.Generator | int | None = None) -> SimulatedStream:
    rng = np.random.default_rng(rng)
    registry = cfg.registry(rng)
    n = cfg.n_actors
    index = HistoryIndex(registry, capacity=cfg.n_events)
    theta_kinds = tuple(cfg.theta)
    theta = np.array([cfg.theta[k] for k in theta_kinds])
    gamma_kinds = tuple(cfg.gamma)
    gamma = np.array([cfg.gamma[k] for k in gamma_kinds])
    active_theta = bool(np.any(theta != 0))
    active_gamma = bool(np.any(gamma != 0))
    width = len(str(cfg.n_events - 1))
    pubs, a_probs, c_probs = [], [], []

    for e in range(cfg.n_events):
        k = int(rng.choice(len(cfg.author_size_probs), p=cfg.author_size_probs)) + 1

        def author_logit(block):
            raw = author_stat_block(index, block, theta_kinds)
            return apply_transform(raw, cfg.author_transform) @ theta

        if not active_theta:
            authors = np.sort(rng.choice(n, size=k, replace=False))
            a_probs.append(1.0 / comb(n, k))
        elif cfg.sampler == "exact":
            cands = _all_subsets(n, k)
            i, prob = _choose(author_logit(cands), rng)
            authors = cands[i]
            a_probs.append(prob)
        else:
            authors = _chain_select(n, k, author_logit, rng, cfg.burn_in)

        nw = index.n_works
        c = 0
        if e >= cfg.n_seed_works:
            c = min(int(rng.choice(len(cfg.citation_size_probs), p=cfg.citation_size_probs)), nw)
        cited = np.zeros(0, dtype=np.int64)
        if c > 0:

            def cite_logit(block):
                raw = citation_stat_block(index, block, authors, gamma_kinds)
                return apply_transform(raw, cfg.citation_transform) @ gamma

            if not active_gamma:
                cited = np.sort(rng.choice(nw, size=c, replace=False))
                c_probs.append(1.0 / comb(nw, c))
            elif cfg.sampler == "exact":
                if comb(nw, c) > cfg.enumeration_bound:
                    raise SimulationError(
                        f"citation risk set C({nw},{c}) exceeds the enumeration bound; use the chain sampler"
                    )
                cands = _all_subsets(nw, c)
                i, prob = _choose(cite_logit(cands), rng)
                cited = cands[i]
                c_probs.append(prob)
            else:
                cited = _chain_select(nw, c, cite_logit, rng, cfg.burn_in)
        else:
            c_probs.append(1.0)

        pub = Publication(
            f"w{e:0{width}d}",
            frozenset(registry.actors[i] for i in authors.tolist()),
            frozenset(index.works[h] for h in cited.tolist()),
            e,
        )
        index.apply_event(pub)
        pubs.append(pub)
    stream = EventStream(tuple(pubs), registry)
    if cfg.sampler == "chain":
        a_probs, c_probs = [], []
    return SimulatedStream(stream, a_probs, c_probs)


# --------------------------------------------------------------------------- recovery


@dataclass
class KindRecovery:
    model: str
    kind: object
    truth: float
    estimates: list
    robust_se: list

    @property
    def n(self) -> int:
        return len(self.estimates)

    @property
    def mean(self) -> float:
        return float(np.mean(self.estimates)) if self.estimates else float("nan")

    @property
    def bias(self) -> float:
        return self.mean - self.truth

    @property
    def empirical_sd(self) -> float:
        return float(np.std(self.estimates, ddof=1)) if self.n > 1 else float("nan")

    @property
    def mc_se(self) -> float:
        return self.empirical_sd / math.sqrt(self.n) if self.n > 1 else float("nan")

    @property
    def mean_robust_se(self) -> float:
        return float(np.mean(self.robust_se)) if self.robust_se else float("nan")

    @property
    def covered(self) -> int:
        return int(
            sum(abs(b - self.truth) <= 1.959963984540054 * s for b, s in zip(self.estimates, self.robust_se))
        )


@dataclass
class RecoveryReport:
    kinds: list
    replicates: int
    excluded: int
    transform: str

    def rows(self) -> list[dict]:
        out = []
        for r in self.kinds:
            out.append(
                {
                    "model": r.model,
                    "kind": r.kind.name,
                    "truth": r.truth,
                    "mean_estimate": r.mean,
                    "bias": r.bias,
                    "empirical_sd": r.empirical_sd,
                    "mc_se": r.mc_se,
                    "mean_robust_se": r.mean_robust_se,
                    "coverage": r.covered,
                    "fits": r.n,
                }
            )
        return out


def _replicate(args):
    cfg, controls, options, seed = args
    sim = simulate_stream(cfg, np.random.default_rng(seed))
    models = [m for m, d in (("author", cfg.theta), ("citation", cfg.gamma)) if d]
    spec = ModelSpec(tuple(cfg.theta), tuple(cfg.gamma), controls=controls)
    designs, _ = build_designs(sim.stream, spec, models)
    out = {}
    for m in models:
        fixed = cfg.author_transform if m == "author" else cfg.citation_transform
        res, _, _ = fit_design(designs[m], fixed, options, fixed_transform=True)
        out[m] = res if res.converged else None
    return out


def recovery_experiment(
    cfg: SimulationConfig,
    options: FitOptions | None = None,
    replicates: int = 20,
    seed: int = 0,
    controls: ControlConfig | None = None,
    threads: int = 1,
) -> RecoveryReport:
    """Simulate, sample controls, fit with the generating transform, and summarize per kind."""
    controls = controls or ControlConfig()
    seeds = np.random.SeedSequence(seed).spawn(replicates)
    jobs = []
    for r, ss in enumerate(seeds):
        c = ControlConfig(controls.m_author, controls.m_citation, int(ss.generate_state(1)[0]), controls.distinct)
        jobs.append((cfg, c, options, ss))
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_replicate, jobs))
    else:
        results = [_replicate(j) for j in jobs]

    kinds = [KindRecovery("author", k, v, [], []) for k, v in cfg.theta.items()]
    kinds += [KindRecovery("citation", k, v, [], []) for k, v in cfg.gamma.items()]
    excluded = 0
    for res in results:
        if any(r is None for r in res.values()):
            excluded += 1
            continue
        for kr in kinds:
            fit = res[kr.model]
            j = fit.index_of(kr.kind)
            if np.isfinite(fit.coef[j]):
                kr.estimates.append(float(fit.coef[j]))
                kr.robust_se.append(float(fit.robust_se[j]))
    return RecoveryReport(kinds, replicates, excluded, cfg.transform)
