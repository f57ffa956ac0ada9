"""Case-control partial likelihood estimation.

Each stratum holds the statistic vector of one observed set (first row) and
of its sampled alternatives. The log partial likelihood is the conditional
logit

    sum_s [ beta . x_event(s) - log sum_{r in s} exp(beta . x_r) ],

maximized by Newton-Raphson with step halving. Standard errors come from the
sandwich H^-1 (sum_s u_s u_s^T) H^-1 with one cluster per stratum.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

logger = logging.getLogger(__name__)

SEPARATION_BOUND = 50.0
# coefficients this large at a converged point are probed for a monotone likelihood
SEPARATION_PROBE = 10.0
RIDGE = 1e-8


class EstimationError(RuntimeError):
    pass


@dataclass
class ChoiceData:
    """Stacked design rows; stratum ``s`` is ``X[starts[s]:starts[s+1]]`` with the event first."""

    X: np.ndarray
    starts: np.ndarray
    kinds: tuple = ()

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        if self.X.ndim != 2:
            raise ValueError("design must be two-dimensional")
        self.starts = np.asarray(self.starts, dtype=np.int64)
        if len(self.starts) < 1 or self.starts[0] != 0 or self.starts[-1] != len(self.X):
            raise ValueError("stratum offsets do not cover the design")
        if np.any(np.diff(self.starts) < 2):
            raise ValueError("every stratum needs an event row and at least one control")
        if not self.kinds:
            self.kinds = tuple(f"x{j}" for j in range(self.X.shape[1]))
        if len(self.kinds) != self.X.shape[1]:
            raise ValueError("kind labels do not match the column count")

    @classmethod
    def from_blocks(cls, blocks: Sequence[np.ndarray], kinds: Sequence = ()) -> "ChoiceData":
        """Build from per-stratum arrays (event row first); single-row strata are skipped."""
        kept = [np.atleast_2d(np.asarray(b, dtype=float)) for b in blocks]
        kept = [b for b in kept if b.shape[0] >= 2]
        if not kept:
            p = len(kinds)
            return cls(np.zeros((0, p)), np.zeros(1, dtype=np.int64), tuple(kinds) or ())
        sizes = [b.shape[0] for b in kept]
        starts = np.concatenate([[0], np.cumsum(sizes)])
        return cls(np.vstack(kept), starts, tuple(kinds))

    @property
    def n_strata(self) -> int:
        return len(self.starts) - 1

    @property
    def n_params(self) -> int:
        return self.X.shape[1]

    @property
    def stratum_sizes(self) -> np.ndarray:
        return np.diff(self.starts)

    @property
    def event_rows(self) -> np.ndarray:
        return self.starts[:-1]

    def select(self, columns: Sequence[int]) -> "ChoiceData":
        columns = list(columns)
        return ChoiceData(self.X[:, columns], self.starts, tuple(self.kinds[j] for j in columns))

    def stratum_of_row(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_strata), self.stratum_sizes)


def _stratum_weights(data: ChoiceData, beta: np.ndarray):
    eta = data.X @ beta if data.n_params else np.zeros(len(data.X))
    heads = data.event_rows
    mx = np.maximum.reduceat(eta, heads)
    sizes = data.stratum_sizes
    shifted = np.exp(eta - np.repeat(mx, sizes))
    denom = np.add.reduceat(shifted, heads)
    logsum = np.log(denom) + mx
    w = shifted / np.repeat(denom, sizes)
    return eta, logsum, w


def log_partial_likelihood(data: ChoiceData, beta, derivatives: int = 0):
    """Log partial likelihood; with ``derivatives`` 1 or 2 also the gradient and Hessian."""
    beta = np.asarray(beta, dtype=float).reshape(-1)
    if beta.shape[0] != data.n_params:
        raise ValueError(f"beta has length {beta.shape[0]}, design has {data.n_params} columns")
    if not np.all(np.isfinite(data.X)):
        raise ValueError("design contains non-finite covariates")
    if data.n_strata == 0:
        zero = 0.0
        out = [zero]
        if derivatives >= 1:
            out.append(np.zeros(data.n_params))
        if derivatives >= 2:
            out.append(np.zeros((data.n_params, data.n_params)))
        return out[0] if derivatives == 0 else tuple(out)
    eta, logsum, w = _stratum_weights(data, beta)
    heads = data.event_rows
    value = float(np.sum(eta[heads] - logsum))
    if derivatives == 0:
        return value
    wx = w[:, None] * data.X
    xbar = np.add.reduceat(wx, heads, axis=0)
    grad = data.X[heads].sum(axis=0) - xbar.sum(axis=0)
    if derivatives == 1:
        return value, grad
    hess = -(data.X.T @ wx - xbar.T @ xbar)
    hess = (hess + hess.T) / 2
    return value, grad, hess


def stratum_scores(data: ChoiceData, beta) -> np.ndarray:
    """Per-stratum score vectors ``x_event - E_w[x]`` (rows) at ``beta``."""
    beta = np.asarray(beta, dtype=float)
    _, _, w = _stratum_weights(data, beta)
    xbar = np.add.reduceat(w[:, None] * data.X, data.event_rows, axis=0)
    return data.X[data.event_rows] - xbar


def degenerate_columns(data: ChoiceData, tol: float = 1e-12) -> list[int]:
    """Columns that are constant within every stratum (carry no information)."""
    if data.n_strata == 0:
        return list(range(data.n_params))
    heads = data.event_rows
    spread = np.maximum.reduceat(data.X, heads, axis=0) - np.minimum.reduceat(data.X, heads, axis=0)
    scale = np.maximum(1.0, np.abs(data.X).max(axis=0))
    return [j for j in range(data.n_params) if np.all(spread[:, j] <= tol * scale[j])]


def _invert_information(info: np.ndarray):
    """Inverse of the observed information; pseudo-inverse fallback flagged."""
    if info.size == 0:
        return info.copy(), False
    try:
        np.linalg.cholesky(info)
        return np.linalg.inv(info), False
    except np.linalg.LinAlgError:
        return np.linalg.pinv(info), True


def robust_variance(data: ChoiceData, beta_hat, return_flag: bool = False):
    """Sandwich covariance with the stratum as clustering unit."""
    beta_hat = np.asarray(beta_hat, dtype=float)
    _, _, hess = log_partial_likelihood(data, beta_hat, derivatives=2)
    bread, singular = _invert_information(-hess)
    u = stratum_scores(data, beta_hat)
    meat = u.T @ u
    cov = bread @ meat @ bread
    cov = (cov + cov.T) / 2
    if singular:
        logger.warning("singular information matrix; used pseudo-inverse")
    return (cov, singular) if return_flag else cov


@dataclass
class FitOptions:
    max_iter: int = 100
    tol_grad: float = 1e-8
    tol_rel: float = 1e-10
    max_halvings: int = 40


@dataclass
class FitResult:
    kinds: tuple
    coef: np.ndarray
    robust_cov: np.ndarray
    naive_cov: np.ndarray
    loglik: float
    n_params: int
    iterations: int
    converged: bool
    separation: bool = False
    singular: bool = False
    degenerate: list = field(default_factory=list)
    n_strata: int = 0
    n_rows: int = 0

    @property
    def aic(self) -> float:
        return 2.0 * self.n_params - 2.0 * self.loglik

    @property
    def robust_se(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.robust_cov), 0, None))

    @property
    def naive_se(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.naive_cov), 0, None))

    @property
    def z(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.coef / self.robust_se

    @property
    def p_values(self) -> np.ndarray:
        return np.array([math.erfc(abs(z) / math.sqrt(2)) if np.isfinite(z) else np.nan for z in self.z])

    def index_of(self, kind) -> int:
        for j, k in enumerate(self.kinds):
            if k == kind or getattr(k, "name", None) == kind or getattr(k, "value", None) == kind:
                return j
        raise KeyError(f"kind {kind!r} not in fit")

    def to_dict(self) -> dict:
        def names(ks):
            return [getattr(k, "name", str(k)) for k in ks]

        def clean(a):
            return [[None if not np.isfinite(x) else float(x) for x in row] for row in np.atleast_2d(a)]

        return {
            "kinds": names(self.kinds),
            "coef": [None if not np.isfinite(x) else float(x) for x in self.coef],
            "robust_cov": clean(self.robust_cov),
            "naive_cov": clean(self.naive_cov),
            "loglik": self.loglik,
            "aic": self.aic,
            "n_params": self.n_params,
            "iterations": self.iterations,
            "converged": self.converged,
            "separation": self.separation,
            "singular": self.singular,
            "degenerate": names(self.degenerate),
            "n_strata": self.n_strata,
            "n_rows": self.n_rows,
        }

    @classmethod
    def from_dict(cls, d: dict, kind_parser=None) -> "FitResult":
        parse = kind_parser or (lambda x: x)

        def arr(a):
            return np.array([[np.nan if x is None else x for x in row] for row in a], dtype=float)

        kinds = tuple(parse(k) for k in d["kinds"])
        p = len(kinds)
        return cls(
            kinds=kinds,
            coef=np.array([np.nan if x is None else x for x in d["coef"]], dtype=float),
            robust_cov=arr(d["robust_cov"]).reshape(p, p),
            naive_cov=arr(d["naive_cov"]).reshape(p, p),
            loglik=d["loglik"],
            n_params=d["n_params"],
            iterations=d["iterations"],
            converged=d["converged"],
            separation=d.get("separation", False),
            singular=d.get("singular", False),
            degenerate=[parse(k) for k in d.get("degenerate", [])],
            n_strata=d.get("n_strata", 0),
            n_rows=d.get("n_rows", 0),
        )


def _newton(data: ChoiceData, opts: FitOptions):
    p = data.n_params
    beta = np.zeros(p)
    value, grad, hess = log_partial_likelihood(data, beta, 2)
    if p == 0:
        return beta, value, 0, True, False
    it = 0
    while it < opts.max_iter:
        it += 1
        info = -hess
        try:
            step = np.linalg.solve(info, grad)
            if not np.all(np.isfinite(step)):
                raise np.linalg.LinAlgError
        except np.linalg.LinAlgError:
            ridge = RIDGE * max(1.0, np.abs(np.diag(info)).max())
            step = np.linalg.lstsq(info + ridge * np.eye(p), grad, rcond=None)[0]
        t = 1.0
        for _ in range(opts.max_halvings):
            cand = beta + t * step
            new_value = log_partial_likelihood(data, cand)
            if np.isfinite(new_value) and new_value >= value - 1e-12 * max(1.0, abs(value)):
                break
            t /= 2
        else:
            cand, new_value = beta, value
        rel = abs(new_value - value) / max(1.0, abs(value))
        beta = cand
        value, grad, hess = log_partial_likelihood(data, beta, 2)
        if np.max(np.abs(beta)) > SEPARATION_BOUND:
            return beta, value, it, False, True
        if np.max(np.abs(grad)) < opts.tol_grad and rel < opts.tol_rel:
            return beta, value, it, True, False
    return beta, value, it, False, False


def _monotone_ray(data: ChoiceData, beta: np.ndarray, value: float) -> bool:
    """True if pushing the large coefficients further out does not lower the likelihood.

    The gradient of a separated design vanishes long before the coefficients
    pass ``SEPARATION_BOUND``, so a converged fit can still be a divergent one.
    """
    big = np.abs(beta) > SEPARATION_PROBE
    if not np.any(big):
        return False
    d = np.where(big, np.sign(beta), 0.0)
    d /= np.linalg.norm(d)
    probe = log_partial_likelihood(data, beta + SEPARATION_BOUND * d)
    return bool(probe >= value - 1e-9 * max(1.0, abs(value)))


def fit(data: ChoiceData, options: FitOptions | None = None) -> FitResult:
    """Maximum partial likelihood fit of a conditional-logit design."""
    opts = options or FitOptions()
    if data.n_strata == 0:
        raise EstimationError("no informative strata")
    p = data.n_params
    degenerate = degenerate_columns(data)
    active = [j for j in range(p) if j not in degenerate]
    sub = data.select(active)
    beta, value, iterations, converged, separation = _newton(sub, opts)
    if converged and _monotone_ray(sub, beta, value):
        converged, separation = False, True
    if not converged:
        reason = "separation (coefficient divergence)" if separation else "iteration limit"
        logger.warning("fit did not converge: %s after %d iterations", reason, iterations)

    coef = np.full(p, np.nan)
    robust = np.full((p, p), np.nan)
    naive = np.full((p, p), np.nan)
    singular = False
    if active:
        coef[active] = beta
        _, _, hess = log_partial_likelihood(sub, beta, 2)
        naive_a, singular = _invert_information(-hess)
        robust_a = robust_variance(sub, beta)
        naive[np.ix_(active, active)] = naive_a
        robust[np.ix_(active, active)] = robust_a
    return FitResult(
        kinds=tuple(data.kinds),
        coef=coef,
        robust_cov=robust,
        naive_cov=naive,
        loglik=value,
        n_params=len(active),
        iterations=iterations,
        converged=converged,
        separation=separation,
        singular=singular,
        degenerate=[data.kinds[j] for j in degenerate],
        n_strata=data.n_strata,
        n_rows=len(data.X),
    )


def null_loglik(data: ChoiceData) -> float:
    """Log partial likelihood with no covariates: minus the summed log stratum sizes."""
    return -float(np.sum(np.log(data.stratum_sizes)))


def aic(result: FitResult) -> float:
    return result.aic


@dataclass
class LedgerRow:
    kind: object
    over_null: float | None
    in_full: float | None
    pct_over_null: float | None
    pct_in_full: float | None

    @property
    def label(self) -> str:
        return getattr(self.kind, "label", str(self.kind))

    def format(self) -> str:
        def cell(d, pct):
            if d is None:
                return "unavailable"
            return f"{d:.3f} ({pct:.1f}%)"

        return f"{self.label} {cell(self.over_null, self.pct_over_null)} {cell(self.in_full, self.pct_in_full)}"


@dataclass
class AICLedger:
    rows: list
    aic_null: float
    aic_full: float | None

    @property
    def total(self) -> float | None:
        return None if self.aic_full is None else self.aic_full - self.aic_null

    def ordered(self) -> list:
        return sorted(self.rows, key=lambda r: (r.over_null is None, r.over_null if r.over_null is not None else 0.0))


def _converged_aic(data, columns, opts) -> float | None:
    if not columns:
        return -2.0 * null_loglik(data)
    res = fit(data.select(columns), opts)
    return res.aic if res.converged else None


def aic_ledger(data: ChoiceData, focal=None, options: FitOptions | None = None):
    """AIC contributions of effects over the null model and within the full model.

    For a focal kind (label or column index) returns one ``LedgerRow``; with
    ``focal=None`` returns an ``AICLedger`` over every column. Percentages are
    relative to ``AIC(full) - AIC(null)``.
    """
    opts = options or FitOptions()
    p = data.n_params
    cols = list(range(p))
    aic_null = -2.0 * null_loglik(data)
    aic_full = _converged_aic(data, cols, opts)

    def row(j):
        focal_only = _converged_aic(data, [j], opts)
        drop = _converged_aic(data, [c for c in cols if c != j], opts)
        over_null = None if focal_only is None else focal_only - aic_null
        in_full = None if (drop is None or aic_full is None) else aic_full - drop
        total = None if aic_full is None else aic_full - aic_null

        def pct(d):
            if d is None or total is None or total == 0:
                return None
            return 100.0 * d / total

        return LedgerRow(data.kinds[j], over_null, in_full, pct(over_null), pct(in_full))

    if focal is not None:
        j = focal if isinstance(focal, int) else list(data.kinds).index(focal)
        return row(j)
    return AICLedger([row(j) for j in cols], aic_null, aic_full)
