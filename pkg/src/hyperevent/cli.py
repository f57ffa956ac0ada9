"""Command-line entry point: validate, stats, fit, aic, simulate, recover, interpret.

One JSON config file drives every subcommand; flags override it. Exit status
is 0 on success, 1 on data or configuration problems and 2 when a fit fails
to converge (artifacts are still written).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import StreamError, parse_event_stream, validate_stream, write_actors, write_events
from .estimation import FitOptions, FitResult, aic_ledger
from .pipeline import MODELS, ModelSpec, build_designs, fit_design
from .sampling import ControlConfig, dump_strata
from .simulation import SimulationConfig, recovery_experiment, simulate_stream
from .statistics import ALL_AUTHOR_STATS, ALL_CITATION_STATS, apply_transform, fit_transform, parse_kind

logger = logging.getLogger("hyperevent")

EXIT_OK, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2
THREADS_ENV = "HYPEREVENT_THREADS"
Z95 = 1.96


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------- config


@dataclass
class RunConfig:
    events: str | None = None
    actors: str | None = None
    output_dir: str = "out"
    citation_policy: str = "drop"
    author_kinds: list = field(default_factory=lambda: [k.name for k in ALL_AUTHOR_STATS])
    citation_kinds: list = field(default_factory=lambda: [k.name for k in ALL_CITATION_STATS])
    sqrt: bool = True
    standardize: bool = True
    citation_repetition_sqrt: bool = True
    m_author: int = 30000
    m_citation: int = 10000
    seed: int | None = None
    max_iter: int = 100
    tol_grad: float = 1e-8
    tol_rel: float = 1e-10
    simulation: dict = field(default_factory=dict)
    recover: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        cfg = cls()
        paths = d.get("paths", {})
        model = d.get("model", {})
        transform = d.get("transform", {})
        sampling = d.get("sampling", {})
        estimation = d.get("estimation", {})
        for key, section in (
            ("events", paths), ("actors", paths), ("output_dir", paths),
            ("author_kinds", model), ("citation_kinds", model),
            ("sqrt", transform), ("standardize", transform), ("citation_repetition_sqrt", transform),
            ("m_author", sampling), ("m_citation", sampling), ("seed", sampling),
            ("max_iter", estimation), ("tol_grad", estimation), ("tol_rel", estimation),
        ):
            if key in section:
                setattr(cfg, key, section[key])
        if "citation_policy" in d:
            cfg.citation_policy = d["citation_policy"]
        cfg.simulation = dict(d.get("simulation", {}))
        cfg.recover = dict(d.get("recover", {}))
        return cfg

    def to_dict(self) -> dict:
        return {
            "paths": {"events": self.events, "actors": self.actors, "output_dir": self.output_dir},
            "citation_policy": self.citation_policy,
            "model": {"author_kinds": list(self.author_kinds), "citation_kinds": list(self.citation_kinds)},
            "transform": {
                "sqrt": self.sqrt,
                "standardize": self.standardize,
                "citation_repetition_sqrt": self.citation_repetition_sqrt,
            },
            "sampling": {"m_author": self.m_author, "m_citation": self.m_citation, "seed": self.seed},
            "estimation": {"max_iter": self.max_iter, "tol_grad": self.tol_grad, "tol_rel": self.tol_rel},
            "simulation": self.simulation,
            "recover": self.recover,
        }

    def validate(self, command: str) -> None:
        try:
            for k in self.author_kinds:
                parse_kind(k, "author")
            for k in self.citation_kinds:
                parse_kind(k, "citation")
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if command in ("fit", "aic", "simulate", "recover") and self.seed is None:
            raise ConfigError(f"a seed is required for '{command}'")
        if command in ("validate", "stats", "fit", "aic"):
            for name in ("events", "actors"):
                path = getattr(self, name)
                if not path or not Path(path).is_file():
                    raise ConfigError(f"{name} file not found: {path!r}")

    def model_spec(self) -> ModelSpec:
        return ModelSpec(
            tuple(self.author_kinds),
            tuple(self.citation_kinds),
            sqrt=self.sqrt,
            standardize=self.standardize,
            citation_repetition_sqrt=self.citation_repetition_sqrt,
            controls=ControlConfig(int(self.m_author), int(self.m_citation), int(self.seed or 0)),
        )

    def fit_options(self) -> FitOptions:
        return FitOptions(int(self.max_iter), float(self.tol_grad), float(self.tol_rel))


def load_config(args) -> RunConfig:
    data = {}
    if getattr(args, "config", None):
        try:
            data = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
    cfg = RunConfig.from_dict(data)
    overrides = {
        "events": "events", "actors": "actors", "out": "output_dir", "seed": "seed",
        "m_author": "m_author", "m_citation": "m_citation", "citation_policy": "citation_policy",
        "max_iter": "max_iter",
    }
    for arg, attr in overrides.items():
        val = getattr(args, arg, None)
        if val is not None:
            setattr(cfg, attr, val)
    return cfg


# --------------------------------------------------------------------------- helpers


def g6(x) -> str:
    if x is None or (isinstance(x, float) and not math.isfinite(x)):
        return "NA"
    return f"{x:.6g}"


def _models(arg: str) -> tuple:
    return MODELS if arg == "both" else (arg,)


def _threads(args) -> int:
    if getattr(args, "threads", None):
        return max(1, int(args.threads))
    env = os.environ.get(THREADS_ENV)
    return max(1, int(env)) if env else (os.cpu_count() or 1)


def _load_stream(cfg: RunConfig):
    stream = parse_event_stream(cfg.events, cfg.actors, cfg.citation_policy)
    report = validate_stream(stream)
    if report:
        for v in report:
            print(f"violation: {v}", file=sys.stderr)
        raise StreamError(f"{len(report)} validation violations")
    for note in report.notes:
        print(f"note: {note}", file=sys.stderr)
    if stream.dropped_citations:
        print(f"note: dropped {stream.dropped_citations} citations of unknown works", file=sys.stderr)
    return stream


def _prepare_out(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    return out


def interpret(fit: FitResult, kind, delta: float = 1.0) -> tuple[float, float, float]:
    """Rate ratio ``exp(coef * delta)`` with a 95% interval from the robust standard error."""
    j = fit.index_of(kind)
    beta = fit.coef[j]
    if not np.isfinite(beta) or fit.kinds[j] in fit.degenerate:
        raise ValueError(f"kind {kind!r} is degenerate in this fit")
    se = fit.robust_se[j]
    lo, hi = sorted((math.exp((beta - Z95 * se) * delta), math.exp((beta + Z95 * se) * delta)))
    return math.exp(beta * delta), lo, hi


def write_coefficients(fit: FitResult, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kind", "estimate", "robust_se", "z", "p"])
        for j, k in enumerate(fit.kinds):
            w.writerow([k.label, g6(fit.coef[j]), g6(fit.robust_se[j]), g6(fit.z[j]), g6(fit.p_values[j])])


def write_metadata(fit: FitResult, diag, path: Path) -> None:
    rows = [
        ("log_partial_likelihood", g6(fit.loglik)),
        ("aic", g6(fit.aic)),
        ("n_params", fit.n_params),
        ("iterations", fit.iterations),
        ("converged", int(fit.converged)),
        ("separation", int(fit.separation)),
        ("degenerate", ";".join(k.name for k in fit.degenerate)),
        ("strata", diag.strata),
        ("non_informative_strata", diag.non_informative),
        ("full_enumeration_strata", diag.full_enumeration),
        ("rows", diag.rows),
    ]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["field", "value"])
        w.writerows(rows)


def write_ledger(ledger, path: Path) -> None:
    def cell(x):
        return "NA" if x is None else f"{x:.3f}"

    def pcell(x):
        return "NA" if x is None else f"{x:.1f}"

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model_term", "over_null", "over_null_pct", "in_full", "in_full_pct"])
        for r in ledger.ordered():
            w.writerow([r.label, cell(r.over_null), pcell(r.pct_over_null), cell(r.in_full), pcell(r.pct_in_full)])


# --------------------------------------------------------------------------- commands


def cmd_validate(args, cfg: RunConfig) -> int:
    stream = parse_event_stream(cfg.events, cfg.actors, cfg.citation_policy)
    report = validate_stream(stream)
    for v in report:
        print(f"violation: {v}")
    for note in report.notes:
        print(f"note: {note}")
    print(f"{len(stream)} events, {len(report)} violations, {stream.dropped_citations} dropped citations")
    return EXIT_DATA if report else EXIT_OK


def cmd_stats(args, cfg: RunConfig) -> int:
    stream = _load_stream(cfg)
    spec = cfg.model_spec()
    model = args.model
    designs, _ = build_designs(stream, spec, (model,))
    raw = designs[model]
    values = raw.values
    if args.transformed and len(raw):
        values = apply_transform(raw.values, fit_transform(raw, spec.transform_skeleton(model)))
    fh = open(args.output, "w", newline="") if args.output else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["stratum", "is_event", "candidate"] + [k.name for k in raw.kinds])
        for r in range(len(raw)):
            w.writerow(
                [int(raw.stratum[r]), int(raw.is_event[r]), ";".join(raw.members(r))]
                + [repr(float(v)) for v in values[r]]
            )
    finally:
        if fh is not sys.stdout:
            fh.close()
    return EXIT_OK


def _fit_models(args, cfg: RunConfig, with_ledger: bool):
    stream = _load_stream(cfg)
    out = _prepare_out(cfg)
    spec = cfg.model_spec()
    models = _models(args.model)
    strata = []
    sink = strata.append if getattr(args, "dump_strata", False) else None
    designs, diags = build_designs(stream, spec, models, strata_sink=sink)
    if sink is not None:
        names = {"author": stream.registry.actors, "citation": [p.work for p in stream.publications]}
        with open(out / "strata.jsonl", "w") as fh:
            dump_strata(strata, names.__getitem__, fh)
    status = EXIT_OK
    for m in models:
        result, transform, data = fit_design(designs[m], spec.transform_skeleton(m), cfg.fit_options())
        if not result.converged:
            status = EXIT_NUMERIC
            print(f"error: {m} model did not converge after {result.iterations} iterations", file=sys.stderr)
        if not getattr(args, "ledger_only", False):
            write_coefficients(result, out / f"coefficients_{m}.csv")
            write_metadata(result, diags[m], out / f"metadata_{m}.csv")
            full = {"model": m, "fit": result.to_dict(), "transform": transform.to_dict()}
            (out / f"fit_{m}.json").write_text(json.dumps(full, indent=2) + "\n")
        if with_ledger:
            ledger = aic_ledger(data, options=cfg.fit_options())
            write_ledger(ledger, out / f"aic_{m}.csv")
            if ledger.total is not None:
                print(f"{m} model: AIC(full) - AIC(null) = {ledger.total:.3f}, corresponding to 100%")
            for r in ledger.ordered():
                print("  " + r.format())
            if any(r.over_null is None or r.in_full is None for r in ledger.rows):
                status = EXIT_NUMERIC
    return status


def cmd_fit(args, cfg):
    return _fit_models(args, cfg, with_ledger=args.ledger)


def cmd_aic(args, cfg):
    args.ledger_only = True
    return _fit_models(args, cfg, with_ledger=True)


def _simulation_config(cfg: RunConfig) -> SimulationConfig:
    sim = dict(cfg.simulation)
    for key in ("author_size_probs", "citation_size_probs"):
        if key in sim:
            sim[key] = tuple(sim[key])
    try:
        return SimulationConfig(**sim)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid simulation section: {exc}") from None


def cmd_simulate(args, cfg):
    out = _prepare_out(cfg)
    sim_cfg = _simulation_config(cfg)
    sim = simulate_stream(sim_cfg, np.random.default_rng(int(cfg.seed)))
    write_events(sim.stream, out / "events.jsonl")
    write_actors(sim.stream.registry, out / "actors.csv")
    truth = {
        "theta": {k.name: v for k, v in sim_cfg.theta.items()},
        "gamma": {k.name: v for k, v in sim_cfg.gamma.items()},
        "transform": sim_cfg.transform,
    }
    (out / "truth.json").write_text(json.dumps(truth, indent=2) + "\n")
    print(f"wrote {len(sim.stream)} events to {out / 'events.jsonl'}")
    return EXIT_OK


def cmd_recover(args, cfg):
    out = _prepare_out(cfg)
    sim_cfg = _simulation_config(cfg)
    rec = cfg.recover
    replicates = int(args.replicates or rec.get("replicates", 20))
    controls = ControlConfig(int(cfg.m_author), int(cfg.m_citation), int(cfg.seed))
    report = recovery_experiment(
        sim_cfg, cfg.fit_options(), replicates, int(cfg.seed), controls, threads=_threads(args)
    )
    rows = report.rows()
    fields = ["model", "kind", "truth", "mean_estimate", "bias", "empirical_sd", "mc_se", "mean_robust_se", "coverage", "fits"]
    with open(out / "recovery.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for r in rows:
            w.writerow([r[f] if isinstance(r[f], (str, int)) else g6(r[f]) for f in fields])
    print(f"{report.replicates} replicates, {report.excluded} excluded (non-convergence)")
    for r in rows:
        print(f"  {r['kind']}: truth {g6(r['truth'])} mean {g6(r['mean_estimate'])} coverage {r['coverage']}/{r['fits']}")
    return EXIT_NUMERIC if report.excluded else EXIT_OK


def cmd_interpret(args, cfg):
    try:
        doc = json.loads(Path(args.fit).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read fit file: {exc}") from None
    fit = FitResult.from_dict(doc.get("fit", doc), parse_kind)
    try:
        kind = parse_kind(args.kind)
        rr, lo, hi = interpret(fit, kind, args.delta)
    except (KeyError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    print("kind,delta,rate_ratio,ci_low,ci_high")
    print(f"{kind.name},{g6(args.delta)},{g6(rr)},{g6(lo)},{g6(hi)}")
    return EXIT_OK


# --------------------------------------------------------------------------- parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_DATA)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hyperevent", description=__doc__.splitlines()[0])
    parser.add_argument("--log-level", default="WARNING")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, data=True):
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int, help=f"worker cap (default ${THREADS_ENV} or all cores)")
        if data:
            p.add_argument("--events")
            p.add_argument("--actors")
            p.add_argument("--citation-policy", choices=("drop", "strict"))

    p = sub.add_parser("validate", help="check an event stream")
    common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("stats", help="emit the design matrix")
    common(p)
    p.add_argument("--model", choices=MODELS, default="author")
    p.add_argument("--transformed", action="store_true", help="sqrt + standardized values")
    p.add_argument("--m-author", type=int)
    p.add_argument("--m-citation", type=int)
    p.add_argument("-o", "--output", help="CSV path (default stdout)")
    p.set_defaults(func=cmd_stats)

    for name, func, helptext in (("fit", cmd_fit, "estimate coefficients"), ("aic", cmd_aic, "AIC contribution ledger")):
        p = sub.add_parser(name, help=helptext)
        common(p)
        p.add_argument("--model", choices=MODELS + ("both",), default="both")
        p.add_argument("--m-author", type=int)
        p.add_argument("--m-citation", type=int)
        p.add_argument("--max-iter", type=int)
        p.add_argument("--dump-strata", action="store_true")
        if name == "fit":
            p.add_argument("--ledger", action="store_true", help="also write the AIC ledger")
        p.set_defaults(func=func)

    p = sub.add_parser("simulate", help="write a synthetic events + actors pair")
    common(p, data=False)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("recover", help="parameter-recovery experiment")
    common(p, data=False)
    p.add_argument("--replicates", type=int)
    p.add_argument("--m-author", type=int)
    p.add_argument("--m-citation", type=int)
    p.set_defaults(func=cmd_recover)

    p = sub.add_parser("interpret", help="rate ratio for a change in one statistic")
    p.add_argument("--fit", required=True, help="fit_<model>.json written by 'fit'")
    p.add_argument("--kind", required=True)
    p.add_argument("--delta", type=float, default=1.0)
    p.set_defaults(func=cmd_interpret)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING), stream=sys.stderr)
    try:
        cfg = load_config(args) if args.command != "interpret" else RunConfig()
        if args.command != "interpret":
            cfg.validate(args.command)
        return args.func(args, cfg)
    except (StreamError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except BrokenPipeError:
        # downstream reader closed early (e.g. piped into head); silence the flush at exit
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
