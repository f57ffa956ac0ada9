"""Relational hyperevent models for co-authorship and citation streams."""

from .core import ActorRegistry, EventStream, Publication, StreamError, parse_event_stream, validate_stream
from .estimation import ChoiceData, FitOptions, FitResult, aic_ledger, fit, log_partial_likelihood, robust_variance
from .history import HistoryIndex
from .pipeline import ModelSpec, build_designs, fit_stream
from .sampling import ControlConfig, sample_author_controls, sample_citation_controls
from .simulation import SimulationConfig, recovery_experiment, simulate_stream
from .statistics import AuthorStat, CitationStat, TransformSpec, apply_transform, fit_transform

__all__ = [
    "ActorRegistry", "EventStream", "Publication", "StreamError", "parse_event_stream", "validate_stream",
    "ChoiceData", "FitOptions", "FitResult", "aic_ledger", "fit", "log_partial_likelihood", "robust_variance",
    "HistoryIndex", "ModelSpec", "build_designs", "fit_stream",
    "ControlConfig", "sample_author_controls", "sample_citation_controls",
    "SimulationConfig", "recovery_experiment", "simulate_stream",
    "AuthorStat", "CitationStat", "TransformSpec", "apply_transform", "fit_transform",
]
