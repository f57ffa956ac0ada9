"""From an event stream to fitted author and citation models."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import EventStream
from .estimation import ChoiceData, FitOptions, FitResult, fit
from .history import HistoryIndex
from .sampling import ControlConfig, Stratum, sample_author_controls, sample_citation_controls
from .statistics import (
    ALL_AUTHOR_STATS,
    ALL_CITATION_STATS,
    RawDesign,
    TransformSpec,
    apply_transform,
    author_stat_block,
    citation_stat_block,
    fit_transform,
    parse_kind,
)

logger = logging.getLogger(__name__)

MODELS = ("author", "citation")


@dataclass
class ModelSpec:
    author_kinds: tuple = ALL_AUTHOR_STATS
    citation_kinds: tuple = ALL_CITATION_STATS
    sqrt: bool = True
    standardize: bool = True
    citation_repetition_sqrt: bool = True
    controls: ControlConfig = field(default_factory=ControlConfig)

    def __post_init__(self):
        self.author_kinds = tuple(parse_kind(k, "author") for k in self.author_kinds)
        self.citation_kinds = tuple(parse_kind(k, "citation") for k in self.citation_kinds)

    def kinds(self, model: str) -> tuple:
        return self.author_kinds if model == "author" else self.citation_kinds

    def transform_skeleton(self, model: str) -> TransformSpec:
        return TransformSpec.default(
            self.kinds(model),
            sqrt=self.sqrt,
            standardize=self.standardize,
            citation_repetition_sqrt=self.citation_repetition_sqrt,
        )


@dataclass
class DesignDiagnostics:
    strata: int = 0
    non_informative: int = 0
    full_enumeration: int = 0
    rows: int = 0


class _Accumulator:
    def __init__(self, model, kinds, names):
        self.model = model
        self.kinds = kinds
        self.names = names
        self.values = []
        self.stratum = []
        self.is_event = []
        self.members = []
        self.lengths = []
        self.diag = DesignDiagnostics()

    def add(self, stratum: Stratum, block: np.ndarray, values: np.ndarray) -> None:
        m = block.shape[0]
        self.values.append(values)
        self.stratum.append(np.full(m, stratum.event_index, dtype=np.int64))
        flags = np.zeros(m, dtype=bool)
        flags[0] = True
        self.is_event.append(flags)
        self.members.append(block.reshape(-1).astype(np.int32))
        self.lengths.append(np.full(m, block.shape[1], dtype=np.int64))
        self.diag.strata += 1
        self.diag.rows += m
        self.diag.non_informative += not stratum.informative
        self.diag.full_enumeration += stratum.full_enumeration

    def finish(self) -> RawDesign:
        p = len(self.kinds)
        if not self.values:
            return RawDesign(
                self.model, self.kinds, np.zeros(0, np.int64), np.zeros(0, bool), np.zeros((0, p)),
                np.zeros(0, np.int32), np.zeros(1, np.int64), self.names,
            )
        lengths = np.concatenate(self.lengths)
        return RawDesign(
            self.model,
            self.kinds,
            np.concatenate(self.stratum),
            np.concatenate(self.is_event),
            np.vstack(self.values),
            np.concatenate(self.members),
            np.concatenate([[0], np.cumsum(lengths)]),
            self.names,
        )


def build_designs(
    stream: EventStream,
    spec: ModelSpec,
    models: Sequence[str] = MODELS,
    strata_sink=None,
    skip_events: int = 0,
):
    """Sample strata for every event and evaluate raw statistics on the prior history.

    Returns ``(designs, diagnostics)`` keyed by model. Events before
    ``skip_events`` only feed the history. ``strata_sink``, if given, is
    called with every ``Stratum``.
    """
    for m in models:
        if m not in MODELS:
            raise ValueError(f"unknown model {m!r}")
    registry = stream.registry
    index = HistoryIndex(registry, capacity=max(len(stream), 1))
    acc = {
        "author": _Accumulator("author", spec.author_kinds, registry.actors),
        "citation": _Accumulator("citation", spec.citation_kinds, index.works),
    }
    for e, pub in enumerate(stream.publications):
        if e >= skip_events:
            if "author" in models:
                s = sample_author_controls(registry, pub, spec.controls, event_index=e)
                block = s.block()
                vals = author_stat_block(index, block, spec.author_kinds)
                acc["author"].add(s, block, vals)
                if strata_sink is not None:
                    strata_sink(s)
            if "citation" in models and pub.citations:
                s = sample_citation_controls(index, pub, spec.controls, event_index=e)
                block = s.block()
                apos = [registry.position(a) for a in pub.authors]
                vals = citation_stat_block(index, block, apos, spec.citation_kinds)
                acc["citation"].add(s, block, vals)
                if strata_sink is not None:
                    strata_sink(s)
        index.apply_event(pub)
    designs = {m: acc[m].finish() for m in models}
    diags = {m: acc[m].diag for m in models}
    return designs, diags


def to_choice_data(raw: RawDesign, transform: TransformSpec) -> ChoiceData:
    """Transform a raw design and group it into strata, dropping strata without controls."""
    values = apply_transform(raw.values, transform) if len(raw) else raw.values
    if len(raw) == 0:
        return ChoiceData.from_blocks([], raw.kinds)
    heads = np.flatnonzero(raw.is_event)
    bounds = np.append(heads, len(raw))
    sizes = np.diff(bounds)
    keep_rows = np.repeat(sizes >= 2, sizes)
    kept_sizes = sizes[sizes >= 2]
    starts = np.concatenate([[0], np.cumsum(kept_sizes)])
    return ChoiceData(values[keep_rows], starts, raw.kinds)


@dataclass
class ModelFit:
    model: str
    result: FitResult
    transform: TransformSpec
    diagnostics: DesignDiagnostics
    data: ChoiceData = field(repr=False, default=None)


def fit_design(
    raw: RawDesign,
    skeleton: TransformSpec,
    options: FitOptions | None = None,
    fixed_transform: bool = False,
) -> tuple[FitResult, TransformSpec, ChoiceData]:
    transform = skeleton if fixed_transform else fit_transform(raw, skeleton)
    data = to_choice_data(raw, transform)
    return fit(data, options), transform, data


def fit_stream(
    stream: EventStream,
    spec: ModelSpec,
    models: Sequence[str] = MODELS,
    options: FitOptions | None = None,
    strata_sink=None,
) -> dict:
    designs, diags = build_designs(stream, spec, models, strata_sink=strata_sink)
    out = {}
    for m in models:
        result, transform, data = fit_design(designs[m], spec.transform_skeleton(m), options)
        out[m] = ModelFit(m, result, transform, diags[m], data)
    return out
