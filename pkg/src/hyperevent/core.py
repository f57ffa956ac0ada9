"""Domain types, event-stream ingestion and validation.

A publication is a group-to-set event: a set of authors writes a work that
cites a set of earlier works. Time is only an order, represented by strictly
increasing integer sequence positions.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Iterator, Sequence

logger = logging.getLogger(__name__)

ActorId = str
WorkId = str

CITATION_POLICIES = ("drop", "strict")


class StreamError(ValueError):
    """Raised when an events or actors source cannot be turned into a valid stream."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class ActorRegistry:
    """The fixed actor universe with the binary ``chilean`` attribute."""

    actors: tuple[ActorId, ...]
    chilean: tuple[bool, ...]

    def __post_init__(self):
        if len(self.actors) != len(self.chilean):
            raise ValueError("actors and chilean flags differ in length")
        seen = set()
        for a in self.actors:
            if not isinstance(a, str) or not a:
                raise ValueError(f"invalid actor id {a!r}")
            if a in seen:
                raise ValueError(f"duplicate actor id {a!r}")
            seen.add(a)
        object.__setattr__(self, "_pos", {a: i for i, a in enumerate(self.actors)})

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[ActorId, bool]]) -> "ActorRegistry":
        pairs = list(pairs)
        return cls(tuple(a for a, _ in pairs), tuple(bool(c) for _, c in pairs))

    def __len__(self) -> int:
        return len(self.actors)

    def __contains__(self, actor: object) -> bool:
        return actor in self._pos

    def position(self, actor: ActorId) -> int:
        try:
            return self._pos[actor]
        except KeyError:
            raise KeyError(f"unknown actor {actor!r}") from None

    def is_chilean(self, actor: ActorId) -> bool:
        return self.chilean[self.position(actor)]


@dataclass(frozen=True)
class Publication:
    work: WorkId
    authors: frozenset[ActorId]
    citations: frozenset[WorkId]
    seq: int

    def __post_init__(self):
        object.__setattr__(self, "authors", frozenset(self.authors))
        object.__setattr__(self, "citations", frozenset(self.citations))


@dataclass(frozen=True)
class EventStream:
    publications: tuple[Publication, ...]
    registry: ActorRegistry
    # original ordering keys for records whose seq was reassigned at ingestion
    original_keys: dict = field(default_factory=dict, compare=False)
    dropped_citations: int = field(default=0, compare=False)

    def __len__(self) -> int:
        return len(self.publications)

    def __iter__(self) -> Iterator[Publication]:
        return iter(self.publications)

    def __getitem__(self, i):
        return self.publications[i]


@dataclass(frozen=True)
class Violation:
    kind: str
    message: str
    seq: int | None = None

    def __str__(self) -> str:
        where = f" (seq {self.seq})" if self.seq is not None else ""
        return f"{self.kind}{where}: {self.message}"


# --------------------------------------------------------------------------- parsing


def _open(source) -> IO[str]:
    if isinstance(source, (str, Path)):
        return open(source, encoding="utf-8", newline="")
    return source


def parse_actors(source) -> ActorRegistry:
    """Read an ``actor_id,chilean`` table."""
    fh = _open(source)
    try:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["actor_id", "chilean"]:
            raise StreamError("actors header must be 'actor_id,chilean'", line=1)
        pairs = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise StreamError(f"expected 2 fields, got {len(row)}", line=lineno)
            actor, flag = row[0].strip(), row[1].strip()
            if not actor:
                raise StreamError("empty actor id", line=lineno)
            if flag not in ("0", "1"):
                raise StreamError(f"chilean must be 0 or 1, got {flag!r}", line=lineno)
            pairs.append((actor, flag == "1"))
    finally:
        if fh is not source:
            fh.close()
    try:
        return ActorRegistry.from_pairs(pairs)
    except ValueError as exc:
        raise StreamError(str(exc)) from None


def _read_event_records(source) -> list[tuple[int, dict]]:
    fh = _open(source)
    records = []
    try:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise StreamError(f"malformed record: {exc.msg}", line=lineno) from None
            if not isinstance(rec, dict):
                raise StreamError("record is not an object", line=lineno)
            work = rec.get("work")
            if not isinstance(work, str) or not work:
                raise StreamError("field 'work' must be a non-empty string", line=lineno)
            for name in ("authors", "citations"):
                val = rec.get(name, [] if name == "citations" else None)
                if not isinstance(val, list) or not all(isinstance(x, str) and x for x in val):
                    raise StreamError(f"field '{name}' must be an array of strings", line=lineno)
            seq = rec.get("seq")
            if seq is not None and (isinstance(seq, bool) or not isinstance(seq, int)):
                raise StreamError("field 'seq' must be an integer", line=lineno)
            records.append((lineno, rec))
    finally:
        if fh is not source:
            fh.close()
    return records


def parse_event_stream(events_source, actors_source, citation_policy: str = "drop") -> EventStream:
    """Parse and validate an events file plus actors file.

    Records are ordered by ``seq`` (file order when absent). Records whose
    ``seq`` ties are given consecutive positions in file order; the raw key is
    kept in ``EventStream.original_keys``. Under the ``drop`` policy citations
    to works outside the corpus are removed and counted; ``strict`` rejects them.
    Citations of corpus works that appear later are always rejected.
    """
    if citation_policy not in CITATION_POLICIES:
        raise ValueError(f"citation_policy must be one of {CITATION_POLICIES}")
    registry = actors_source if isinstance(actors_source, ActorRegistry) else parse_actors(actors_source)
    records = _read_event_records(events_source)

    keyed = []
    for order, (lineno, rec) in enumerate(records):
        key = rec.get("seq")
        keyed.append((order if key is None else key, order, lineno, rec))
    keyed.sort(key=lambda r: (r[0], r[1]))

    works_seen: dict[str, int] = {}
    corpus = {rec["work"] for _, _, _, rec in keyed}
    raw_keys = [k for k, _, _, _ in keyed]
    has_ties = len(set(raw_keys)) != len(raw_keys)
    original_keys = {}
    pubs = []
    dropped = 0
    for pos, (key, _, lineno, rec) in enumerate(keyed):
        work = rec["work"]
        if work in works_seen:
            raise StreamError(f"duplicate work id {work!r}", line=lineno)
        seq = pos if has_ties else key
        if has_ties and key != pos:
            original_keys[work] = key
        authors = rec["authors"]
        if not authors:
            raise StreamError("author list is empty", line=lineno)
        for a in authors:
            if a not in registry:
                raise StreamError(f"unregistered author {a!r}", line=lineno)
        citations = []
        for c in rec.get("citations", []):
            if c == work:
                raise StreamError(f"self-reference: work {work!r} cites itself", line=lineno)
            if c in works_seen:
                citations.append(c)
                continue
            if c in corpus:
                raise StreamError(f"forward citation: {work!r} cites later work {c!r}", line=lineno)
            if citation_policy == "strict":
                raise StreamError(f"citation of unknown work {c!r}", line=lineno)
            dropped += 1
            logger.warning("line %d: dropped citation of unknown work %r", lineno, c)
        works_seen[work] = seq
        pubs.append(Publication(work, frozenset(authors), frozenset(citations), seq))
    if has_ties:
        logger.warning("tied sequence keys; assigned consecutive positions in file order")
    return EventStream(tuple(pubs), registry, original_keys, dropped)


# --------------------------------------------------------------------------- serialization


def write_events(stream: EventStream | Sequence[Publication], target) -> None:
    pubs = stream.publications if isinstance(stream, EventStream) else stream
    fh = open(target, "w", encoding="utf-8") if isinstance(target, (str, Path)) else target
    try:
        for p in pubs:
            rec = {
                "work": p.work,
                "seq": p.seq,
                "authors": sorted(p.authors),
                "citations": sorted(p.citations),
            }
            fh.write(json.dumps(rec) + "\n")
    finally:
        if fh is not target:
            fh.close()


def write_actors(registry: ActorRegistry, target) -> None:
    fh = open(target, "w", encoding="utf-8", newline="") if isinstance(target, (str, Path)) else target
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["actor_id", "chilean"])
        for a, c in zip(registry.actors, registry.chilean):
            w.writerow([a, int(c)])
    finally:
        if fh is not target:
            fh.close()


# --------------------------------------------------------------------------- validation


class ValidationReport(list):
    """List of violations; ``notes`` carries informational findings such as reassigned ties."""

    def __init__(self, violations=(), notes=()):
        super().__init__(violations)
        self.notes = list(notes)


def validate_stream(stream: EventStream) -> ValidationReport:
    """Check every Publication and EventStream invariant; violations are returned, not raised."""
    out: list[Violation] = []
    first_seq: dict[str, int] = {}
    for p in stream.publications:
        if p.work in first_seq:
            out.append(Violation("duplicate work", f"work {p.work!r} appears more than once", p.seq))
        else:
            first_seq[p.work] = p.seq
    prev = None
    for p in stream.publications:
        if not isinstance(p.work, str) or not p.work:
            out.append(Violation("invalid work id", repr(p.work), p.seq))
        if prev is not None and p.seq <= prev:
            out.append(Violation("non-strict ordering", f"seq {p.seq} follows seq {prev}", p.seq))
        prev = p.seq
        if not p.authors:
            out.append(Violation("empty authors", f"work {p.work!r} has no authors", p.seq))
        for a in sorted(p.authors):
            if a not in stream.registry:
                out.append(Violation("unregistered author", f"{a!r} in work {p.work!r}", p.seq))
        for c in sorted(p.citations):
            if c == p.work:
                out.append(Violation("self-reference", f"work {p.work!r} cites itself", p.seq))
            elif c not in first_seq:
                out.append(Violation("unknown citation", f"work {p.work!r} cites unknown {c!r}", p.seq))
            elif first_seq[c] >= p.seq:
                out.append(
                    Violation(
                        "forward citation",
                        f"work {p.work!r} cites {c!r} published at seq {first_seq[c]}",
                        p.seq,
                    )
                )
    notes = [
        Violation("reassigned seq", f"work {work!r} had tied key {key!r}", first_seq.get(work))
        for work, key in sorted(stream.original_keys.items())
    ]
    return ValidationReport(out, notes)
