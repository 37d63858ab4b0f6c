"""Log ingestion: raw-line reading, template extraction, pre-parsed CSV I/O.

Two pathways produce the same shape of output, a list of ``LogRecord`` plus an
``EventVocabulary``: parse raw text with the built-in token-similarity
clusterer, or load a pre-parsed CSV that already carries ground-truth
templates. Benchmarks should prefer the pre-parsed pathway so parser quality
never contaminates detector comparisons.
"""

from __future__ import annotations

import calendar
import csv
import json
import re
import time
from dataclasses import dataclass

from .exceptions import FormatError

PLACEHOLDER = "<*>"

PARSED_COLUMNS = ["LineId", "Timestamp", "Identifier", "EventTemplate", "Label"]

LABEL_NORMAL = "normal"
LABEL_ANOMALY = "anomaly"


@dataclass
class LogRecord:
    """One parsed log line."""

    line_no: int
    timestamp: int
    identifier: str | None
    content: str
    event_id: int | None = None
    label: str | None = None


class EventVocabulary:
    """Distinct log templates with dense, stable integer ids.

    Ids run 0..n-1 in first-appearance order. The id ``n`` (== ``unknown_id``)
    is reserved for events unseen at training time and never maps to a
    template string.
    """

    def __init__(self, templates: list[str] | None = None):
        self.templates: list[str] = []
        self.id_of: dict[str, int] = {}
        for t in templates or []:
            self.add(t)

    def add(self, template: str) -> int:
        existing = self.id_of.get(template)
        if existing is not None:
            return existing
        new_id = len(self.templates)
        self.templates.append(template)
        self.id_of[template] = new_id
        return new_id

    def __len__(self) -> int:
        return len(self.templates)

    @property
    def unknown_id(self) -> int:
        return len(self.templates)

    @property
    def n_ids(self) -> int:
        """Number of event ids including the reserved unknown id."""
        return len(self.templates) + 1

    def extended(self, new_templates: list[str]) -> "EventVocabulary":
        vocab = EventVocabulary(self.templates)
        for t in new_templates:
            vocab.add(t)
        return vocab

    def __eq__(self, other) -> bool:
        return isinstance(other, EventVocabulary) and self.templates == other.templates


@dataclass
class FormatSpec:
    """How to pull timestamp, identifier, and content out of a raw line.

    ``timestamp_regex`` must match the whole interesting part of the line with
    group 1 capturing the timestamp text (parsed with ``timestamp_format``,
    interpreted as UTC) and group ``content_group`` capturing the free-text
    message. ``identifier_regex`` group 1, when given, is searched inside the
    content.
    """

    timestamp_regex: str
    timestamp_format: str
    content_group: int
    identifier_regex: str | None = None

    @classmethod
    def from_json(cls, doc: dict) -> "FormatSpec":
        try:
            return cls(
                timestamp_regex=doc["timestamp_regex"],
                timestamp_format=doc["timestamp_format"],
                content_group=int(doc["content_group"]),
                identifier_regex=doc.get("identifier_regex"),
            )
        except KeyError as missing:
            raise FormatError(f"format spec missing key {missing}") from None

    @classmethod
    def load(cls, path) -> "FormatSpec":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def read_raw(path, spec: FormatSpec) -> tuple[list[LogRecord], list[tuple[int, str]]]:
    """Read a raw log file; lines that do not match become rejects, not errors."""
    line_pattern = re.compile(spec.timestamp_regex)
    id_pattern = re.compile(spec.identifier_regex) if spec.identifier_regex else None
    records: list[LogRecord] = []
    rejects: list[tuple[int, str]] = []
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            match = line_pattern.search(line)
            if match is None:
                rejects.append((line_no, line))
                continue
            try:
                parsed = time.strptime(match.group(1), spec.timestamp_format)
                timestamp = calendar.timegm(parsed)
                content = match.group(spec.content_group).strip()
            except (ValueError, IndexError):
                rejects.append((line_no, line))
                continue
            identifier = None
            if id_pattern is not None:
                id_match = id_pattern.search(content)
                if id_match is not None:
                    identifier = id_match.group(1)
            records.append(LogRecord(line_no, timestamp, identifier, content))
    return records, rejects


def write_rejects(rejects: list[tuple[int, str]], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for line_no, line in rejects:
            fh.write(f"{line_no}\t{line}\n")


# ---------------------------------------------------------------------------
# pre-parsed CSV


def read_parsed(path) -> tuple[list[LogRecord], EventVocabulary]:
    """Load a pre-parsed CSV (LineId, Timestamp, Identifier, EventTemplate, Label)."""
    records: list[LogRecord] = []
    vocab = EventVocabulary()
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for column in PARSED_COLUMNS:
            if column not in header:
                raise FormatError(f"parsed CSV missing required column {column!r}")
        for row in reader:
            template = row["EventTemplate"]
            event_id = vocab.add(template)
            label = row["Label"].strip() or None
            if label is not None and label not in (LABEL_NORMAL, LABEL_ANOMALY):
                raise FormatError(f"unrecognized label {label!r}")
            records.append(LogRecord(
                line_no=int(row["LineId"]),
                timestamp=int(row["Timestamp"]),
                identifier=row["Identifier"] or None,
                content=template,
                event_id=event_id,
                label=label,
            ))
    return records, vocab


def write_parsed(records: list[LogRecord], vocab: EventVocabulary, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(PARSED_COLUMNS)
        for rec in records:
            template = vocab.templates[rec.event_id] if rec.event_id is not None else rec.content
            writer.writerow([
                rec.line_no,
                rec.timestamp,
                rec.identifier or "",
                template,
                rec.label or "",
            ])


# ---------------------------------------------------------------------------
# template extraction

_HAS_DIGIT = re.compile(r"\d")


def _mask_token(token: str) -> str:
    # parameter-looking tokens: anything carrying a digit (counts, ids, hex,
    # addresses) or a path separator collapses to the placeholder
    if token == PLACEHOLDER:
        return token
    if _HAS_DIGIT.search(token) or "/" in token:
        return PLACEHOLDER
    return token


def parse_templates(records: list[LogRecord], similarity_threshold: float = 0.5
                    ) -> tuple[EventVocabulary, list[LogRecord]]:
    """Cluster record contents into templates and assign event ids in place.

    A record joins the best-matching existing template when the token counts
    agree and the fraction of position-wise equal tokens reaches the
    threshold; positions that disagree become placeholders. Otherwise its
    masked tokens found a new template. Deterministic given record order.
    """
    if not 0.0 < similarity_threshold <= 1.0:
        raise ValueError("similarity_threshold must be in (0, 1]")
    template_tokens: list[list[str]] = []
    by_length: dict[int, list[int]] = {}
    assignments: list[int] = []

    for rec in records:
        tokens = [_mask_token(t) for t in rec.content.split()]
        best_id, best_sim = None, similarity_threshold
        for tid in by_length.get(len(tokens), []):
            existing = template_tokens[tid]
            same = sum(1 for a, b in zip(tokens, existing) if a == b)
            sim = same / len(tokens) if tokens else 1.0
            if sim >= best_sim and (best_id is None or sim > best_sim):
                best_id, best_sim = tid, sim
        if best_id is None:
            best_id = len(template_tokens)
            template_tokens.append(tokens)
            by_length.setdefault(len(tokens), []).append(best_id)
        else:
            existing = template_tokens[best_id]
            template_tokens[best_id] = [
                a if a == b else PLACEHOLDER for a, b in zip(existing, tokens)
            ]
        assignments.append(best_id)

    # merging can collapse two templates onto the same masked string; densify
    vocab = EventVocabulary()
    remap: dict[int, int] = {}
    for tid, tokens in enumerate(template_tokens):
        remap[tid] = vocab.add(" ".join(tokens))
    for rec, tid in zip(records, assignments):
        rec.event_id = remap[tid]
    return vocab, records


_CAMEL_BOUNDARY = re.compile(r"(?<=[a-z0-9])(?=[A-Z])|(?<=[A-Z])(?=[A-Z][a-z])")
_NON_ALNUM = re.compile(r"[^0-9A-Za-z]+")


def tokenize_template(template: str) -> list[str]:
    """Lowercased words of a template: split on non-alphanumerics and
    camelCase boundaries, dropping placeholders and pure digits."""
    words: list[str] = []
    for chunk in _NON_ALNUM.split(template):
        if not chunk:
            continue
        for piece in _CAMEL_BOUNDARY.split(chunk):
            if piece and not piece.isdigit():
                words.append(piece.lower())
    return words
