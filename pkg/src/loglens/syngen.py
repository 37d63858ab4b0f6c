"""Deterministic synthetic log generator with planted ground-truth anomalies.

Normal sequences are walks over a seeded first-order automaton whose states
are log templates; anomalous sequences take a valid walk and apply exactly one
mutation: insert the designated error template, swap two adjacent events, or
truncate the walk to fewer events than the default forecasting window.
Insert/swap positions land past that window so every planted anomaly is
observable to window-based detectors; swaps are resampled until the mutated
sequence is no longer a valid walk. The automaton itself is emitted as a JSON
sidecar so tests can verify walks independently.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .exceptions import ConfigurationError
from .ingest import (
    EventVocabulary,
    LABEL_ANOMALY,
    LABEL_NORMAL,
    LogRecord,
    write_parsed,
)
from .rng import Rng, derive_seed

# one mutation per anomalous sequence; erroneous-event insertions dominate the
# mix (as in real failure logs), order shifts and early terminations are rarer
MUTATIONS = ("insert", "swap", "truncate")
MUTATION_WEIGHTS = (0.84, 0.04, 0.12)

TRUNCATE_BELOW = 10   # matches the default forecasting window size

_SERVICES = ["datanode", "namenode", "scheduler", "worker", "client", "proxy",
             "monitor", "replicator", "allocator", "broker"]
_ACTIONS = ["started", "finished", "received", "sent", "opened", "closed",
            "verified", "registered", "updated", "acknowledged"]
_OBJECTS = ["block", "packet", "session", "lease", "heartbeat", "request",
            "snapshot", "transfer", "checkpoint", "segment"]

ERROR_TEMPLATE = "task failed with fatal error <*>"


@dataclass
class GeneratorSpec:
    n_templates: int = 50
    n_sequences: int = 1000
    anomaly_rate: float = 0.05
    mean_length: int = 20
    automaton_branching: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.n_templates < 3:
            raise ConfigurationError("n_templates must be >= 3")
        if not 0.0 <= self.anomaly_rate < 1.0:
            raise ConfigurationError("anomaly_rate must be in [0, 1)")
        if self.mean_length < 2:
            raise ConfigurationError("mean_length must be >= 2")
        if self.automaton_branching < 1:
            raise ConfigurationError("automaton_branching must be >= 1")


@dataclass
class SyntheticDataset:
    records: list[LogRecord]
    vocab: EventVocabulary
    automaton: dict

    def write(self, csv_path, sidecar_path=None) -> None:
        write_parsed(self.records, self.vocab, csv_path)
        if sidecar_path is None:
            sidecar_path = Path(str(csv_path) + ".automaton.json")
        Path(sidecar_path).write_text(
            json.dumps(self.automaton, indent=2, sort_keys=True) + "\n",
            encoding="utf-8")


def _make_templates(n: int, rng: Rng) -> list[str]:
    capacity = len(_SERVICES) * len(_ACTIONS) * len(_OBJECTS)
    if n - 1 > capacity:
        raise ConfigurationError(f"n_templates capped at {capacity + 1}")
    templates: list[str] = []
    seen = set()
    while len(templates) < n - 1:
        text = (f"{rng.choice(_SERVICES)} {rng.choice(_ACTIONS)} "
                f"{rng.choice(_OBJECTS)} <*>")
        if text not in seen:
            seen.add(text)
            templates.append(text)
    templates.append(ERROR_TEMPLATE)  # designated error template, last index
    return templates


def _build_automaton(n_templates: int, branching: int, rng: Rng) -> dict:
    error_index = n_templates - 1
    states = list(range(error_index))  # the error template has no transitions
    transitions: dict[str, list] = {}
    for state in states:
        candidates = [s for s in states if s != state]
        successors = []
        pool = list(candidates)
        for _ in range(min(branching, len(pool))):
            successors.append(pool.pop(rng.integer(len(pool))))
        weights = [0.2 + 0.8 * rng.random() for _ in successors]
        total = sum(weights)
        transitions[str(state)] = [[succ, w / total]
                                   for succ, w in zip(successors, weights)]
    return {
        "start_index": 0,
        "error_index": error_index,
        "truncate_below": TRUNCATE_BELOW,
        "transitions": transitions,
    }


def _walk(automaton: dict, length: int, rng: Rng) -> list[int]:
    state = automaton["start_index"]
    events = [state]
    while len(events) < length:
        options = automaton["transitions"][str(state)]
        idx = rng.weighted_index([w for _, w in options])
        state = options[idx][0]
        events.append(state)
    return events


def is_valid_walk(events: list[int], automaton: dict) -> bool:
    if not events or events[0] != automaton["start_index"]:
        return False
    transitions = automaton["transitions"]
    for a, b in zip(events, events[1:]):
        options = transitions.get(str(a))
        if options is None or b not in [succ for succ, _ in options]:
            return False
    return True


def _mutation_plan(n_anomalous: int, rng: Rng) -> list[str]:
    """Exact largest-remainder apportionment of the mutation weights, then a
    shuffled placement, so the mix never drifts with the sampling lottery."""
    exact = [w * n_anomalous for w in MUTATION_WEIGHTS]
    counts = [int(x) for x in exact]
    remainders = sorted(range(len(exact)), key=lambda i: exact[i] - counts[i],
                        reverse=True)
    for i in range(n_anomalous - sum(counts)):
        counts[remainders[i % len(counts)]] += 1
    plan = [m for m, c in zip(MUTATIONS, counts) for _ in range(c)]
    rng.shuffle(plan)
    return plan


def _mutate(events: list[int], mutation: str, automaton: dict,
            rng: Rng) -> tuple[list[int], str]:
    error_index = automaton["error_index"]
    # insert/swap land at window-reachable positions: at or past the default
    # window size, but never dead-last (a final event enters no input window)
    lo = min(TRUNCATE_BELOW, max(1, len(events) - 2))
    if mutation == "insert":
        pos = lo + rng.integer(len(events) - lo)
        mutated = events[:pos] + [error_index] + events[pos:]
        return mutated, mutation
    if mutation == "swap":
        for _ in range(20):
            pos = lo + rng.integer(max(1, len(events) - 1 - lo))
            if pos + 1 >= len(events) or events[pos] == events[pos + 1]:
                continue
            mutated = list(events)
            mutated[pos], mutated[pos + 1] = mutated[pos + 1], mutated[pos]
            if not is_valid_walk(mutated, automaton):
                return mutated, mutation
        # no detectable swap found; fall back to an error insertion
        pos = lo + rng.integer(len(events) - lo)
        return events[:pos] + [error_index] + events[pos:], "insert"
    # truncate: fewer events than the default forecasting window
    upper = min(TRUNCATE_BELOW - 1, len(events) - 1)
    new_len = 1 + rng.integer(upper)
    return events[:new_len], mutation


def generate(spec: GeneratorSpec) -> SyntheticDataset:
    """Generate records in the pre-parsed CSV schema plus the automaton.

    Exactly round(anomaly_rate * n_sequences) sequences are anomalous; every
    record of an anomalous sequence carries the anomaly label so that
    identifier partitioning reproduces sequence labels by the contains-any
    rule.
    """
    rng = Rng(derive_seed(spec.seed, "syngen"))
    templates = _make_templates(spec.n_templates, rng)
    automaton = _build_automaton(spec.n_templates, spec.automaton_branching, rng)
    automaton["templates"] = templates

    n_anomalous = int(spec.anomaly_rate * spec.n_sequences + 0.5)
    flags = [True] * n_anomalous + [False] * (spec.n_sequences - n_anomalous)
    rng.shuffle(flags)
    plan = _mutation_plan(n_anomalous, rng)

    records: list[LogRecord] = []
    vocab = EventVocabulary()
    timestamp = 0
    line_no = 1
    lo_len = max(TRUNCATE_BELOW + 2, spec.mean_length - 4)
    hi_len = spec.mean_length + 4
    next_mutation = 0
    for index, anomalous in enumerate(flags):
        length = lo_len + rng.integer(hi_len - lo_len + 1)
        events = _walk(automaton, length, rng)
        if anomalous:
            events, _ = _mutate(events, plan[next_mutation], automaton, rng)
            next_mutation += 1
        label = LABEL_ANOMALY if anomalous else LABEL_NORMAL
        identifier = f"seq_{index:05d}"
        for event in events:
            template = templates[event]
            records.append(LogRecord(
                line_no=line_no,
                timestamp=timestamp,
                identifier=identifier,
                content=template,
                event_id=vocab.add(template),
                label=label,
            ))
            line_no += 1
            timestamp += 1
    return SyntheticDataset(records=records, vocab=vocab, automaton=automaton)
