"""Scoring a disaggregation result against known ground truth.

Events are matched greedily by nearest time within a tolerance window
(same device, same kind only); the metrics summarize switch-time error,
level error, per-device energy error, and aggregate fit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .engine import DisaggregationResult, SwitchEvent
from .errors import ValidationError
from .models import simulate_zero_state
from .scenario import Scenario

DEFAULT_MATCH_WINDOW = 10


@dataclass(frozen=True)
class EventMatch:
    """Greedy nearest-time pairing of truth and estimated events."""

    pairs: tuple[tuple[SwitchEvent, SwitchEvent], ...]
    unmatched_truth: tuple[SwitchEvent, ...]
    unmatched_estimate: tuple[SwitchEvent, ...]


@dataclass(frozen=True)
class Metrics:
    switch_time_mae: float | None
    level_relative_errors: tuple[float, ...]
    per_device_energy_error: dict[str, float]
    aggregate_rmse: float
    precision: float
    recall: float

    def __post_init__(self):
        if not (0.0 <= self.precision <= 1.0 and 0.0 <= self.recall <= 1.0):
            raise ValidationError("precision and recall must lie in [0, 1]")


def truth_events(scenario: Scenario) -> list[SwitchEvent]:
    """Flatten the scenario's inputs into a device-indexed event list."""
    events = []
    for dev, inp in enumerate(scenario.inputs):
        for k, level in inp.events:
            kind = "off" if level == 0.0 else "on"
            events.append(SwitchEvent(k, dev, kind, level))
    return sorted(events, key=lambda e: e.sort_key())


def match_events(
    truth: list[SwitchEvent], estimate: list[SwitchEvent], match_window: int
) -> EventMatch:
    """Pair events greedily by |time difference|, nearest first.

    Only events with the same device and kind within the window can
    pair; each event is used at most once.
    """
    candidates = []
    for ti, t in enumerate(truth):
        for ei, e in enumerate(estimate):
            if t.device != e.device or t.kind != e.kind:
                continue
            dt = abs(t.k - e.k)
            if dt <= match_window:
                candidates.append((dt, ti, ei))
    candidates.sort()
    used_t: set[int] = set()
    used_e: set[int] = set()
    pairs = []
    for _, ti, ei in candidates:
        if ti in used_t or ei in used_e:
            continue
        used_t.add(ti)
        used_e.add(ei)
        pairs.append((truth[ti], estimate[ei]))
    unmatched_t = tuple(t for i, t in enumerate(truth) if i not in used_t)
    unmatched_e = tuple(e for i, e in enumerate(estimate) if i not in used_e)
    return EventMatch(tuple(pairs), unmatched_t, unmatched_e)


def score(
    result: DisaggregationResult,
    truth: Scenario,
    match_window: int = DEFAULT_MATCH_WINDOW,
) -> Metrics:
    """All metrics of a result against a scenario's ground truth.

    The scenario's devices must carry the same names as the result's, in
    the same order.  aggregate_rmse compares the estimated total against
    the noiseless sum of the true device outputs.
    """
    if truth.device_names != result.device_names:
        raise ValidationError(
            f"device names differ: truth {truth.device_names} "
            f"vs result {result.device_names}"
        )
    total = result.estimated_total
    if truth.horizon != len(total) or total.start_index != 0:
        raise ValidationError(
            f"index ranges differ: truth [0, {truth.horizon}) vs "
            f"result [{total.start_index}, {total.end_index})"
        )

    t_events = truth_events(truth)
    e_events = list(result.events)
    matched = match_events(t_events, e_events, match_window)

    if matched.pairs:
        mae = float(np.mean([abs(t.k - e.k) for t, e in matched.pairs]))
    else:
        mae = None
    level_errors = tuple(
        abs(e.level - t.level) / abs(t.level)
        for t, e in matched.pairs
        if t.kind == "on"
    )
    precision = len(matched.pairs) / len(e_events) if e_events else 1.0
    recall = len(matched.pairs) / len(t_events) if t_events else 1.0

    energy_error: dict[str, float] = {}
    truth_outputs = []
    for dev, (model, inp) in enumerate(zip(truth.models, truth.inputs)):
        y_true = simulate_zero_state(model, inp.expand(0, truth.horizon)).values
        truth_outputs.append(y_true)
        y_est = result.estimated_outputs[dev].values
        denom = float(np.sum(np.abs(y_true)))
        num = float(np.sum(np.abs(y_est - y_true)))
        if denom == 0.0:
            energy_error[model.name] = 0.0 if num == 0.0 else float("inf")
        else:
            energy_error[model.name] = num / denom
    # Canonical summation order keeps the metric bit-identical under a
    # consistent relabeling of devices.
    clean_total = np.zeros(truth.horizon)
    for y_true in sorted(truth_outputs, key=tuple):
        clean_total = clean_total + y_true
    rmse = float(np.sqrt(np.mean((total.values - clean_total) ** 2)))

    return Metrics(
        switch_time_mae=mae,
        level_relative_errors=level_errors,
        per_device_energy_error=energy_error,
        aggregate_rmse=rmse,
        precision=precision,
        recall=recall,
    )


def metrics_to_dict(metrics: Metrics) -> dict:
    return {
        "switch_time_mae": metrics.switch_time_mae,
        "level_errors": list(metrics.level_relative_errors),
        "per_device_energy_error": dict(metrics.per_device_energy_error),
        "aggregate_rmse": metrics.aggregate_rmse,
        "precision": metrics.precision,
        "recall": metrics.recall,
    }


def save_metrics(metrics: Metrics, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(metrics_to_dict(metrics), indent=2, sort_keys=True) + "\n"
    )
