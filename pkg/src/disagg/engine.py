"""Recovery of per-device switch schedules from an aggregate signal.

The engine tracks one (or, with a beam, several) on/off configuration
hypotheses online.  While the configuration's predicted output tracks
the measurement it is kept; a persistent positive deviation triggers an
on-event search (every off device crossed with nearby start times, each
scored by a closed-form constant-input fit over a lookahead window); a
persistent negative deviation is attributed to the on device whose
steady contribution is nearest the observed drop.  Every accepted event
adds exactly one nonzero entry to the global input difference, so the
event count is the sparsity of the reconstruction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import reduce
from typing import NamedTuple

import numpy as np

from .errors import DegenerateFitError, ValidationError
from .models import (
    DeviceModel,
    dc_gain,
    is_stable,
    simulate_zero_state,
    unit_step_values,
)
from .series import PiecewiseInput, SignalSeries

MAD_CONSISTENCY = 0.6745
NOISE_THRESHOLD_MULTIPLE = 5.0
# Absolute floor keeps noiseless signals from tripping on float dust.
THRESHOLD_FLOOR_RELATIVE = 1e-9


@dataclass(frozen=True)
class EngineParams:
    """Tunables for detection, fitting, and hypothesis search.

    deviation_threshold of None means: estimate the noise level from the
    measurement and use NOISE_THRESHOLD_MULTIPLE times it.  lookahead is
    the number of future samples used to score an on-event, and with
    backtrack_window bounds the online output delay.
    """

    deviation_threshold: float | None = None
    persistence: int = 2
    lookahead: int = 15
    backtrack_window: int = 5
    min_on_duration: int = 3
    min_level: float = 0.0
    beam_width: int = 1

    def __post_init__(self):
        if self.deviation_threshold is not None and self.deviation_threshold <= 0:
            raise ValidationError("deviation_threshold must be > 0 when given")
        if self.persistence < 1:
            raise ValidationError("persistence must be >= 1")
        if self.lookahead < 1:
            raise ValidationError("lookahead must be >= 1")
        if self.backtrack_window < 0:
            raise ValidationError("backtrack_window must be >= 0")
        if self.min_on_duration < 0:
            raise ValidationError("min_on_duration must be >= 0")
        if self.beam_width < 1:
            raise ValidationError("beam_width must be >= 1")


class ChangeSignal(NamedTuple):
    kind: str  # "increase" | "decrease"
    k_star: int


class FitResult(NamedTuple):
    level: float
    sse: float


class Candidate(NamedTuple):
    """On-event candidate; tuple order is the selection tie-break order."""

    sse: float
    k_prime: int
    device: int
    level: float


@dataclass(frozen=True)
class SwitchEvent:
    k: int
    device: int
    kind: str  # "on" | "off"
    level: float

    def sort_key(self) -> tuple:
        return (self.k, self.device, self.kind, self.level)


@dataclass(frozen=True)
class UnexplainedEvent:
    k: int
    kind: str
    magnitude: float


@dataclass(frozen=True)
class DeviceState:
    on: bool = False
    level: float = 0.0
    since: int = 0


@dataclass(frozen=True)
class Configuration:
    """A full assignment of device statuses with its event history."""

    states: tuple[DeviceState, ...]
    state_vectors: tuple[np.ndarray, ...] = ()
    event_log: tuple[SwitchEvent, ...] = ()
    cumulative_sse: float = 0.0

    def __post_init__(self):
        times = [e.k for e in self.event_log]
        if len(set(times)) != len(times):
            raise ValidationError("two events share a time index")
        per_device: dict[int, str] = {}
        for e in sorted(self.event_log, key=lambda ev: ev.k):
            prev = per_device.get(e.device)
            if prev == e.kind or (prev is None and e.kind == "off"):
                raise ValidationError(
                    f"device {e.device} events do not alternate on/off"
                )
            per_device[e.device] = e.kind


@dataclass(frozen=True)
class DisaggregationResult:
    """Per-device input estimates with the outputs they imply."""

    device_names: tuple[str, ...]
    estimates: tuple[PiecewiseInput, ...]
    estimated_outputs: tuple[SignalSeries, ...]
    estimated_total: SignalSeries
    residual_rms: float
    events: tuple[SwitchEvent, ...]
    unexplained: tuple[UnexplainedEvent, ...]
    params: EngineParams


def estimate_noise_std(y: SignalSeries) -> float:
    """Robust noise level from first differences.

    The median absolute deviation ignores the sparse switching jumps, so
    the estimate reflects the quiet segments; differencing doubles the
    noise variance, hence the 1/sqrt(2).
    """
    if len(y) < 2:
        return 0.0
    d = np.diff(y.values)
    mad = float(np.median(np.abs(d - np.median(d))))
    return mad / MAD_CONSISTENCY / math.sqrt(2.0)


def resolve_threshold(y_m: SignalSeries, params: EngineParams) -> float:
    if params.deviation_threshold is not None:
        return params.deviation_threshold
    floor = THRESHOLD_FLOOR_RELATIVE * max(
        1.0, float(np.max(np.abs(y_m.values))) if len(y_m) else 1.0
    )
    return max(NOISE_THRESHOLD_MULTIPLE * estimate_noise_std(y_m), floor)


def _scan_change(
    resid: np.ndarray, p: int, threshold: float, persistence: int
) -> tuple[str, int] | None:
    """Run detection on a residual array ending at position p."""
    if p - persistence + 1 < 0:
        return None
    for j in range(p - persistence + 1, p + 1):
        if abs(resid[j]) <= threshold:
            return None
    ks = p - persistence + 1
    while ks > 0 and abs(resid[ks - 1]) > threshold:
        ks -= 1
    kind = "increase" if resid[ks] > 0 else "decrease"
    return (kind, ks)


def detect_change(
    y_m: SignalSeries, y_hat: SignalSeries, k: int, params: EngineParams
) -> ChangeSignal | None:
    """Report a persistent deviation of the measurement from its prediction.

    Returns None unless every one of the last `persistence` samples up to
    k deviates by more than the threshold; otherwise the change kind is
    the residual sign and k_star the first index of the violating run.
    """
    lo = max(y_m.start_index, y_hat.start_index)
    hi = min(y_m.end_index, y_hat.end_index)
    if not lo <= k < hi:
        raise ValidationError(f"index k={k} outside the shared range [{lo}, {hi})")
    threshold = resolve_threshold(y_m, params)
    resid = y_m.window(lo, k) - y_hat.window(lo, k)
    hit = _scan_change(resid, len(resid) - 1, threshold, params.persistence)
    if hit is None:
        return None
    kind, ks = hit
    return ChangeSignal(kind, lo + ks)


def fit_on_event(e: SignalSeries, model: DeviceModel, k_prime: int) -> FitResult:
    """Best constant input level explaining a deviation window.

    The window covers [k_prime, k_star + lookahead]; the device output is
    linear in the scalar level, so the least-squares minimizer is the
    projection of the deviation onto the model's zero-state unit-step
    response over the window.
    """
    if len(e) == 0:
        raise ValidationError("empty fit window")
    if e.start_index != k_prime:
        raise ValidationError(
            f"window starts at {e.start_index}, expected k_prime={k_prime}"
        )
    check = is_stable(model)
    if not check.stable:
        raise ValidationError(
            f"model '{model.name}' unstable (radius {check.spectral_radius:.6g})"
        )
    g = unit_step_values(model, len(e))
    gg = float(g @ g)
    if gg == 0.0:
        raise DegenerateFitError(
            f"model '{model.name}' step response is zero over {len(e)} samples"
        )
    level = float(g @ e.values) / gg
    diff = e.values - level * g
    return FitResult(level=level, sse=float(diff @ diff))


def _survivors(
    y: np.ndarray,
    y_hat: np.ndarray,
    base_k: int,
    ks_pos: int,
    params: EngineParams,
    models: list[DeviceModel],
    gains: list[float],
    g_table: list[np.ndarray],
    on_flags: list[bool],
    used_ks: set[int],
    last_event_k: list[int],
) -> list[Candidate]:
    """All filtered on-event candidates, best first.

    Arrays are position-indexed; base_k maps position 0 to an absolute
    index.  Filters: nonnegative level above min_level, max_input, the
    max-output prior on the predicted steady draw, no collision with an
    already-logged event time, and no rewind past the device's own last
    switch.
    """
    k_end = min(ks_pos + params.lookahead, len(y) - 1)
    k_lo = max(0, ks_pos - params.backtrack_window)
    out: list[Candidate] = []
    for dev, model in enumerate(models):
        if on_flags[dev]:
            continue
        g_full = g_table[dev]
        for kp in range(k_lo, ks_pos + 1):
            k_abs = base_k + kp
            if k_abs in used_ks or k_abs <= last_event_k[dev]:
                continue
            wlen = k_end - kp + 1
            g = g_full[:wlen]
            gg = float(g @ g)
            if gg == 0.0:
                continue
            e = y[kp : k_end + 1] - y_hat[kp : k_end + 1]
            level = float(g @ e) / gg
            if level <= 0.0 or level < params.min_level:
                continue
            if model.max_input is not None and level > model.max_input:
                continue
            if model.max_output is not None and gains[dev] * level > model.max_output:
                continue
            diff = e - level * g
            out.append(Candidate(float(diff @ diff), k_abs, dev, level))
    out.sort()
    return out


def select_on_candidate(
    y_m: SignalSeries,
    y_hat: SignalSeries,
    k_star: int,
    config: Configuration,
    library: list[DeviceModel],
    params: EngineParams,
) -> Candidate | None:
    """Pick the (device, start time, level) best explaining an increase.

    Evaluates every off device against every start time in the backtrack
    window, applies the level and max-output filters, and returns the
    minimum-sse survivor (ties: earlier start, then lower device index).
    Returns None when nothing survives.
    """
    if len(config.states) != len(library):
        raise ValidationError(
            f"configuration has {len(config.states)} devices, library {len(library)}"
        )
    lo = max(y_m.start_index, y_hat.start_index)
    hi = min(y_m.end_index, y_hat.end_index)
    if not lo <= k_star < hi:
        raise ValidationError(f"k_star={k_star} outside the shared range")
    y = y_m.window(lo, hi - 1)
    yh = y_hat.window(lo, hi - 1)
    max_window = params.lookahead + params.backtrack_window + 1
    g_table = [unit_step_values(m, min(max_window, len(y))) for m in library]
    gains = [dc_gain(m) for m in library]
    last_event_k = [lo - 1] * len(library)
    for ev in config.event_log:
        last_event_k[ev.device] = max(last_event_k[ev.device], ev.k)
    cands = _survivors(
        y,
        yh,
        base_k=lo,
        ks_pos=k_star - lo,
        params=params,
        models=list(library),
        gains=gains,
        g_table=g_table,
        on_flags=[s.on for s in config.states],
        used_ks={ev.k for ev in config.event_log},
        last_event_k=last_event_k,
    )
    return cands[0] if cands else None


def attribute_off_event(
    config: Configuration,
    drop: float,
    k_star: int,
    library: list[DeviceModel],
    params: EngineParams,
) -> int | None:
    """Pick the on device whose steady contribution is nearest the drop.

    Devices on for at least min_on_duration samples are preferred; if
    none qualify, all on devices are considered.  Ties go to the lower
    device index.  Returns None when no device is on.
    """
    on_devs = [i for i, s in enumerate(config.states) if s.on]
    if not on_devs:
        return None
    eligible = [
        i for i in on_devs if k_star - config.states[i].since >= params.min_on_duration
    ]
    if not eligible:
        eligible = on_devs
    contribution = {i: dc_gain(library[i]) * config.states[i].level for i in eligible}
    return min(eligible, key=lambda i: (abs(contribution[i] - abs(drop)), i))


class _Hypothesis:
    """One configuration tracked by the engine, with its full trajectory."""

    __slots__ = (
        "on", "levels", "since", "last_event_k", "x_traj", "y_dev", "y_hat",
        "events", "unexplained", "suppressed",
    )

    def __init__(self, models: list[DeviceModel], T: int, start: int):
        D = len(models)
        self.on = [False] * D
        self.levels = [0.0] * D
        self.since = [start] * D
        self.last_event_k = [start - 1] * D
        self.x_traj = [np.zeros((T + 1, m.order)) for m in models]
        self.y_dev = np.zeros((D, T))
        self.y_hat = np.zeros(T)
        self.events: list[SwitchEvent] = []
        self.unexplained: list[UnexplainedEvent] = []
        self.suppressed = False

    def clone(self) -> "_Hypothesis":
        new = object.__new__(_Hypothesis)
        new.on = list(self.on)
        new.levels = list(self.levels)
        new.since = list(self.since)
        new.last_event_k = list(self.last_event_k)
        new.x_traj = [x.copy() for x in self.x_traj]
        new.y_dev = self.y_dev.copy()
        new.y_hat = self.y_hat.copy()
        new.events = list(self.events)
        new.unexplained = list(self.unexplained)
        new.suppressed = self.suppressed
        return new

    def event_times(self) -> set[int]:
        return {e.k for e in self.events}


class _Engine:
    """Shared greedy/beam loop; greedy is the beam of width one."""

    def __init__(
        self,
        y_m: SignalSeries,
        library: list[DeviceModel],
        params: EngineParams,
        beam_width: int,
    ):
        if not library:
            raise ValidationError("device library is empty")
        names = [m.name for m in library]
        if len(set(names)) != len(names):
            raise ValidationError("duplicate device names in library")
        needed = params.lookahead + params.backtrack_window
        if len(y_m) <= needed:
            raise ValidationError(
                f"signal length {len(y_m)} must exceed lookahead + backtrack = {needed}"
            )
        for m in library:
            check = is_stable(m)
            if not check.stable:
                raise ValidationError(
                    f"library model '{m.name}' unstable "
                    f"(radius {check.spectral_radius:.6g})"
                )
        self.y = y_m.values
        self.start = y_m.start_index
        self.period = y_m.sample_period
        self.T = len(self.y)
        self.models = list(library)
        self.params = params
        self.beam_width = beam_width
        self.threshold = resolve_threshold(y_m, params)
        self.sparsity_penalty = self.threshold**2 * params.lookahead
        max_window = min(self.T, params.lookahead + params.backtrack_window + 1)
        self.g_table = [unit_step_values(m, max_window) for m in self.models]
        self.gains = [dc_gain(m) for m in self.models]

    # -- per-hypothesis mechanics ------------------------------------

    def _replay_device(self, hyp: _Hypothesis, dev: int, from_pos: int, reset: bool):
        model = self.models[dev]
        A, b, c, d = model.A, model.b, model.c, model.d
        traj = hyp.x_traj[dev]
        if reset:
            traj[from_pos] = 0.0
        x = traj[from_pos].copy()
        u = hyp.levels[dev]
        yrow = hyp.y_dev[dev]
        for j in range(from_pos, self.T):
            yrow[j] = c @ x + d * u
            x = A @ x + b * u
            traj[j + 1] = x
        hyp.y_hat[from_pos:] = hyp.y_dev[:, from_pos:].sum(axis=0)

    def _apply_on(self, hyp: _Hypothesis, cand: Candidate):
        dev = cand.device
        hyp.on[dev] = True
        hyp.levels[dev] = cand.level
        hyp.since[dev] = cand.k_prime
        hyp.last_event_k[dev] = cand.k_prime
        hyp.events.append(SwitchEvent(cand.k_prime, dev, "on", cand.level))
        self._replay_device(hyp, dev, cand.k_prime - self.start, reset=False)

    def _apply_off(self, hyp: _Hypothesis, dev: int, ks_pos: int):
        k_abs = self.start + ks_pos
        hyp.on[dev] = False
        hyp.levels[dev] = 0.0
        hyp.since[dev] = k_abs
        hyp.last_event_k[dev] = k_abs
        hyp.events.append(SwitchEvent(k_abs, dev, "off", 0.0))
        self._replay_device(hyp, dev, ks_pos, reset=self.models[dev].instant_off)

    def _detect(self, hyp: _Hypothesis, p: int) -> tuple[str, int] | None:
        thr = self.threshold
        if abs(self.y[p] - hyp.y_hat[p]) <= thr:
            hyp.suppressed = False
            return None
        if hyp.suppressed:
            return None
        pers = self.params.persistence
        if p - pers + 1 < 0:
            return None
        for j in range(p - pers + 1, p):
            if abs(self.y[j] - hyp.y_hat[j]) <= thr:
                return None
        ks = p - pers + 1
        while ks > 0 and abs(self.y[ks - 1] - hyp.y_hat[ks - 1]) > thr:
            ks -= 1
        kind = "increase" if (self.y[ks] - hyp.y_hat[ks]) > 0 else "decrease"
        return (kind, ks)

    def _on_candidates(self, hyp: _Hypothesis, ks_pos: int) -> list[Candidate]:
        return _survivors(
            self.y,
            hyp.y_hat,
            base_k=self.start,
            ks_pos=ks_pos,
            params=self.params,
            models=self.models,
            gains=self.gains,
            g_table=self.g_table,
            on_flags=hyp.on,
            used_ks=hyp.event_times(),
            last_event_k=hyp.last_event_k,
        )

    def _off_device(self, hyp: _Hypothesis, ks_pos: int, p: int) -> int | None:
        on_devs = [i for i in range(len(self.models)) if hyp.on[i]]
        if not on_devs:
            return None
        k_abs = self.start + ks_pos
        if k_abs in hyp.event_times():
            return None
        eligible = [
            i for i in on_devs
            if k_abs - hyp.since[i] >= self.params.min_on_duration
        ]
        if not eligible:
            eligible = on_devs
        drop = abs(self.y[p] - hyp.y_hat[p])
        return min(
            eligible, key=lambda i: (abs(self.gains[i] * hyp.levels[i] - drop), i)
        )

    # -- pool management ----------------------------------------------

    def _score(self, hyp: _Hypothesis, p: int) -> float:
        resid = self.y[: p + 1] - hyp.y_hat[: p + 1]
        return float(resid @ resid) + self.sparsity_penalty * len(hyp.events)

    def _rank_key(self, hyp: _Hypothesis, p: int) -> tuple:
        return (
            self._score(hyp, p),
            len(hyp.events),
            tuple(e.sort_key() for e in hyp.events),
        )

    def run(self) -> DisaggregationResult:
        pool = [_Hypothesis(self.models, self.T, self.start)]
        for p in range(self.T):
            next_pool: list[_Hypothesis] = []
            for hyp in pool:
                sig = self._detect(hyp, p)
                if sig is None:
                    next_pool.append(hyp)
                    continue
                kind, ks_pos = sig
                if kind == "increase":
                    cands = self._on_candidates(hyp, ks_pos)
                    if not cands:
                        hyp.unexplained.append(
                            UnexplainedEvent(
                                self.start + ks_pos,
                                "increase",
                                float(self.y[p] - hyp.y_hat[p]),
                            )
                        )
                        hyp.suppressed = True
                        next_pool.append(hyp)
                        continue
                    take = cands[: self.beam_width]
                    clones = [hyp.clone() for _ in take[1:]]
                    self._apply_on(hyp, take[0])
                    next_pool.append(hyp)
                    for cand, child in zip(take[1:], clones):
                        self._apply_on(child, cand)
                        next_pool.append(child)
                else:
                    dev = self._off_device(hyp, ks_pos, p)
                    if dev is None:
                        hyp.unexplained.append(
                            UnexplainedEvent(
                                self.start + ks_pos,
                                "decrease",
                                float(self.y[p] - hyp.y_hat[p]),
                            )
                        )
                        hyp.suppressed = True
                    else:
                        self._apply_off(hyp, dev, ks_pos)
                    next_pool.append(hyp)
            pool = next_pool
            if len(pool) > self.beam_width:
                pool.sort(key=lambda h: self._rank_key(h, p))
                pool = pool[: self.beam_width]
        best = min(pool, key=lambda h: self._rank_key(h, self.T - 1))
        return self._build_result(best)

    def _build_result(self, hyp: _Hypothesis) -> DisaggregationResult:
        events = tuple(sorted(hyp.events, key=lambda e: e.sort_key()))
        per_device: list[list[tuple[int, float]]] = [[] for _ in self.models]
        for e in events:
            per_device[e.device].append((e.k, e.level))
        estimates = tuple(PiecewiseInput(tuple(evs)) for evs in per_device)
        outputs = []
        for model, est in zip(self.models, estimates):
            u = est.expand(self.start, self.T, self.period)
            outputs.append(simulate_zero_state(model, u))
        total_values = reduce(np.add, (o.values for o in outputs))
        total = SignalSeries(total_values, self.period, self.start)
        resid = self.y - total.values
        rms = float(np.sqrt(np.mean(resid**2))) if self.T else 0.0
        recorded = replace(
            self.params,
            deviation_threshold=self.threshold,
            beam_width=self.beam_width,
        )
        return DisaggregationResult(
            device_names=tuple(m.name for m in self.models),
            estimates=estimates,
            estimated_outputs=tuple(outputs),
            estimated_total=total,
            residual_rms=rms,
            events=events,
            unexplained=tuple(hyp.unexplained),
            params=recorded,
        )


def disaggregate(
    y_m: SignalSeries, library: list[DeviceModel], params: EngineParams = EngineParams()
) -> DisaggregationResult:
    """Greedy single-hypothesis disaggregation of an aggregate signal."""
    return _Engine(y_m, library, params, beam_width=1).run()


def disaggregate_beam(
    y_m: SignalSeries, library: list[DeviceModel], params: EngineParams = EngineParams()
) -> DisaggregationResult:
    """Beam search over configuration hypotheses.

    Keeps up to params.beam_width hypotheses ranked by cumulative squared
    residual plus a per-event sparsity penalty of threshold^2 * lookahead;
    on-event detections branch over the surviving candidates.  With a
    width of one this reduces exactly to `disaggregate`.
    """
    return _Engine(y_m, library, params, beam_width=params.beam_width).run()


def result_to_dict(result: DisaggregationResult) -> dict:
    p = result.params
    return {
        "params": {
            "deviation_threshold": p.deviation_threshold,
            "persistence": p.persistence,
            "lookahead": p.lookahead,
            "backtrack_window": p.backtrack_window,
            "min_on_duration": p.min_on_duration,
            "min_level": p.min_level,
            "beam_width": p.beam_width,
        },
        "devices": list(result.device_names),
        "events": [
            {
                "k": e.k,
                "device": result.device_names[e.device],
                "kind": e.kind,
                "level": e.level,
            }
            for e in result.events
        ],
        "residual_rms": result.residual_rms,
        "unexplained": [
            {"k": u.k, "kind": u.kind, "magnitude": u.magnitude}
            for u in result.unexplained
        ],
    }
