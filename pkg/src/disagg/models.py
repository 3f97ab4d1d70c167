"""Discrete LTI single-input single-output device models.

A device is x[k+1] = A x[k] + b u[k], y[k] = c'x[k] + d u[k].  The input
is the device setting (0 when off), the output its power draw.  Devices
observed to collapse to zero draw immediately at switch-off carry an
``instant_off`` flag, implemented as a state reset at the off sample.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import UnstableModelError, ValidationError
from .rng import SeededStream
from .series import SignalSeries

STABILITY_MARGIN = 1e-9
DC_GAIN_TOL = 1e-9


@dataclass(frozen=True)
class DeviceModel:
    """One appliance's discrete LTI dynamics plus physical priors."""

    name: str
    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: float = 0.0
    instant_off: bool = False
    max_input: float | None = None
    max_output: float | None = None
    dc_normalized: bool = False

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.asarray(self.b, dtype=float).reshape(-1)
        c = np.asarray(self.c, dtype=float).reshape(-1)
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValidationError(f"A must be square, got shape {A.shape}")
        if b.shape != (n,) or c.shape != (n,):
            raise ValidationError(
                f"b and c must have length {n}, got {b.shape} and {c.shape}"
            )
        if self.max_input is not None and self.max_input <= 0:
            raise ValidationError(f"max_input must be > 0, got {self.max_input}")
        if self.max_output is not None and self.max_output <= 0:
            raise ValidationError(f"max_output must be > 0, got {self.max_output}")
        for arr in (A, b, c):
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"non-finite entries in model '{self.name}'")
        A = A.copy()
        b = b.copy()
        c = c.copy()
        for arr in (A, b, c):
            arr.flags.writeable = False
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "d", float(self.d))
        if self.dc_normalized and abs(dc_gain(self) - 1.0) > DC_GAIN_TOL:
            raise ValidationError(
                f"model '{self.name}' flagged dc_normalized but gain is {dc_gain(self)!r}"
            )

    @property
    def order(self) -> int:
        return self.A.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, DeviceModel):
            return NotImplemented
        return (
            self.name == other.name
            and np.array_equal(self.A, other.A)
            and np.array_equal(self.b, other.b)
            and np.array_equal(self.c, other.c)
            and self.d == other.d
            and self.instant_off == other.instant_off
            and self.max_input == other.max_input
            and self.max_output == other.max_output
            and self.dc_normalized == other.dc_normalized
        )

    def __hash__(self):
        return hash((self.name, self.A.tobytes(), self.b.tobytes(), self.c.tobytes()))


class StabilityCheck(NamedTuple):
    stable: bool
    spectral_radius: float


def spectral_radius(A: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(np.atleast_2d(A)))))


def is_stable(model: DeviceModel) -> StabilityCheck:
    """Strict stability: every eigenvalue inside the unit disk with margin."""
    radius = spectral_radius(model.A)
    return StabilityCheck(radius < 1.0 - STABILITY_MARGIN, radius)


def _require_stable(model: DeviceModel) -> None:
    check = is_stable(model)
    if not check.stable:
        raise UnstableModelError(check.spectral_radius, context=f"model '{model.name}'")


def dc_gain(model: DeviceModel) -> float:
    """Steady-state output per unit constant input: c'(I - A)^-1 b + d."""
    _require_stable(model)
    n = model.order
    x_inf = np.linalg.solve(np.eye(n) - model.A, model.b)
    return float(model.c @ x_inf + model.d)


def normalize_dc(model: DeviceModel) -> DeviceModel:
    """Rescale b and d so the DC gain becomes 1; A and c are untouched."""
    gain = dc_gain(model)
    if gain == 0.0:
        raise ValidationError(f"model '{model.name}' has zero DC gain, cannot normalize")
    return replace(
        model, b=model.b / gain, d=model.d / gain, dc_normalized=True
    )


def simulate_zero_state(model: DeviceModel, u: SignalSeries) -> SignalSeries:
    """Run the recursion from x = 0 under input u.

    For instant_off models the state is zeroed at every sample where the
    input transitions to exactly 0, so the output is identically zero
    while the device stays off.
    """
    uv = u.values
    bad = np.flatnonzero(~np.isfinite(uv))
    if bad.size:
        raise ValidationError(
            f"non-finite input sample at k={u.start_index + int(bad[0])}"
        )
    A, b, c, d = model.A, model.b, model.c, model.d
    x = np.zeros(model.order)
    y = np.empty(len(uv))
    for k in range(len(uv)):
        if model.instant_off and uv[k] == 0.0 and k > 0 and uv[k - 1] != 0.0:
            x = np.zeros(model.order)
        y[k] = c @ x + d * uv[k]
        x = A @ x + b * uv[k]
    return SignalSeries(y, sample_period=u.sample_period, start_index=u.start_index)


def step_response(model: DeviceModel, horizon: int, level: float = 1.0) -> SignalSeries:
    """Zero-state response to a constant input over the horizon."""
    if horizon < 1:
        raise ValidationError(f"horizon must be >= 1, got {horizon}")
    u = SignalSeries(np.full(horizon, float(level)))
    return simulate_zero_state(model, u)


def unit_step_values(model: DeviceModel, length: int) -> np.ndarray:
    """Zero-state unit-step response samples, without allocation ceremony."""
    A, b, c, d = model.A, model.b, model.c, model.d
    x = np.zeros(model.order)
    g = np.empty(length)
    for k in range(length):
        g[k] = c @ x + d
        x = A @ x + b
    return g


def random_stable_model(
    order: int, seed: int, instant_off: bool = False
) -> DeviceModel:
    """Generate a random stable model with unit DC gain, deterministic in seed.

    Eigenvalues are drawn directly (real in (-0.95, 0.95), or conjugate
    pairs with modulus in (0.3, 0.95)) and assembled block-diagonally, so
    stability holds by construction; b and c are standard normal and the
    result is DC-normalized.  Output vectors are resampled until the
    normalized step response is nonnegative everywhere: a power draw
    that dips below zero at switch-on is not a plausible appliance.
    """
    if order < 1:
        raise ValidationError(f"order must be >= 1, got {order}")
    stream = SeededStream(seed)
    blocks: list[np.ndarray] = []
    remaining = order
    while remaining > 0:
        use_pair = remaining >= 2 and stream.uniform() < 0.5
        if use_pair:
            r = stream.uniform_in(0.3, 0.95)
            theta = stream.uniform_in(0.0, np.pi)
            blocks.append(
                np.array(
                    [
                        [r * np.cos(theta), r * np.sin(theta)],
                        [-r * np.sin(theta), r * np.cos(theta)],
                    ]
                )
            )
            remaining -= 2
        else:
            blocks.append(np.array([[stream.uniform_in(-0.95, 0.95)]]))
            remaining -= 1
    A = np.zeros((order, order))
    pos = 0
    for blk in blocks:
        w = blk.shape[0]
        A[pos : pos + w, pos : pos + w] = blk
        pos += w
    settle_span = 200
    while True:
        b = np.array(stream.normals(order))
        c = np.array(stream.normals(order))
        raw = DeviceModel(
            name=f"rand_o{order}_s{seed}", A=A, b=b, c=c, d=0.0,
            instant_off=instant_off,
        )
        if abs(dc_gain(raw)) <= 1e-6:
            continue
        model = normalize_dc(raw)
        if np.min(unit_step_values(model, settle_span)) >= 0.0:
            return model


def model_to_dict(model: DeviceModel) -> dict:
    return {
        "name": model.name,
        "order": model.order,
        "A": [float(v) for v in model.A.reshape(-1)],
        "b": [float(v) for v in model.b],
        "c": [float(v) for v in model.c],
        "d": model.d,
        "instant_off": model.instant_off,
        "max_input": model.max_input,
        "max_output": model.max_output,
        "dc_normalized": model.dc_normalized,
    }


def model_from_dict(entry: dict) -> DeviceModel:
    try:
        order = int(entry["order"])
        model = DeviceModel(
            name=str(entry["name"]),
            A=np.asarray(entry["A"], dtype=float).reshape(order, order),
            b=np.asarray(entry["b"], dtype=float),
            c=np.asarray(entry["c"], dtype=float),
            d=float(entry["d"]),
            instant_off=bool(entry["instant_off"]),
            max_input=None if entry.get("max_input") is None else float(entry["max_input"]),
            max_output=None if entry.get("max_output") is None else float(entry["max_output"]),
            dc_normalized=bool(entry.get("dc_normalized", False)),
        )
    except KeyError as exc:
        raise ValidationError(f"device entry missing field {exc}") from exc
    _require_stable(model)
    return model


def save_library(models: list[DeviceModel], path: str | Path) -> None:
    entries = [model_to_dict(m) for m in models]
    Path(path).write_text(json.dumps(entries, indent=2, sort_keys=True) + "\n")


def load_library(path: str | Path) -> list[DeviceModel]:
    """Read a device library, validating every entry's invariants."""
    raw = json.loads(Path(path).read_text())
    if not isinstance(raw, list):
        raise ValidationError("device library must be a JSON array")
    models = [model_from_dict(entry) for entry in raw]
    names = [m.name for m in models]
    if len(set(names)) != len(names):
        raise ValidationError("duplicate device names in library")
    return models
