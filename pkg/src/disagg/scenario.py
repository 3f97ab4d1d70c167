"""Synthetic disaggregation problems with known ground truth.

A scenario bundles a set of device models with per-device switch
schedules; rendering produces each device's true output and the noisy
aggregate.  ``reference_scenario`` builds the standard benchmark: five
random third-order unit-gain instant-off devices, four of them active
on heavily overlapping intervals, one never used.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .models import DeviceModel, model_from_dict, model_to_dict, random_stable_model, simulate_zero_state
from .rng import SeededStream
from .series import PiecewiseInput, SignalSeries

DEFAULT_HORIZON = 450
REFERENCE_NOISE_STD = 0.02
REFERENCE_DEVICE_COUNT = 5
REFERENCE_ORDER = 3

# (device index, first on sample, first off sample, level); the second
# interval bound is exclusive: the device is on for k in [on, off).
REFERENCE_SCHEDULE = (
    (0, 20, 101, 1.2),
    (1, 130, 401, 2.0),
    (2, 180, 301, 0.6),
    (3, 250, 351, 1.8),
)


@dataclass(frozen=True)
class Scenario:
    """Device models plus ground-truth inputs, noise level, and seed."""

    models: tuple[DeviceModel, ...]
    inputs: tuple[PiecewiseInput, ...]
    noise_std: float = 0.0
    seed: int = 0
    horizon: int = DEFAULT_HORIZON

    def __post_init__(self):
        object.__setattr__(self, "models", tuple(self.models))
        object.__setattr__(self, "inputs", tuple(self.inputs))
        if len(self.models) != len(self.inputs):
            raise ValidationError(
                f"{len(self.models)} models but {len(self.inputs)} inputs"
            )
        if self.noise_std < 0:
            raise ValidationError(f"noise_std must be >= 0, got {self.noise_std}")
        if self.horizon < 1:
            raise ValidationError(f"horizon must be >= 1, got {self.horizon}")
        for inp in self.inputs:
            last = inp.last_event_index
            if last is not None and last >= self.horizon:
                raise ValidationError(
                    f"event at k={last} beyond horizon {self.horizon}"
                )

    @property
    def device_names(self) -> tuple[str, ...]:
        return tuple(m.name for m in self.models)


def render(scenario: Scenario) -> tuple[SignalSeries, list[SignalSeries]]:
    """Simulate every device and sum into the measured aggregate.

    Returns (aggregate, per-device truth outputs).  Noise is additive
    white Gaussian, drawn from the scenario seed, so regeneration is
    bit-identical.
    """
    truths = []
    for model, inp in zip(scenario.models, scenario.inputs):
        u = inp.expand(0, scenario.horizon)
        truths.append(simulate_zero_state(model, u))
    total = np.zeros(scenario.horizon)
    for t in truths:
        total = total + t.values
    if scenario.noise_std > 0:
        stream = SeededStream(scenario.seed)
        noise = np.array(stream.normals(scenario.horizon)) * scenario.noise_std
        total = total + noise
    return SignalSeries(total), truths


def reference_scenario(seed: int) -> Scenario:
    """The standard five-device benchmark, deterministic in seed."""
    models = []
    for i in range(REFERENCE_DEVICE_COUNT):
        m = random_stable_model(REFERENCE_ORDER, seed + i, instant_off=True)
        models.append(
            DeviceModel(
                name=f"device{i + 1}",
                A=m.A, b=m.b, c=m.c, d=m.d,
                instant_off=True,
                dc_normalized=True,
            )
        )
    inputs = [PiecewiseInput() for _ in range(REFERENCE_DEVICE_COUNT)]
    for dev, k_on, k_off, level in REFERENCE_SCHEDULE:
        inputs[dev] = PiecewiseInput(((k_on, level), (k_off, 0.0)))
    return Scenario(
        models=tuple(models),
        inputs=tuple(inputs),
        noise_std=REFERENCE_NOISE_STD,
        seed=seed,
        horizon=DEFAULT_HORIZON,
    )


def scenario_to_dict(scenario: Scenario) -> dict:
    return {
        "seed": scenario.seed,
        "noise_std": scenario.noise_std,
        "horizon": scenario.horizon,
        "devices": [
            {"model": model_to_dict(m), "events": [[k, level] for k, level in inp.events]}
            for m, inp in zip(scenario.models, scenario.inputs)
        ],
    }


def scenario_from_dict(
    data: dict, library: list[DeviceModel] | None = None
) -> Scenario:
    """Rebuild a scenario; model_ref entries are resolved from library."""
    by_name = {m.name: m for m in library} if library else {}
    models = []
    inputs = []
    for entry in data["devices"]:
        if "model" in entry:
            models.append(model_from_dict(entry["model"]))
        elif "model_ref" in entry:
            ref = entry["model_ref"]
            if ref not in by_name:
                raise ValidationError(f"model_ref '{ref}' not found in library")
            models.append(by_name[ref])
        else:
            raise ValidationError("device entry needs 'model' or 'model_ref'")
        inputs.append(PiecewiseInput(tuple((int(k), float(v)) for k, v in entry["events"])))
    return Scenario(
        models=tuple(models),
        inputs=tuple(inputs),
        noise_std=float(data["noise_std"]),
        seed=int(data["seed"]),
        horizon=int(data["horizon"]),
    )


def save_scenario(scenario: Scenario, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(scenario_to_dict(scenario), indent=2, sort_keys=True) + "\n"
    )


def load_scenario(path: str | Path, library: list[DeviceModel] | None = None) -> Scenario:
    return scenario_from_dict(json.loads(Path(path).read_text()), library=library)
