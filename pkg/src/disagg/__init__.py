"""Energy disaggregation with per-device LTI models.

Recovers sparse piecewise-constant device inputs that reproduce a
whole-building power signal, given a library of appliance models.
"""

from .engine import (
    Candidate,
    ChangeSignal,
    Configuration,
    DeviceState,
    DisaggregationResult,
    EngineParams,
    FitResult,
    SwitchEvent,
    UnexplainedEvent,
    attribute_off_event,
    detect_change,
    disaggregate,
    disaggregate_beam,
    estimate_noise_std,
    fit_on_event,
    resolve_threshold,
    select_on_candidate,
)
from .errors import (
    DegenerateFitError,
    DisaggError,
    RankDeficientDataError,
    UnstableModelError,
    ValidationError,
)
from .evaluate import EventMatch, Metrics, match_events, score, truth_events
from .ingest import (
    EmonRecord,
    Gap,
    GapWarning,
    find_gaps,
    parse_emontx_csv,
    read_signal_csv,
    sum_aligned,
    to_signal,
    write_emontx_csv,
    write_signal_csv,
)
from .models import (
    DeviceModel,
    StabilityCheck,
    dc_gain,
    is_stable,
    load_library,
    normalize_dc,
    random_stable_model,
    save_library,
    simulate_zero_state,
    spectral_radius,
    step_response,
    unit_step_values,
)
from .scenario import (
    Scenario,
    load_scenario,
    reference_scenario,
    render,
    save_scenario,
)
from .series import PiecewiseInput, SignalSeries
from .sysid import (
    ArxModel,
    PlugRecordingLabel,
    arx_to_state_space,
    detect_plug_input,
    fit_arx,
    identify_device,
)

__all__ = [
    "ArxModel",
    "Candidate",
    "ChangeSignal",
    "Configuration",
    "DegenerateFitError",
    "DeviceModel",
    "DeviceState",
    "DisaggError",
    "DisaggregationResult",
    "EmonRecord",
    "EngineParams",
    "EventMatch",
    "FitResult",
    "Gap",
    "GapWarning",
    "Metrics",
    "PiecewiseInput",
    "PlugRecordingLabel",
    "RankDeficientDataError",
    "Scenario",
    "SignalSeries",
    "StabilityCheck",
    "SwitchEvent",
    "UnexplainedEvent",
    "UnstableModelError",
    "ValidationError",
    "arx_to_state_space",
    "attribute_off_event",
    "dc_gain",
    "detect_change",
    "detect_plug_input",
    "disaggregate",
    "disaggregate_beam",
    "estimate_noise_std",
    "find_gaps",
    "fit_arx",
    "fit_on_event",
    "identify_device",
    "is_stable",
    "load_library",
    "load_scenario",
    "match_events",
    "normalize_dc",
    "parse_emontx_csv",
    "random_stable_model",
    "read_signal_csv",
    "reference_scenario",
    "render",
    "resolve_threshold",
    "save_library",
    "save_scenario",
    "score",
    "select_on_candidate",
    "simulate_zero_state",
    "spectral_radius",
    "step_response",
    "sum_aligned",
    "to_signal",
    "truth_events",
    "unit_step_values",
    "write_emontx_csv",
    "write_signal_csv",
]
