"""Command-line surface: simulate, identify, disaggregate, evaluate, plot-data.

Exit codes: 0 success, 1 validation/usage error, 2 I/O error.  All file
outputs are deterministic for identical inputs and seeds.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .engine import (
    DisaggregationResult,
    EngineParams,
    SwitchEvent,
    UnexplainedEvent,
    disaggregate,
    disaggregate_beam,
    result_to_dict,
)
from .errors import ValidationError
from .evaluate import DEFAULT_MATCH_WINDOW, save_metrics, score
from .ingest import parse_emontx_csv, read_signal_csv, to_signal, write_signal_csv
from .models import load_library, save_library
from .scenario import load_scenario, reference_scenario, render, save_scenario
from .series import PiecewiseInput
from .sysid import PlugRecordingLabel, identify_device


def save_result(result: DisaggregationResult, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "result.json").write_text(
        json.dumps(result_to_dict(result), indent=2, sort_keys=True) + "\n"
    )
    for name, series in zip(result.device_names, result.estimated_outputs):
        write_signal_csv(series, out / f"estimate_{name}.csv")
    write_signal_csv(result.estimated_total, out / "estimate_total.csv")


def load_result(out_dir: str | Path) -> DisaggregationResult:
    """Rebuild a result object from the files save_result wrote."""
    out = Path(out_dir)
    data = json.loads((out / "result.json").read_text())
    names = tuple(data["devices"])
    index = {name: i for i, name in enumerate(names)}
    events = tuple(
        SwitchEvent(int(e["k"]), index[e["device"]], e["kind"], float(e["level"]))
        for e in data["events"]
    )
    per_device: list[list[tuple[int, float]]] = [[] for _ in names]
    for e in sorted(events, key=lambda ev: ev.sort_key()):
        per_device[e.device].append((e.k, e.level))
    estimates = tuple(PiecewiseInput(tuple(evs)) for evs in per_device)
    outputs = tuple(read_signal_csv(out / f"estimate_{name}.csv") for name in names)
    total = read_signal_csv(out / "estimate_total.csv")
    unexplained = tuple(
        UnexplainedEvent(int(u["k"]), u["kind"], float(u["magnitude"]))
        for u in data["unexplained"]
    )
    return DisaggregationResult(
        device_names=names,
        estimates=estimates,
        estimated_outputs=outputs,
        estimated_total=total,
        residual_rms=float(data["residual_rms"]),
        events=events,
        unexplained=unexplained,
        params=EngineParams(**data["params"]),
    )


def _cmd_simulate(args) -> int:
    if args.scenario is None and not args.reference:
        raise ValidationError("choose a source: --reference or --scenario FILE")
    if args.scenario is not None:
        library = load_library(args.library) if args.library else None
        scenario = load_scenario(args.scenario, library=library)
    else:
        scenario = reference_scenario(args.seed)
    aggregate, truths = render(scenario)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_scenario(scenario, out / "scenario.json")
    save_library(list(scenario.models), out / "library.json")
    write_signal_csv(aggregate, out / "aggregate.csv")
    for model, truth in zip(scenario.models, truths):
        write_signal_csv(truth, out / f"truth_{model.name}.csv")
    print(f"wrote scenario with {len(scenario.models)} devices to {out}")
    return 0


def _cmd_identify(args) -> int:
    records = parse_emontx_csv(args.input)
    signal = to_signal(records, channel=args.channel, nominal_rate=args.rate)
    label = PlugRecordingLabel(
        device_name=args.name,
        on_threshold=args.threshold,
        settle_skip=args.settle_skip,
    )
    model = identify_device(signal, label, na=args.na, nb=args.nb, delay=args.delay)
    path = Path(args.library)
    existing = load_library(path) if path.exists() else []
    existing = [m for m in existing if m.name != model.name]
    existing.append(model)
    save_library(existing, path)
    print(
        f"identified '{model.name}' (order {model.order}, "
        f"instant_off={model.instant_off}) -> {path}"
    )
    return 0


def _params_from_args(args) -> EngineParams:
    return EngineParams(
        deviation_threshold=args.threshold,
        persistence=args.persistence,
        lookahead=args.lookahead,
        backtrack_window=args.backtrack,
        min_on_duration=args.min_on_duration,
        min_level=args.min_level,
        beam_width=args.beam_width,
    )


def _cmd_disaggregate(args) -> int:
    library = load_library(args.library)
    y_m = read_signal_csv(args.input)
    params = _params_from_args(args)
    if params.beam_width > 1:
        result = disaggregate_beam(y_m, library, params)
    else:
        result = disaggregate(y_m, library, params)
    save_result(result, args.out)
    print(
        f"{len(result.events)} events, residual rms {result.residual_rms:.6g} "
        f"-> {args.out}"
    )
    return 0


def _cmd_evaluate(args) -> int:
    result = load_result(args.result)
    library = load_library(args.library) if args.library else None
    truth = load_scenario(args.truth, library=library)
    metrics = score(result, truth, match_window=args.match_window)
    save_metrics(metrics, args.out)
    print(f"precision {metrics.precision:.3f}, recall {metrics.recall:.3f} -> {args.out}")
    return 0


def _cmd_plot_data(args) -> int:
    result = load_result(args.result)
    y_m = read_signal_csv(args.input)
    lines = ["series,k,value"]

    def emit(name: str, series) -> None:
        for p, v in enumerate(series.values):
            lines.append(f"{name},{series.start_index + p},{float(v)!r}")

    emit("y_m", y_m)
    emit("y_hat", result.estimated_total)
    for name, series in zip(result.device_names, result.estimated_outputs):
        emit(f"y_hat_{name}", series)
    Path(args.out).write_text("\n".join(lines) + "\n")
    print(f"wrote {len(lines) - 1} rows -> {args.out}")
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="disagg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", parents=[], help="render a scenario to CSV")
    p_sim.add_argument("--reference", action="store_true",
                       help="use the built-in five-device benchmark scenario")
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--scenario", default=None, help="scenario JSON to render")
    p_sim.add_argument("--library", default=None,
                       help="device library for model_ref resolution")
    p_sim.add_argument("--out", required=True)

    p_id = sub.add_parser("identify", help="fit a device model from a plug recording")
    p_id.add_argument("--input", required=True, help="emonTx-style CSV recording")
    p_id.add_argument("--name", required=True)
    p_id.add_argument("--threshold", type=float, required=True,
                      help="on/off detection threshold in signal units")
    p_id.add_argument("--settle-skip", type=int, default=0, dest="settle_skip")
    p_id.add_argument("--na", type=int, default=3)
    p_id.add_argument("--nb", type=int, default=3)
    p_id.add_argument("--delay", type=int, default=1)
    p_id.add_argument("--channel", default="irms", choices=("irms", "pw", "pva"))
    p_id.add_argument("--rate", type=float, default=12.0)
    p_id.add_argument("--library", required=True, help="library JSON to append to")

    p_dis = sub.add_parser("disaggregate", help="recover device inputs from an aggregate")
    p_dis.add_argument("--library", required=True)
    p_dis.add_argument("--input", required=True, help="aggregate signal CSV")
    p_dis.add_argument("--out", required=True)
    p_dis.add_argument("--threshold", type=float, default=None)
    p_dis.add_argument("--persistence", type=int, default=2)
    p_dis.add_argument("--lookahead", type=int, default=15)
    p_dis.add_argument("--backtrack", type=int, default=5)
    p_dis.add_argument("--min-on-duration", type=int, default=3, dest="min_on_duration")
    p_dis.add_argument("--min-level", type=float, default=0.0, dest="min_level")
    p_dis.add_argument("--beam-width", type=int, default=1, dest="beam_width")

    p_eval = sub.add_parser("evaluate", help="score a result against ground truth")
    p_eval.add_argument("--result", required=True, help="directory written by disaggregate")
    p_eval.add_argument("--truth", required=True, help="scenario JSON")
    p_eval.add_argument("--library", default=None)
    p_eval.add_argument("--match-window", type=int, default=DEFAULT_MATCH_WINDOW,
                        dest="match_window")
    p_eval.add_argument("--out", required=True)

    p_plot = sub.add_parser("plot-data", help="emit overlaid series for plotting")
    p_plot.add_argument("--result", required=True)
    p_plot.add_argument("--input", required=True, help="aggregate signal CSV")
    p_plot.add_argument("--out", required=True)

    p_sim.set_defaults(func=_cmd_simulate)
    p_id.set_defaults(func=_cmd_identify)
    p_dis.set_defaults(func=_cmd_disaggregate)
    p_eval.set_defaults(func=_cmd_evaluate)
    p_plot.set_defaults(func=_cmd_plot_data)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:
        # argparse exits 0 for --help; anything else is a usage error.
        return 0 if exc.code == 0 else 1
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
