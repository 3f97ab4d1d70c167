import json

import numpy as np

from disagg import (
    EmonRecord,
    PiecewiseInput,
    load_library,
    random_stable_model,
    read_signal_csv,
    simulate_zero_state,
    write_emontx_csv,
)
from disagg.cli import load_result, main


def _run_reference_pipeline(tmp_path, seed=0):
    sim = tmp_path / "sim"
    res = tmp_path / "res"
    assert main(["simulate", "--reference", "--seed", str(seed), "--out", str(sim)]) == 0
    assert main([
        "disaggregate",
        "--library", str(sim / "library.json"),
        "--input", str(sim / "aggregate.csv"),
        "--out", str(res),
    ]) == 0
    metrics = tmp_path / "metrics.json"
    assert main([
        "evaluate",
        "--result", str(res),
        "--truth", str(sim / "scenario.json"),
        "--out", str(metrics),
    ]) == 0
    return sim, res, metrics


def test_simulate_writes_expected_files(tmp_path):
    out = tmp_path / "sim"
    assert main(["simulate", "--reference", "--seed", "7", "--out", str(out)]) == 0
    assert (out / "scenario.json").exists()
    assert (out / "library.json").exists()
    assert (out / "aggregate.csv").exists()
    for i in range(1, 6):
        assert (out / f"truth_device{i}.csv").exists()
    aggregate = read_signal_csv(out / "aggregate.csv")
    assert len(aggregate) == 450


def test_simulate_from_scenario_file(tmp_path):
    first = tmp_path / "a"
    assert main(["simulate", "--reference", "--seed", "3", "--out", str(first)]) == 0
    second = tmp_path / "b"
    assert main([
        "simulate", "--scenario", str(first / "scenario.json"), "--out", str(second),
    ]) == 0
    a = (first / "aggregate.csv").read_bytes()
    b = (second / "aggregate.csv").read_bytes()
    assert a == b


def test_full_pipeline_and_metrics(tmp_path):
    _, res, metrics_path = _run_reference_pipeline(tmp_path, seed=0)
    data = json.loads(metrics_path.read_text())
    assert data["precision"] == 1.0
    assert data["recall"] == 1.0
    assert data["switch_time_mae"] == 0.0
    assert len(data["level_errors"]) == 4
    assert max(data["level_errors"]) <= 0.05
    result = json.loads((res / "result.json").read_text())
    assert len(result["events"]) == 8
    assert result["unexplained"] == []


def test_pipeline_reproducible_byte_identical(tmp_path):
    run1 = tmp_path / "r1"
    run2 = tmp_path / "r2"
    files1 = _run_reference_pipeline(run1, seed=5)
    files2 = _run_reference_pipeline(run2, seed=5)
    for a, b in [
        (files1[0] / "scenario.json", files2[0] / "scenario.json"),
        (files1[0] / "aggregate.csv", files2[0] / "aggregate.csv"),
        (files1[1] / "result.json", files2[1] / "result.json"),
        (files1[2], files2[2]),
    ]:
        assert a.read_bytes() == b.read_bytes()


def test_result_round_trip(tmp_path):
    _, res, _ = _run_reference_pipeline(tmp_path, seed=1)
    result = load_result(res)
    assert len(result.events) == 8
    total = json.loads((res / "result.json").read_text())
    assert result.residual_rms == total["residual_rms"]
    # The saved per-device estimates sum to the saved total.
    from functools import reduce

    summed = reduce(np.add, (o.values for o in result.estimated_outputs))
    np.testing.assert_array_equal(summed, result.estimated_total.values)


def test_identify_appends_library_entry(tmp_path):
    model = random_stable_model(3, 4, instant_off=True)
    schedule = PiecewiseInput(((30, 5.0), (200, 0.0), (280, 5.0), (430, 0.0)))
    y = simulate_zero_state(model, schedule.expand(0, 520, 1 / 12.0))
    records = [
        EmonRecord(k / 12.0, float(v), 120.0, 120.0 * float(v), 118.0 * float(v), 0.98)
        for k, v in enumerate(y.values)
    ]
    rec_path = tmp_path / "plug.csv"
    write_emontx_csv(records, rec_path)
    lib_path = tmp_path / "lib.json"
    assert main([
        "identify",
        "--input", str(rec_path),
        "--name", "kettle",
        "--threshold", "1.0",
        "--settle-skip", "20",
        "--library", str(lib_path),
    ]) == 0
    lib = load_library(lib_path)
    assert len(lib) == 1
    assert lib[0].name == "kettle"
    assert lib[0].instant_off


def test_plot_data_series_set(tmp_path):
    sim, res, _ = _run_reference_pipeline(tmp_path, seed=2)
    plot = tmp_path / "plot.csv"
    assert main([
        "plot-data",
        "--result", str(res),
        "--input", str(sim / "aggregate.csv"),
        "--out", str(plot),
    ]) == 0
    lines = plot.read_text().splitlines()
    assert lines[0] == "series,k,value"
    names = {}
    for line in lines[1:]:
        name = line.split(",")[0]
        names[name] = names.get(name, 0) + 1
    expected = {"y_m", "y_hat"} | {f"y_hat_device{i}" for i in range(1, 6)}
    assert set(names) == expected
    assert len(set(names.values())) == 1  # all series share one length


def test_unknown_flag_exits_one(tmp_path, capsys):
    assert main(["simulate", "--bogus"]) == 1
    assert main(["definitely-not-a-command"]) == 1


def test_simulate_requires_a_source(tmp_path):
    assert main(["simulate", "--out", str(tmp_path / "x")]) == 1


def test_missing_input_file_exits_two(tmp_path):
    code = main([
        "disaggregate",
        "--library", str(tmp_path / "none.json"),
        "--input", str(tmp_path / "none.csv"),
        "--out", str(tmp_path / "out"),
    ])
    assert code == 2


def test_validation_error_exits_one(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("not,a,header\n")
    code = main([
        "identify",
        "--input", str(bad),
        "--name", "x",
        "--threshold", "1.0",
        "--library", str(tmp_path / "lib.json"),
    ])
    assert code == 1


def test_help_exits_zero():
    assert main(["--help"]) == 0
