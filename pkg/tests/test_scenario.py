import numpy as np
import pytest
from dataclasses import replace

from disagg import (
    DeviceModel,
    PiecewiseInput,
    Scenario,
    ValidationError,
    dc_gain,
    is_stable,
    load_scenario,
    random_stable_model,
    reference_scenario,
    render,
    save_scenario,
    simulate_zero_state,
)


def _two_device_scenario(noise_std=0.0, seed=0):
    models = (
        DeviceModel("a", A=[[0.5]], b=[0.5], c=[1.0], instant_off=True),
        DeviceModel("b", A=[[0.0]], b=[1.0], c=[1.0]),
    )
    inputs = (
        PiecewiseInput(((5, 2.0), (20, 0.0))),
        PiecewiseInput(((10, 1.0),)),
    )
    return Scenario(models=models, inputs=inputs, noise_std=noise_std, seed=seed, horizon=40)


def test_render_noiseless_is_exact_sum():
    sc = _two_device_scenario()
    aggregate, truths = render(sc)
    total = truths[0].values + truths[1].values
    np.testing.assert_array_equal(aggregate.values, total)


def test_render_truths_match_direct_simulation():
    sc = _two_device_scenario()
    _, truths = render(sc)
    for model, inp, truth in zip(sc.models, sc.inputs, truths):
        direct = simulate_zero_state(model, inp.expand(0, sc.horizon))
        assert truth == direct


def test_render_deterministic_in_seed():
    sc = _two_device_scenario(noise_std=0.05, seed=42)
    a1, _ = render(sc)
    a2, _ = render(sc)
    assert np.array_equal(a1.values, a2.values)


def test_render_seed_changes_noise():
    a1, _ = render(_two_device_scenario(noise_std=0.05, seed=1))
    a2, _ = render(_two_device_scenario(noise_std=0.05, seed=2))
    assert not np.array_equal(a1.values, a2.values)


def test_render_noise_magnitude():
    sc = replace(reference_scenario(0), inputs=tuple(PiecewiseInput() for _ in range(5)))
    aggregate, _ = render(sc)
    # All devices idle: the aggregate is pure noise with std 0.02.
    assert abs(float(np.std(aggregate.values)) - 0.02) < 0.005
    assert abs(float(np.mean(aggregate.values))) < 0.005


def test_render_linear_in_level_when_noiseless():
    models = (DeviceModel("a", A=[[0.6]], b=[0.4], c=[1.0]),)
    base = Scenario(
        models=models, inputs=(PiecewiseInput(((5, 1.0), (20, 0.0))),), horizon=40
    )
    double = Scenario(
        models=models, inputs=(PiecewiseInput(((5, 2.0), (20, 0.0))),), horizon=40
    )
    a1, _ = render(base)
    a2, _ = render(double)
    np.testing.assert_allclose(a2.values, 2.0 * a1.values, rtol=1e-12)


def test_scenario_validates_lengths():
    models = (DeviceModel("a", A=[[0.5]], b=[0.5], c=[1.0]),)
    with pytest.raises(ValidationError):
        Scenario(models=models, inputs=(), horizon=10)


def test_scenario_validates_horizon_covers_events():
    models = (DeviceModel("a", A=[[0.5]], b=[0.5], c=[1.0]),)
    with pytest.raises(ValidationError):
        Scenario(models=models, inputs=(PiecewiseInput(((50, 1.0),)),), horizon=40)


def test_reference_scenario_shape():
    sc = reference_scenario(7)
    assert len(sc.models) == 5
    assert all(m.order == 3 for m in sc.models)
    assert all(m.instant_off for m in sc.models)
    assert sc.noise_std == 0.02
    assert all(is_stable(m).stable for m in sc.models)
    assert all(abs(dc_gain(m) - 1.0) <= 1e-9 for m in sc.models)


def test_reference_scenario_schedule():
    sc = reference_scenario(7)
    assert sc.inputs[0].events == ((20, 1.2), (101, 0.0))
    assert sc.inputs[1].events == ((130, 2.0), (401, 0.0))
    assert sc.inputs[2].events == ((180, 0.6), (301, 0.0))
    assert sc.inputs[3].events == ((250, 1.8), (351, 0.0))
    assert sc.inputs[4].events == ()


def test_reference_scenario_overlap_at_260():
    sc = reference_scenario(0)
    on = [inp.level_at(260) > 0 for inp in sc.inputs]
    assert on == [False, True, True, True, False]


def test_reference_scenario_models_deterministic():
    a = reference_scenario(9)
    b = reference_scenario(9)
    agg_a, _ = render(a)
    agg_b, _ = render(b)
    assert np.array_equal(agg_a.values, agg_b.values)
    assert a.models == b.models


def test_scenario_json_round_trip(tmp_path):
    sc = reference_scenario(3)
    path = tmp_path / "scenario.json"
    save_scenario(sc, path)
    loaded = load_scenario(path)
    assert loaded.models == sc.models
    assert loaded.inputs == sc.inputs
    assert loaded.seed == sc.seed
    assert loaded.noise_std == sc.noise_std
    a1, _ = render(sc)
    a2, _ = render(loaded)
    assert np.array_equal(a1.values, a2.values)


def test_scenario_model_ref_resolution(tmp_path):
    lib = [random_stable_model(2, 5)]
    path = tmp_path / "scenario.json"
    path.write_text(
        '{"seed": 0, "noise_std": 0.0, "horizon": 30,'
        ' "devices": [{"model_ref": "rand_o2_s5", "events": [[5, 1.0]]}]}'
    )
    sc = load_scenario(path, library=lib)
    assert sc.models[0] == lib[0]
    with pytest.raises(ValidationError):
        load_scenario(path, library=[])
