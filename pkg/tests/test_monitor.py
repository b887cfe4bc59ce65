import numpy as np
import pytest

import hybridid as hi
from hybridid.dictionary import DictionarySpec
from hybridid.monitor import MonitorConfig, model_diff, monitor_step, start_monitor
from hybridid.subsystems import SubsystemModel


def drive(state, ys, us=None):
    events = []
    for t, y in enumerate(ys):
        state, ev = monitor_step(state, np.atleast_1d(y),
                                 None if us is None else us[t])
        if ev is not None:
            events.append(ev)
    return state, events


def scalar_config(eps=1e-6, **kw):
    return MonitorConfig(
        dictionary=DictionarySpec(polynomial_order=1),
        solver=hi.SolverConfig(epsilon=eps, lambda_w=0.0),
        **kw,
    )


def two_mode_stream(switch_at=200, n=400):
    y = np.zeros(n)
    y[0] = 20.0
    for t in range(n - 1):
        y[t + 1] = 0.99 * y[t] + (0.3 if t >= switch_at else 0.0)
    return y


def test_switch_detected_within_three_samples():
    y = two_mode_stream()
    state, events = drive(start_monitor(scalar_config(), 1), y)
    assert len(events) == 1
    ev = events[0]
    assert 200 <= ev.detected_at <= 203
    assert 1 <= ev.confirmed_after <= 3
    assert ev.matched_known_mode is None
    # the dynamics change is localized to the constant term
    assert [e[0] for e in ev.model_diff] == ["1"]
    term, out, old, new = ev.model_diff[0]
    assert old == pytest.approx(0.0, abs=1e-9)
    assert new == pytest.approx(0.3, abs=1e-9)


def test_constant_dynamics_no_events():
    y = np.zeros(5000)
    y[0] = 5.0
    for t in range(4999):
        y[t + 1] = 0.999 * y[t] + 0.01
    state, events = drive(start_monitor(scalar_config(), 1), y)
    assert events == []
    assert state.consecutive_misses <= state.config.miss_limit


def test_switch_back_matches_known_mode():
    y = np.zeros(600)
    y[0] = 20.0
    for t in range(599):
        y[t + 1] = 0.99 * y[t] + (0.3 if 200 <= t < 400 else 0.0)
    state, events = drive(start_monitor(scalar_config(), 1), y)
    assert len(events) == 2
    assert events[0].matched_known_mode is None
    assert events[1].matched_known_mode == 1
    assert len(state.known_modes) == 2


def test_event_json_scalar_format():
    y = two_mode_stream()
    _, events = drive(start_monitor(scalar_config(), 1), y)
    obj = events[0].to_json_obj(1)
    assert obj["type"] == "switch"
    assert set(obj) == {"type", "detected_at", "confirmed_after", "matched_mode", "diff"}
    assert all(len(entry) == 3 for entry in obj["diff"])


def test_model_diff_examples():
    names = ["1", "y1"]
    a = SubsystemModel(1, np.array([[0.0], [0.99]]), names, np.zeros(0, int))
    b = SubsystemModel(2, np.array([[0.3], [0.99]]), names, np.zeros(0, int))
    assert model_diff(a, a) == []
    diff = model_diff(a, b)
    assert diff == [("1", 0, 0.0, 0.3)]
    c = SubsystemModel(3, np.array([[0.3], [0.99], [0.0]]), names + ["y1^2"], np.zeros(0, int))
    with pytest.raises(ValueError, match="different dictionaries"):
        model_diff(a, c)


def test_model_diff_sorted_by_change():
    names = ["1", "y1", "y2"]
    W1 = np.zeros((3, 2))
    W2 = np.zeros((3, 2))
    W2[0, 0] = 0.1
    W2[2, 1] = -2.0
    a = SubsystemModel(1, W1, names, np.zeros(0, int))
    b = SubsystemModel(2, W2, names, np.zeros(0, int))
    diff = model_diff(a, b, diff_tol=1e-9)
    assert [(e[0], e[1]) for e in diff] == [("y2", 1), ("1", 0)]


def test_grid_fault_localization():
    data, truth, modes = hi.generate_benchmark("grid_switch", steps=400)
    cfg = hi.SolverConfig(epsilon=1e-9, lambda_w=0.01)
    models, seg = hi.identify_subsystems(data, truth.dictionary_spec, cfg)
    assert seg.K == 2
    diff = model_diff(models[0], models[1])
    support = {(term, out) for term, out, *_ in diff}
    assert support == {("y2", 1), ("y3", 1), ("y2", 2), ("y3", 2)}


def test_online_offline_agreement(thermostat_case):
    data, truth, modes, cfg = thermostat_case
    # offline identification of the recorded stream
    models, seg = hi.identify_subsystems(data, truth.dictionary_spec, cfg)
    offline = {tuple(np.round(m.coefficients.ravel(), 8)) for m in models}
    # online pass over the same stream
    state, events = drive(start_monitor(scalar_config(eps=cfg.epsilon), 1),
                          data.outputs[:, 0])
    online = {tuple(np.round(m.coefficients.ravel(), 8)) for m in state.known_modes}
    assert len(state.known_modes) == 2
    for m_on in online:
        assert any(np.allclose(m_on, m_off, atol=10 * cfg.epsilon) for m_off in offline)


def test_refit_failure_reenters_warmup():
    # switch into pure noise: the refit window is inconsistent
    rng = np.random.default_rng(0)
    y = np.zeros(260)
    y[0] = 10.0
    for t in range(199):
        y[t + 1] = 0.995 * y[t] + 0.05
    y[200:] = rng.uniform(-40, 40, size=60)
    state, events = drive(start_monitor(scalar_config(), 1), y)
    assert len(events) >= 1
    assert events[0].model_diff is None or events[0].model_diff


def test_dimension_mismatch_rejected():
    state = start_monitor(scalar_config(), 1)
    with pytest.raises(ValueError, match="dimensions"):
        monitor_step(state, [1.0, 2.0])
