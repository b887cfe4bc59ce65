"""Benchmark data generators with exact ground truth.

Every generator returns (TimeSeries, HybridModel, mode_trace): a sampled
trajectory (optionally with additive Gaussian measurement noise), the exact
generating model over a documented dictionary, and the true per-sample mode
labels, so identification results can always be checked against an oracle.
"""

from __future__ import annotations

import numpy as np

from .dictionary import DictionarySpec, TimeSeries, encode_terms
from .simulate import HybridModel, simulate
from .subsystems import SubsystemModel
from .transitions import TransitionRule, normalize_rule_scale

BENCHMARK_NAMES = ("thermostat", "chua", "pwa2", "relay_hysteresis", "grid_switch", "gating_toy")

AFFINE_SPEC = DictionarySpec(polynomial_order=1, include_constant=True)


def _subsystem(sid, spec, n, terms_per_output):
    """Build a SubsystemModel from {output_index: {term_name: coeff}}."""
    enc = encode_terms(spec, n, 0)
    W = np.zeros((enc.n_terms, n))
    index = {nm: k for k, nm in enumerate(enc.names)}
    for out, terms in terms_per_output.items():
        for nm, c in terms.items():
            W[index[nm], out] = c
    return SubsystemModel(id=sid, coefficients=W, term_names=list(enc.names), fit_rows=np.zeros(0, int))


def _rule(i, j, spec, n, terms):
    enc = encode_terms(spec, n, 0)
    v = np.zeros(enc.n_terms)
    index = {nm: k for k, nm in enumerate(enc.names)}
    for nm, c in terms.items():
        v[index[nm]] = c
    return TransitionRule(
        from_mode=i, to_mode=j, v=normalize_rule_scale(v, enc.names),
        term_names=list(enc.names), training_accuracy=1.0, psi_spec=spec,
    )


def _thermostat(params):
    """Heated room with hysteresis: heat on below `lo`, off at `hi`.

    Continuous rates -a*y (off) and 30a - a*y (on, heater drive plus
    dissipation), discretized with forward differences at step h.  Set
    on_rate="pure" for the variant where the heater rate is 30a alone.
    """
    a = params.get("a", 0.1)
    h = params.get("h", 0.1)
    lo = params.get("lo", 19.0)
    hi = params.get("hi", 21.0)
    on_rate = params.get("on_rate", "net")
    y0 = params.get("y0", 20.0)
    m0 = int(params.get("m0", 1))
    on_slope = 1.0 if on_rate == "pure" else 1.0 - a * h
    subs = [
        _subsystem(1, AFFINE_SPEC, 1, {0: {"1": 30.0 * a * h, "y1": on_slope}}),   # heater on
        _subsystem(2, AFFINE_SPEC, 1, {0: {"y1": 1.0 - a * h}}),                   # heater off
    ]
    rules = [
        _rule(1, 2, AFFINE_SPEC, 1, {"y1": 1.0, "1": -hi}),   # off when y >= hi
        _rule(2, 1, AFFINE_SPEC, 1, {"y1": -1.0, "1": lo}),   # on when y <= lo
    ]
    model = HybridModel(subs, rules, AFFINE_SPEC, AFFINE_SPEC, sample_period=h)
    return model, np.array([y0]), m0, None


def _chua(params):
    """Chua's circuit with a three-segment piecewise-linear resistor.

    Classic double-scroll parameters; forward-difference discretization at
    h = 1.5e-3, where the one-step error against a 4th-order reference stays
    below 0.1% of the state norm.  The three linear regions (inner,
    x >= 1, x <= -1) are the three modes; mode switches are exact one-step
    lookahead guards on the next x.
    """
    alpha = params.get("alpha", 15.6)
    beta = params.get("beta", 28.0)
    slope_in = params.get("slope_inner", -8.0 / 7.0)
    slope_out = params.get("slope_outer", -5.0 / 7.0)
    h = params.get("h", 1.5e-3)
    y0 = np.asarray(params.get("y0", (0.7, 0.0, 0.0)), dtype=float)
    gap = slope_in - slope_out

    def x_row(slope, offs):
        # x+ = x + h*alpha*(y - x - (slope*x + offs))
        return {"1": -h * alpha * offs, "y1": 1.0 - h * alpha * (1.0 + slope), "y2": h * alpha}

    shared = {
        1: {"y1": h, "y2": 1.0 - h, "y3": h},
        2: {"y2": -h * beta, "y3": 1.0},
    }
    subs = [
        _subsystem(1, AFFINE_SPEC, 3, {0: x_row(slope_in, 0.0), **shared}),
        _subsystem(2, AFFINE_SPEC, 3, {0: x_row(slope_out, gap), **shared}),
        _subsystem(3, AFFINE_SPEC, 3, {0: x_row(slope_out, -gap), **shared}),
    ]

    def lookahead(row, shift, sign):
        # sign * x_next + shift >= 0 with x_next affine in (x, y)
        return {nm: sign * c for nm, c in row.items() if nm != "1"} | {
            "1": sign * row.get("1", 0.0) + shift
        }

    mid, right, left = (x_row(slope_in, 0.0), x_row(slope_out, gap), x_row(slope_out, -gap))
    rules = [
        _rule(1, 2, AFFINE_SPEC, 3, lookahead(mid, -1.0, 1.0)),    # x+ >= 1
        _rule(1, 3, AFFINE_SPEC, 3, lookahead(mid, -1.0, -1.0)),   # x+ <= -1
        _rule(2, 1, AFFINE_SPEC, 3, lookahead(right, 1.0, -1.0)),  # x+ <= 1
        _rule(3, 1, AFFINE_SPEC, 3, lookahead(left, 1.0, 1.0)),    # x+ >= -1
    ]
    model = HybridModel(subs, rules, AFFINE_SPEC, AFFINE_SPEC, sample_period=h)
    m0 = 1 if abs(y0[0]) < 1.0 else (2 if y0[0] >= 1.0 else 3)
    return model, y0, m0, _chua_check


def _chua_check(sim):
    x = sim.trajectory.outputs[:, 0]
    region = np.where(x >= 1.0, 2, np.where(x <= -1.0, 3, 1))
    if not np.array_equal(region, sim.mode_trace):
        raise AssertionError("chua mode trace disagrees with the resistor regions")


def _pwa2(params):
    """Two stable affine scalar maps with a linear guard at zero.

    Defaults draw the maps from the seed, with slopes close to 1 so the
    state crosses the guard slowly and each mode is visited at many distinct
    points (fast maps collapse onto a two-point cycle, which a single affine
    map can interpolate, making the modes indistinguishable).  Pass
    a1/b1/a2/b2 to pin the maps.
    """
    rng = params["_rng"]
    a1 = params.get("a1", float(rng.uniform(0.93, 0.98)))
    b1 = params.get("b1", -float(rng.uniform(0.08, 0.2)))
    a2 = params.get("a2", float(rng.uniform(0.93, 0.98)))
    b2 = params.get("b2", float(rng.uniform(0.08, 0.2)))
    y0 = params.get("y0", 1.0)
    subs = [
        _subsystem(1, AFFINE_SPEC, 1, {0: {"1": b1, "y1": a1}}),   # active on y >= 0
        _subsystem(2, AFFINE_SPEC, 1, {0: {"1": b2, "y1": a2}}),   # active on y < 0
    ]
    rules = [
        _rule(1, 2, AFFINE_SPEC, 1, {"y1": -a1, "1": -b1}),   # next y < 0
        _rule(2, 1, AFFINE_SPEC, 1, {"y1": a2, "1": b2}),     # next y >= 0
    ]
    model = HybridModel(subs, rules, AFFINE_SPEC, AFFINE_SPEC, sample_period=params.get("h", 1.0))

    def check(sim):
        y = sim.trajectory.outputs[:, 0]
        region = np.where(y >= 0.0, 1, 2)
        if not np.array_equal(region, sim.mode_trace):
            raise AssertionError("pwa2 mode trace disagrees with the guard")

    m0 = 1 if y0 >= 0 else 2
    return model, np.array([float(y0)]), m0, check


def _relay_hysteresis(params):
    """Symmetric two-threshold relay: drive up to +1, then down to -1."""
    rate = params.get("rate", 0.95)
    drive = params.get("drive", 0.2)
    hi = params.get("hi", 1.0)
    lo = params.get("lo", -1.0)
    subs = [
        _subsystem(1, AFFINE_SPEC, 1, {0: {"1": drive, "y1": rate}}),    # rising
        _subsystem(2, AFFINE_SPEC, 1, {0: {"1": -drive, "y1": rate}}),   # falling
    ]
    rules = [
        _rule(1, 2, AFFINE_SPEC, 1, {"y1": 1.0, "1": -hi}),
        _rule(2, 1, AFFINE_SPEC, 1, {"y1": -1.0, "1": lo}),
    ]
    model = HybridModel(subs, rules, AFFINE_SPEC, AFFINE_SPEC, sample_period=params.get("h", 1.0))
    return model, np.array([params.get("y0", 0.0)]), int(params.get("m0", 1)), None


def _line_laplacian(n_nodes, admittances, leak):
    L = np.zeros((n_nodes, n_nodes))
    for e, g in enumerate(admittances):
        i, j = e, e + 1
        L[i, i] += g
        L[j, j] += g
        L[i, j] -= g
        L[j, i] -= g
    L[np.diag_indices_from(L)] += leak
    return L


def _grid_switch(params):
    """Five-node line network switching one line's admittance.

    y(t+1) = A_k y(t) + b with A_k = I - h (L_k + leak I); the two
    configurations differ only in the admittance of the line between nodes
    2 and 3, so exactly the four coefficient entries coupling y2/y3 change.
    An operator-style relay on node 1 drives the switching.
    """
    n_nodes = 5
    h = params.get("h", 0.2)
    leak = params.get("leak", 0.4)
    g_base = params.get("admittances", (1.0, 0.5, 1.0, 1.0))
    g_alt = params.get("switched_admittance", 2.0)
    inj = np.zeros(n_nodes)
    inj[0] = params.get("injection", 2.0)

    g1 = tuple(g_base)
    g2 = (g_base[0], g_alt, *g_base[2:])
    A = [np.eye(n_nodes) - h * _line_laplacian(n_nodes, g, leak) for g in (g1, g2)]
    b = h * inj
    fp = [np.linalg.solve(_line_laplacian(n_nodes, g, leak), inj)[0] for g in (g1, g2)]
    span = fp[0] - fp[1]
    # thresholds sit mid-range between the fixed points so the relay crosses
    # them at healthy speed; near a fixed point the approach creeps and the
    # switch margins would shrink below what any fitted predicate resolves
    hi = params.get("hi", fp[1] + 0.6 * span)
    lo = params.get("lo", fp[1] + 0.35 * span)

    names = [f"y{k + 1}" for k in range(n_nodes)]
    subs = []
    for k, Ak in enumerate(A):
        terms = {
            out: {"1": b[out], **{names[c]: Ak[out, c] for c in range(n_nodes) if Ak[out, c] != 0.0}}
            for out in range(n_nodes)
        }
        subs.append(_subsystem(k + 1, AFFINE_SPEC, n_nodes, terms))
    rules = [
        _rule(1, 2, AFFINE_SPEC, n_nodes, {"y1": 1.0, "1": -hi}),
        _rule(2, 1, AFFINE_SPEC, n_nodes, {"y1": -1.0, "1": lo}),
    ]
    model = HybridModel(subs, rules, AFFINE_SPEC, AFFINE_SPEC, sample_period=h)
    # default start halfway to the nominal profile: at the all-zero state the
    # two configurations act identically, which would make the first samples
    # unattributable
    fp_vec = np.linalg.solve(_line_laplacian(n_nodes, g1, leak), inj)
    y0 = np.asarray(params.get("y0", 0.5 * fp_vec), dtype=float)
    return model, y0, int(params.get("m0", 1)), None


def _gating_toy(params):
    """Two-state relaxation spiker: fast voltage, slow inactivation gate.

    Mode 1 depolarizes the voltage v while the gate w decays; crossing the
    spike threshold switches to mode 2, where v collapses quickly and w
    recharges, blocking the next spike until v falls below the reset level.
    """
    h = params.get("h", 0.05)
    v_hi = params.get("v_hi", 1.5)
    v_lo = params.get("v_lo", 0.2)
    c1, a1, b1, r1 = 3.0, 0.5, 0.8, 0.3
    a2, c2, r2 = 2.0, 1.0, 0.5
    subs = [
        _subsystem(1, AFFINE_SPEC, 2, {
            0: {"1": h * c1, "y1": 1.0 - h * a1, "y2": -h * b1},
            1: {"y2": 1.0 - h * r1},
        }),
        _subsystem(2, AFFINE_SPEC, 2, {
            0: {"y1": 1.0 - h * a2},
            1: {"1": h * c2, "y2": 1.0 - h * r2},
        }),
    ]
    rules = [
        _rule(1, 2, AFFINE_SPEC, 2, {"y1": 1.0, "1": -v_hi}),
        _rule(2, 1, AFFINE_SPEC, 2, {"y1": -1.0, "1": v_lo}),
    ]
    model = HybridModel(subs, rules, AFFINE_SPEC, AFFINE_SPEC, sample_period=h)
    y0 = np.asarray(params.get("y0", (0.0, 0.0)), dtype=float)
    return model, y0, int(params.get("m0", 1)), None


_GENERATORS = {
    "thermostat": _thermostat,
    "chua": _chua,
    "pwa2": _pwa2,
    "relay_hysteresis": _relay_hysteresis,
    "grid_switch": _grid_switch,
    "gating_toy": _gating_toy,
}


def generate_benchmark(name, params=None, steps=500, noise_std=0.0, seed=0):
    """Sample a named benchmark system.

    Returns (data, truth_model, mode_trace): the (noisy) observations, the
    exact generating HybridModel, and the true mode label per sample.  The
    generator re-checks its own guard logic against the produced labels.
    """
    if name not in _GENERATORS:
        raise ValueError(f"unknown benchmark {name!r}; choose from {BENCHMARK_NAMES}")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if noise_std < 0:
        raise ValueError("noise_std must be >= 0")
    params = dict(params or {})
    rng = np.random.default_rng(seed)
    params["_rng"] = rng
    model, y0, m0, check = _GENERATORS[name](params)
    sim = simulate(model, y0, m0, None, steps)
    if sim.diverged:
        raise RuntimeError(f"benchmark {name} diverged; check params")
    if check is not None:
        check(sim)
    _check_switch_guards(model, sim)
    outputs = sim.trajectory.outputs
    if noise_std > 0:
        outputs = outputs + rng.normal(0.0, noise_std, size=outputs.shape)
    data = TimeSeries(outputs, None, model.sample_period)
    return data, model, sim.mode_trace.copy()


def _check_switch_guards(model, sim):
    """Every recorded switch must have its firing rule satisfied."""
    from .transitions import predicate_eval

    Y = sim.trajectory.outputs
    modes = sim.mode_trace
    rules = {(r.from_mode, r.to_mode): r for r in model.rules}
    for t in sim.switch_times:
        rule = rules.get((int(modes[t - 1]), int(modes[t])))
        if rule is None:
            raise AssertionError(f"switch {modes[t - 1]}->{modes[t]} at {t} has no rule")
        if not predicate_eval(rule, Y[t - 1]):
            raise AssertionError(f"guard for switch at {t} does not fire on its own sample")
