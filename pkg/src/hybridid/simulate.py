"""Forward simulation of hybrid models and evaluation metrics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from ._core import simulate_hybrid
from .dictionary import DesignMatrix, DictionarySpec, TimeSeries, build_design_matrix, encode_terms
from .subsystems import Segmentation, SubsystemModel, classify_rows
from .transitions import TransitionRule

DIVERGENCE_GUARD = 1e12


@dataclass
class HybridModel:
    """Complete discovered (or ground-truth) hybrid system."""

    subsystems: list[SubsystemModel]
    rules: list[TransitionRule]
    dictionary_spec: DictionarySpec
    psi_spec: DictionarySpec
    sample_period: float = 1.0

    def __post_init__(self):
        ids = sorted(s.id for s in self.subsystems)
        if ids != list(range(1, len(ids) + 1)):
            raise ValueError(f"subsystem ids must be 1..K, got {ids}")
        for rule in self.rules:
            if rule.from_mode not in ids or rule.to_mode not in ids:
                raise ValueError(f"rule {rule.from_mode}->{rule.to_mode} references unknown mode")

    @property
    def K(self):
        return len(self.subsystems)

    @property
    def n_outputs(self):
        return self.subsystems[0].n_outputs

    def subsystem(self, mode_id):
        for s in self.subsystems:
            if s.id == mode_id:
                return s
        raise KeyError(mode_id)


@dataclass
class SimResult:
    trajectory: TimeSeries
    mode_trace: np.ndarray
    switch_times: list[int] = field(default_factory=list)
    diverged: bool = False


def _pack_model(model: HybridModel, n, m):
    """Flatten the model into the kernel's array layout."""
    phi_enc = encode_terms(model.dictionary_spec, n, m)
    psi_enc = encode_terms(model.psi_spec, n, m)
    subs = sorted(model.subsystems, key=lambda s: s.id)
    p = len(subs[0].term_names)
    W = np.zeros((len(subs), p, n))
    sub_phi = phi_enc.subset(subs[0].term_names)
    for k, s in enumerate(subs):
        if s.term_names != subs[0].term_names:
            raise ValueError("all subsystems must share one dictionary")
        W[k] = s.coefficients

    rules = sorted(model.rules, key=lambda r: (r.from_mode, r.to_mode))
    q = len(psi_enc.names) if not rules else len(rules[0].term_names)
    sub_psi = psi_enc.subset(rules[0].term_names) if rules else psi_enc
    rule_from = np.array([r.from_mode for r in rules], dtype=np.int32)
    rule_to = np.array([r.to_mode for r in rules], dtype=np.int32)
    rule_v = np.zeros((len(rules), q))
    for k, r in enumerate(rules):
        if r.term_names != (rules[0].term_names):
            raise ValueError("all rules must share one predicate dictionary")
        rule_v[k] = r.v
    return sub_phi, W, sub_psi, rule_from, rule_to, rule_v


def simulate(model: HybridModel, y0, m0: int, u=None, steps: int = 100) -> SimResult:
    """Iterate the hybrid dynamics from (y0, m0) for the given step count.

    Inputs, when the model uses any, must supply at least ``steps`` rows.
    Trajectories whose magnitude passes 1e12 are truncated and flagged
    diverged.
    """
    y0 = np.atleast_1d(np.asarray(y0, dtype=float))
    n = model.n_outputs
    if len(y0) != n:
        raise ValueError(f"y0 must have {n} entries")
    if m0 not in {s.id for s in model.subsystems}:
        raise ValueError(f"unknown initial mode {m0}")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if u is None:
        u_arr = np.zeros((steps, 0))
    else:
        u_arr = np.atleast_2d(np.asarray(u, dtype=float))
        if u_arr.shape[0] == 1 and u_arr.shape[1] == steps:
            u_arr = u_arr.T
        if u_arr.shape[0] < steps:
            raise ValueError(f"need at least {steps} input rows, got {u_arr.shape[0]}")
        u_arr = u_arr[:steps]
    m = u_arr.shape[1]

    phi_enc, W, psi_enc, rule_from, rule_to, rule_v = _pack_model(model, n, m)
    Y, modes, diverged = simulate_hybrid(
        phi_enc.kinds, phi_enc.exps, phi_enc.args, W,
        psi_enc.kinds, psi_enc.exps, psi_enc.args,
        rule_from, rule_to, rule_v,
        y0, int(m0), u_arr, int(steps), DIVERGENCE_GUARD,
    )
    T = len(Y) - 1
    inputs = None
    if m:
        inputs = np.vstack([u_arr[:T], u_arr[T - 1 : T]]) if T else u_arr[:1]
    trajectory = TimeSeries(Y, inputs, model.sample_period)
    switches = [int(t) for t in np.flatnonzero(np.diff(modes)) + 1]
    return SimResult(trajectory=trajectory, mode_trace=np.asarray(modes, int),
                     switch_times=switches, diverged=bool(diverged))


def one_step_predictions(model: HybridModel, data: TimeSeries, labels=None):
    """Predict each y(t+1) from the sample at t.

    With labels given (length M), each row uses that mode's coefficients;
    otherwise rows are classified to their best-fitting mode first.
    Returns (predictions, labels).
    """
    dm = build_design_matrix(data, model.dictionary_spec)
    subs = sorted(model.subsystems, key=lambda s: s.id)
    if dm.term_names != subs[0].term_names:
        dm = DesignMatrix(
            dm.values[:, [dm.term_names.index(nm) for nm in subs[0].term_names]],
            list(subs[0].term_names),
        )
    if labels is None:
        labels = classify_rows(subs, dm, data.targets()).labels
    labels = np.asarray(labels, dtype=int).copy()
    if (labels == 0).any():
        fallback = classify_rows(subs, dm, data.targets()).labels
        labels[labels == 0] = fallback[labels == 0]
    preds = np.zeros((dm.n_rows, model.n_outputs))
    for s in subs:
        rows = labels == s.id
        preds[rows] = dm.values[rows] @ s.coefficients
    return preds, labels


def relative_error_ratio(y_true, y_sim) -> float:
    """||Y_true - Y_sim||_F / ||Y_true||_F as a percentage."""
    a = y_true.outputs if isinstance(y_true, TimeSeries) else np.asarray(y_true, dtype=float)
    b = y_sim.outputs if isinstance(y_sim, TimeSeries) else np.asarray(y_sim, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    denom = float(np.linalg.norm(a))
    if denom == 0.0:
        raise ValueError("relative error ratio undefined for an all-zero reference")
    return 100.0 * float(np.linalg.norm(a - b)) / denom


def segmentation_accuracy(est, truth) -> float:
    """Best label agreement over all mode-label permutations.

    Mode numbering is arbitrary, so labels are matched by the assignment
    maximizing agreement; unassigned samples (label 0) never match.
    """
    est_labels = est.labels if isinstance(est, Segmentation) else np.asarray(est, dtype=int)
    truth = np.asarray(truth, dtype=int)
    M = len(est_labels)
    if len(truth) == M + 1:
        truth = truth[:M]
    if len(truth) != M:
        raise ValueError("label traces must have equal length")
    est_ids = [k for k in np.unique(est_labels) if k != 0]
    true_ids = list(np.unique(truth))
    C = np.zeros((len(est_ids), len(true_ids)))
    for a, ka in enumerate(est_ids):
        for b, kb in enumerate(true_ids):
            C[a, b] = np.sum((est_labels == ka) & (truth == kb))
    if C.size == 0:
        return 0.0
    rows, cols = linear_sum_assignment(-C)
    return float(C[rows, cols].sum()) / M
