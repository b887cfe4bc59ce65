"""Streaming mode monitoring.

Maintains a model of the currently active subsystem, predicts each incoming
sample one step ahead, and treats a run of consecutive prediction misses as
a mode switch: the post-switch samples are refitted into a new model, which
is matched against previously seen modes and diffed against the old one to
localize what changed.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .dictionary import (
    DictionarySpec,
    TimeSeries,
    build_design_matrix,
    encode_terms,
    evaluate_terms,
)
from .solvers import SolverConfig, solve_coefficient_sparse
from .subsystems import SubsystemModel


@dataclass
class MonitorConfig:
    """Stream-monitoring settings on top of the shared solver config.

    warmup defaults to 5x the dictionary size; w_refit to
    max(min_segment, 2x dictionary size); tol_merge bounds the coefficient
    distance for recognizing a previously seen mode; diff_tol suppresses
    numerically-zero entries in model diffs.
    """

    dictionary: DictionarySpec
    solver: SolverConfig
    miss_limit: int = 3
    warmup: int | None = None
    w_refit: int | None = None
    min_segment: int = 3
    tol_merge: float | None = None
    diff_tol: float | None = None

    def __post_init__(self):
        if self.miss_limit < 1:
            raise ValueError("miss_limit must be >= 1")
        if self.solver.epsilon is None:
            raise ValueError("monitoring requires an explicit epsilon")


DiffEntry = tuple[str, int, float, float]   # (term, output index, old, new)


@dataclass
class SwitchEvent:
    """A confirmed dynamics change in the stream."""

    detected_at: int
    confirmed_after: int
    matched_known_mode: int | None = None
    model_diff: list[DiffEntry] | None = None
    new_mode: int | None = None

    def to_json_obj(self, n_outputs):
        diff = None
        if self.model_diff is not None:
            if n_outputs == 1:
                diff = [[t, old, new] for (t, _o, old, new) in self.model_diff]
            else:
                diff = [[t, f"y{o + 1}", old, new] for (t, o, old, new) in self.model_diff]
        return {
            "type": "switch",
            "detected_at": self.detected_at,
            "confirmed_after": self.confirmed_after,
            "matched_mode": self.matched_known_mode,
            "diff": diff,
        }


@dataclass
class MonitorState:
    """Mutable state advanced by monitor_step, one sample at a time."""

    config: MonitorConfig
    current_model: SubsystemModel | None = None
    window: deque = field(default_factory=deque)
    consecutive_misses: int = 0
    known_modes: list[SubsystemModel] = field(default_factory=list)
    t: int = -1                      # index of the last ingested sample
    prev: tuple | None = None        # (y, u) of the last ingested sample
    pending: dict | None = None      # refit bookkeeping after a confirmed switch
    n: int | None = None
    m: int | None = None
    _p: int | None = None

    def resolved_warmup(self):
        return self.config.warmup if self.config.warmup is not None else 5 * self._p

    def resolved_w_refit(self):
        if self.config.w_refit is not None:
            return self.config.w_refit
        return max(self.config.min_segment, 2 * self._p)


def start_monitor(config: MonitorConfig, n_outputs: int, n_inputs: int = 0) -> MonitorState:
    enc = encode_terms(config.dictionary, n_outputs, n_inputs)
    state = MonitorState(config=config, n=n_outputs, m=n_inputs, _p=enc.n_terms)
    state.window = deque(maxlen=max(state.resolved_warmup(), state.resolved_w_refit()) + 1)
    return state


def _fit_window(samples, config, sample_period=1.0):
    """Fit one subsystem to consecutive (y, u) samples; None if ill-posed."""
    ys = np.array([s[0] for s in samples])
    us = np.array([s[1] for s in samples])
    data = TimeSeries(ys, us if us.shape[1] else None, sample_period)
    dm = build_design_matrix(data, config.dictionary)
    if dm.n_rows < 1:
        return None
    W = solve_coefficient_sparse(dm, data.targets(), config.solver)
    model = SubsystemModel(id=0, coefficients=W, term_names=dm.term_names,
                           fit_rows=np.arange(dm.n_rows))
    resid = np.linalg.norm(data.targets() - dm.values @ W, axis=1)
    eps = config.solver.epsilon
    if np.median(resid) > eps * np.sqrt(ys.shape[1]):
        return None
    return model


def model_diff(old: SubsystemModel, new: SubsystemModel, diff_tol: float | None = None):
    """Coefficient changes between two models over the same dictionary.

    Returns (term, output, old, new) tuples for every entry whose change
    exceeds diff_tol, sorted by the magnitude of the change, largest first.
    """
    if old.term_names != new.term_names:
        raise ValueError("models use different dictionaries")
    delta = new.coefficients - old.coefficients
    if diff_tol is None:
        scale = max(float(np.max(np.abs(old.coefficients))), float(np.max(np.abs(new.coefficients))), 1.0)
        diff_tol = 1e-6 * scale
    entries = []
    for j, o in zip(*np.nonzero(np.abs(delta) > diff_tol)):
        entries.append((old.term_names[j], int(o),
                        float(old.coefficients[j, o]), float(new.coefficients[j, o])))
    entries.sort(key=lambda e: -abs(e[3] - e[2]))
    return entries


def monitor_step(state: MonitorState, y, u=None):
    """Ingest one sample; returns (state, SwitchEvent or None).

    During warm-up the sample is only buffered.  Afterwards the current
    model predicts the sample from its predecessor; a run of miss_limit
    consecutive prediction errors above epsilon confirms a switch.  The new
    dynamics are refitted once enough post-switch samples have arrived, so
    the event (with its model diff) is emitted on the sample completing the
    refit window.
    """
    cfg = state.config
    y = np.atleast_1d(np.asarray(y, dtype=float))
    u = np.zeros(0) if u is None else np.atleast_1d(np.asarray(u, dtype=float))
    if state.n is None:
        raise ValueError("state must come from start_monitor")
    if len(y) != state.n or len(u) != state.m:
        raise ValueError("sample dimensions disagree with the stream header")

    state.t += 1
    state.window.append((y, u))
    event = None

    if state.current_model is None:
        if len(state.window) >= state.resolved_warmup():
            model = _fit_window(list(state.window), cfg)
            if model is not None:
                model.id = len(state.known_modes) + 1
                state.current_model = model
                state.known_modes.append(model)
                state.consecutive_misses = 0
        state.prev = (y, u)
        return state, None

    if state.pending is not None:
        state.pending["samples"].append((y, u))
        if len(state.pending["samples"]) >= state.resolved_w_refit() + 1:
            event = _finish_refit(state)
        state.prev = (y, u)
        return state, event

    py, pu = state.prev
    pred = _monitor_predict(state, py, pu)
    err = float(np.linalg.norm(y - pred))
    if err > cfg.solver.epsilon * np.sqrt(state.n):
        state.consecutive_misses += 1
    else:
        state.consecutive_misses = 0

    if state.consecutive_misses >= cfg.miss_limit:
        # samples from the first miss onward are post-switch; keep the
        # sample just before it so transition pairs can be formed
        post = list(state.window)[-(cfg.miss_limit + 1):]
        state.pending = {
            "detected_at": state.t,
            "confirmed_after": cfg.miss_limit,
            "samples": post,
        }
        state.consecutive_misses = 0
        if len(post) >= state.resolved_w_refit() + 1:
            event = _finish_refit(state)
    state.prev = (y, u)
    return state, event


def _monitor_predict(state, y, u):
    """One-step prediction from the current model; caches its term encoding."""
    model = state.current_model
    enc = getattr(model, "_enc", None)
    if enc is None:
        full = encode_terms(state.config.dictionary, state.n, state.m)
        enc = full.subset(model.term_names)
        model._enc = enc
    s = np.concatenate([y, u]) if state.m else y
    row = evaluate_terms(enc, s[None, :])[0]
    return row @ model.coefficients


def _finish_refit(state: MonitorState):
    cfg = state.config
    pend = state.pending
    state.pending = None
    new_model = _fit_window(pend["samples"], cfg)
    if new_model is None:
        # insufficient rank or inconsistent window: report and start over
        state.current_model = None
        state.window.clear()
        for s_ in pend["samples"]:
            state.window.append(s_)
        return SwitchEvent(
            detected_at=pend["detected_at"],
            confirmed_after=pend["confirmed_after"],
            matched_known_mode=None,
            model_diff=None,
        )

    matched = None
    tol = cfg.tol_merge
    if tol is None:
        tol = 10.0 * cfg.solver.epsilon
    for known in state.known_modes:
        if np.max(np.abs(known.coefficients - new_model.coefficients)) < tol:
            matched = known.id
            break
    old = state.current_model
    diff = model_diff(old, new_model, cfg.diff_tol)
    if matched is None:
        new_model.id = len(state.known_modes) + 1
        state.known_modes.append(new_model)
    else:
        new_model.id = matched
    state.current_model = new_model
    return SwitchEvent(
        detected_at=pend["detected_at"],
        confirmed_after=pend["confirmed_after"],
        matched_known_mode=matched,
        model_diff=diff,
        new_mode=new_model.id,
    )
