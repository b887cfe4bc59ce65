"""Transition-logic inference.

For every ordered mode pair (i, j) observed to be adjacent in the
segmentation, fit a sparse predicate g(y, u) = Psi(y, u) @ v so that the
switch from i to j fires exactly when g >= 0.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .dictionary import DictionarySpec, TimeSeries, build_design_matrix, evaluate_row
from .errors import InseparableTransitionError
from .solvers import solve_sparse_logistic
from .subsystems import UNASSIGNED, Segmentation

log = logging.getLogger(__name__)


@dataclass
class TransitionRule:
    """A fitted switch predicate for one ordered mode pair.

    The predicate fires when the weighted sum of the named dictionary terms
    is >= 0.  v is scaled so its largest-magnitude non-constant entry has
    unit magnitude (positive scaling only; the decision is scale-invariant).
    """

    from_mode: int
    to_mode: int
    v: np.ndarray
    term_names: list[str]
    training_accuracy: float
    flagged: bool = False
    psi_spec: DictionarySpec | None = None

    def __post_init__(self):
        self.v = np.asarray(self.v, dtype=float)
        if len(self.v) != len(self.term_names):
            raise ValueError("v length must match term_names")


@dataclass
class MembershipTrace:
    """One-hot mode membership per transition sample."""

    gamma: np.ndarray   # (M, K) 0/1

    @classmethod
    def from_segmentation(cls, seg: Segmentation):
        gamma = np.zeros((len(seg.labels), seg.K), dtype=int)
        for k in range(1, seg.K + 1):
            gamma[seg.labels == k, k - 1] = 1
        return cls(gamma=gamma)


def normalize_rule_scale(v, term_names):
    """Scale v by a positive constant so max |non-constant entry| is 1."""
    v = np.asarray(v, dtype=float)
    slopes = [j for j, nm in enumerate(term_names) if nm != "1"]
    mags = np.abs(v[slopes]) if slopes else np.abs(v)
    denom = float(np.max(mags)) if mags.size else 0.0
    if denom == 0.0:
        denom = float(np.max(np.abs(v))) if np.any(v) else 1.0
    return v / denom


def infer_transitions(
    seg: Segmentation,
    data: TimeSeries,
    spec_psi: DictionarySpec,
    lambda_v: float,
    accuracy_floor: float = 0.95,
):
    """Fit one TransitionRule per observed mode switch direction.

    Only pairs with at least one observed switch are fitted; pairs whose
    positive and negative examples coincide in the predicate features are
    omitted with a warning.  Rules with training accuracy below
    accuracy_floor are kept but flagged.
    """
    labels = seg.labels
    M = len(labels)
    if seg.K < 2 or M < 2:
        return []
    psi = build_design_matrix(data, spec_psi)

    observed = {}
    for t in range(M - 1):
        i, j = labels[t], labels[t + 1]
        if i != UNASSIGNED and j != UNASSIGNED and i != j:
            observed[(int(i), int(j))] = observed.get((int(i), int(j)), 0) + 1

    rules = []
    for (i, j) in sorted(observed):
        rows = np.flatnonzero((labels[: M - 1] == i) & (labels[1:] != UNASSIGNED))
        targets = (labels[rows + 1] == j).astype(float)
        weights = np.ones(rows.size)
        try:
            v = solve_sparse_logistic(psi.take_rows(rows), targets, weights, lambda_v)
        except InseparableTransitionError:
            warnings.warn(f"transition {i} -> {j} not expressible in the predicate dictionary")
            continue
        decisions = psi.values[rows] @ v >= 0
        accuracy = float(np.mean(decisions == (targets > 0.5)))
        rule = TransitionRule(
            from_mode=i,
            to_mode=j,
            v=normalize_rule_scale(v, psi.term_names),
            term_names=list(psi.term_names),
            training_accuracy=accuracy,
            flagged=accuracy < accuracy_floor,
            psi_spec=spec_psi,
        )
        if rule.flagged:
            log.info("rule %d -> %d has low training accuracy %.3f", i, j, accuracy)
        rules.append(rule)
    for (i, j), count in sorted(observed.items()):
        log.debug("observed %d switches %d -> %d", count, i, j)
    return rules


def predicate_eval(rule: TransitionRule, y, u=None) -> bool:
    """True iff the rule's predicate fires at the given sample."""
    if rule.psi_spec is None:
        raise ValueError("rule carries no predicate dictionary spec")
    vals, names = evaluate_row(rule.psi_spec, y, u)
    index = {nm: k for k, nm in enumerate(names)}
    g = sum(c * vals[index[nm]] for nm, c in zip(rule.term_names, rule.v))
    return bool(g >= 0.0)


def _fmt_coeff(c, digits):
    return f"{round(c, digits):g}"


def rule_to_string(rule: TransitionRule, digits: int = 2, show_modes: bool = True) -> str:
    """Human-readable predicate, non-constant terms first, zeros omitted.

    Example: "mode 2 -> mode 1 when y1 - 21 >= 0".
    """
    slope_parts = []
    const_val = 0.0
    for nm, c in zip(rule.term_names, rule.v):
        if c == 0:
            continue
        if nm == "1":
            const_val += c
            continue
        mag = _fmt_coeff(abs(c), digits)
        text = nm if mag == "1" else f"{mag}*{nm}"
        slope_parts.append((text, c < 0))
    pieces = []
    for k, (text, neg) in enumerate(slope_parts):
        if k == 0:
            pieces.append(f"-{text}" if neg else text)
        else:
            pieces.append(f"- {text}" if neg else f"+ {text}")
    if const_val != 0.0 or not pieces:
        mag = _fmt_coeff(abs(const_val), digits)
        if not pieces:
            pieces.append(f"-{mag}" if const_val < 0 else mag)
        else:
            pieces.append(f"- {mag}" if const_val < 0 else f"+ {mag}")
    predicate = " ".join(pieces) + " >= 0"
    if not slope_parts:
        predicate += "  [warning: constant predicate]"
    if show_modes:
        return f"mode {rule.from_mode} -> mode {rule.to_mode} when {predicate}"
    return predicate
