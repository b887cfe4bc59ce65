"""Iterative subsystem discovery.

Peel off the subsystem explaining the most remaining samples, fit its
sparse dynamics, recurse on the rest; then re-classify every sample
globally, merge duplicate modes and renumber by share of the data.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .dictionary import DesignMatrix, DictionarySpec, TimeSeries, build_design_matrix, normalize_columns
from .errors import ModeBudgetError, NoConsensusError
from .solvers import SolverConfig, make_resolved, solve_coefficient_sparse, solve_residual_sparse

UNASSIGNED = 0


@dataclass
class SubsystemModel:
    """One discovered mode: named sparse coefficients plus its samples."""

    id: int
    coefficients: np.ndarray          # (p, n), raw-term basis
    term_names: list[str]
    fit_rows: np.ndarray
    merged_ids: tuple[int, ...] = field(default_factory=tuple)

    def __post_init__(self):
        self.coefficients = np.atleast_2d(np.asarray(self.coefficients, dtype=float))
        self.fit_rows = np.asarray(self.fit_rows, dtype=int)
        if self.coefficients.shape[0] != len(self.term_names):
            raise ValueError("coefficient rows must match term_names")
        if not self.merged_ids:
            self.merged_ids = (self.id,)

    @property
    def n_outputs(self):
        return self.coefficients.shape[1]

    def active_terms(self, output):
        """(name, coefficient) pairs with nonzero weight for one output."""
        col = self.coefficients[:, output]
        return [(self.term_names[j], float(col[j])) for j in np.flatnonzero(col)]

    def predict(self, dm: DesignMatrix):
        if dm.term_names != self.term_names:
            raise ValueError("design matrix columns do not match this model")
        base = dm.denormalized() if dm.column_scales is not None else dm
        return base.values @ self.coefficients


@dataclass
class Segmentation:
    """Per-transition-sample mode labels; 0 marks unassigned samples."""

    labels: np.ndarray
    K: int

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=int)

    @property
    def n_unassigned(self):
        return int(np.sum(self.labels == UNASSIGNED))

    def rows_of(self, mode):
        return np.flatnonzero(self.labels == mode)


@dataclass
class PeelLimits:
    max_modes: int = 10
    min_segment: int = 3

    def __post_init__(self):
        if self.max_modes < 1:
            raise ValueError("max_modes must be >= 1")
        if self.min_segment < 1:
            raise ValueError("min_segment must be >= 1")

    def to_dict(self):
        return {"max_modes": self.max_modes, "min_segment": self.min_segment}

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - {"max_modes", "min_segment"}
        if unknown:
            raise ValueError(f"unknown limits keys: {sorted(unknown)}")
        return cls(**d)


def _residual_table(models, dm_raw, targets):
    """(M x K) residual norms of every row under every model."""
    R = np.empty((dm_raw.n_rows, len(models)))
    for k, model in enumerate(models):
        R[:, k] = np.linalg.norm(targets - dm_raw.values @ model.coefficients, axis=1)
    return R


def classify_rows(models, dm_raw: DesignMatrix, targets) -> Segmentation:
    """Assign every row to its best-fitting mode.

    Ties go to the mode with more fit_rows, then to the lower mode id.
    """
    if not models:
        raise ValueError("need at least one model")
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    R = _residual_table(models, dm_raw, targets)
    order = sorted(range(len(models)), key=lambda k: (-len(models[k].fit_rows), models[k].id))
    pick = np.argmin(R[:, order], axis=1)   # argmin takes the first minimum: tie-break order
    labels = np.array([models[order[c]].id for c in pick])
    return Segmentation(labels=labels, K=len(models))


def merge_equivalent(models, tol_merge: float):
    """Merge modes whose coefficient matrices agree within tol_merge (max norm).

    The surviving coefficients come from the member with the most samples;
    merged_ids records which original ids were folded together.
    """
    if tol_merge <= 0:
        raise ValueError("tol_merge must be positive")
    groups = []
    for model in sorted(models, key=lambda s: s.id):
        for grp in groups:
            if np.max(np.abs(grp[0].coefficients - model.coefficients)) < tol_merge:
                grp.append(model)
                break
        else:
            groups.append([model])
    merged = []
    for grp in groups:
        lead = max(grp, key=lambda s: len(s.fit_rows))
        rows = np.unique(np.concatenate([s.fit_rows for s in grp])) if grp else lead.fit_rows
        merged.append(
            SubsystemModel(
                id=min(s.id for s in grp),
                coefficients=lead.coefficients.copy(),
                term_names=list(lead.term_names),
                fit_rows=rows,
                merged_ids=tuple(sorted(i for s in grp for i in s.merged_ids)),
            )
        )
    return merged


def identify_subsystems(
    data: TimeSeries,
    spec: DictionarySpec,
    cfg: SolverConfig,
    limits: PeelLimits | None = None,
    tol_merge: float | None = None,
):
    """Discover all subsystems and a consistent segmentation of the samples.

    Returns (models, segmentation); models are numbered 1..K by descending
    sample count.  Rows that no discovered mode explains within epsilon are
    labeled 0 and reported with a warning.  tol_merge bounds the coefficient
    distance for collapsing duplicate modes; the default scales with epsilon.
    """
    limits = limits or PeelLimits()
    dm_raw = build_design_matrix(data, spec)
    dm = normalize_columns(dm_raw)
    targets = data.targets()
    M, p = dm.n_rows, dm.n_terms
    if M < p + limits.min_segment:
        raise ValueError(f"need at least {p + limits.min_segment} samples for {p} terms")
    cfg = make_resolved(cfg, dm, targets)
    eps = cfg.epsilon
    thresh = eps * np.sqrt(data.n_outputs)

    models = []
    remaining = np.arange(M)
    while remaining.size:
        if len(models) == limits.max_modes:
            best = _residual_table(models, dm_raw.take_rows(remaining), targets[remaining]).min(axis=1)
            if (best <= thresh).all():
                break
            stats = (
                f"{int((best > thresh).sum())} rows unexplained; residuals "
                f"min={best.min():.3g} median={np.median(best):.3g} max={best.max():.3g}"
            )
            raise ModeBudgetError(f"mode budget {limits.max_modes} exhausted: {stats}")
        try:
            split = solve_residual_sparse(dm.take_rows(remaining), targets[remaining], cfg)
        except NoConsensusError:
            break
        explained = remaining[split.explained]
        if explained.size < limits.min_segment:
            break
        W = solve_coefficient_sparse(dm.take_rows(explained), targets[explained], cfg)
        models.append(
            SubsystemModel(
                id=len(models) + 1,
                coefficients=W,
                term_names=dm_raw.term_names,
                fit_rows=explained,
            )
        )
        remaining = np.setdiff1d(remaining, explained, assume_unique=True)

    if not models:
        raise NoConsensusError("no subsystem explains at least min_segment samples")

    # global relabeling pass: peeling order can misassign boundary rows
    seg = classify_rows(models, dm_raw, targets)
    best_resid = _residual_table(models, dm_raw, targets).min(axis=1)
    labels = seg.labels
    labels[best_resid > thresh] = UNASSIGNED

    # refit each mode on its final rows, then drop empty modes
    kept = []
    for model in models:
        rows = np.flatnonzero(labels == model.id)
        if rows.size == 0:
            continue
        if rows.size >= limits.min_segment:
            model.coefficients = solve_coefficient_sparse(dm.take_rows(rows), targets[rows], cfg)
        model.fit_rows = rows
        kept.append(model)
    models = kept

    if tol_merge is None:
        tol_merge = 10.0 * eps / float(np.min(dm.column_scales))
    models = merge_equivalent(models, max(tol_merge, 1e-300))
    id_map = {old: m.id for m in models for old in m.merged_ids}
    labels = np.array([id_map.get(l, UNASSIGNED) for l in labels])
    for model in models:
        rows = np.flatnonzero(labels == model.id)
        if rows.size >= limits.min_segment and len(model.merged_ids) > 1:
            model.coefficients = solve_coefficient_sparse(dm.take_rows(rows), targets[rows], cfg)
        model.fit_rows = rows

    # renumber by descending sample count (stable on ties)
    models.sort(key=lambda s: (-len(s.fit_rows), s.id))
    renum = {m.id: k + 1 for k, m in enumerate(models)}
    labels = np.array([renum.get(l, UNASSIGNED) for l in labels])
    for model in models:
        model.merged_ids = (renum[model.id],)
        model.id = renum[model.id]

    n_un = int(np.sum(labels == UNASSIGNED))
    if n_un:
        warnings.warn(f"{n_un} samples unassigned (residual above epsilon for every mode)")
    return models, Segmentation(labels=labels, K=len(models))
