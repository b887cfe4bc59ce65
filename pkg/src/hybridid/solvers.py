"""Sparse regression kernels.

Three solvers back the identification pipeline:

* residual-sparse regression -- fit coefficients while concentrating the
  row-wise residual on as few samples as possible, so that off-subsystem
  samples show up as the nonzero residual rows;
* coefficient-sparse regression -- sequential thresholded least squares on
  the samples already attributed to one subsystem;
* l1-penalized sigmoid fitting -- sparse linear predicates for mode
  switches, fitted through a logistic relaxation of the step function.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from itertools import combinations
from math import comb

import numpy as np

from .dictionary import DesignMatrix, normalize_columns
from .errors import InseparableTransitionError, NoConsensusError


@dataclass
class SolverConfig:
    """Shared numerical knobs.

    epsilon is the residual threshold (in output units) below which a row
    counts as explained; None selects a data-driven default at solve time
    (3x the median absolute residual of an unconstrained least-squares fit).
    lambda_w thresholds normalized coefficients in the sequential
    thresholded least-squares loop.  ridge of None picks
    1e-8 x (largest squared column norm).
    """

    epsilon: float | None = None
    lambda_w: float = 0.0
    max_iters: int = 60
    tol: float = 1e-10
    ridge: float | None = None

    def __post_init__(self):
        if self.epsilon is not None and self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.lambda_w < 0:
            raise ValueError("lambda_w must be >= 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.tol <= 0:
            raise ValueError("tol must be > 0")
        if self.ridge is not None and self.ridge < 0:
            raise ValueError("ridge must be >= 0")

    def to_dict(self):
        return {
            "epsilon": self.epsilon,
            "lambda_w": self.lambda_w,
            "max_iters": self.max_iters,
            "tol": self.tol,
            "ridge": self.ridge,
        }

    @classmethod
    def from_dict(cls, d):
        known = {"epsilon", "lambda_w", "max_iters", "tol", "ridge"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown solver keys: {sorted(unknown)}")
        return cls(**{k: d[k] for k in known if k in d})


@dataclass
class ResidualSplit:
    """Outcome of residual-sparse regression.

    explained[t] is True exactly when ||Z[t, :]|| <= epsilon * sqrt(n).
    W is the plain least-squares fit on the explained rows.
    """

    W: np.ndarray
    Z: np.ndarray
    explained: np.ndarray
    converged: bool = True


def _as_matrix(dm):
    return dm.values if isinstance(dm, DesignMatrix) else np.asarray(dm, dtype=float)


def _resolve_ridge(Phi, cfg):
    if cfg.ridge is not None:
        return cfg.ridge
    col = float(np.max(np.sum(Phi**2, axis=0)))
    return 1e-8 * max(col, 1e-300)


def resolve_epsilon(dm, targets, cfg: SolverConfig) -> float:
    """cfg.epsilon, or the data-driven default from a first global fit."""
    if cfg.epsilon is not None:
        return cfg.epsilon
    Phi = _as_matrix(dm)
    Y = np.atleast_2d(np.asarray(targets, dtype=float))
    W, *_ = np.linalg.lstsq(Phi, Y, rcond=None)
    resid = np.abs(Y - Phi @ W)
    return 3.0 * float(np.median(resid))


def _weighted_ridge(Phi, Y, w, ridge):
    A = (Phi * w[:, None]).T @ Phi
    A[np.diag_indices_from(A)] += ridge
    B = (Phi * w[:, None]).T @ Y
    try:
        return np.linalg.solve(A, B)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(A, B, rcond=None)[0]


def _irls(Phi, Y, eps, w0, ridge, max_iters, tol):
    """Reweighted least squares driving most row residuals to ~zero.

    Weights 1/(r^2 + delta^2) are the standard smoothing of a row-sparsity
    objective on the residual; rows off the consensus subsystem get
    vanishing influence.  Returns the final residual norms, not a
    thresholded set: consensus harvesting happens in the caller.
    """
    scale = float(np.sqrt(np.mean(Y**2))) or 1.0
    delta = max(eps, 1e-8 * scale)
    w = w0
    r_prev = None
    converged = False
    for _ in range(max_iters):
        W = _weighted_ridge(Phi, Y, w, ridge)
        with np.errstate(invalid="ignore", over="ignore"):
            r = np.linalg.norm(Y - Phi @ W, axis=1)
        # rows hit by overflow in a wild intermediate fit count as outliers
        r = np.nan_to_num(r, nan=np.inf)
        if r_prev is not None and np.max(np.abs(r - r_prev)) <= tol * scale:
            converged = True
            break
        r_prev = r
        w = 1.0 / (np.minimum(r, 1e150) ** 2 + delta**2)
    return W, r, converged


def _grow_consensus(Phi, Y, seed, eps, max_iters=40):
    """Grow a row set from a seed by repeated fit-and-rank rounds.

    Each round fits plain least squares on the current set and re-selects
    rows by residual rank, doubling the target size, until the strict
    epsilon tube holds at least as many rows; then the set is polished to
    the fixed point of (fit on set) -> (rows within epsilon).  Growing by
    rank instead of by threshold lets a small mode-pure seed escape its own
    rank deficiency: nearby rows pin more directions every round.
    """
    M = Phi.shape[0]
    n = Y.shape[1]
    tube = eps * np.sqrt(n)
    expl = seed.copy()
    size = int(expl.sum())
    if size == 0:
        return None, expl
    W = None
    for _ in range(max_iters):
        W, *_ = np.linalg.lstsq(Phi[expl], Y[expl], rcond=None)
        with np.errstate(invalid="ignore", over="ignore"):
            r = np.nan_to_num(np.linalg.norm(Y - Phi @ W, axis=1), nan=np.inf)
        strict = r <= tube
        if int(strict.sum()) >= size:
            new = strict
            size = int(strict.sum())
        else:
            size = min(2 * size, M)
            cut = float(np.partition(r, size - 1)[size - 1])
            new = r <= max(cut, tube)
        if np.array_equal(new, expl):
            break
        if not new.any():
            return None, new
        expl = new

    # strict fixed point: W fits the explained rows, which are exactly the
    # rows within epsilon of W
    for _ in range(30):
        strict = np.linalg.norm(Y - Phi @ W, axis=1) <= tube
        if not strict.any():
            return None, strict
        if np.array_equal(strict, expl):
            break
        expl = strict
        W, *_ = np.linalg.lstsq(Phi[expl], Y[expl], rcond=None)
    return W, expl


def _window_ladder(M, p):
    """Contiguous row windows in a geometric size ladder.

    At least one window size lands inside a single-mode segment with enough
    dynamic range; purity comes from contiguity, rank from growth.
    """
    windows = []
    L = max(2 * p + 2, 10)
    while 2 * L <= M:
        for s0 in np.unique(np.linspace(0, M - L, num=6).astype(int)):
            windows.append(np.arange(s0, s0 + L))
        L *= 8
    return windows


def solve_residual_sparse(dm, targets, cfg: SolverConfig) -> ResidualSplit:
    """Split rows into a maximal self-consistent subsystem and the rest.

    Minimizes (a relaxation of) the number of residual rows exceeding the
    noise threshold.  Deterministic multi-start: reweighted least squares
    from uniform weights (captures a majority mode directly), plus local
    fits on a ladder of contiguous windows whose nearest rows seed a
    rank-doubling consensus growth.  The start with the largest final
    consensus wins.  Raises NoConsensusError when no row is explained.
    """
    Phi = _as_matrix(dm)
    Y = np.asarray(targets, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    M, p = Phi.shape
    if Y.shape[0] != M:
        raise ValueError("design matrix and targets disagree on row count")
    eps = resolve_epsilon(dm, Y, cfg)
    ridge = _resolve_ridge(Phi, cfg)
    n_out = Y.shape[1]
    # seed from the best-fitting rows; on small problems stay below half the
    # data so a majority mode cannot be outvoted inside its own seed
    k_seed = max(p + 1, min(max(2 * p + 2, 10), M // 2))
    k_seed = min(k_seed, M)

    def seed_from_residuals(r):
        cut = max(eps * np.sqrt(n_out), float(np.partition(r, k_seed - 1)[k_seed - 1]))
        return r <= cut

    def consensus_seeds():
        _, r, conv = _irls(Phi, Y, eps, np.ones(M), ridge, cfg.max_iters, cfg.tol)
        yield seed_from_residuals(r), conv
        if p + 1 <= M and comb(M, p + 1) <= 2000:
            # small problems: every (p+1)-subset is a candidate mode core,
            # so the search is exhaustive and order-independent
            for rows in combinations(range(M), p + 1):
                seed = np.zeros(M, dtype=bool)
                seed[list(rows)] = True
                yield seed, True
        else:
            ones = np.ones
            for win in _window_ladder(M, p):
                W_loc = _weighted_ridge(Phi[win], Y[win], ones(len(win)), ridge)
                yield seed_from_residuals(np.linalg.norm(Y - Phi @ W_loc, axis=1)), True

    best = None
    converged_any = False
    for seed, conv in consensus_seeds():
        W, explained = _grow_consensus(Phi, Y, seed, eps)
        count = int(explained.sum())
        if best is None or count > best[0]:
            best = (count, W, explained)
            converged_any = conv
        if count > M // 2:
            break

    count, W, explained = best
    if count == 0 or W is None:
        raise NoConsensusError("no consensus subsystem: every row exceeds epsilon")
    Z = Y - Phi @ W
    explained = np.linalg.norm(Z, axis=1) <= eps * np.sqrt(Y.shape[1])
    return ResidualSplit(W=W, Z=Z, explained=explained, converged=converged_any)


def solve_coefficient_sparse(dm, targets, cfg: SolverConfig) -> np.ndarray:
    """Sequential thresholded least squares; returns de-normalized coefficients.

    Per output dimension: alternate a least-squares fit with zeroing of
    normalized coefficients below lambda_w until the support is stable.
    Refits are plain least squares (minimum-norm on rank deficiency), so
    exactly consistent data is recovered to machine precision.  If every
    coefficient of some output is thresholded away, that output gets the
    zero model with a warning.
    """
    if not isinstance(dm, DesignMatrix):
        dm = DesignMatrix(np.asarray(dm, dtype=float), [])
    if dm.values.shape[0] == 0:
        raise ValueError("empty row set")
    if dm.column_scales is None:
        dm = normalize_columns(dm)
    Phi = dm.values
    Y = np.asarray(targets, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    M, p = Phi.shape
    if Y.shape[0] != M:
        raise ValueError("design matrix and targets disagree on row count")

    def fit(cols, y):
        return np.linalg.lstsq(Phi[:, cols], y, rcond=None)[0][:, 0]

    W = np.zeros((p, len(Y[0])))
    for out in range(Y.shape[1]):
        y = Y[:, [out]]
        w = fit(np.ones(p, bool), y)
        active = np.abs(w) >= cfg.lambda_w if cfg.lambda_w > 0 else np.ones(p, bool)
        for _ in range(cfg.max_iters):
            if not active.any():
                break
            w = np.zeros(p)
            w[active] = fit(active, y)
            new_active = np.abs(w) >= cfg.lambda_w if cfg.lambda_w > 0 else active
            if np.array_equal(new_active, active):
                break
            active = new_active
        if not active.any():
            warnings.warn(f"all coefficients thresholded to zero for output {out + 1}")
            w = np.zeros(p)
        else:
            w[~active] = 0.0
        W[:, out] = w
    return dm.denormalize_coefficients(W)


# ---------------------------------------------------------------------------
# sparse sigmoid predicate fitting


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _standardize(Psi):
    """Center/scale non-constant columns; constants act as free intercepts.

    Centering is applied only when a constant column exists to absorb the
    shift, so the raw-basis predicate is always exactly recoverable.
    """
    sd0 = Psi.std(axis=0)
    const = sd0 == 0
    mu = Psi.mean(axis=0)
    mu[const] = 0.0
    if not const.any():
        mu[:] = 0.0
    C = Psi - mu
    sd = np.sqrt((C**2).mean(axis=0))
    sd[sd == 0] = 1.0
    return C / sd, mu, sd, const


def _prox_descent(Pn, targets, weights, lam, pen, v0, max_iters=2500, tol=1e-12):
    """Proximal gradient on the weighted squared-sigmoid loss + l1.

    Each step minimizes the local quadratic model of the smooth part plus
    the penalty, i.e. a gradient step followed by soft-thresholding, with
    backtracking on the quadratic upper bound.
    """

    def smooth(v):
        sig = _sigmoid(Pn @ v)
        return float(np.sum(weights * (targets - sig) ** 2)), sig

    v = v0.copy()
    f, sig = smooth(v)
    lip = 0.5 * np.linalg.norm((Pn * weights[:, None]).T @ Pn, 2) + 1e-12
    eta0 = 1.0 / lip
    eta = eta0
    for _ in range(max_iters):
        grad = Pn.T @ (2.0 * weights * (sig - targets) * sig * (1.0 - sig))
        while True:
            vn = v - eta * grad
            vn = np.sign(vn) * np.maximum(np.abs(vn) - eta * lam * pen, 0.0)
            fn, sn = smooth(vn)
            dv = vn - v
            if fn <= f + grad @ dv + dv @ dv / (2.0 * eta) + 1e-15 or eta < 1e-18:
                break
            eta *= 0.5
        moved = float(np.max(np.abs(vn - v))) if vn.size else 0.0
        v, f, sig = vn, fn, sn
        eta = min(eta * 1.5, 1e6 * eta0)
        if moved < tol * max(1.0, float(np.max(np.abs(v)))):
            break
    return v


def _best_threshold_1d(x, targets, weights):
    """Exact weighted threshold search for a single-feature step predicate.

    Scans every cut between distinct feature values for both orientations
    (fire on x >= theta, fire on x <= theta), minimizing the weighted
    misclassification; equal-cost cuts resolve to the widest gap so the
    boundary is margin-centered.  Returns (sign, theta, miscount): the
    predicate is sign * (x - theta) >= 0.
    """
    order = np.argsort(x, kind="stable")
    xs = x[order]
    pos = (targets[order] > 0.5).astype(float) * weights[order]
    neg = (targets[order] <= 0.5).astype(float) * weights[order]
    N = len(xs)
    cum_pos = np.concatenate([[0.0], np.cumsum(pos)])
    cum_neg = np.concatenate([[0.0], np.cumsum(neg)])
    # cut i: rows with sorted index >= i are on the "high" side.
    # firing on the high side misses positives below and negatives above;
    # firing on the low side misses negatives below and positives above.
    mis_ge = cum_pos + (cum_neg[-1] - cum_neg)
    mis_le = cum_neg + (cum_pos[-1] - cum_pos)

    span = xs[-1] - xs[0] if N else 0.0
    pad = max(span, 1.0)
    best = None
    for i in range(N + 1):
        if 0 < i < N and xs[i - 1] == xs[i]:
            continue   # cannot cut inside a tie group
        if i == 0:
            theta, gap = xs[0] - pad, pad
        elif i == N:
            theta, gap = xs[-1] + pad, pad
        else:
            gap = xs[i] - xs[i - 1]
            theta = 0.5 * (xs[i - 1] + xs[i])
        for sign, mis in ((1.0, float(mis_ge[i])), (-1.0, float(mis_le[i]))):
            key = (mis, -gap)
            if best is None or key < best[0]:
                best = (key, sign, theta)
    (mis, _), sign, theta = best
    return sign, theta, mis


def _balanced_ls_init(Pn, targets, weights):
    """Class-balanced least squares on +-1 labels, scaled into sigmoid range.

    The squared-sigmoid loss has a trivial local minimum that predicts the
    majority class everywhere; starting from a separating direction keeps
    the descent out of it.
    """
    pos = targets > 0.5
    wp, wn = float(weights[pos].sum()), float(weights[~pos].sum())
    if wp == 0 or wn == 0:
        return np.zeros(Pn.shape[1])
    bw = np.where(pos, weights / wp, weights / wn)
    sw = np.sqrt(bw)
    v0, *_ = np.linalg.lstsq(Pn * sw[:, None], (2.0 * targets - 1.0) * sw, rcond=None)
    g90 = float(np.percentile(np.abs(Pn @ v0), 90)) if len(targets) else 0.0
    return v0 * (6.0 / max(g90, 1e-12))


def solve_sparse_logistic(dm, targets, weights, lambda_v, max_iters=2500, tol=1e-12):
    """Sparse predicate coefficients v minimizing the weighted sigmoid misfit.

    Objective: sum_t weights[t] * (targets[t] - sigma(Psi[t] @ v))^2
    + lambda_v * ||v||_1 (intercept unpenalized, computed on internally
    standardized columns).  After the descent, the smallest support (in
    dictionary order, single terms then pairs) that classifies no worse is
    preferred.  Returns v in the raw column basis.
    """
    Psi = _as_matrix(dm)
    if isinstance(dm, DesignMatrix) and dm.column_scales is not None:
        Psi = dm.denormalized().values
    targets = np.asarray(targets, dtype=float).ravel()
    weights = np.asarray(weights, dtype=float).ravel()
    M, q = Psi.shape
    if len(targets) != M or len(weights) != M:
        raise ValueError("targets/weights length must match row count")
    if (weights < 0).any():
        raise ValueError("weights must be non-negative")
    if float(weights.sum()) == 0:
        raise ValueError("all weights are zero")

    live = weights > 0
    pos_rows = {Psi[t].tobytes() for t in np.flatnonzero(live & (targets > 0.5))}
    neg_rows = {Psi[t].tobytes() for t in np.flatnonzero(live & (targets <= 0.5))}
    if pos_rows and neg_rows and not pos_rows.isdisjoint(neg_rows):
        raise InseparableTransitionError(
            "transition not expressible: identical feature rows in both classes"
        )

    Pn, mu, sd, const = _standardize(Psi)
    pen = (~const).astype(float)
    lam = float(lambda_v)

    def objective(v):
        sig = _sigmoid(Pn @ v)
        return float(np.sum(weights * (targets - sig) ** 2) + lam * np.abs(pen * v).sum())

    inits = [np.zeros(q)]
    bal = _balanced_ls_init(Pn, targets, weights)
    if np.any(bal):
        inits.insert(0, bal)
    fits = [_prox_descent(Pn, targets, weights, lam, pen, v0, max_iters, tol) for v0 in inits]
    v = min(fits, key=objective)
    vmax = float(np.max(np.abs(v)))
    if vmax > 0:
        v[np.abs(v) < 1e-6 * vmax] = 0.0

    def miscount(vv):
        return float(np.sum(weights * ((Pn @ vv >= 0) != (targets > 0.5))))

    def restricted_fit(mask):
        vt = np.zeros(q)
        slopes = np.flatnonzero(mask & ~const)
        ci = np.flatnonzero(const)
        if len(slopes) == 1 and ci.size:
            # one slope term plus an intercept: the optimal step predicate
            # has a closed-form threshold; place it exactly and margin-center
            j = slopes[0]
            sign, theta, _ = _best_threshold_1d(Pn[:, j], targets, weights)
            scale = 6.0 / max(float(np.median(np.abs(Pn[:, j] - theta))), 1e-12)
            vt[j] = sign * scale
            vt[ci[0]] = -sign * scale * theta / Pn[0, ci[0]]
            return vt
        sub = Pn[:, mask]
        v0 = _balanced_ls_init(sub, targets, weights)
        vt[mask] = _prox_descent(sub, targets, weights, lam, pen[mask], v0, max_iters=1200)
        return vt

    base = miscount(v)
    slope_idx = [j for j in range(q) if not const[j]]
    n_slopes = int(np.count_nonzero(v[slope_idx])) if slope_idx else 0

    # canonicalize toward the simplest predicate that classifies no worse:
    # single slope terms in dictionary order, then pairs in lexicographic
    # order, so near-duplicate columns (e.g. y vs y^2 on a narrow range)
    # resolve to the lowest-order term
    found = None
    if n_slopes >= 1:
        for j in slope_idx:
            mask = const.copy()
            mask[j] = True
            vt = restricted_fit(mask)
            if miscount(vt) <= base:
                found = vt
                break
        if found is None and q <= 25 and n_slopes > 1:
            for i_, j_ in ((a, b) for a in slope_idx for b in slope_idx if a < b):
                mask = const.copy()
                mask[i_] = mask[j_] = True
                vt = restricted_fit(mask)
                if miscount(vt) <= base:
                    found = vt
                    break
    if found is not None:
        v = found
    else:
        # backward pruning of the found support, highest-order terms first
        for j in reversed(slope_idx):
            if v[j] == 0 or np.count_nonzero(v[slope_idx]) <= 1:
                continue
            mask = (v != 0) | const
            mask[j] = False
            vt = restricted_fit(mask)
            if miscount(vt) <= base:
                v = vt

    # margin polish: with the support fixed, a vanishing penalty lets the
    # boundary settle inside narrow class gaps the penalized fit cannot
    # resolve; kept only if classification does not degrade
    if np.count_nonzero(v):
        mask = (v != 0) | const
        vt = np.zeros(q)
        vt[mask] = _prox_descent(Pn[:, mask], targets, weights, lam * 1e-2,
                                 pen[mask], v[mask], max_iters=1500)
        if miscount(vt) <= miscount(v):
            v = vt

    vraw = v / sd
    shift = float(np.sum(v * mu / sd))
    ci = np.flatnonzero(const)
    if ci.size and shift:
        vraw[ci[0]] -= shift / Psi[0, ci[0]]
    return vraw


def make_resolved(cfg: SolverConfig, dm, targets) -> SolverConfig:
    """Copy of cfg with epsilon made concrete for this dataset."""
    return replace(cfg, epsilon=resolve_epsilon(dm, targets, cfg))
