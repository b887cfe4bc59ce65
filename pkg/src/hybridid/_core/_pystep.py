"""Pure NumPy fallback for the hybrid-simulation kernel.

Mirrors the semantics of the compiled ``_step`` extension exactly; selected
at import time by ``hybridid._core`` when the extension is unavailable or
disabled.
"""

import numpy as np

from ..dictionary import ABS, COS, EXP, MONOMIAL, SIGN, SIN, TANH


def _eval_terms(kinds, exps, args, s):
    out = np.empty(len(kinds))
    for j, kind in enumerate(kinds):
        if kind == MONOMIAL:
            val = 1.0
            for a, e in enumerate(exps[j]):
                if e:
                    val *= s[a] ** int(e)
        else:
            x = s[args[j]]
            if kind == SIN:
                val = np.sin(x)
            elif kind == COS:
                val = np.cos(x)
            elif kind == TANH:
                val = np.tanh(x)
            elif kind == EXP:
                val = np.exp(x)
            elif kind == ABS:
                val = abs(x)
            elif kind == SIGN:
                val = 0.0 if x == 0.0 else (1.0 if x > 0.0 else -1.0)
            else:
                raise ValueError(f"unknown term kind {kind}")
        out[j] = val
    return out


def simulate_hybrid(kinds_phi, exps_phi, args_phi, W,
                    kinds_psi, exps_psi, args_psi,
                    rule_from, rule_to, rule_v,
                    y0, m0, u, steps, guard):
    """Step loop; rules must be sorted by (from, to) for deterministic ties."""
    W = np.asarray(W, dtype=float)
    u = np.asarray(u, dtype=float)
    n = W.shape[2]
    m = u.shape[1]
    R = len(rule_from)

    Y = np.zeros((steps + 1, n))
    modes = np.zeros(steps + 1, dtype=np.int32)
    Y[0] = np.asarray(y0, dtype=float)
    modes[0] = m0
    diverged = False
    last = steps

    for t in range(steps):
        mode = int(modes[t])
        s = np.concatenate([Y[t], u[t]]) if m else Y[t]
        row = _eval_terms(kinds_phi, exps_phi, args_phi, s)
        Y[t + 1] = row @ W[mode - 1]

        best_g, best_to = 0.0, 0
        if R:
            psi_row = _eval_terms(kinds_psi, exps_psi, args_psi, s)
            for r in range(R):
                if rule_from[r] != mode:
                    continue
                g = float(psi_row @ rule_v[r])
                if g >= 0.0 and (best_to == 0 or g > best_g):
                    best_g, best_to = g, int(rule_to[r])
        modes[t + 1] = best_to if best_to else mode

        if not np.isfinite(Y[t + 1]).all() or np.abs(Y[t + 1]).max() > guard:
            diverged = True
            last = t + 1
            break

    return Y[: last + 1], modes[: last + 1], diverged
