"""Candidate-function dictionaries evaluated on time-series data.

A dictionary turns a sampled trajectory into a design matrix whose columns
are candidate basis functions (constant, monomials, trigonometric terms,
user-declared compositions) evaluated sample by sample.  The same machinery
parameterizes both the subsystem dynamics library and the transition
predicate library.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from itertools import combinations_with_replacement

import numpy as np

# term kinds shared with the compiled simulation kernel
MONOMIAL, SIN, COS, TANH, EXP, ABS, SIGN = range(7)

_UNARY_OPS = {"sin": SIN, "cos": COS, "tanh": TANH, "exp": EXP, "abs": ABS, "sign": SIGN}
_BINARY_OPS = {"mul"}


@dataclass(frozen=True)
class CustomTerm:
    """A named composition over signals, e.g. ('sin', ('u1',)) or ('mul', ('y1', 'u1'))."""

    op: str
    args: tuple[str, ...]

    def __post_init__(self):
        if self.op in _UNARY_OPS:
            if len(self.args) != 1:
                raise ValueError(f"unary op {self.op!r} takes one signal, got {self.args}")
        elif self.op in _BINARY_OPS:
            if len(self.args) != 2:
                raise ValueError(f"binary op {self.op!r} takes two signals, got {self.args}")
        else:
            raise ValueError(f"unknown custom term op {self.op!r}")

    def to_dict(self):
        return {"op": self.op, "args": list(self.args)}

    @classmethod
    def from_dict(cls, d):
        return cls(op=d["op"], args=tuple(d["args"]))


@dataclass(frozen=True)
class DictionarySpec:
    """Declarative description of a candidate-function library."""

    polynomial_order: int = 1
    include_constant: bool = True
    include_trig: bool = False
    custom_terms: tuple[CustomTerm, ...] = ()

    def __post_init__(self):
        if self.polynomial_order < 0:
            raise ValueError("polynomial_order must be >= 0")
        if not isinstance(self.custom_terms, tuple):
            object.__setattr__(self, "custom_terms", tuple(self.custom_terms))

    def to_dict(self):
        return {
            "polynomial_order": self.polynomial_order,
            "include_constant": self.include_constant,
            "include_trig": self.include_trig,
            "custom_terms": [t.to_dict() for t in self.custom_terms],
        }

    @classmethod
    def from_dict(cls, d):
        known = {"polynomial_order", "include_constant", "include_trig", "custom_terms"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown dictionary keys: {sorted(unknown)}")
        return cls(
            polynomial_order=int(d.get("polynomial_order", 1)),
            include_constant=bool(d.get("include_constant", True)),
            include_trig=bool(d.get("include_trig", False)),
            custom_terms=tuple(CustomTerm.from_dict(t) for t in d.get("custom_terms", [])),
        )


@dataclass
class TimeSeries:
    """Sampled outputs (and optional inputs) on a uniform time grid."""

    outputs: np.ndarray            # (M+1, n)
    inputs: np.ndarray | None = None   # (M+1, m); None means m = 0
    sample_period: float = 1.0

    def __post_init__(self):
        self.outputs = np.atleast_2d(np.asarray(self.outputs, dtype=float))
        if self.outputs.ndim != 2:
            raise ValueError("outputs must be a 2-D array (samples x signals)")
        if self.inputs is None:
            self.inputs = np.zeros((self.outputs.shape[0], 0))
        else:
            self.inputs = np.asarray(self.inputs, dtype=float)
            if self.inputs.ndim == 1:
                self.inputs = self.inputs[:, None]
        if self.inputs.shape[0] != self.outputs.shape[0]:
            raise ValueError("outputs and inputs must have the same number of samples")
        if self.outputs.shape[0] < 2:
            raise ValueError("need at least two samples")
        if not np.isfinite(self.outputs).all() or not np.isfinite(self.inputs).all():
            raise ValueError("time series contains non-finite values")
        if self.sample_period <= 0:
            raise ValueError("sample_period must be positive")

    @property
    def n_outputs(self):
        return self.outputs.shape[1]

    @property
    def n_inputs(self):
        return self.inputs.shape[1]

    @property
    def n_samples(self):
        return self.outputs.shape[0]

    @property
    def n_transitions(self):
        """Number of sample-to-sample transitions, i.e. regression rows."""
        return self.outputs.shape[0] - 1

    def targets(self):
        """Regression targets: the outputs shifted one sample ahead."""
        return self.outputs[1:]

    def head(self, n_samples):
        return TimeSeries(self.outputs[:n_samples], self.inputs[:n_samples], self.sample_period)


def signal_names(n_outputs, n_inputs):
    return [f"y{i + 1}" for i in range(n_outputs)] + [f"u{j + 1}" for j in range(n_inputs)]


@dataclass
class TermEncoding:
    """Compact table of dictionary terms, shared with the simulation kernel.

    kind MONOMIAL uses the exponent row; unary kinds use ``args`` as the
    signal index.
    """

    kinds: np.ndarray              # (p,) int32
    exps: np.ndarray               # (p, d) int32
    args: np.ndarray               # (p,) int32
    names: list[str] = field(default_factory=list)

    @property
    def n_terms(self):
        return len(self.names)

    def subset(self, names):
        """Rows of the encoding for the given term names, in the given order."""
        index = {nm: i for i, nm in enumerate(self.names)}
        try:
            rows = [index[nm] for nm in names]
        except KeyError as exc:
            raise ValueError(f"term {exc.args[0]!r} is not in this dictionary") from None
        return TermEncoding(
            kinds=self.kinds[rows].copy(),
            exps=self.exps[rows].copy(),
            args=self.args[rows].copy(),
            names=list(names),
        )


def _monomial_name(exps, sigs):
    parts = []
    for a, e in enumerate(exps):
        if e == 1:
            parts.append(sigs[a])
        elif e > 1:
            parts.append(f"{sigs[a]}^{e}")
    return "*".join(parts) if parts else "1"


def encode_terms(spec: DictionarySpec, n_outputs: int, n_inputs: int) -> TermEncoding:
    """Expand a DictionarySpec into the ordered term table for given signal counts.

    Order: constant, then monomials by total degree (graded lexicographic
    within each degree), then sin/cos pairs per signal, then custom terms.
    Duplicate names (e.g. a custom product that repeats a monomial) are
    dropped with a warning.
    """
    sigs = signal_names(n_outputs, n_inputs)
    d = len(sigs)
    kinds, exps, args, names = [], [], [], []

    def add(kind, exp_row, arg, name):
        if name in names:
            warnings.warn(f"duplicate dictionary term {name!r} dropped")
            return
        kinds.append(kind)
        exps.append(exp_row)
        args.append(arg)
        names.append(name)

    if spec.include_constant:
        add(MONOMIAL, [0] * d, -1, "1")
    for degree in range(1, spec.polynomial_order + 1):
        for combo in combinations_with_replacement(range(d), degree):
            row = [0] * d
            for a in combo:
                row[a] += 1
            add(MONOMIAL, row, -1, _monomial_name(row, sigs))
    if spec.include_trig:
        for a, s in enumerate(sigs):
            add(SIN, [0] * d, a, f"sin({s})")
            add(COS, [0] * d, a, f"cos({s})")
    for term in spec.custom_terms:
        try:
            idx = [sigs.index(s) for s in term.args]
        except ValueError:
            raise ValueError(
                f"custom term {term.op}{term.args} references a signal not in {sigs}"
            ) from None
        if term.op == "mul":
            row = [0] * d
            for a in idx:
                row[a] += 1
            add(MONOMIAL, row, -1, _monomial_name(row, sigs))
        else:
            add(_UNARY_OPS[term.op], [0] * d, idx[0], f"{term.op}({term.args[0]})")

    if not names:
        raise ValueError("dictionary spec produces no terms")
    return TermEncoding(
        kinds=np.asarray(kinds, dtype=np.int32),
        exps=np.asarray(exps, dtype=np.int32).reshape(len(names), d),
        args=np.asarray(args, dtype=np.int32),
        names=names,
    )


def evaluate_terms(enc: TermEncoding, signals: np.ndarray) -> np.ndarray:
    """Evaluate every encoded term on a (rows x d) signal matrix."""
    signals = np.atleast_2d(np.asarray(signals, dtype=float))
    rows = signals.shape[0]
    out = np.empty((rows, enc.n_terms))
    for j in range(enc.n_terms):
        kind = enc.kinds[j]
        if kind == MONOMIAL:
            col = np.ones(rows)
            for a, e in enumerate(enc.exps[j]):
                if e:
                    col = col * signals[:, a] ** int(e)
        else:
            s = signals[:, enc.args[j]]
            if kind == SIN:
                col = np.sin(s)
            elif kind == COS:
                col = np.cos(s)
            elif kind == TANH:
                col = np.tanh(s)
            elif kind == EXP:
                col = np.exp(s)
            elif kind == ABS:
                col = np.abs(s)
            else:
                col = np.sign(s)
        out[:, j] = col
    return out


def evaluate_row(spec: DictionarySpec, y, u=None) -> tuple[np.ndarray, list[str]]:
    """Evaluate the full dictionary at a single sample; returns (values, names)."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    u = np.zeros(0) if u is None else np.atleast_1d(np.asarray(u, dtype=float))
    enc = encode_terms(spec, len(y), len(u))
    vals = evaluate_terms(enc, np.concatenate([y, u])[None, :])[0]
    return vals, enc.names


@dataclass
class DesignMatrix:
    """Evaluated dictionary: one row per sample, one named column per term."""

    values: np.ndarray
    term_names: list[str]
    column_scales: np.ndarray | None = None   # set by normalize_columns

    @property
    def n_rows(self):
        return self.values.shape[0]

    @property
    def n_terms(self):
        return self.values.shape[1]

    def take_rows(self, idx):
        """Row subset sharing the same columns (and scales)."""
        return DesignMatrix(self.values[idx], self.term_names, self.column_scales)

    def denormalized(self):
        """Undo column normalization; exact inverse of normalize_columns."""
        if self.column_scales is None:
            return DesignMatrix(self.values.copy(), list(self.term_names), None)
        return DesignMatrix(self.values * self.column_scales, list(self.term_names), None)

    def denormalize_coefficients(self, W):
        """Map coefficients fitted on normalized columns back to the raw basis."""
        W = np.asarray(W, dtype=float)
        if self.column_scales is None:
            return W.copy()
        if W.ndim == 1:
            return W / self.column_scales
        return W / self.column_scales[:, None]


def build_design_matrix(data: TimeSeries, spec: DictionarySpec, rows=None) -> DesignMatrix:
    """Evaluate the dictionary on the chosen transition samples.

    Row t of the result is the dictionary evaluated at (y(t), u(t)); it is
    paired with the regression target y(t+1).  ``rows`` selects transition
    indices in [0, M); default is all of them.  Identically-zero columns are
    dropped with a warning so downstream solvers never see a rank-zero
    regressor.
    """
    M = data.n_transitions
    if rows is None:
        rows = np.arange(M)
    else:
        rows = np.asarray(rows, dtype=int)
        if rows.size and (rows.min() < 0 or rows.max() >= M):
            raise ValueError(f"rows must lie in [0, {M})")
    enc = encode_terms(spec, data.n_outputs, data.n_inputs)
    signals = np.hstack([data.outputs[rows], data.inputs[rows]])
    values = evaluate_terms(enc, signals)

    bad = ~np.isfinite(values)
    if bad.any():
        r, c = np.argwhere(bad)[0]
        raise ValueError(
            f"non-finite value for term {enc.names[c]!r} at sample {int(rows[r])}"
        )

    norms = np.linalg.norm(values, axis=0)
    keep = norms > 0
    if not keep.all():
        dropped = [enc.names[j] for j in np.flatnonzero(~keep)]
        warnings.warn(f"dropping identically-zero dictionary columns: {dropped}")
        values = values[:, keep]
    if values.shape[1] == 0:
        raise ValueError("all dictionary columns are identically zero on this data")
    names = [enc.names[j] for j in np.flatnonzero(keep)]
    return DesignMatrix(values=values, term_names=names)


def normalize_columns(dm: DesignMatrix) -> DesignMatrix:
    """Scale every column to unit l2 norm, recording the scales.

    Composes with prior normalization so that denormalize_coefficients is
    always exact.
    """
    norms = np.linalg.norm(dm.values, axis=0)
    if (norms == 0).any():
        zero = [dm.term_names[j] for j in np.flatnonzero(norms == 0)]
        raise ValueError(f"cannot normalize zero columns: {zero}")
    scales = norms if dm.column_scales is None else dm.column_scales * norms
    return DesignMatrix(dm.values / norms, list(dm.term_names), scales)
