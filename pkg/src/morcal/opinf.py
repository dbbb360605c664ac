"""Operator inference: ridge-regularised least squares for reduced operators.

Fits a linear operator, an optional quadratic operator acting on the
symmetric Kronecker compression of the state, and an optional input
operator, against reduced time-derivative data with any sampled source
contribution subtracted beforehand.
"""

from dataclasses import dataclass

import numpy as np

from morcal.deim import DeimOperators, reduced_arrhenius
from morcal.errors import ConfigError, DataError, NumericError

__all__ = [
    "RomOperators",
    "OpinfConfig",
    "sym_kron",
    "sym_kron_jacobian",
    "quadratic_size",
    "assemble_regression",
    "solve_opinf",
]


def quadratic_size(r: int) -> int:
    """Length of the symmetric Kronecker compression, r (r + 1) / 2."""
    return r * (r + 1) // 2


def sym_kron(s: np.ndarray) -> np.ndarray:
    """Symmetric Kronecker compression of a state or state stack.

    For r = 2 and s = (x, y) the result is (x^2, x*y, y^2): products s_i s_j
    with i <= j in lexicographic order, each cross term appearing exactly
    once and unweighted.  Accepts (r,) vectors or (r, m) column stacks.
    """
    s = np.asarray(s, dtype=float)
    rows, cols = np.triu_indices(s.shape[0])
    return s[rows] * s[cols]


def sym_kron_jacobian(s: np.ndarray) -> np.ndarray:
    """Jacobian of sym_kron at a single state, shape (q, r)."""
    s = np.asarray(s, dtype=float)
    if s.ndim != 1:
        raise DataError("sym_kron_jacobian expects a single state vector")
    r = s.shape[0]
    rows, cols = np.triu_indices(r)
    q = rows.size
    jac = np.zeros((q, r))
    entries = np.arange(q)
    # d(s_i s_j)/ds_l = delta_il s_j + delta_jl s_i; the diagonal terms
    # (i == j) receive both contributions and end up with 2 s_i.
    np.add.at(jac, (entries, rows), s[cols])
    np.add.at(jac, (entries, cols), s[rows])
    return jac


@dataclass
class OpinfConfig:
    """Regression settings: regularisation weight and active blocks."""

    tikhonov_lambda: float = 1.0
    include_quadratic: bool = True
    include_input: bool = True

    def __post_init__(self):
        if self.tikhonov_lambda < 0.0:
            raise ConfigError("tikhonov_lambda must be nonnegative")


@dataclass
class RomOperators:
    """Reduced operators: linear a, quadratic h (on sym_kron), input b."""

    a: np.ndarray  # (r, r)
    h: np.ndarray | None = None  # (r, q) with q = r(r+1)/2
    b: np.ndarray | None = None  # (r, p)

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=float)
        r = self.r
        if self.a.shape != (r, r):
            raise DataError("linear operator must be square")
        if not np.all(np.isfinite(self.a)):
            raise DataError("linear operator has non-finite entries")
        if self.h is not None:
            self.h = np.asarray(self.h, dtype=float)
            if self.h.shape != (r, quadratic_size(r)):
                raise DataError(f"quadratic operator must have shape ({r}, {quadratic_size(r)})")
            if not np.all(np.isfinite(self.h)):
                raise DataError("quadratic operator has non-finite entries")
        if self.b is not None:
            self.b = np.asarray(self.b, dtype=float)
            if self.b.ndim != 2 or self.b.shape[0] != r or self.b.shape[1] < 1:
                raise DataError("input operator must have shape (r, p)")
            if not np.all(np.isfinite(self.b)):
                raise DataError("input operator has non-finite entries")

    @property
    def r(self) -> int:
        return self.a.shape[0]

    @property
    def q(self) -> int:
        return 0 if self.h is None else self.h.shape[1]

    @property
    def p(self) -> int:
        return 0 if self.b is None else self.b.shape[1]

    def copy(self) -> "RomOperators":
        return RomOperators(
            a=self.a.copy(),
            h=None if self.h is None else self.h.copy(),
            b=None if self.b is None else self.b.copy(),
        )


def assemble_regression(
    reduced_states: np.ndarray,
    reduced_derivatives: np.ndarray,
    controls: np.ndarray,
    deim_ops: DeimOperators | None,
    config: OpinfConfig,
):
    """Build the least-squares system (design, target) for operator fitting.

    Parameters
    ----------
    reduced_states : (r, m) reduced coordinates per column.
    reduced_derivatives : (r, m) reduced time derivatives per column.
    controls : (m, 2) rows (R, v_I_dot).
    deim_ops : sampled source operators whose contribution is subtracted
        from the derivatives, or None when no source term is present.
    config : block flags; the regularisation weight is used by solve_opinf.

    Returns
    -------
    design : (m, d) with feature blocks [state, sym_kron(state), input].
    target : (m, r).
    """
    s = np.asarray(reduced_states, dtype=float)
    if reduced_derivatives is None:
        raise DataError(
            "reduced derivatives are missing; run estimate_derivatives or "
            "provide exact derivative data"
        )
    d = np.asarray(reduced_derivatives, dtype=float)
    controls = np.asarray(controls, dtype=float)
    if s.ndim != 2 or d.shape != s.shape:
        raise DataError("states and derivatives must be (r, m) with equal shapes")
    m = s.shape[1]
    if controls.shape != (m, 2):
        raise DataError("controls must have shape (m, 2)")

    blocks = [s.T]
    if config.include_quadratic:
        blocks.append(sym_kron(s).T)
    if config.include_input:
        blocks.append(controls[:, 1:2])
    design = np.hstack(blocks)

    target = d.T.copy()
    if deim_ops is not None:
        target -= reduced_arrhenius(deim_ops, s, controls[:, 0]).T
    return design, target


def solve_opinf(
    design: np.ndarray,
    target: np.ndarray,
    tikhonov_lambda: float,
    config: OpinfConfig | None = None,
) -> RomOperators:
    """Minimise |design O^T - target|_F^2 + lambda |O|_F^2 for O = [a h b].

    The block layout of the feature columns is taken from ``config``; when
    omitted it is inferred from the column count (possible only when the
    sizes are unambiguous).  A rank-deficient system with lambda = 0 is
    refused.
    """
    design = np.asarray(design, dtype=float)
    target = np.asarray(target, dtype=float)
    if design.ndim != 2 or target.ndim != 2 or design.shape[0] != target.shape[0]:
        raise DataError("design and target must share the row count")
    if tikhonov_lambda < 0.0:
        raise ConfigError("tikhonov_lambda must be nonnegative")
    m, d = design.shape
    r = target.shape[1]

    if config is not None:
        expected = r + (quadratic_size(r) if config.include_quadratic else 0) + (
            1 if config.include_input else 0
        )
        if expected != d:
            raise DataError(f"design has {d} columns but the block layout implies {expected}")
        include_quadratic = config.include_quadratic
        include_input = config.include_input
    else:
        q = quadratic_size(r)
        layouts = [
            (r, (False, False)),
            (r + q, (True, False)),
            (r + 1, (False, True)),
            (r + q + 1, (True, True)),
        ]
        matches = [flags for size, flags in layouts if size == d]
        if not matches:
            raise DataError(f"design column count {d} fits no block layout for r={r}")
        if len(matches) > 1:
            raise ConfigError("block layout is ambiguous; pass an OpinfConfig")
        include_quadratic, include_input = matches[0]

    if tikhonov_lambda == 0.0 and np.linalg.matrix_rank(design) < d:
        raise NumericError(
            "design matrix is rank deficient and tikhonov_lambda is zero; "
            "set tikhonov_lambda > 0 to regularise the fit"
        )

    augmented = np.vstack([design, np.sqrt(tikhonov_lambda) * np.eye(d)])
    padded = np.vstack([target, np.zeros((d, r))])
    solution, _, _, _ = np.linalg.lstsq(augmented, padded, rcond=None)
    operators = solution.T  # (r, d)

    a = operators[:, :r]
    pos = r
    h = None
    if include_quadratic:
        q = quadratic_size(r)
        h = operators[:, pos : pos + q]
        pos += q
    b = operators[:, pos : pos + 1] if include_input else None
    return RomOperators(a=a, h=h, b=b)
