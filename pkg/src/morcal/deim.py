"""Discrete empirical interpolation for the reactor heat source.

The source nonlinearity is sampled at a handful of grid points chosen by
the classic greedy recursion, and the reduced evaluation maps those samples
back into reduced coordinates with two small matrices.  Because snapshots
are standardised before projection, the operators keep an affine unscale
map so the exponential always sees physical temperatures.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from morcal.errors import ConfigError, DataError, NumericError
from morcal.fom import FomConfig, arrhenius_source
from morcal.pod import PodBasis
from morcal.snapshots import SnapshotSet
from morcal.textio import TextReader, fmt_float, fmt_row, parse_float, parse_int

__all__ = [
    "DeimOperators",
    "nonlinearity_snapshots",
    "nonlinearity_basis",
    "deim_points",
    "build_deim_operators",
    "reduced_arrhenius",
    "save_deim_operators",
    "load_deim_operators",
]

logger = logging.getLogger(__name__)

MIN_TEMPERATURE = 1.0  # [K] sampled temperatures at or below this abort the run


@dataclass
class DeimOperators:
    """Sampling-based reduced evaluation of the heat source.

    ``p1`` maps sampled source values into reduced coordinates, ``p2`` maps
    reduced coordinates to the sampled rows of the basis, and the affine
    pair (unscale_scale, unscale_shift) converts p2 @ s into physical
    temperatures at the sample points.
    """

    indices: np.ndarray  # (s,) sample rows, pairwise distinct
    p1: np.ndarray  # (r, s)
    p2: np.ndarray  # (s, r)
    arrhenius_prefactor: float
    arrhenius_exponent: float
    unscale_scale: np.ndarray  # (s,)
    unscale_shift: np.ndarray  # (s,)
    nonlinearity_basis: np.ndarray | None = field(default=None, repr=False)  # (n, s)

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=int)
        self.p1 = np.asarray(self.p1, dtype=float)
        self.p2 = np.asarray(self.p2, dtype=float)
        self.unscale_scale = np.asarray(self.unscale_scale, dtype=float)
        self.unscale_shift = np.asarray(self.unscale_shift, dtype=float)
        s = self.s
        # An empty index vector is allowed for imported compact operators
        # whose sample rows are unknown.
        if self.indices.size not in (0, s):
            raise DataError("index vector must have one entry per sample point")
        if self.indices.size != np.unique(self.indices).size:
            raise DataError("sample indices must be pairwise distinct")
        if self.p1.shape != (self.r, s) or self.p2.shape != (s, self.r):
            raise DataError("p1 and p2 shapes are inconsistent")
        if self.unscale_scale.shape != (s,) or self.unscale_shift.shape != (s,):
            raise DataError("unscale coefficients must have one entry per sample point")
        if self.nonlinearity_basis is not None:
            self.nonlinearity_basis = np.asarray(self.nonlinearity_basis, dtype=float)
            if self.nonlinearity_basis.shape[1] != s:
                raise DataError("nonlinearity basis must have s columns")

    @property
    def s(self) -> int:
        return self.p2.shape[0]

    @property
    def r(self) -> int:
        return self.p1.shape[0]

    def sample_temperatures(self, s_red: np.ndarray) -> np.ndarray:
        """Physical temperatures at the sample points for reduced state(s)."""
        proj = self.p2 @ np.asarray(s_red, dtype=float)
        if proj.ndim == 1:
            proj *= self.unscale_scale
            proj += self.unscale_shift
        else:
            proj *= self.unscale_scale[:, None]
            proj += self.unscale_shift[:, None]
        return proj


def nonlinearity_snapshots(snapshots: SnapshotSet, cfg: FomConfig) -> np.ndarray:
    """Pointwise heat-source values for every snapshot column.

    Columns live in the full state layout: the source is evaluated on the
    physical solid-temperature block where solid material exists and is zero
    everywhere else.  A scaled snapshot set is unscaled first.
    """
    if snapshots.n != cfg.n:
        raise DataError("snapshot set does not match the model state size")
    data = snapshots.data
    if snapshots.scaling is not None:
        data = snapshots.scaling.unscale_array(data)
    npts = cfg.grid_points
    mask = cfg.solid_mask > 0.0
    ts = data[npts:, :]
    if np.any(ts[mask, :] <= 0.0):
        raise NumericError("non-positive solid temperature in the snapshot data")
    out = np.zeros_like(data)
    heat = snapshots.controls[:, 0]
    out[npts:, :][mask, :] = arrhenius_source(ts[mask, :], heat[None, :], cfg)
    return out


def nonlinearity_basis(source_snapshots: np.ndarray, s: int):
    """Rank-s left singular basis of the source snapshot matrix."""
    mat = np.asarray(source_snapshots, dtype=float)
    if not 1 <= s <= min(mat.shape):
        raise ConfigError(f"deim rank must satisfy 1 <= s <= {min(mat.shape)}, got {s}")
    u, sigma, _ = np.linalg.svd(mat, full_matrices=False)
    return u[:, :s], sigma


def deim_points(u_n: np.ndarray) -> np.ndarray:
    """Greedy interpolation points for the columns of u_n.

    The first index maximises the magnitude of the first column.  At step j
    the coefficients interpolating column j on the selected rows are
    computed, and the row with the largest residual magnitude is added.
    Ties resolve to the lowest index.
    """
    u_n = np.asarray(u_n, dtype=float)
    if u_n.ndim != 2 or u_n.shape[1] < 1:
        raise DataError("u_n must be an n x s matrix with s >= 1")
    n, s = u_n.shape
    if s > n:
        raise DataError("cannot select more sample points than rows")
    indices = [int(np.argmax(np.abs(u_n[:, 0])))]
    for j in range(1, s):
        block = u_n[indices, :j]
        try:
            coeff = np.linalg.solve(block, u_n[indices, j])
        except np.linalg.LinAlgError:
            raise NumericError(f"singular interpolation block at selection step {j}") from None
        residual = u_n[:, j] - u_n[:, :j] @ coeff
        pick = int(np.argmax(np.abs(residual)))
        if pick in indices:
            raise NumericError(f"degenerate residual at selection step {j}")
        indices.append(pick)
    return np.array(indices, dtype=int)


def build_deim_operators(
    basis: PodBasis,
    u_n: np.ndarray,
    indices: np.ndarray,
    scaling=None,
    source_gain: np.ndarray | None = None,
    arrhenius_prefactor: float = 5000.0,
    arrhenius_exponent: float = 1500.0,
) -> DeimOperators:
    """Assemble the reduced source operators from basis and sample points.

    ``source_gain`` is an optional per-row factor converting raw source
    values into state-derivative contributions (for the reactor model:
    1 / (rho_cp_solid * scale) on solid rows, zero elsewhere).  Without it,
    p1 is exactly U^T U_N (U_N restricted to the sample rows)^{-1}.
    Prefactor and exponent should come from the model configuration; the
    defaults match FomConfig.
    """
    u_n = np.asarray(u_n, dtype=float)
    indices = np.asarray(indices, dtype=int)
    s = indices.size
    if u_n.shape != (basis.n, s):
        raise DataError("u_n shape must be (n, s) with one column per sample point")
    block = u_n[indices, :]
    cond = np.linalg.cond(block)
    if not np.isfinite(cond):
        raise NumericError("interpolation block is singular")
    logger.info("deim interpolation block condition number: %.3e", cond)

    weighted = u_n if source_gain is None else np.asarray(source_gain, dtype=float)[:, None] * u_n
    # p1 = U^T * weighted * block^{-1}, computed via a solve on the right.
    try:
        p1 = np.linalg.solve(block.T, (basis.basis.T @ weighted).T).T
    except np.linalg.LinAlgError:
        raise NumericError("interpolation block is singular") from None
    p2 = basis.basis[indices, :]

    if scaling is not None:
        row_scale = scaling.row_scale
        row_shift = scaling.row_shift
        unscale_scale = row_scale[indices]
        unscale_shift = row_shift[indices]
    else:
        unscale_scale = np.ones(s)
        unscale_shift = np.zeros(s)

    return DeimOperators(
        indices=indices,
        p1=p1,
        p2=p2,
        arrhenius_prefactor=arrhenius_prefactor,
        arrhenius_exponent=arrhenius_exponent,
        unscale_scale=unscale_scale,
        unscale_shift=unscale_shift,
        nonlinearity_basis=u_n,
    )


def reduced_arrhenius(ops: DeimOperators, s_red: np.ndarray, heat_load) -> np.ndarray:
    """Reduced heat-source term R * prefactor * p1 @ exp(exponent / T).

    ``s_red`` may be a single reduced state (r,) or a stack (r, m) with a
    matching scalar or (m,) heat load.  Sampled temperatures at or below
    1 K abort with a NumericError, since the exponential would silently
    produce garbage there.
    """
    t = ops.sample_temperatures(s_red)
    if not t.min() > MIN_TEMPERATURE:
        raise NumericError(
            f"sampled temperature dropped to {float(np.min(t)):.3g} K (limit "
            f"{MIN_TEMPERATURE:g} K); the reduced trajectory left the trusted range"
        )
    values = np.exp(ops.arrhenius_exponent / t)
    return heat_load * ops.arrhenius_prefactor * (ops.p1 @ values)


def arrhenius_jacobian(ops: DeimOperators, s_red: np.ndarray, heat_load: float) -> np.ndarray:
    """Jacobian of reduced_arrhenius with respect to the reduced state.

    Chain rule through the sampling map: d/dT exp(b/T) = exp(b/T) * (-b/T^2),
    then T = unscale_scale * (p2 @ s) + unscale_shift.
    """
    t = ops.sample_temperatures(s_red)
    if not t.min() > MIN_TEMPERATURE:
        raise NumericError("sampled temperature out of range in jacobian evaluation")
    w = (
        heat_load
        * ops.arrhenius_prefactor
        * np.exp(ops.arrhenius_exponent / t)
        * (-ops.arrhenius_exponent / t ** 2)
        * ops.unscale_scale
    )
    return ops.p1 @ (w[:, None] * ops.p2)


def save_deim_operators(ops: DeimOperators, path) -> None:
    """Write the sampling operators to a text file (no nonlinearity basis)."""
    with open(path, "w") as fh:
        fh.write(f"s={ops.s}\n")
        fh.write(f"r={ops.r}\n")
        fh.write("indices=" + ",".join(str(int(i)) for i in ops.indices) + "\n")
        fh.write(f"arrhenius_prefactor={fmt_float(ops.arrhenius_prefactor)}\n")
        fh.write(f"arrhenius_exponent={fmt_float(ops.arrhenius_exponent)}\n")
        fh.write("unscale_scale=" + fmt_row(ops.unscale_scale) + "\n")
        fh.write("unscale_shift=" + fmt_row(ops.unscale_shift) + "\n")
        fh.write("p1\n")
        for i in range(ops.r):
            fh.write(fmt_row(ops.p1[i, :]) + "\n")
        fh.write("p2\n")
        for i in range(ops.s):
            fh.write(fmt_row(ops.p2[i, :]) + "\n")


def load_deim_operators(path) -> DeimOperators:
    rd = TextReader(path)
    s = parse_int(rd.expect_kv("s"), rd, "s")
    r = parse_int(rd.expect_kv("r"), rd, "r")
    idx_text = rd.expect_kv("indices")
    indices = (
        np.array([int(tok) for tok in idx_text.split(",")], dtype=int)
        if idx_text.strip()
        else np.zeros(0, dtype=int)
    )
    prefactor = parse_float(rd.expect_kv("arrhenius_prefactor"), rd, "arrhenius_prefactor")
    exponent = parse_float(rd.expect_kv("arrhenius_exponent"), rd, "arrhenius_exponent")
    unscale_scale = np.array([float(t) for t in rd.expect_kv("unscale_scale").split()])
    unscale_shift = np.array([float(t) for t in rd.expect_kv("unscale_shift").split()])
    if rd.next_line("'p1' marker").strip() != "p1":
        raise rd.error("expected 'p1' section")
    p1 = np.empty((r, s))
    for i in range(r):
        p1[i, :] = rd.read_floats(s, f"p1 row {i}")
    if rd.next_line("'p2' marker").strip() != "p2":
        raise rd.error("expected 'p2' section")
    p2 = np.empty((s, r))
    for i in range(s):
        p2[i, :] = rd.read_floats(r, f"p2 row {i}")
    return DeimOperators(
        indices=indices,
        p1=p1,
        p2=p2,
        arrhenius_prefactor=prefactor,
        arrhenius_exponent=exponent,
        unscale_scale=unscale_scale,
        unscale_shift=unscale_shift,
    )
