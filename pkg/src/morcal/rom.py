"""Reduced-order model container, evaluation, and persistence.

A RomModel bundles the fitted operators, the sampled source operators, the
basis with its scaling, and the rollout step size.  Simulation delegates to
the calibration rollout so that evaluating a stored model and evaluating a
candidate during calibration run exactly the same code path.
"""

from dataclasses import dataclass, field

import numpy as np

from morcal.calibrate import forward_rollout as _forward_rollout
from morcal.deim import DeimOperators
from morcal.errors import DataError
from morcal.opinf import RomOperators, quadratic_size
from morcal.pod import PodBasis
from morcal.snapshots import ScalingSpec
from morcal.textio import TextReader, fmt_float, fmt_row, parse_float, parse_int

__all__ = [
    "RomModel",
    "ErrorReport",
    "simulate_rom",
    "rom_vs_projected_error",
    "field_statistics",
    "switch_off_window",
    "save_rom",
    "load_rom",
    "load_reference_fixture",
]

ROM_FORMAT_VERSION = 1

# Number of steps flagged around a heat-load discontinuity: the step at the
# discontinuity plus two on each side.
SWITCH_OFF_HALFWIDTH = 2


@dataclass
class RomModel:
    """Everything needed to roll out and lift a reduced model."""

    operators: RomOperators
    deim: DeimOperators | None
    basis: PodBasis | None
    dt: float

    def __post_init__(self):
        if self.dt <= 0.0:
            raise DataError("dt must be positive")
        if self.deim is not None and self.deim.r != self.operators.r:
            raise DataError("deim operators and reduced operators disagree on r")
        if self.basis is not None and self.basis.r != self.operators.r:
            raise DataError("basis and reduced operators disagree on r")

    @property
    def r(self) -> int:
        return self.operators.r


@dataclass
class ErrorReport:
    """Per-step relative mean-squared error of one trajectory rollout."""

    times: np.ndarray  # (k+1,)
    step_errors: np.ndarray  # (k+1,) |s~_j - s_j|^2 / |s_j|^2
    switch_off: np.ndarray  # (k+1,) bool, True inside the excluded window
    mean_error: float  # mean over steps outside the switch-off window
    mean_error_all: float  # mean over every step

    def __post_init__(self):
        if not (self.times.shape == self.step_errors.shape == self.switch_off.shape):
            raise DataError("error report arrays must share one length")


def simulate_rom(model: RomModel, s0: np.ndarray, controls: np.ndarray, k: int) -> np.ndarray:
    """Roll the model out for k steps from s0; identical to forward_rollout."""
    return _forward_rollout(model.operators, model.deim, s0, controls, model.dt, k)


def switch_off_window(heat_loads: np.ndarray, halfwidth: int = SWITCH_OFF_HALFWIDTH) -> np.ndarray:
    """Boolean flags marking steps near a heat-load discontinuity.

    A discontinuity between columns c-1 and c flags columns c-halfwidth
    through c+halfwidth, a five-step window by default.
    """
    heat = np.asarray(heat_loads, dtype=float)
    flags = np.zeros(heat.shape[0], dtype=bool)
    changes = np.nonzero(np.diff(heat) != 0.0)[0] + 1
    for c in changes:
        lo = max(0, c - halfwidth)
        hi = min(flags.size, c + halfwidth + 1)
        flags[lo:hi] = True
    return flags


def rom_vs_projected_error(model: RomModel, trajectory) -> ErrorReport:
    """Relative mean-squared rollout error against projected truth.

    ``trajectory`` is a FomTrajectory in physical units.  Its states are
    scaled with the model's scaling spec, projected onto the basis, and the
    rollout starts from the projected initial state using the trajectory's
    own control sequence.  Steps inside the switch-off window are excluded
    from the aggregate mean (they remain in the per-step curve).
    """
    if model.basis is None or model.basis.scaling is None:
        raise DataError("error evaluation needs a model with basis and scaling")
    states = np.asarray(trajectory.states, dtype=float)
    if states.shape[0] != model.basis.n:
        raise DataError("trajectory state size does not match the basis")
    times = np.asarray(trajectory.times, dtype=float)
    steps = np.diff(times)
    if steps.size == 0:
        raise DataError("trajectory must contain at least two snapshots")
    if not np.allclose(steps, model.dt, rtol=1e-9, atol=1e-12):
        raise DataError("trajectory spacing does not match the model step size")

    scaled = model.basis.scaling.scale_array(states)
    projected = model.basis.basis.T @ scaled
    k = projected.shape[1] - 1
    rolled = simulate_rom(model, projected[:, 0], trajectory.controls, k)

    num = np.sum((rolled - projected) ** 2, axis=0)
    den = np.maximum(np.sum(projected ** 2, axis=0), 1e-300)
    errors = num / den
    flags = switch_off_window(trajectory.controls[:, 0])
    outside = ~flags
    mean_outside = float(np.mean(errors[outside])) if np.any(outside) else float("nan")
    return ErrorReport(
        times=times,
        step_errors=errors,
        switch_off=flags,
        mean_error=mean_outside,
        mean_error_all=float(np.mean(errors)),
    )


def field_statistics(model: RomModel, reduced_trajectory: np.ndarray, solid_mask=None) -> dict:
    """Per-step (min, mean, max) of each physical field of a lifted rollout.

    Returns a dict mapping field name to a (k+1, 3) array.  When a solid
    mask is given, the statistics of the second (solid) field are restricted
    to the masked cells.
    """
    if model.basis is None or model.basis.scaling is None:
        raise DataError("field statistics need a model with basis and scaling")
    reduced = np.asarray(reduced_trajectory, dtype=float)
    lifted = model.basis.scaling.unscale_array(model.basis.basis @ reduced)
    out = {}
    for i, (name, start, end) in enumerate(model.basis.scaling.fields):
        block = lifted[start:end, :]
        if solid_mask is not None and i == 1:
            mask = np.asarray(solid_mask, dtype=float) > 0.0
            if mask.shape[0] != end - start:
                raise DataError("solid mask length does not match the field block")
            block = block[mask, :]
        out[name] = np.column_stack(
            [np.min(block, axis=0), np.mean(block, axis=0), np.max(block, axis=0)]
        )
    return out


def _write_matrix(fh, name, matrix, scale=1.0):
    fh.write(f"[{name}]\n")
    if matrix is None:
        fh.write("rows=0 cols=0 scale=1\n")
        return
    matrix = np.asarray(matrix, dtype=float)
    fh.write(f"rows={matrix.shape[0]} cols={matrix.shape[1]} scale={fmt_float(scale)}\n")
    for i in range(matrix.shape[0]):
        fh.write(fmt_row(matrix[i, :]) + "\n")


def _read_matrix(rd: TextReader, name):
    line = rd.next_line(f"'[{name}]' header").strip()
    if line != f"[{name}]":
        raise rd.error(f"expected section '[{name}]', found {line!r}")
    parts = rd.next_line("matrix header").split()
    if len(parts) != 3:
        raise rd.error("matrix header must be 'rows= cols= scale='")
    rows = parse_int(parts[0].split("=", 1)[1], rd, "rows")
    cols = parse_int(parts[1].split("=", 1)[1], rd, "cols")
    scale = parse_float(parts[2].split("=", 1)[1], rd, "scale")
    if rows == 0 or cols == 0:
        return None
    matrix = np.empty((rows, cols))
    for i in range(rows):
        matrix[i, :] = rd.read_floats(cols, f"{name} row {i}")
    return matrix * scale


def save_rom(model: RomModel, path, include_basis: bool = True) -> None:
    """Write the model to a sectioned text file.

    The basis and scaling sections are optional so that compact operator
    exports stay small; a model saved without them can be rolled out but
    not lifted back to the full grid.
    """
    ops = model.operators
    with open(path, "w") as fh:
        fh.write("[meta]\n")
        fh.write(f"version={ROM_FORMAT_VERSION}\n")
        fh.write(f"r={ops.r}\n")
        fh.write(f"s={0 if model.deim is None else model.deim.s}\n")
        fh.write(f"p={ops.p}\n")
        fh.write(f"dt={fmt_float(model.dt)}\n")
        _write_matrix(fh, "A", ops.a)
        _write_matrix(fh, "H", ops.h)
        _write_matrix(fh, "B", ops.b)
        _write_matrix(fh, "P1", None if model.deim is None else model.deim.p1)
        _write_matrix(fh, "P2", None if model.deim is None else model.deim.p2)
        fh.write("[deim]\n")
        if model.deim is None:
            fh.write("arrhenius_prefactor=0\n")
            fh.write("arrhenius_exponent=0\n")
            fh.write("indices=\n")
            fh.write("unscale_scale=\n")
            fh.write("unscale_shift=\n")
        else:
            fh.write(f"arrhenius_prefactor={fmt_float(model.deim.arrhenius_prefactor)}\n")
            fh.write(f"arrhenius_exponent={fmt_float(model.deim.arrhenius_exponent)}\n")
            fh.write("indices=" + ",".join(str(int(i)) for i in model.deim.indices) + "\n")
            fh.write("unscale_scale=" + fmt_row(model.deim.unscale_scale) + "\n")
            fh.write("unscale_shift=" + fmt_row(model.deim.unscale_shift) + "\n")
        scaling = None if model.basis is None else model.basis.scaling
        if include_basis and model.basis is not None and scaling is not None:
            fh.write("[scaling]\n")
            fh.write(
                "fields=" + ",".join(f"{nm}:{st}:{en}" for nm, st, en in scaling.fields) + "\n"
            )
            fh.write("shift=" + fmt_row(scaling.shift) + "\n")
            fh.write("scale=" + fmt_row(scaling.scale) + "\n")
            _write_matrix(fh, "basis", model.basis.basis)
            fh.write("[singular_values]\n")
            fh.write(fmt_row(model.basis.singular_values) + "\n")


def load_rom(path) -> RomModel:
    """Read a model written by save_rom (or a compatible fixture file)."""
    rd = TextReader(path)
    if rd.next_line("'[meta]' header").strip() != "[meta]":
        raise rd.error("expected '[meta]' section")
    version = parse_int(rd.expect_kv("version"), rd, "version")
    if version != ROM_FORMAT_VERSION:
        raise DataError(
            f"{path}: unsupported format version {version} (expected {ROM_FORMAT_VERSION})"
        )
    r = parse_int(rd.expect_kv("r"), rd, "r")
    s = parse_int(rd.expect_kv("s"), rd, "s")
    p = parse_int(rd.expect_kv("p"), rd, "p")
    dt = parse_float(rd.expect_kv("dt"), rd, "dt")

    a = _read_matrix(rd, "A")
    h = _read_matrix(rd, "H")
    b = _read_matrix(rd, "B")
    p1 = _read_matrix(rd, "P1")
    p2 = _read_matrix(rd, "P2")
    if a is None or a.shape != (r, r):
        raise DataError(f"{path}: linear operator must be {r} x {r}")
    if h is not None and h.shape[1] != quadratic_size(r):
        raise DataError(f"{path}: quadratic operator has the wrong column count")
    if b is not None and b.shape[1] != p:
        raise DataError(f"{path}: input operator has the wrong column count")
    operators = RomOperators(a=a, h=h, b=b)

    if rd.next_line("'[deim]' header").strip() != "[deim]":
        raise rd.error("expected '[deim]' section")
    prefactor = parse_float(rd.expect_kv("arrhenius_prefactor"), rd, "arrhenius_prefactor")
    exponent = parse_float(rd.expect_kv("arrhenius_exponent"), rd, "arrhenius_exponent")
    idx_text = rd.expect_kv("indices").strip()
    indices = (
        np.array([int(t) for t in idx_text.split(",")], dtype=int)
        if idx_text
        else np.zeros(0, dtype=int)
    )
    us_text = rd.expect_kv("unscale_scale").strip()
    uh_text = rd.expect_kv("unscale_shift").strip()

    deim_ops = None
    if p1 is not None or p2 is not None:
        if p1 is None or p2 is None:
            raise DataError(f"{path}: P1 and P2 must both be present")
        if p1.shape != (r, s) or p2.shape != (s, r):
            raise DataError(f"{path}: P1/P2 shapes disagree with the meta section")
        unscale_scale = (
            np.array([float(t) for t in us_text.split()]) if us_text else np.ones(s)
        )
        unscale_shift = (
            np.array([float(t) for t in uh_text.split()]) if uh_text else np.zeros(s)
        )
        deim_ops = DeimOperators(
            indices=indices,
            p1=p1,
            p2=p2,
            arrhenius_prefactor=prefactor,
            arrhenius_exponent=exponent,
            unscale_scale=unscale_scale,
            unscale_shift=unscale_shift,
        )

    basis = None
    if not rd.at_end() and rd.peek().strip() == "[scaling]":
        rd.next_line("'[scaling]' header")
        fields_text = rd.expect_kv("fields")
        fields = []
        for part in fields_text.split(","):
            bits = part.split(":")
            if len(bits) != 3:
                raise rd.error(f"bad field descriptor: {part!r}")
            fields.append((bits[0], int(bits[1]), int(bits[2])))
        shift = np.array([float(t) for t in rd.expect_kv("shift").split()])
        scale = np.array([float(t) for t in rd.expect_kv("scale").split()])
        scaling = ScalingSpec(fields=fields, shift=shift, scale=scale)
        basis_matrix = _read_matrix(rd, "basis")
        if basis_matrix is None or basis_matrix.shape[1] != r:
            raise DataError(f"{path}: basis section must hold an n x {r} matrix")
        if rd.next_line("'[singular_values]' header").strip() != "[singular_values]":
            raise rd.error("expected '[singular_values]' section")
        sv_line = rd.next_line("singular values")
        singular_values = np.array([float(t) for t in sv_line.split()])
        basis = PodBasis(basis=basis_matrix, singular_values=singular_values, scaling=scaling)

    return RomModel(operators=operators, deim=deim_ops, basis=basis, dt=dt)


def load_reference_fixture() -> RomModel:
    """Load the bundled reference-operator fixture (stored scale factors applied)."""
    from importlib import resources

    ref = resources.files("morcal").joinpath("data/reference_rom.txt")
    with resources.as_file(ref) as path:
        return load_rom(path)
