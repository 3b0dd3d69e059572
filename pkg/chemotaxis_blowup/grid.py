"""
Uniform node-centred 3D box lattice with Neumann ghost handling.

Fields are stored as float64 arrays of shape ``(nz, ny, nx)`` in C order, so the
flat view is lexicographic with x running fastest. Stencils treat the boundary by
ghost reflection: the ghost value across a face equals the first interior value,
which is the second-order discretisation of a zero normal derivative.

Stencil kernels run in parallel over z-slabs (numba ``prange``); every output node
is written by exactly one iteration, so results do not depend on the worker count.
Reductions are plain numpy sums over a fixed array layout.
"""

import logging
import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numba
import numpy as np
from numba import njit, prange

logger = logging.getLogger(__name__)

Vector3 = Tuple[float, float, float]


@dataclass(frozen=True)
class GridSpec:
    """Axis-aligned box ``[lo, hi]`` with ``n[i]`` nodes along axis ``i``."""

    lo: Vector3
    hi: Vector3
    n: Tuple[int, int, int]

    def validate(self) -> None:
        if len(self.lo) != 3 or len(self.hi) != 3 or len(self.n) != 3:
            raise ValueError("grid lo, hi and n must be 3-vectors")
        for axis in range(3):
            if not self.hi[axis] > self.lo[axis]:
                raise ValueError(
                    f"degenerate box along axis {axis}: hi={self.hi[axis]} <= lo={self.lo[axis]}")
            if int(self.n[axis]) != self.n[axis] or self.n[axis] < 3:
                raise ValueError(
                    f"n[{axis}]={self.n[axis]}: need at least 3 nodes (one interior node) per axis")


class Grid:
    """A validated :class:`GridSpec` with spacings, weights and coordinates precomputed."""

    def __init__(self, spec: GridSpec):
        spec.validate()
        self.spec = GridSpec(tuple(float(x) for x in spec.lo),
                             tuple(float(x) for x in spec.hi),
                             tuple(int(x) for x in spec.n))
        lo, hi, n = self.spec.lo, self.spec.hi, self.spec.n
        self.spacing: Vector3 = tuple((hi[i] - lo[i]) / (n[i] - 1) for i in range(3))
        self.shape = (n[2], n[1], n[0])
        self.node_count = n[0] * n[1] * n[2]
        self.cell_volume = self.spacing[0] * self.spacing[1] * self.spacing[2]
        self.volume = (hi[0] - lo[0]) * (hi[1] - lo[1]) * (hi[2] - lo[2])

        wx, wy, wz = (self._trapezoid_weights(n[i]) for i in range(3))
        self.axis_weights = (wx, wy, wz)
        self.weights = wz[:, None, None] * wy[None, :, None] * wx[None, None, :]

    @staticmethod
    def _trapezoid_weights(count: int) -> np.ndarray:
        w = np.ones(count)
        w[0] = w[-1] = 0.5
        return w

    def __eq__(self, other):
        return isinstance(other, Grid) and self.spec == other.spec

    def __hash__(self):
        return hash(self.spec)

    def __repr__(self):
        return f"Grid(lo={self.spec.lo}, hi={self.spec.hi}, n={self.spec.n})"

    @property
    def is_cubic(self) -> bool:
        return math.isclose(self.spacing[0], self.spacing[1]) and math.isclose(self.spacing[0], self.spacing[2])

    def axis_coordinates(self, axis: int) -> np.ndarray:
        return np.linspace(self.spec.lo[axis], self.spec.hi[axis], self.spec.n[axis])

    def coordinates(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Broadcastable x, y, z node coordinates, each shaped for ``(nz, ny, nx)`` arrays."""
        x = self.axis_coordinates(0)[None, None, :]
        y = self.axis_coordinates(1)[None, :, None]
        z = self.axis_coordinates(2)[:, None, None]
        return x, y, z

    def refined(self, factor: int = 2) -> "Grid":
        """Same box with the spacing divided by ``factor`` (existing nodes are kept)."""
        n = tuple(factor * (k - 1) + 1 for k in self.spec.n)
        return Grid(GridSpec(self.spec.lo, self.spec.hi, n))

    def zeros(self) -> "ScalarField":
        return ScalarField(self, np.zeros(self.shape))

    def full(self, value: float) -> "ScalarField":
        return ScalarField(self, np.full(self.shape, float(value)))


def make_grid(spec: GridSpec) -> Grid:
    """Validate ``spec`` and build the lattice (spacings, cell volume, trapezoid weights)."""
    grid = Grid(spec)
    logger.debug(f"Grid {grid.spec.n} nodes, spacing {grid.spacing}")
    return grid


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Node values of one scalar quantity on a :class:`Grid`.

    Operators never modify their inputs; each returns a freshly allocated field.
    ``post_blowup`` marks fields that are allowed to carry non-finite values.
    """

    grid: Grid
    data: np.ndarray
    post_blowup: bool = False

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.float64)
        if arr.size != self.grid.node_count:
            raise ValueError(
                f"field has {arr.size} values, grid {self.grid.spec.n} needs {self.grid.node_count}")
        object.__setattr__(self, "data", arr.reshape(self.grid.shape))

    @property
    def values(self) -> np.ndarray:
        """Flat view in lexicographic node order (x fastest)."""
        return self.data.reshape(-1)

    def like(self, data: np.ndarray) -> "ScalarField":
        return ScalarField(self.grid, data)

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.data).all())

    def min(self) -> float:
        return float(self.data.min())

    def max(self) -> float:
        return float(self.data.max())


def _check_same_grid(*fields: ScalarField) -> None:
    grid = fields[0].grid
    for f in fields[1:]:
        if f.grid != grid:
            raise ValueError(f"fields live on different grids: {grid} vs {f.grid}")


def set_worker_threads(count: int) -> int:
    """Set the stencil worker count, clamped to what numba was started with."""
    limit = numba.config.NUMBA_NUM_THREADS
    if count > limit:
        logger.warning(f"Requested {count} threads, numba allows {limit}; using {limit}")
        count = limit
    count = max(1, int(count))
    numba.set_num_threads(count)
    return count


# ---------------------------------------------------------------------------
# Reductions

def weighted_sum(f: ScalarField) -> float:
    """Trapezoid-weighted node sum (the integral without the cell volume)."""
    return float(np.sum(f.grid.weights * f.data))


def integrate(f: ScalarField) -> float:
    """Composite trapezoidal rule over the lattice."""
    result = f.grid.cell_volume * weighted_sum(f)
    if not math.isfinite(result):
        logger.debug("integrate: non-finite result")
    return result


def linf_norm(f: ScalarField) -> float:
    """Max over nodes of |f|; NaN anywhere gives NaN."""
    return float(np.max(np.abs(f.data)))


def lp_norm(f: ScalarField, p: float) -> float:
    if p < 1:
        raise ValueError(f"lp_norm needs p >= 1, got p={p}")
    if p == 1:
        return integrate(f.like(np.abs(f.data)))
    return integrate(f.like(np.abs(f.data) ** p)) ** (1.0 / p)


# ---------------------------------------------------------------------------
# Stencils

@njit(parallel=True, cache=True)
def _laplacian_kernel(a, inv_hx2, inv_hy2, inv_hz2, out):
    nz, ny, nx = a.shape
    for k in prange(nz):
        km = k - 1 if k > 0 else 1
        kp = k + 1 if k < nz - 1 else nz - 2
        for j in range(ny):
            jm = j - 1 if j > 0 else 1
            jp = j + 1 if j < ny - 1 else ny - 2
            for i in range(nx):
                im = i - 1 if i > 0 else 1
                ip = i + 1 if i < nx - 1 else nx - 2
                c = 2.0 * a[k, j, i]
                out[k, j, i] = ((a[k, j, ip] + a[k, j, im] - c) * inv_hx2
                                + (a[k, jp, i] + a[k, jm, i] - c) * inv_hy2
                                + (a[kp, j, i] + a[km, j, i] - c) * inv_hz2)


@njit(parallel=True, cache=True)
def _gradient_sq_kernel(a, inv_2hx, inv_2hy, inv_2hz, out):
    nz, ny, nx = a.shape
    for k in prange(nz):
        km = k - 1 if k > 0 else 1
        kp = k + 1 if k < nz - 1 else nz - 2
        for j in range(ny):
            jm = j - 1 if j > 0 else 1
            jp = j + 1 if j < ny - 1 else ny - 2
            for i in range(nx):
                im = i - 1 if i > 0 else 1
                ip = i + 1 if i < nx - 1 else nx - 2
                gx = (a[k, j, ip] - a[k, j, im]) * inv_2hx
                gy = (a[k, jp, i] - a[k, jm, i]) * inv_2hy
                gz = (a[kp, j, i] - a[km, j, i]) * inv_2hz
                out[k, j, i] = gx * gx + gy * gy + gz * gz


def laplacian(f: ScalarField) -> ScalarField:
    """7-point Laplacian with ghost reflection at the faces."""
    hx, hy, hz = f.grid.spacing
    out = np.empty_like(f.data)
    _laplacian_kernel(f.data, 1.0 / hx ** 2, 1.0 / hy ** 2, 1.0 / hz ** 2, out)
    return f.like(out)


def gradient_sq(f: ScalarField) -> ScalarField:
    """|grad f|^2 from central differences; the normal component vanishes on faces."""
    hx, hy, hz = f.grid.spacing
    out = np.empty_like(f.data)
    _gradient_sq_kernel(f.data, 0.5 / hx, 0.5 / hy, 0.5 / hz, out)
    return f.like(out)


def partial_derivative(f: ScalarField, axis: int) -> ScalarField:
    """Central difference along ``axis`` (0 = x); zero on the two faces normal to it."""
    array_axis = 2 - axis
    h = f.grid.spacing[axis]
    b = np.moveaxis(f.data, array_axis, -1)
    d = np.zeros_like(b)
    d[..., 1:-1] = (b[..., 2:] - b[..., :-2]) / (2.0 * h)
    return f.like(np.moveaxis(d, -1, array_axis))


def axis_control_widths(grid: Grid, axis: int) -> np.ndarray:
    """Per-node control-volume width along ``axis``, broadcastable to the field shape.

    Boundary nodes own half a cell, which is what makes face-flux differences
    telescope under the trapezoid weights.
    """
    widths = grid.axis_weights[axis] * grid.spacing[axis]
    shape = [1, 1, 1]
    shape[2 - axis] = widths.size
    return widths.reshape(shape)


def same_grid(fields: Sequence[ScalarField]) -> Grid:
    _check_same_grid(*fields)
    return fields[0].grid
