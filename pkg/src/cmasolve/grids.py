"""Tensor-product grids and discrete pluripotential operators.

Coordinates are the real and imaginary parts of z in C^n, ordered
(x1, y1, ..., xn, yn), so a grid over a box in C^n is a 2n-dimensional
tensor product of uniform 1-D meshes.  Fields are stored as C-ordered
ndarrays over the full node set (scalar data) or over the interior node
block (Hessians, densities).

The normalization is dd^c = 2i ddbar, under which

    (dd^c u)^n = 4^n n! det(H[u]) dV,      H[u]_{jk} = d^2 u / dz_j dzbar_k,

with dV the Lebesgue measure on R^{2n}.  For n = 1 the density reduces to
the ordinary Laplacian of u.  The complex Hessian is assembled from real
second differences via

    H_{jk} = ((u_{x_j x_k} + u_{y_j y_k}) + i (u_{x_j y_k} - u_{y_j x_k})) / 4,

using centered stencils: the classical 3-point formula on the diagonal and
the nested 4-point cross formula for mixed terms.  Both are exact on
quadratics, which makes every polynomial of degree <= 2 a useful oracle.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from math import factorial
from typing import Callable, NamedTuple, Sequence

import numpy as np


class GridError(ValueError):
    """Raised for malformed domains, resolutions, or field data."""


@dataclass(frozen=True)
class Box:
    """Axis-aligned box given by per-coordinate bounds (length 2n each)."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if len(lo) != len(hi) or not lo:
            raise GridError("box bounds must be nonempty and of equal length")
        if len(lo) % 2 != 0:
            raise GridError("box dimension must be even (pairs x_j, y_j)")
        for a, (l, h) in enumerate(zip(lo, hi)):
            if not (np.isfinite(l) and np.isfinite(h)):
                raise GridError("box bounds must be finite")
            if l >= h:
                raise GridError(f"degenerate box: lo >= hi on axis {a}")


def unit_box(n: int) -> Box:
    """The default domain [-1/2, 1/2]^{2n} for problems in C^n."""
    return Box(lo=(-0.5,) * (2 * n), hi=(0.5,) * (2 * n))


@dataclass(frozen=True)
class Ball:
    """Ball of given radius centered at the origin; radial meshes only."""

    radius: float

    def __post_init__(self):
        if not (np.isfinite(self.radius) and self.radius > 0):
            raise GridError("ball radius must be positive and finite")


class Grid:
    """Uniform node-centered grid over a Box.

    Nodes on the topological boundary of the box carry Dirichlet data;
    every interior node has all axis and diagonal neighbors inside the
    node set, so the full Hessian stencil applies at each of them.
    """

    def __init__(self, domain: Box, resolution: Sequence[int]):
        if not isinstance(domain, Box):
            raise GridError("grid construction requires a Box domain "
                            "(Ball problems use a 1-D radial mesh)")
        res = tuple(int(r) for r in resolution)
        if len(res) != len(domain.lo):
            raise GridError("resolution length must match box dimension")
        for a, r in enumerate(res):
            if r < 5:
                raise GridError(
                    f"resolution {r} on axis {a} leaves the interior too thin "
                    "(need >= 5 nodes per axis)")
        self.domain = domain
        self.resolution = res
        self.ndim = len(res)
        self.n = self.ndim // 2
        self.spacing = tuple(
            (domain.hi[a] - domain.lo[a]) / (res[a] - 1) for a in range(self.ndim))
        self.shape = res
        self.axes = tuple(
            np.linspace(domain.lo[a], domain.hi[a], res[a]) for a in range(self.ndim))
        for ax in self.axes:
            ax.setflags(write=False)

    @property
    def interior_shape(self) -> tuple[int, ...]:
        return tuple(r - 2 for r in self.resolution)

    @property
    def interior(self) -> tuple[slice, ...]:
        return (slice(1, -1),) * self.ndim

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def num_nodes(self) -> int:
        return int(np.prod(self.resolution))

    def interior_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        mask[self.interior] = True
        return mask

    def points(self) -> np.ndarray:
        """All node coordinates, shape (*shape, 2n), C storage order."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    def sparse_axes(self) -> list[np.ndarray]:
        """Per-axis coordinate arrays broadcastable to the full shape."""
        return list(np.meshgrid(*self.axes, indexing="ij", sparse=True))

    def __eq__(self, other) -> bool:
        return (isinstance(other, Grid)
                and self.domain == other.domain
                and self.resolution == other.resolution)

    def __hash__(self):
        return hash((self.domain, self.resolution))

    def __repr__(self):
        return f"Grid(n={self.n}, resolution={self.resolution})"


def build_grid(domain: Box, resolution: int | Sequence[int]) -> Grid:
    """Construct a grid; a scalar resolution applies to every axis."""
    if isinstance(domain, Ball):
        raise GridError("grid construction requires a Box domain "
                        "(Ball problems use a 1-D radial mesh)")
    if isinstance(resolution, (int, np.integer)):
        resolution = (int(resolution),) * len(domain.lo)
    return Grid(domain, resolution)


def _as_locked(values: np.ndarray, dtype) -> np.ndarray:
    out = np.array(values, dtype=dtype, order="C", copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class ScalarField:
    """Real values at every node of a grid.  Immutable once constructed."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = _as_locked(self.values, np.float64)
        if vals.shape != self.grid.shape:
            raise GridError(
                f"field shape {vals.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(vals)):
            raise GridError("field contains non-finite values")
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_function(cls, grid: Grid, fn: Callable[[np.ndarray], np.ndarray]):
        """Evaluate fn on the (*shape, 2n) coordinate array."""
        vals = np.asarray(fn(grid.points()), dtype=np.float64)
        return cls(grid, np.broadcast_to(vals, grid.shape))

    def interior_values(self) -> np.ndarray:
        return self.values[self.grid.interior]

    def with_values(self, values: np.ndarray) -> "ScalarField":
        return ScalarField(self.grid, values)


@dataclass(frozen=True)
class HermitianField:
    """An n x n complex Hessian matrix at every interior node."""

    grid: Grid
    values: np.ndarray  # shape (*interior_shape, n, n), complex128

    def __post_init__(self):
        vals = _as_locked(self.values, np.complex128)
        n = self.grid.n
        expected = self.grid.interior_shape + (n, n)
        if vals.shape != expected:
            raise GridError(f"hermitian field shape {vals.shape} != {expected}")
        if not np.all(np.isfinite(vals)):
            raise GridError("hermitian field contains non-finite values")
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class DensityField:
    """Nonnegative measure density at interior nodes."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = _as_locked(self.values, np.float64)
        if vals.shape != self.grid.interior_shape:
            raise GridError(
                f"density shape {vals.shape} != interior {self.grid.interior_shape}")
        if not np.all(np.isfinite(vals)):
            raise GridError("density contains non-finite values")
        if vals.size and vals.min() < 0:
            raise GridError("density must be nonnegative")
        object.__setattr__(self, "values", vals)

    @classmethod
    def constant(cls, grid: Grid, value: float) -> "DensityField":
        return cls(grid, np.full(grid.interior_shape, float(value)))


def _shift(values: np.ndarray, offsets: dict[int, int]) -> np.ndarray:
    """View of `values` shifted by `offsets` and cropped to the interior block."""
    ndim = values.ndim
    sl = [slice(1, values.shape[a] - 1) for a in range(ndim)]
    for a, o in offsets.items():
        sl[a] = slice(1 + o, values.shape[a] - 1 + o)
    return values[tuple(sl)]


def second_difference(values: np.ndarray, axis: int, h: float) -> np.ndarray:
    """Centered d^2/da^2 onto the interior block."""
    return (_shift(values, {axis: 1}) - 2.0 * _shift(values, {})
            + _shift(values, {axis: -1})) / (h * h)


def mixed_difference(values: np.ndarray, ax_a: int, ax_b: int,
                     h_a: float, h_b: float) -> np.ndarray:
    """Nested centered d^2/da db onto the interior block (4-point cross)."""
    return (_shift(values, {ax_a: 1, ax_b: 1}) - _shift(values, {ax_a: 1, ax_b: -1})
            - _shift(values, {ax_a: -1, ax_b: 1})
            + _shift(values, {ax_a: -1, ax_b: -1})) / (4.0 * h_a * h_b)


def complex_hessian(u: ScalarField) -> HermitianField:
    """Discrete complex Hessian H[u] at every interior node.

    The lower triangle is the conjugate mirror of the computed upper
    triangle, so Hermitian symmetry holds exactly rather than to rounding.
    """
    grid = u.grid
    n = grid.n
    vals = u.values
    h = grid.spacing
    H = np.zeros(grid.interior_shape + (n, n), dtype=np.complex128)
    for j in range(n):
        xj, yj = 2 * j, 2 * j + 1
        H[..., j, j] = 0.25 * (second_difference(vals, xj, h[xj])
                               + second_difference(vals, yj, h[yj]))
        for k in range(j + 1, n):
            xk, yk = 2 * k, 2 * k + 1
            re = (mixed_difference(vals, xj, xk, h[xj], h[xk])
                  + mixed_difference(vals, yj, yk, h[yj], h[yk]))
            im = (mixed_difference(vals, xj, yk, h[xj], h[yk])
                  - mixed_difference(vals, yj, xk, h[yj], h[xk]))
            H[..., j, k] = 0.25 * (re + 1j * im)
            H[..., k, j] = np.conj(H[..., j, k])
    return HermitianField(grid, H)


def hessian_determinant(H: HermitianField) -> np.ndarray:
    """Signed det H per interior node (real by Hermitian symmetry)."""
    v = H.values
    n = H.grid.n
    if n == 1:
        return v[..., 0, 0].real.copy()
    if n == 2:
        return (v[..., 0, 0].real * v[..., 1, 1].real
                - np.abs(v[..., 0, 1]) ** 2)
    return np.linalg.det(v).real


def hessian_eigmin(H: HermitianField) -> np.ndarray:
    """Smallest eigenvalue of H per interior node."""
    v = H.values
    n = H.grid.n
    if n == 1:
        return v[..., 0, 0].real.copy()
    if n == 2:
        a = v[..., 0, 0].real
        d = v[..., 1, 1].real
        return 0.5 * (a + d) - np.sqrt(0.25 * (a - d) ** 2
                                       + np.abs(v[..., 0, 1]) ** 2)
    return np.linalg.eigvalsh(v)[..., 0]


def ma_normalization(n: int) -> float:
    """The constant 4^n n! relating det H to the Monge-Ampere density."""
    return float(4 ** n) * factorial(n)


class MaDensity(NamedTuple):
    density: DensityField
    psh_defect: float


def ma_density(u: ScalarField) -> MaDensity:
    """Monge-Ampere density 4^n n! det H[u], clamped below at zero.

    Negative determinant values are clamped so the result is a usable
    measure density, and the departure from plurisubharmonicity is
    surfaced as psh_defect = max over nodes of max(0, -lambda_min(H)).
    """
    H = complex_hessian(u)
    det = hessian_determinant(H)
    lam = hessian_eigmin(H)
    defect = float(max(0.0, -lam.min())) if lam.size else 0.0
    dens = ma_normalization(u.grid.n) * det
    np.maximum(dens, 0.0, out=dens)
    return MaDensity(DensityField(u.grid, dens), defect)


def integrate(d: DensityField) -> float:
    """Nodal quadrature: sum of interior values times the cell volume.

    numpy's pairwise summation keeps the result deterministic and stable;
    the rule is exact for constants on the interior block.
    """
    return float(d.values.sum()) * d.grid.cell_volume


# ---------------------------------------------------------------------------
# Dump formats.  CSV is one row per node in storage order with shortest
# round-trip float formatting; the binary format is a one-line JSON header
# followed by the raw little-endian float64 payload in storage order.

def _csv_header(n: int) -> str:
    coords = []
    for j in range(1, n + 1):
        coords += [f"x{j}", f"y{j}"]
    return ",".join(coords + ["value", "interior"])


def write_field_csv(field: ScalarField, path) -> None:
    grid = field.grid
    pts = grid.points().reshape(-1, grid.ndim)
    vals = field.values.ravel()
    mask = grid.interior_mask().ravel()
    with open(path, "w") as fh:
        fh.write(_csv_header(grid.n) + "\n")
        for i in range(vals.size):
            row = ",".join(repr(float(c)) for c in pts[i])
            fh.write(f"{row},{float(vals[i])!r},{int(mask[i])}\n")


def read_field_csv(path, grid: Grid | None = None) -> ScalarField:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        ndim = len(header) - 2
        coords = []
        vals = []
        for line in fh:
            parts = line.rstrip("\n").split(",")
            coords.append([float(p) for p in parts[:ndim]])
            vals.append(float(parts[ndim]))
    coords = np.asarray(coords)
    vals = np.asarray(vals)
    if grid is None:
        axes = []
        for a in range(ndim):
            # storage order is lexicographic, so per-axis node values repeat
            # in runs; unique() recovers the sorted axis.
            axes.append(np.unique(coords[:, a]))
        res = tuple(len(ax) for ax in axes)
        box = Box(lo=tuple(ax[0] for ax in axes), hi=tuple(ax[-1] for ax in axes))
        grid = Grid(box, res)
    if vals.size != grid.num_nodes:
        raise GridError("csv row count does not match grid")
    return ScalarField(grid, vals.reshape(grid.shape))


def write_field_bin(field: ScalarField, path) -> None:
    grid = field.grid
    header = {
        "format": "cmasolve-field",
        "kind": "scalar",
        "lo": list(grid.domain.lo),
        "hi": list(grid.domain.hi),
        "resolution": list(grid.resolution),
        "dtype": "<f8",
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8") + b"\n")
        fh.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes())


def read_field_bin(path) -> ScalarField:
    with open(path, "rb") as fh:
        raw = fh.read()
    nl = raw.index(b"\n")
    header = json.loads(raw[:nl].decode("utf-8"))
    if header.get("format") != "cmasolve-field":
        raise GridError("not a cmasolve field dump")
    grid = Grid(Box(lo=tuple(header["lo"]), hi=tuple(header["hi"])),
                tuple(header["resolution"]))
    vals = np.frombuffer(raw[nl + 1:], dtype=header["dtype"]).astype(np.float64)
    if vals.size != grid.num_nodes:
        raise GridError("binary payload size does not match grid")
    return ScalarField(grid, vals.reshape(grid.shape))
