"""Cell-centred box grids, ghost-closed finite differences and midpoint quadrature.

Every field lives on the cell centres of a uniform box grid.  Boundary values
enter through one layer of ghost cells:

* ``Boundary.NEUMANN``: mirror ghosts, ``u[-1] = u[0]`` (zero normal flux).
* ``Boundary.DIRICHLET_ZERO``: antisymmetric ghosts, ``u[-1] = -u[0]`` (zero trace).

With these closures the central gradient of a Neumann field is exactly the
negative adjoint of the central divergence of a Dirichlet field, and the
compact Laplacian is symmetric, so discrete integration by parts holds to
rounding error.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Sequence, Union

import numpy as np
import scipy.sparse as sp

from .errors import GridMismatch, InvalidDimension, NonPositiveExtent, TooFewCells

__all__ = [
    "Boundary",
    "Grid",
    "ScalarField",
    "VectorField",
    "build_grid",
    "gradient",
    "divergence",
    "laplacian",
    "hessian",
    "integrate",
    "inner_l2",
    "norm",
    "dirichlet_form",
    "write_snapshot",
    "read_snapshot",
]


class Boundary(enum.Enum):
    NEUMANN = "neumann"
    DIRICHLET_ZERO = "dirichlet_zero"

    @property
    def ghost_sign(self) -> float:
        return 1.0 if self is Boundary.NEUMANN else -1.0

    @property
    def flipped(self) -> "Boundary":
        """Parity of the derivative normal to the wall."""
        if self is Boundary.NEUMANN:
            return Boundary.DIRICHLET_ZERO
        return Boundary.NEUMANN


@dataclass(frozen=True)
class Grid:
    dim: int
    extents: tuple
    counts: tuple

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise InvalidDimension(f"dim must be 2 or 3, got {self.dim}")
        if len(self.extents) != self.dim or len(self.counts) != self.dim:
            raise InvalidDimension(
                f"need {self.dim} extents and counts, got {len(self.extents)} and {len(self.counts)}"
            )
        if any(not (L > 0) or not math.isfinite(L) for L in self.extents):
            raise NonPositiveExtent(f"extents must be positive, got {self.extents}")
        if any(n < 4 for n in self.counts):
            raise TooFewCells(f"every axis needs at least 4 cells, got {self.counts}")

    @property
    def spacing(self) -> tuple:
        return tuple(L / n for L, n in zip(self.extents, self.counts))

    @property
    def shape(self) -> tuple:
        return self.counts

    @property
    def ncells(self) -> int:
        return math.prod(self.counts)

    @property
    def cell_volume(self) -> float:
        return math.prod(self.spacing)

    @property
    def volume(self) -> float:
        return math.prod(self.extents)

    @property
    def min_spacing(self) -> float:
        return min(self.spacing)

    def centers(self, axis: int) -> np.ndarray:
        return (np.arange(self.counts[axis]) + 0.5) * self.spacing[axis]

    def mesh(self) -> tuple:
        """Cell-centre coordinate arrays, ``indexing='ij'``."""
        return tuple(np.meshgrid(*(self.centers(k) for k in range(self.dim)), indexing="ij"))


def build_grid(dim: int, extents: Sequence[float], counts: Sequence[int]) -> Grid:
    if dim not in (2, 3):
        raise InvalidDimension(f"dim must be 2 or 3, got {dim}")
    return Grid(int(dim), tuple(float(L) for L in extents), tuple(int(n) for n in counts))


def _frozen(values, shape) -> np.ndarray:
    a = np.array(values, dtype=float)
    if a.shape != tuple(shape):
        raise ValueError(f"field values have shape {a.shape}, expected {tuple(shape)}")
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: Grid
    values: np.ndarray
    kind: Boundary = Boundary.NEUMANN

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values, self.grid.counts))

    def with_values(self, values) -> "ScalarField":
        return ScalarField(self.grid, values, self.kind)


@dataclass(frozen=True, eq=False)
class VectorField:
    grid: Grid
    values: np.ndarray  # shape (dim, *counts)
    kind: Boundary = Boundary.DIRICHLET_ZERO

    def __post_init__(self):
        shape = (self.grid.dim,) + self.grid.counts
        object.__setattr__(self, "values", _frozen(self.values, shape))

    @classmethod
    def from_components(cls, components: Sequence[ScalarField]) -> "VectorField":
        grid, kind = components[0].grid, components[0].kind
        for c in components:
            if c.grid != grid or c.kind is not kind:
                raise GridMismatch("vector components must share grid and boundary kind")
        return cls(grid, np.stack([c.values for c in components]), kind)

    def component(self, i: int) -> ScalarField:
        return ScalarField(self.grid, self.values[i], self.kind)

    def with_values(self, values) -> "VectorField":
        return VectorField(self.grid, values, self.kind)

    def magnitude(self) -> np.ndarray:
        return np.sqrt(np.sum(self.values**2, axis=0))


Field = Union[ScalarField, VectorField]


# ---------------------------------------------------------------------------
# array-level stencils (used directly by the solvers)
# ---------------------------------------------------------------------------


def neighbours(a: np.ndarray, axis: int, sign: float):
    """Return ``(a[i-1], a[i+1])`` along ``axis`` with ghost value ``sign * a[edge]``."""
    b = np.moveaxis(a, axis, 0)
    minus = np.concatenate([sign * b[:1], b[:-1]])
    plus = np.concatenate([b[1:], sign * b[-1:]])
    return np.moveaxis(minus, 0, axis), np.moveaxis(plus, 0, axis)


def central_diff(a: np.ndarray, axis: int, h: float, sign: float) -> np.ndarray:
    minus, plus = neighbours(a, axis, sign)
    return (plus - minus) / (2.0 * h)


def second_diff(a: np.ndarray, axis: int, h: float, sign: float) -> np.ndarray:
    minus, plus = neighbours(a, axis, sign)
    return (plus - 2.0 * a + minus) / (h * h)


def grad_array(a: np.ndarray, grid: Grid, sign: float) -> np.ndarray:
    return np.stack([central_diff(a, k, grid.spacing[k], sign) for k in range(grid.dim)])


def div_array(v: np.ndarray, grid: Grid, sign: float) -> np.ndarray:
    return sum(central_diff(v[k], k, grid.spacing[k], sign) for k in range(grid.dim))


def lap_array(a: np.ndarray, grid: Grid, sign: float) -> np.ndarray:
    return sum(second_diff(a, k, grid.spacing[k], sign) for k in range(grid.dim))


def hessian_array(a: np.ndarray, grid: Grid, sign: float) -> np.ndarray:
    """Compact second differences on the diagonal, nested central differences off it."""
    dim, h = grid.dim, grid.spacing
    out = np.empty((dim, dim) + a.shape)
    for k in range(dim):
        out[k, k] = second_diff(a, k, h[k], sign)
        dk = central_diff(a, k, h[k], sign)
        for m in range(k + 1, dim):
            out[k, m] = out[m, k] = central_diff(dk, m, h[m], sign)
    return out


def face_differences(a: np.ndarray, axis: int, sign: float) -> np.ndarray:
    """Jumps across all ``n+1`` faces along ``axis``, boundary faces included."""
    b = np.moveaxis(a, axis, 0)
    jumps = np.concatenate([b[:1] * (1.0 - sign), np.diff(b, axis=0), -b[-1:] * (1.0 - sign)])
    return np.moveaxis(jumps, 0, axis)


def face_form_array(a: np.ndarray, grid: Grid, sign: float, weight: np.ndarray | None = None) -> float:
    """Sum over faces of ``w_face * (jump/h)**2`` times the cell volume.

    Interior faces carry the full jump.  A boundary face contributes
    ``a_b * (a_b - ghost) / h**2`` so that the total equals
    ``-<lap(a), a>`` exactly; with a weight the face value is the mean of the
    two adjacent cells (boundary faces use the interior cell).
    """
    total = 0.0
    for k in range(grid.dim):
        h = grid.spacing[k]
        b = np.moveaxis(a, k, 0)
        inner = np.diff(b, axis=0) ** 2
        if weight is None:
            axis_sum = inner.sum() + (1.0 - sign) * (np.sum(b[0] ** 2) + np.sum(b[-1] ** 2))
        else:
            w = np.moveaxis(weight, k, 0)
            axis_sum = np.sum(0.5 * (w[1:] + w[:-1]) * inner) + (1.0 - sign) * (
                np.sum(w[0] * b[0] ** 2) + np.sum(w[-1] * b[-1] ** 2)
            )
        total += axis_sum / (h * h)
    return float(total * grid.cell_volume)


# ---------------------------------------------------------------------------
# sparse assembly
# ---------------------------------------------------------------------------


def _axis_operator(grid: Grid, axis: int, op1d: sp.spmatrix) -> sp.csr_matrix:
    mats = [sp.identity(n, format="csr") for n in grid.counts]
    mats[axis] = op1d
    out = mats[0]
    for m in mats[1:]:
        out = sp.kron(out, m, format="csr")
    return out.tocsr()


def _second_1d(n: int, h: float, sign: float) -> sp.csr_matrix:
    main = np.full(n, -2.0)
    main[0] += sign
    main[-1] += sign
    off = np.ones(n - 1)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr") / (h * h)


def _central_1d(n: int, h: float, sign: float) -> sp.csr_matrix:
    m = sp.diags([-np.ones(n - 1), np.ones(n - 1)], [-1, 1], format="lil")
    m[0, 0] = -sign
    m[n - 1, n - 1] = sign
    return m.tocsr() / (2.0 * h)


@lru_cache(maxsize=32)
def laplacian_matrix(grid: Grid, kind: Boundary) -> sp.csr_matrix:
    """Sparse matrix of :func:`laplacian` acting on row-major flattened values."""
    s = kind.ghost_sign
    return sum(
        _axis_operator(grid, k, _second_1d(grid.counts[k], grid.spacing[k], s)) for k in range(grid.dim)
    ).tocsr()


@lru_cache(maxsize=32)
def central_matrix(grid: Grid, axis: int, kind: Boundary) -> sp.csr_matrix:
    s = kind.ghost_sign
    return _axis_operator(grid, axis, _central_1d(grid.counts[axis], grid.spacing[axis], s))


# ---------------------------------------------------------------------------
# field-level operators
# ---------------------------------------------------------------------------


def _same_grid(*fields) -> Grid:
    grid = fields[0].grid
    for f in fields[1:]:
        if f.grid != grid:
            raise GridMismatch(f"fields live on different grids: {grid} vs {f.grid}")
    return grid


def gradient(f: ScalarField) -> VectorField:
    return VectorField(f.grid, grad_array(f.values, f.grid, f.kind.ghost_sign), f.kind.flipped)


def divergence(v: VectorField) -> ScalarField:
    return ScalarField(v.grid, div_array(v.values, v.grid, v.kind.ghost_sign), v.kind.flipped)


def laplacian(f: Field) -> Field:
    s = f.kind.ghost_sign
    if isinstance(f, VectorField):
        return f.with_values(np.stack([lap_array(c, f.grid, s) for c in f.values]))
    return f.with_values(lap_array(f.values, f.grid, s))


def hessian(f: ScalarField) -> np.ndarray:
    return hessian_array(f.values, f.grid, f.kind.ghost_sign)


def dirichlet_form(f: Field, weight: np.ndarray | None = None) -> float:
    """Discrete ``integral |grad f|^2`` in face-difference form; equals ``-inner_l2(laplacian(f), f)``."""
    s = f.kind.ghost_sign
    if isinstance(f, VectorField):
        return sum(face_form_array(c, f.grid, s, weight) for c in f.values)
    return face_form_array(f.values, f.grid, s, weight)


def integrate(f: ScalarField) -> float:
    return float(np.sum(f.values) * f.grid.cell_volume)


def inner_l2(f: Field, g: Field) -> float:
    grid = _same_grid(f, g)
    if type(f) is not type(g):
        raise GridMismatch("inner product of a scalar and a vector field")
    return float(np.sum(f.values * g.values) * grid.cell_volume)


def norm(f: Field, p=2) -> float:
    """L^p norm; vector fields use the pointwise Euclidean magnitude."""
    mag = f.magnitude() if isinstance(f, VectorField) else np.abs(f.values)
    if p == np.inf or p == "inf":
        return float(mag.max())
    p = float(p)
    return float((np.sum(mag**p) * f.grid.cell_volume) ** (1.0 / p))


# ---------------------------------------------------------------------------
# snapshot files
# ---------------------------------------------------------------------------


def write_snapshot(path, grid: Grid, values: np.ndarray) -> None:
    """One scalar field: header ``NFLOW1 dim counts... extents...`` then one value per line."""
    values = np.asarray(values, dtype=float)
    if values.shape != grid.counts:
        raise GridMismatch(f"snapshot values shape {values.shape} does not match grid {grid.counts}")
    header = " ".join(["NFLOW1", str(grid.dim)] + [str(n) for n in grid.counts] + [repr(float(L)) for L in grid.extents])
    body = "\n".join(repr(float(x)) for x in values.ravel(order="C"))
    Path(path).write_text(header + "\n" + body + "\n", encoding="utf-8")


def read_snapshot(path):
    lines = Path(path).read_text(encoding="utf-8").split("\n")
    head = lines[0].split()
    if not head or head[0] != "NFLOW1":
        raise ValueError(f"{path}: not an NFLOW1 snapshot")
    dim = int(head[1])
    counts = tuple(int(x) for x in head[2 : 2 + dim])
    extents = tuple(float(x) for x in head[2 + dim : 2 + 2 * dim])
    grid = build_grid(dim, extents, counts)
    values = np.array([float(x) for x in lines[1:] if x.strip()]).reshape(counts)
    return grid, values
