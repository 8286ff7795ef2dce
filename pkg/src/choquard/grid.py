"""Truncated-box discretization: grids, scalar fields, quadrature and
finite-difference operators.

The computational domain is the box [-L, L]^N sampled on M cell-centered
nodes per axis, x_i = -L + (i + 1/2) h with h = 2L/M.  Cell-centering keeps
every node away from x = 0, so singular kernels and weights |x|^gamma never
hit a node exactly.  Functions are extended by zero outside the box
(homogeneous Dirichlet truncation): the face value u(+-L) = 0 is imposed by
the ghost-value convention u_ghost = -u_edge, which is second-order accurate
for the half-cell between the last node and the face.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centered grid on [-L, L]^dim with M nodes per axis."""

    dim: int
    half_width: float
    points_per_dim: int

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        if not self.half_width > 0:
            raise ValueError("half_width must be positive")
        if self.points_per_dim < 8:
            raise ValueError("points_per_dim must be at least 8")

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / self.points_per_dim

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points_per_dim,) * self.dim

    @property
    def num_nodes(self) -> int:
        return self.points_per_dim**self.dim

    def axis_coords(self) -> np.ndarray:
        """1D node coordinates -L + (i + 1/2) h, shared by every axis."""
        i = np.arange(self.points_per_dim)
        return -self.half_width + (i + 0.5) * self.spacing

    def meshgrid(self) -> list[np.ndarray]:
        x = self.axis_coords()
        return list(np.meshgrid(*([x] * self.dim), indexing="ij"))

    def radius(self) -> np.ndarray:
        """Euclidean norm |x| at every node, shaped like the grid."""
        r2 = np.zeros(self.shape)
        for c in self.meshgrid():
            r2 += c * c
        return np.sqrt(r2)


@dataclass
class ScalarField:
    """Real-valued function sampled on a Grid.

    ``values`` has shape ``grid.shape`` (row-major flattening gives the
    canonical length-M^N ordering used by the on-disk format).
    """

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            if self.values.size == self.grid.num_nodes:
                self.values = self.values.reshape(self.grid.shape)
            else:
                raise ValueError(
                    f"values shape {self.values.shape} incompatible with grid {self.grid.shape}"
                )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")

    @classmethod
    def zeros(cls, grid: Grid) -> "ScalarField":
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def from_callable(cls, grid: Grid, fn) -> "ScalarField":
        """Sample ``fn(*coords)`` on the grid (fn takes dim arrays)."""
        return cls(grid, fn(*grid.meshgrid()))

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy())


def same_grid(f: ScalarField, g: ScalarField) -> None:
    if f.grid != g.grid:
        raise ValueError("fields live on different grids")


def integrate(f: ScalarField) -> float:
    """Midpoint-rule integral h^N sum(values)."""
    return float(f.grid.spacing**f.grid.dim * f.values.sum())


def integrate_values(grid: Grid, values: np.ndarray) -> float:
    return float(grid.spacing**grid.dim * values.sum())


def neg_laplacian_values(grid: Grid, u: np.ndarray) -> np.ndarray:
    """-Delta_h u with zero boundary values on the box faces.

    Second-order central differences; at the first/last node of each axis
    the ghost value -u_edge enforces u = 0 on the face half a cell away.
    """
    h2 = grid.spacing**2
    out = 2.0 * grid.dim * u.copy()
    for axis in range(grid.dim):
        lo = [slice(None)] * grid.dim
        hi = [slice(None)] * grid.dim
        lo[axis] = slice(None, -1)
        hi[axis] = slice(1, None)
        lo_t, hi_t = tuple(lo), tuple(hi)
        out[lo_t] -= u[hi_t]
        out[hi_t] -= u[lo_t]
        first = [slice(None)] * grid.dim
        last = [slice(None)] * grid.dim
        first[axis] = 0
        last[axis] = -1
        out[tuple(first)] += u[tuple(first)]
        out[tuple(last)] += u[tuple(last)]
    return out / h2


def neg_laplacian(f: ScalarField) -> ScalarField:
    return ScalarField(f.grid, neg_laplacian_values(f.grid, f.values))


def grad_sq_integral(u: ScalarField) -> float:
    """Dirichlet form <-Delta_h u, u> = discrete integral of |grad u|^2.

    Evaluated as the explicit sum of squared edge differences (including the
    half-cell edges to the zero face values), so the result is nonnegative
    by construction and vanishes only for u = 0.
    """
    g = u.grid
    v = u.values
    total = 0.0
    for axis in range(g.dim):
        diff = np.diff(v, axis=axis)
        total += float((diff * diff).sum())
        first = [slice(None)] * g.dim
        last = [slice(None)] * g.dim
        first[axis] = 0
        last[axis] = -1
        vf = v[tuple(first)]
        vl = v[tuple(last)]
        total += 2.0 * float((vf * vf).sum() + (vl * vl).sum())
    return g.spacing ** (g.dim - 2) * total


def dirichlet_pairing(f: ScalarField, g: ScalarField) -> float:
    """Bilinear Dirichlet form h^N <-Delta_h f, g> (symmetric in f, g)."""
    same_grid(f, g)
    return integrate_values(f.grid, neg_laplacian_values(f.grid, f.values) * g.values)


def positive_part(u: ScalarField) -> ScalarField:
    return ScalarField(u.grid, np.maximum(u.values, 0.0))


def negative_part(u: ScalarField) -> ScalarField:
    return ScalarField(u.grid, np.minimum(u.values, 0.0))


def weighted_l2(u: ScalarField, gamma: float) -> float:
    """h^N sum |x_i|^gamma u_i^2 (the |x|^gamma-weighted squared L2 norm)."""
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    r = u.grid.radius()
    w = np.ones_like(r) if gamma == 0 else r**gamma
    return integrate_values(u.grid, w * u.values * u.values)


def dirichlet_eigenvalue_1(grid: Grid) -> float:
    """Smallest eigenvalue of -Delta_h with zero faces: 2 N (1 - cos(pi h / 2L)) / h^2."""
    h = grid.spacing
    return 2.0 * grid.dim * (1.0 - np.cos(np.pi * h / (2.0 * grid.half_width))) / h**2
