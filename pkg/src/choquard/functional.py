"""Variational core: confining potentials, the energy functional, its
gradient field, and the scalings onto the Nehari sets.

For a problem with potential V, exponent p > 1 and Riesz order alpha, the
energy of a field u is

    J(u) = 1/2 int |grad u|^2 + V u^2  -  1/(2p) int (I_alpha * |u|^p) |u|^p,

and critical points solve  -Delta u + V u = (I_alpha * |u|^p) |u|^(p-2) u.
All integrals are the grid quadratures of :mod:`choquard.grid`; the discrete
Dirichlet form is taken as the definition of the squared V-norm, so every
reported energy is a grid-dependent approximation.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .grid import (
    Grid,
    ScalarField,
    grad_sq_integral,
    integrate_values,
    neg_laplacian_values,
    same_grid,
)
from .riesz import RieszKernel, build_kernel, convolve


@dataclass(frozen=True)
class PowerPotential:
    """V(x) = v0 + c |x|^beta with c > 0, beta >= 0, v0 >= 0.

    The radial derivative pairing is analytic: x . grad V = c beta |x|^beta.
    """

    c: float = 1.0
    beta: float = 2.0
    v0: float = 0.0

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("potential coefficient c must be positive")
        if self.beta < 0:
            raise ValueError("potential exponent beta must be nonnegative")
        if self.v0 < 0:
            raise ValueError("potential offset v0 must be nonnegative")

    def values(self, grid: Grid) -> np.ndarray:
        return self.values_at(grid.radius())

    def values_at(self, radius: np.ndarray) -> np.ndarray:
        r = np.asarray(radius, dtype=float)
        return self.v0 + self.c * r**self.beta

    def x_dot_grad(self, grid: Grid) -> np.ndarray:
        return self.c * self.beta * grid.radius() ** self.beta


@dataclass(frozen=True)
class TabulatedPotential:
    """Potential sampled on the grid; must be nonnegative at every node."""

    field: ScalarField

    def __post_init__(self):
        if np.any(self.field.values < 0):
            raise ValueError("tabulated potential must be nonnegative")

    def values(self, grid: Grid) -> np.ndarray:
        if grid != self.field.grid:
            raise ValueError("potential tabulated on a different grid")
        return self.field.values

    def x_dot_grad(self, grid: Grid) -> np.ndarray:
        """x . grad V by second-order differences (one-sided at the faces)."""
        v = self.values(grid)
        out = np.zeros(grid.shape)
        coords = grid.meshgrid()
        for axis in range(grid.dim):
            out += coords[axis] * np.gradient(v, grid.spacing, axis=axis)
        return out


Potential = PowerPotential | TabulatedPotential


@dataclass(frozen=True)
class NodalPair:
    """Positive scalings (t, s) applied to the positive and negative parts."""

    t: float
    s: float

    def __post_init__(self):
        if not (self.t > 0 and self.s > 0):
            raise ValueError("nodal scalings must be positive")


class ProblemSpec:
    """Full parameterization of the equation on a given grid.

    Holds the grid, Riesz order alpha, exponent p and the potential, plus
    lazily built kernels (shared read-only by solvers and certificates).
    """

    def __init__(self, grid: Grid, alpha: float, p: float, potential: Potential):
        if not 0.0 < alpha < grid.dim:
            raise ValueError(f"alpha must lie in (0, {grid.dim}), got {alpha}")
        if not p > 1.0:
            raise ValueError(f"p must exceed 1, got {p}")
        self.grid = grid
        self.alpha = float(alpha)
        self.p = float(p)
        self.potential = potential
        potential.values(grid)  # validates grid compatibility and sign

    @property
    def dim(self) -> int:
        return self.grid.dim

    @cached_property
    def kernel(self) -> RieszKernel:
        return build_kernel(self.grid, self.alpha)

    @cached_property
    def kernel_half(self) -> RieszKernel:
        return build_kernel(self.grid, self.alpha / 2.0)

    @cached_property
    def v_values(self) -> np.ndarray:
        return self.potential.values(self.grid)

    def with_p(self, p: float) -> "ProblemSpec":
        """Same grid/potential/kernels with a different exponent."""
        other = ProblemSpec(self.grid, self.alpha, p, self.potential)
        for name in ("kernel", "kernel_half", "v_values"):
            if name in self.__dict__:
                other.__dict__[name] = self.__dict__[name]
        return other


def norm_v_sq(spec: ProblemSpec, u: ScalarField) -> float:
    """Squared V-norm: Dirichlet form plus int V u^2."""
    if u.grid != spec.grid:
        raise ValueError("field grid does not match problem grid")
    return grad_sq_integral(u) + integrate_values(spec.grid, spec.v_values * u.values**2)


def norm_v_sq_delta(spec: ProblemSpec, u_new: ScalarField, u_old: ScalarField) -> float:
    """||u_new||_V^2 - ||u_old||_V^2 without cancellation of O(1) terms.

    Every squared quantity is expanded as (a - b)(a + b), so the difference
    resolves down to roundoff of the increment itself.  Line searches need
    this: near a minimizer the direct difference of two O(1) norms
    quantizes at machine epsilon long before the gradient vanishes.
    """
    g = spec.grid
    vn, vo = u_new.values, u_old.values
    total = 0.0
    for axis in range(g.dim):
        dn = np.diff(vn, axis=axis)
        do = np.diff(vo, axis=axis)
        total += float(((dn - do) * (dn + do)).sum())
        first = [slice(None)] * g.dim
        last = [slice(None)] * g.dim
        first[axis] = 0
        last[axis] = -1
        for sel in (tuple(first), tuple(last)):
            total += 2.0 * float(((vn[sel] - vo[sel]) * (vn[sel] + vo[sel])).sum())
    total *= g.spacing ** (g.dim - 2)
    total += integrate_values(g, spec.v_values * (vn - vo) * (vn + vo))
    return total


def power_density(values: np.ndarray, p: float) -> np.ndarray:
    """|u|^p, safe at zeros for fractional p."""
    return np.abs(values) ** p


def nonlinearity(values: np.ndarray, p: float) -> np.ndarray:
    """|u|^(p-2) u, extended continuously by 0 at u = 0 for 1 < p < 2."""
    return np.sign(values) * np.abs(values) ** (p - 1.0)


def g_p(spec: ProblemSpec, u: ScalarField) -> float:
    """Nonlocal term int (I_alpha * |u|^p) |u|^p; positive for u != 0."""
    dens = ScalarField(spec.grid, power_density(u.values, spec.p))
    conv = convolve(spec.kernel, dens)
    return integrate_values(spec.grid, conv.values * dens.values)


def energy(spec: ProblemSpec, u: ScalarField) -> float:
    """J(u) = 1/2 ||u||_V^2 - 1/(2p) G(u)."""
    return 0.5 * norm_v_sq(spec, u) - g_p(spec, u) / (2.0 * spec.p)


def equation_parts(spec: ProblemSpec, u: ScalarField) -> tuple[np.ndarray, np.ndarray]:
    """Linear side -Delta_h u + V u and nonlocal side (I_alpha * |u|^p)|u|^(p-2) u."""
    if u.grid != spec.grid:
        raise ValueError("field grid does not match problem grid")
    dens = ScalarField(spec.grid, power_density(u.values, spec.p))
    conv = convolve(spec.kernel, dens)
    linear = neg_laplacian_values(spec.grid, u.values) + spec.v_values * u.values
    force = conv.values * nonlinearity(u.values, spec.p)
    return linear, force


def residual(spec: ProblemSpec, u: ScalarField) -> ScalarField:
    """Strong-form residual -Delta_h u + V u - (I_alpha * |u|^p)|u|^(p-2) u.

    Its quadrature pairing with any h reproduces the directional derivative
    of the energy: integrate(residual(u) * h) = dJ(u)[h].
    """
    linear, force = equation_parts(spec, u)
    return ScalarField(spec.grid, linear - force)


def relative_residual_from_parts(grid: Grid, linear: np.ndarray, force: np.ndarray) -> tuple[float, float]:
    hn = grid.spacing**grid.dim
    res = float(np.sqrt(hn * ((linear - force) ** 2).sum()))
    denom = float(np.sqrt(hn * (linear**2).sum()) + np.sqrt(hn * (force**2).sum()))
    if denom == 0.0:
        return 0.0, 0.0
    return res, res / denom


def residual_norms(spec: ProblemSpec, u: ScalarField) -> tuple[float, float]:
    """(absolute L2 residual, relative residual).

    The relative residual normalizes by the sum of the L2 norms of the
    linear and nonlocal sides, so it is scale-free and equals zero exactly
    at a discrete solution.
    """
    linear, force = equation_parts(spec, u)
    return relative_residual_from_parts(spec.grid, linear, force)


def nehari_scale(spec: ProblemSpec, u: ScalarField) -> float:
    """t > 0 with t u on the Nehari manifold: t = (||u||_V^2 / G(u))^(1/(2p-2))."""
    a = norm_v_sq(spec, u)
    g = g_p(spec, u)
    if a == 0.0 or g == 0.0:
        raise ValueError("nehari_scale requires a nonzero field")
    return float((a / g) ** (1.0 / (2.0 * spec.p - 2.0)))


@dataclass(frozen=True)
class PhiCoefficients:
    """Cached coefficients of the two-parameter nodal ray energy.

    Phi(t, s) = t^(2/p)/2 a_pos + s^(2/p)/2 a_neg
                - (t^2 b_pp + 2 t s b_pn + s^2 b_nn) / (2p)

    where the b coefficients are the half-order quadratic form of the
    densities |u+|^p and |u-|^p; they are (t, s)-independent, so repeated
    evaluations reuse two convolutions.
    """

    p: float
    a_pos: float
    a_neg: float
    b_pp: float
    b_pn: float
    b_nn: float

    @classmethod
    def build(cls, spec: ProblemSpec, u_pos: ScalarField, u_neg: ScalarField) -> "PhiCoefficients":
        same_grid(u_pos, u_neg)
        dens_pos = ScalarField(spec.grid, power_density(u_pos.values, spec.p))
        dens_neg = ScalarField(spec.grid, power_density(u_neg.values, spec.p))
        half_pos = convolve(spec.kernel_half, dens_pos)
        half_neg = convolve(spec.kernel_half, dens_neg)
        return cls(
            p=spec.p,
            a_pos=norm_v_sq(spec, u_pos),
            a_neg=norm_v_sq(spec, u_neg),
            b_pp=integrate_values(spec.grid, half_pos.values**2),
            b_pn=integrate_values(spec.grid, half_pos.values * half_neg.values),
            b_nn=integrate_values(spec.grid, half_neg.values**2),
        )

    def gram_determinant(self) -> float:
        return self.b_pp * self.b_nn - self.b_pn**2

    def evaluate(self, t: float, s: float) -> float:
        if t < 0 or s < 0:
            raise ValueError("ray parameters must be nonnegative")
        p = self.p
        quad = t * t * self.b_pp + 2.0 * t * s * self.b_pn + s * s * self.b_nn
        return 0.5 * t ** (2.0 / p) * self.a_pos + 0.5 * s ** (2.0 / p) * self.a_neg - quad / (2.0 * p)


def phi_p(spec: ProblemSpec, u_pos: ScalarField, u_neg: ScalarField, t: float, s: float) -> float:
    """Direct evaluation of the nodal ray energy Phi(t, s).

    Splits the norm terms by sign and evaluates the nonlocal term as
    int |I_(a/2) * (t |u+|^p + s |u-|^p)|^2 through a single convolution of
    the combined density (an evaluation path independent of the cached
    coefficient route of :class:`PhiCoefficients`).
    """
    if t < 0 or s < 0:
        raise ValueError("ray parameters must be nonnegative")
    same_grid(u_pos, u_neg)
    p = spec.p
    combined = ScalarField(
        spec.grid,
        t * power_density(u_pos.values, p) + s * power_density(u_neg.values, p),
    )
    half = convolve(spec.kernel_half, combined)
    nonlocal_term = integrate_values(spec.grid, half.values**2)
    return (
        0.5 * t ** (2.0 / p) * norm_v_sq(spec, u_pos)
        + 0.5 * s ** (2.0 / p) * norm_v_sq(spec, u_neg)
        - nonlocal_term / (2.0 * p)
    )
