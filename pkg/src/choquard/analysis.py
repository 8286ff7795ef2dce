"""Certificates and constructions around the solvers.

* scale-invariance identity (Pohozaev-type) residual, used as an independent
  convergence certificate and to delimit nonexistence parameter ranges,
* admissibility classification of (N, alpha, p, potential),
* weighted-embedding diagnostic ratios,
* disjoint two-bump fields used to seed sign-changing solves,
* the demonstration that the nodal minimization level degenerates to the
  groundstate level when p < 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .functional import (
    Potential,
    PowerPotential,
    ProblemSpec,
    TabulatedPotential,
    g_p,
    norm_v_sq,
    power_density,
)
from .grid import Grid, ScalarField, grad_sq_integral, integrate_values, weighted_l2
from .riesz import build_kernel, convolve

CLASS_NONEXISTENT = "nonexistence (Pohozaev range)"
CLASS_SUPERCRITICAL = "non-admissible (exponent supercritical)"
CLASS_NOT_CONFINING = "non-admissible (potential not confining)"
CLASS_GROUNDSTATE = "admissible (groundstate regime)"
CLASS_GROUNDSTATE_NODAL = "admissible (groundstate and nodal regimes)"


@dataclass(frozen=True)
class AdmissibilityReport:
    dim: int
    alpha: float
    p: float
    beta: float | None
    condition_a: bool
    growth_exponent: float
    condition_b: bool
    nodal_regime: bool
    nonexistence: bool
    classification: str
    heuristic: bool = False

    @property
    def admissible(self) -> bool:
        return self.condition_a and self.condition_b and not self.nonexistence


def _tabulated_coercivity_heuristic(potential: TabulatedPotential, growth_exponent: float) -> bool:
    """Crude coercivity probe: V/(1+|x|^ge) on the outer shell must dominate
    its inner-region median.  Only a heuristic; flagged as such in reports.
    """
    grid = potential.field.grid
    r = grid.radius()
    ge = max(growth_exponent, 0.0)
    rho = potential.field.values / (1.0 + r**ge)
    outer = r >= 0.8 * grid.half_width
    inner = r <= 0.4 * grid.half_width
    if not outer.any() or not inner.any():
        return False
    return float(rho[outer].min()) > 2.0 * float(np.median(rho[inner]))


def admissibility(dim: int, alpha: float, p: float, potential: Potential) -> AdmissibilityReport:
    """Closed-form threshold classification of the parameter point.

    condition_a: 1/p > (N-2)/(N+alpha)  (exponent subcritical).
    condition_b: the potential grows faster than |x|^((N+alpha)/p - N).
    nonexistence (power V = c|x|^beta only): p in
    (1, max(1, (N+alpha)/(N+beta))] or, for N >= 3, p >= (N+alpha)/(N-2);
    both intervals closed at the inner threshold.
    """
    if dim < 1:
        raise ValueError("dim must be at least 1")
    if not 0.0 < alpha < dim:
        raise ValueError(f"alpha must lie in (0, {dim}), got {alpha}")
    if not p > 1.0:
        raise ValueError(f"p must exceed 1, got {p}")

    condition_a = 1.0 / p > (dim - 2.0) / (dim + alpha)
    growth_exponent = (dim + alpha) / p - dim

    heuristic = False
    if isinstance(potential, PowerPotential):
        beta = potential.beta
        condition_b = beta > max(growth_exponent, 0.0)
        coercive = beta > 0.0
        lower = (dim + alpha) / (dim + beta)
        nonexistence = 1.0 < p <= lower
        if dim >= 3 and p >= (dim + alpha) / (dim - 2.0):
            nonexistence = True
    else:
        beta = None
        condition_b = _tabulated_coercivity_heuristic(potential, growth_exponent)
        coercive = condition_b
        nonexistence = False
        heuristic = True

    nodal_regime = (
        p >= 2.0 and alpha > max(dim - 4.0, 0.0) and condition_a and coercive
    )

    if nonexistence:
        classification = CLASS_NONEXISTENT
    elif not condition_a:
        classification = CLASS_SUPERCRITICAL
    elif not condition_b:
        classification = CLASS_NOT_CONFINING
    elif nodal_regime:
        classification = CLASS_GROUNDSTATE_NODAL
    else:
        classification = CLASS_GROUNDSTATE

    return AdmissibilityReport(
        dim=dim,
        alpha=alpha,
        p=p,
        beta=beta,
        condition_a=condition_a,
        growth_exponent=growth_exponent,
        condition_b=condition_b,
        nodal_regime=nodal_regime,
        nonexistence=nonexistence,
        classification=classification,
        heuristic=heuristic,
    )


def pohozaev_residual(
    spec: ProblemSpec, u: ScalarField, specialized_power: bool = False
) -> tuple[float, float]:
    """Residual of the scale-invariance identity satisfied by every solution:

        (N-2)/2 int |grad u|^2 + 1/2 int (N V + x . grad V) u^2
            = (N+alpha)/(2p) int (I_alpha * |u|^p) |u|^p.

    Returns (absolute, relative); relative normalizes by the sum of the
    magnitudes of the three terms.  With ``specialized_power`` the weight
    N V + x . grad V is replaced by the algebraically equal (N + beta) V,
    valid for the pure power potential c |x|^beta.
    """
    dim = spec.dim
    if specialized_power:
        pot = spec.potential
        if not isinstance(pot, PowerPotential) or pot.v0 != 0.0:
            raise ValueError("specialized form requires a pure power potential")
        weight = (dim + pot.beta) * spec.v_values
    else:
        weight = dim * spec.v_values + spec.potential.x_dot_grad(spec.grid)

    term_grad = 0.5 * (dim - 2.0) * grad_sq_integral(u)
    term_pot = 0.5 * integrate_values(spec.grid, weight * u.values**2)
    term_nonlocal = (dim + spec.alpha) / (2.0 * spec.p) * g_p(spec, u)
    absolute = term_grad + term_pot - term_nonlocal
    denom = abs(term_grad) + abs(term_pot) + abs(term_nonlocal)
    if denom == 0.0:
        return 0.0, 0.0
    return absolute, abs(absolute) / denom


def embedding_ratio(spec: ProblemSpec, u: ScalarField, gamma: float) -> float:
    """Per-function lower bound on the weighted-embedding constant:
    int |x|^gamma u^2 / (int |grad u|^2 + V u^2)."""
    denom = norm_v_sq(spec, u)
    if denom == 0.0:
        raise ValueError("embedding_ratio requires a nonzero field")
    return weighted_l2(u, gamma) / denom


def default_bump_profile(r: np.ndarray) -> np.ndarray:
    """C^1 radial bump (1 - r^2)^2 supported on r <= 1."""
    r = np.asarray(r, dtype=float)
    w = np.maximum(1.0 - r * r, 0.0)
    return w * w


def _as_point(a, dim: int) -> np.ndarray:
    pt = np.atleast_1d(np.asarray(a, dtype=float))
    if pt.shape != (dim,):
        raise ValueError(f"point must have {dim} coordinates, got {pt.shape}")
    return pt


def construct_bumps(
    grid: Grid,
    a_pos,
    a_neg,
    sigma: float,
    profile: Callable[[np.ndarray], np.ndarray] | None = None,
) -> ScalarField:
    """Two-translate field U((x - a_pos)/sigma) - U((x - a_neg)/sigma).

    The profile must be radial, nonnegative and supported in the unit ball;
    the two translates must be disjoint (sigma < |a_pos - a_neg| / 2) and
    must fit inside the box.  The positive and negative parts of the result
    are then exactly the two translates, which makes the field a valid seed
    for sign-changing solves.
    """
    if profile is None:
        profile = default_bump_profile
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    pa = _as_point(a_pos, grid.dim)
    pb = _as_point(a_neg, grid.dim)
    separation = float(np.linalg.norm(pa - pb))
    if not sigma < separation / 2.0:
        raise ValueError("bump supports overlap: require sigma < |a_pos - a_neg| / 2")
    for pt in (pa, pb):
        if np.any(np.abs(pt) + sigma > grid.half_width):
            raise ValueError("bump leaves the box")
    coords = grid.meshgrid()
    out = np.zeros(grid.shape)
    for pt, sign in ((pa, 1.0), (pb, -1.0)):
        r2 = np.zeros(grid.shape)
        for axis in range(grid.dim):
            d = coords[axis] - pt[axis]
            r2 += d * d
        out += sign * profile(np.sqrt(r2) / sigma)
    return ScalarField(grid, out)


def cramer_ratios(spec: ProblemSpec, u_pos: ScalarField, u_neg: ScalarField) -> tuple[float, float, float]:
    """The three ratios whose chain ordering guarantees a positive solution
    of the quadratic nodal system:

        b_pn / b_nn  <  ||u+||_V^2 / ||u-||_V^2  <  b_pp / b_pn

    with b the I_alpha quadratic form of the densities |u+|^p, |u-|^p.
    As the bumps of a two-translate field shrink, the left ratio tends to 0
    and the right one diverges, so the chain always holds eventually.
    """
    dens_pos = ScalarField(spec.grid, power_density(u_pos.values, spec.p))
    dens_neg = ScalarField(spec.grid, power_density(u_neg.values, spec.p))
    conv_pos = convolve(spec.kernel, dens_pos)
    b_pp = integrate_values(spec.grid, conv_pos.values * dens_pos.values)
    b_pn = integrate_values(spec.grid, conv_pos.values * dens_neg.values)
    conv_neg = convolve(spec.kernel, dens_neg)
    b_nn = integrate_values(spec.grid, conv_neg.values * dens_neg.values)
    return b_pn / b_nn, norm_v_sq(spec, u_pos) / norm_v_sq(spec, u_neg), b_pp / b_pn


def _potential_at_points(potential: Potential, pts: np.ndarray) -> np.ndarray:
    """Potential values at arbitrary points, shape (n, dim)."""
    if isinstance(potential, PowerPotential):
        return potential.values_at(np.linalg.norm(pts, axis=-1))
    grid = potential.field.grid
    axes = [grid.axis_coords()] * grid.dim
    interp = RegularGridInterpolator(axes, potential.field.values, bounds_error=False, fill_value=None)
    return interp(pts)


@dataclass(frozen=True)
class DegeneracyRow:
    sigma: float
    t: float
    s: float
    energy: float
    gap: float


@dataclass(frozen=True)
class DegeneracyTable:
    rows: list[DegeneracyRow]
    t_limit: float
    s_limit: float
    c0_reference: float
    groundstate_energy: float


def degeneracy_demo(
    spec: ProblemSpec,
    a,
    sigma_list: Sequence[float],
    profile: Callable[[np.ndarray], np.ndarray] | None = None,
    groundstate: ScalarField | None = None,
    opts=None,
    reference_points: int = 4096,
) -> DegeneracyTable:
    """Demonstrate that for 1 < p < 2 the nodal level degenerates onto the
    groundstate level.

    A groundstate u is perturbed by a shrinking negative bump
    -sigma^(2/(2-p)) psi((x-a)/sigma) centered outside the numerical support
    of u, and for each sigma the pair (t_sigma, s_sigma) scaling the two
    parts onto the nodal constraint set is computed from the stationarity
    system by damped Newton.  Because the bump integrals scale exactly with
    sigma, they are evaluated by scaling identities over a reference
    quadrature of the unit-ball profile rather than by re-sampling shrunken
    bumps on the grid (which h could never resolve); the energy gap to the
    groundstate level is then available far below grid resolution.

    Returns the table of (sigma, t, s, energy, gap); t_sigma -> 1 and
    s_sigma -> ((I_alpha * |u|^p)(a) int psi^p / int |grad psi|^2)^(1/(2-p)).
    """
    p = spec.p
    if not 1.0 < p < 2.0:
        raise ValueError("degeneracy demonstration requires 1 < p < 2")
    if profile is None:
        profile = default_bump_profile
    sigmas = [float(s) for s in sigma_list]
    if not sigmas or any(s <= 0 for s in sigmas):
        raise ValueError("sigma_list must contain positive values")
    sigma_max = max(sigmas)
    point = _as_point(a, spec.dim)
    if np.any(np.abs(point) + sigma_max > spec.grid.half_width):
        raise ValueError("perturbation bump leaves the box")

    if groundstate is None:
        from .solvers import groundstate_solve

        groundstate_report = groundstate_solve(spec, opts)
        u = groundstate_report.field
        gs_energy = groundstate_report.energy
    else:
        u = groundstate
        from .functional import energy as _energy

        gs_energy = _energy(spec, u)

    # the bump must stay clear of the thresholded support of u
    core = np.abs(u.values) > 1e-8 * np.abs(u.values).max()
    coords = spec.grid.meshgrid()
    dist2 = np.zeros(spec.grid.shape)
    for axis in range(spec.dim):
        dist2 += (coords[axis] - point[axis]) ** 2
    if core.any() and float(np.sqrt(dist2[core]).min()) <= sigma_max:
        raise ValueError("perturbation bump overlaps the groundstate support")

    # reference quadrature of the unit-ball profile on a dedicated fine grid
    m_ref = max(32, int(round(reference_points ** (1.0 / spec.dim))))
    m_ref += m_ref % 2
    ref_grid = Grid(spec.dim, 1.25, m_ref)
    psi = ScalarField(ref_grid, profile(ref_grid.radius()))
    if np.any(psi.values < 0):
        raise ValueError("profile must be nonnegative")
    psi_dens = power_density(psi.values, p)
    int_psi_p = integrate_values(ref_grid, psi_dens)
    int_psi_sq = integrate_values(ref_grid, psi.values**2)
    grad_psi_sq = grad_sq_integral(psi)
    ref_kernel = build_kernel(ref_grid, spec.alpha)
    conv_psi = convolve(ref_kernel, ScalarField(ref_grid, psi_dens))
    g_psi = integrate_values(ref_grid, conv_psi.values * psi_dens)

    # groundstate quantities and the convolution field sampled near a
    a_u = norm_v_sq(spec, u)
    g_u = g_p(spec, u)
    dens_u = ScalarField(spec.grid, power_density(u.values, p))
    conv_u = convolve(spec.kernel, dens_u)
    axes = [spec.grid.axis_coords()] * spec.dim
    conv_interp = RegularGridInterpolator(axes, conv_u.values, bounds_error=False, fill_value=None)

    ref_pts = np.stack([c.ravel() for c in ref_grid.meshgrid()], axis=-1)
    psi_dens_flat = psi_dens.ravel()
    psi_sq_flat = (psi.values**2).ravel()
    href = ref_grid.spacing**spec.dim

    t0 = (a_u / g_u) ** (1.0 / (2.0 * p - 2.0))
    conv_at_a = float(conv_interp(point[None, :])[0])
    s_limit = (conv_at_a * int_psi_p / grad_psi_sq) ** (1.0 / (2.0 - p))
    c0_ref = 0.5 * t0**2 * a_u - t0 ** (2.0 * p) * g_u / (2.0 * p)

    exp_e = spec.dim + 2.0 * p / (2.0 - p)
    exp_y = spec.alpha + 2.0 * p / (2.0 - p)

    rows = []
    for sigma in sigmas:
        pts = point[None, :] + sigma * ref_pts
        k_sigma = href * float((conv_interp(pts) * psi_dens_flat).sum())
        v_vals = _potential_at_points(spec.potential, pts)
        w_sigma = grad_psi_sq + sigma**2 * href * float((v_vals * psi_sq_flat).sum())
        x_cross = sigma**exp_e * k_sigma
        negnorm = sigma**exp_e * w_sigma
        y_self = sigma ** (exp_e + exp_y) * g_psi

        t, s = _solve_degenerate_system(p, a_u, g_u, x_cross, negnorm, y_self, t0, k_sigma, w_sigma)

        # gap assembled from small terms to dodge cancellation of O(1) energies
        dt_term = 0.5 * (t - t0) * (t + t0) * a_u
        dt_term -= t0 ** (2.0 * p) * math.expm1(2.0 * p * math.log(t / t0)) * g_u / (2.0 * p)
        gap = (
            dt_term
            + 0.5 * s**2 * negnorm
            - t**p * s**p * x_cross / p
            - s ** (2.0 * p) * y_self / (2.0 * p)
        )
        rows.append(DegeneracyRow(sigma=sigma, t=t, s=s, energy=c0_ref + gap, gap=gap))

    return DegeneracyTable(
        rows=rows, t_limit=t0, s_limit=s_limit, c0_reference=c0_ref, groundstate_energy=gs_energy
    )


def _solve_degenerate_system(
    p: float,
    a_u: float,
    g_u: float,
    x_cross: float,
    negnorm: float,
    y_self: float,
    t0: float,
    k_sigma: float,
    w_sigma: float,
) -> tuple[float, float]:
    """Damped Newton on the two stationarity equations

        t a_u - t^(2p-1) g_u - t^(p-1) s^p X = 0
        s |neg|^2 - t^p s^(p-1) X - s^(2p-1) Y = 0

    warm-started from the sigma -> 0 solution."""
    t = t0
    s = (t0**p * k_sigma / w_sigma) ** (1.0 / (2.0 - p))

    def res(tv, sv):
        r1 = tv * a_u - tv ** (2 * p - 1) * g_u - tv ** (p - 1) * sv**p * x_cross
        r2 = sv * negnorm - tv**p * sv ** (p - 1) * x_cross - sv ** (2 * p - 1) * y_self
        return np.array([r1, r2])

    r = res(t, s)
    scale = max(a_u, negnorm, 1e-300)
    for _ in range(100):
        if np.max(np.abs(r)) <= 1e-14 * scale * max(t, s, 1.0):
            break
        j11 = a_u - (2 * p - 1) * t ** (2 * p - 2) * g_u - (p - 1) * t ** (p - 2) * s**p * x_cross
        j12 = -p * t ** (p - 1) * s ** (p - 1) * x_cross
        j21 = -p * t ** (p - 1) * s ** (p - 1) * x_cross
        j22 = negnorm - (p - 1) * t**p * s ** (p - 2) * x_cross - (2 * p - 1) * s ** (2 * p - 2) * y_self
        det = j11 * j22 - j12 * j21
        if det == 0.0:
            raise RuntimeError("singular Jacobian in degeneracy system")
        dt = (-r[0] * j22 + r[1] * j12) / det
        ds = (-r[1] * j11 + r[0] * j21) / det
        step = 1.0
        for _ in range(60):
            tn, sn = t + step * dt, s + step * ds
            if tn > 0 and sn > 0:
                rn = res(tn, sn)
                if np.max(np.abs(rn)) < np.max(np.abs(r)):
                    t, s, r = tn, sn, rn
                    break
            step *= 0.5
        else:
            raise RuntimeError("Newton stalled in degeneracy system")
    else:
        raise RuntimeError("Newton failed to converge in degeneracy system")
    return float(t), float(s)
