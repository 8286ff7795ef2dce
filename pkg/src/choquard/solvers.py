"""Iterative solvers: groundstates, odd-symmetric excited states, least-energy
sign-changing solutions, and the continuation down to the quadratic exponent.

Groundstates come from minimizing the quadratic form ||u||_V^2 over the unit
level set of the nonlocal term G(u): the iteration takes a preconditioned
gradient step projected onto the tangent space of the constraint, retracts
back onto the level set by ray rescaling, and keeps iterates nonnegative.
The minimizer u_hat with ||u_hat||_V^2 = theta rescales to a solution
v = theta^(1/(2p-2)) u_hat of the full equation.

Sign-changing solutions alternate a preconditioned gradient step on the
energy with a re-projection onto the nodal constraint set (both pairings
<J'(w), w+> and <J'(w), w-> driven to zero).  The projection solves the
exact discrete stationarity conditions, including the small interface
coupling of the Dirichlet form between the positive and negative parts,
which the continuum theory drops; without it the stated constraint
tolerances are unreachable on a grid.

The preconditioner is the inverse of (-Delta_h + V + 1) (the Riesz map of
the V-inner product plus identity), applied by plain conjugate gradients;
unpreconditioned gradient flow stalls badly under stiff confining
potentials.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import analysis
from .functional import (
    ProblemSpec,
    energy,
    equation_parts,
    g_p,
    nehari_scale,
    nonlinearity,
    norm_v_sq,
    norm_v_sq_delta,
    power_density,
    relative_residual_from_parts,
)
from .grid import (
    ScalarField,
    integrate_values,
    neg_laplacian_values,
    negative_part,
    positive_part,
)
from .riesz import convolve


class NonAdmissibleError(ValueError):
    """Raised when a solve is requested outside the existence regime."""

    def __init__(self, report: analysis.AdmissibilityReport):
        super().__init__(f"spec not admissible: {report.classification}")
        self.report = report


class CramerConditionError(RuntimeError):
    """Quadratic nodal system has no positive solution for this splitting."""


class ContinuationError(RuntimeError):
    """A continuation stage failed; carries the offending stage report."""

    def __init__(self, p: float, report: "SolveReport"):
        super().__init__(f"continuation stage p={p} ended with status {report.status}")
        self.p = p
        self.report = report


@dataclass(frozen=True)
class SolverOptions:
    max_iters: int = 5000
    tol_residual: float = 1e-8
    step_policy: str = "backtracking"  # or "fixed"
    tau: float = 1.0
    preconditioner: str = "sobolev"  # or "none"
    cg_tol: float = 1e-10
    cg_max_iters: int = 1500
    seed: int = 0
    sign_floor: float = 1e-6

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if not self.tol_residual > 0:
            raise ValueError("tol_residual must be positive")
        if self.step_policy not in ("fixed", "backtracking"):
            raise ValueError(f"unknown step policy {self.step_policy!r}")
        if self.preconditioner not in ("sobolev", "none"):
            raise ValueError(f"unknown preconditioner {self.preconditioner!r}")


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    energy: float
    residual_rel: float
    norm_v_pos: float
    norm_v_neg: float


@dataclass
class SolveReport:
    field: ScalarField
    p: float
    energy: float
    residual_rel: float
    pohozaev_abs: float
    pohozaev_rel: float
    iterations: int
    status: str  # converged | max_iters | sign_collapse
    theta_p: float | None = None
    norm_v_pos: float = 0.0
    norm_v_neg: float = 0.0
    trace: list[TraceRow] = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.status == "converged"


def _cg_solve(apply_op, b: np.ndarray, tol: float, max_iters: int) -> np.ndarray:
    """Conjugate gradients for an SPD operator, matrix-free."""
    x = np.zeros_like(b)
    r = b.copy()
    rs = float((r * r).sum())
    if rs == 0.0:
        return x
    d = r.copy()
    target = tol * tol * rs
    for _ in range(max_iters):
        ad = apply_op(d)
        alpha = rs / float((d * ad).sum())
        x += alpha * d
        r -= alpha * ad
        rs_new = float((r * r).sum())
        if rs_new <= target:
            break
        d = r + (rs_new / rs) * d
        rs = rs_new
    return x


def _preconditioner(spec: ProblemSpec, opts: SolverOptions):
    if opts.preconditioner == "none":
        return lambda g: g
    vp1 = spec.v_values + 1.0

    def apply_op(u: np.ndarray) -> np.ndarray:
        return neg_laplacian_values(spec.grid, u) + vp1 * u

    def solve(g: np.ndarray) -> np.ndarray:
        return _cg_solve(apply_op, g, opts.cg_tol, opts.cg_max_iters)

    return solve


def _gaussian_seed(spec: ProblemSpec, seed: int) -> np.ndarray:
    """Positive Gaussian bump with seed-dependent center jitter and width."""
    rng = np.random.default_rng(seed)
    lw = spec.grid.half_width
    center = rng.uniform(-lw / 8.0, lw / 8.0, size=spec.dim)
    width = lw / 5.0 * (1.0 + 0.3 * rng.uniform())
    r2 = np.zeros(spec.grid.shape)
    for axis, c in enumerate(spec.grid.meshgrid()):
        r2 += (c - center[axis]) ** 2
    return np.exp(-r2 / (2.0 * width**2))


def _odd_seed(spec: ProblemSpec, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    lw = spec.grid.half_width
    width = lw / 5.0 * (1.0 + 0.3 * rng.uniform())
    coords = spec.grid.meshgrid()
    r2 = np.zeros(spec.grid.shape)
    for c in coords:
        r2 += c * c
    return coords[0] / width * np.exp(-r2 / (2.0 * width**2))


def _odd_projection(values: np.ndarray) -> np.ndarray:
    return 0.5 * (values - np.flip(values, axis=0))


def _even_part_max(values: np.ndarray) -> float:
    return float(np.abs(0.5 * (values + np.flip(values, axis=0))).max())


def _check_admissible(spec: ProblemSpec, require_nodal: bool = False) -> analysis.AdmissibilityReport:
    rep = analysis.admissibility(spec.dim, spec.alpha, spec.p, spec.potential)
    if not rep.admissible:
        raise NonAdmissibleError(rep)
    if require_nodal and not rep.nodal_regime:
        raise NonAdmissibleError(rep)
    return rep


def _finish_report(
    spec: ProblemSpec,
    u: ScalarField,
    iterations: int,
    status: str,
    trace: list[TraceRow],
    theta_p: float | None = None,
) -> SolveReport:
    linear, force = equation_parts(spec, u)
    _, rel = relative_residual_from_parts(spec.grid, linear, force)
    p_abs, p_rel = analysis.pohozaev_residual(spec, u)
    return SolveReport(
        field=u,
        p=spec.p,
        energy=energy(spec, u),
        residual_rel=rel,
        pohozaev_abs=p_abs,
        pohozaev_rel=p_rel,
        iterations=iterations,
        status=status,
        theta_p=theta_p,
        norm_v_pos=math.sqrt(norm_v_sq(spec, positive_part(u))),
        norm_v_neg=math.sqrt(norm_v_sq(spec, negative_part(u))),
        trace=trace,
    )


def _normalize_constraint(spec: ProblemSpec, values: np.ndarray) -> np.ndarray:
    """Rescale onto the unit level set of G."""
    u = ScalarField(spec.grid, values)
    g = g_p(spec, u)
    if g <= 0.0:
        raise ValueError("iterate collapsed to zero while normalizing")
    return values / g ** (1.0 / (2.0 * spec.p))


def _quotient_minimize(spec: ProblemSpec, opts: SolverOptions, init: np.ndarray, postprocess):
    """Minimize ||u||_V^2 at G(u) = 1 by projected preconditioned descent.

    ``postprocess`` restores the invariant subspace after each raw step
    (absolute value for nonnegative minimization, odd projection for the
    odd-symmetric subspace).
    """
    p = spec.p
    grid = spec.grid
    precond = _preconditioner(spec, opts)
    u = _normalize_constraint(spec, postprocess(init))
    theta = norm_v_sq(spec, ScalarField(grid, u))
    tau = opts.tau
    trace: list[TraceRow] = []
    status = "max_iters"
    scale_exp = 1.0 / (2.0 * p - 2.0)
    it = 0
    for it in range(1, opts.max_iters + 1):
        uf = ScalarField(grid, u)
        dens = power_density(u, p)
        conv = convolve(spec.kernel, ScalarField(grid, dens))
        force = conv.values * nonlinearity(u, p)
        au = neg_laplacian_values(grid, u) + spec.v_values * u
        # the rescaled physical iterate v = theta^(1/(2p-2)) u has residual
        # proportional to au - theta * force, so its relative residual
        # needs no extra convolutions
        _, rel = relative_residual_from_parts(grid, au, theta * force)
        c = theta**scale_exp
        j_v = (0.5 - 0.5 / p) * theta ** (p / (p - 1.0))
        trace.append(
            TraceRow(
                iteration=it,
                energy=j_v,
                residual_rel=rel,
                norm_v_pos=c * math.sqrt(norm_v_sq(spec, positive_part(uf))),
                norm_v_neg=c * math.sqrt(norm_v_sq(spec, negative_part(uf))),
            )
        )
        if rel <= opts.tol_residual:
            status = "converged"
            break

        # preconditioned gradient of the quadratic form, projected onto the
        # tangent space of {G = 1} in the preconditioner metric
        q = precond(au)
        w = precond(force)
        denom = integrate_values(grid, force * w)
        lam = integrate_values(grid, force * q) / denom
        direction = q - lam * w

        if opts.step_policy == "fixed":
            u = _normalize_constraint(spec, postprocess(u - tau * direction))
            theta = norm_v_sq(spec, ScalarField(grid, u))
            continue

        def rel_of(values: np.ndarray, th: float) -> float:
            dens_t = power_density(values, p)
            conv_t = convolve(spec.kernel, ScalarField(grid, dens_t))
            au_t = neg_laplacian_values(grid, values) + spec.v_values * values
            return relative_residual_from_parts(
                grid, au_t, th * conv_t.values * nonlinearity(values, p)
            )[1]

        accepted = False
        for _ in range(60):
            trial = _normalize_constraint(spec, postprocess(u - tau * direction))
            # cancellation-free descent test: the direct difference of two
            # O(1) norms quantizes at machine epsilon near the minimum
            dtheta = norm_v_sq_delta(spec, ScalarField(grid, trial), uf)
            if dtheta < 0.0 or (dtheta == 0.0 and rel_of(trial, theta) < rel):
                u = trial
                theta += dtheta
                accepted = True
                tau = min(tau * 1.3, 10.0 * opts.tau)
                break
            tau *= 0.5
        if not accepted:
            break
    return u, theta, it, status, trace


def groundstate_solve(
    spec: ProblemSpec,
    opts: SolverOptions | None = None,
    init: ScalarField | None = None,
    method: str = "quotient",
) -> SolveReport:
    """Compute a positive least-energy solution.

    ``method="quotient"`` minimizes ||u||_V^2 under G(u) = 1 and rescales
    the minimizer onto the equation; ``method="nehari"`` descends the energy
    along the constraint ray (rescaling onto the Nehari set after every
    step).  Both report theta_p, the minimal squared V-norm at unit G.
    """
    opts = opts or SolverOptions()
    _check_admissible(spec)
    if init is not None:
        if not np.any(init.values):
            raise ValueError("init must be nonzero")
        start = init.values.copy()
    else:
        start = _gaussian_seed(spec, opts.seed)

    if method == "quotient":
        u, theta, iters, status, trace = _quotient_minimize(spec, opts, start, np.abs)
        v = ScalarField(spec.grid, theta ** (1.0 / (2.0 * spec.p - 2.0)) * u)
        return _finish_report(spec, v, iters, status, trace, theta_p=theta)
    if method == "nehari":
        return _nehari_ray_solve(spec, opts, start)
    raise ValueError(f"unknown method {method!r}")


def _nehari_ray_solve(spec: ProblemSpec, opts: SolverOptions, init: np.ndarray) -> SolveReport:
    grid = spec.grid
    p = spec.p
    precond = _preconditioner(spec, opts)

    def to_ray(values: np.ndarray) -> ScalarField:
        f = ScalarField(grid, values)
        t = nehari_scale(spec, f)
        return ScalarField(grid, t * values)

    u = to_ray(np.abs(init))
    j_cur = (0.5 - 0.5 / p) * norm_v_sq(spec, u)
    tau = opts.tau
    trace: list[TraceRow] = []
    status = "max_iters"
    it = 0
    for it in range(1, opts.max_iters + 1):
        linear, force = equation_parts(spec, u)
        _, rel = relative_residual_from_parts(grid, linear, force)
        trace.append(
            TraceRow(
                iteration=it,
                energy=j_cur,
                residual_rel=rel,
                norm_v_pos=math.sqrt(norm_v_sq(spec, positive_part(u))),
                norm_v_neg=math.sqrt(norm_v_sq(spec, negative_part(u))),
            )
        )
        if rel <= opts.tol_residual:
            status = "converged"
            break
        direction = precond(linear - force)
        if opts.step_policy == "fixed":
            u = to_ray(np.abs(u.values - tau * direction))
            j_cur = (0.5 - 0.5 / p) * norm_v_sq(spec, u)
            continue
        accepted = False
        for _ in range(60):
            trial = to_ray(np.abs(u.values - tau * direction))
            dj = (0.5 - 0.5 / p) * norm_v_sq_delta(spec, trial, u)
            take = dj < 0.0
            if not take and dj == 0.0:
                linear_t, force_t = equation_parts(spec, trial)
                take = relative_residual_from_parts(grid, linear_t, force_t)[1] < rel
            if take:
                u = trial
                j_cur += dj
                accepted = True
                tau = min(tau * 1.3, 10.0 * opts.tau)
                break
            tau *= 0.5
        if not accepted:
            break
    theta = (j_cur / (0.5 - 0.5 / p)) ** ((p - 1.0) / p)
    return _finish_report(spec, u, it, status, trace, theta_p=theta)


def symmetric_solve(
    spec: ProblemSpec,
    symmetry: str = "odd-x1",
    opts: SolverOptions | None = None,
    init: ScalarField | None = None,
) -> SolveReport:
    """Critical point constrained to the subspace of fields odd in x_1.

    Requires V even in x_1 (true for every radial power potential); every
    operator in the iteration commutes with the reflection, so the odd
    subspace is invariant and its constrained minimizer is a genuine
    critical point of the full energy.  Its energy strictly exceeds the
    groundstate energy.
    """
    if symmetry != "odd-x1":
        raise ValueError(f"unsupported symmetry {symmetry!r}")
    opts = opts or SolverOptions()
    _check_admissible(spec)
    v = spec.v_values
    if float(np.abs(v - np.flip(v, axis=0)).max()) > 1e-12 * max(float(np.abs(v).max()), 1.0):
        raise ValueError("potential must be even in x_1 for the odd-symmetric solve")
    if init is not None:
        start = _odd_projection(init.values)
        if not np.any(start):
            raise ValueError("init has no odd component")
    else:
        start = _odd_seed(spec, opts.seed)
    u, theta, iters, status, trace = _quotient_minimize(spec, opts, start, _odd_projection)
    w = ScalarField(spec.grid, theta ** (1.0 / (2.0 * spec.p - 2.0)) * u)
    return _finish_report(spec, w, iters, status, trace, theta_p=theta)


@dataclass(frozen=True)
class _NodalSystem:
    """Scalar data of the exact discrete two-ray stationarity problem."""

    p: float
    a_pos: float
    a_neg: float
    cross: float  # discrete interface coupling <u+, u->_V (zero in the continuum)
    b_pp: float
    b_pn: float
    b_nn: float

    def constraint_residuals(self, tbar: float, sbar: float) -> tuple[float, float]:
        """(<J'(w), w+>, <J'(w), w->) for w = tbar u+ + sbar u-."""
        p = self.p
        r1 = (
            tbar**2 * self.a_pos
            + tbar * sbar * self.cross
            - tbar ** (2 * p) * self.b_pp
            - tbar**p * sbar**p * self.b_pn
        )
        r2 = (
            sbar**2 * self.a_neg
            + tbar * sbar * self.cross
            - sbar ** (2 * p) * self.b_nn
            - tbar**p * sbar**p * self.b_pn
        )
        return r1, r2

    def energy(self, tbar: float, sbar: float) -> float:
        p = self.p
        quad = (
            tbar ** (2 * p) * self.b_pp
            + 2.0 * tbar**p * sbar**p * self.b_pn
            + sbar ** (2 * p) * self.b_nn
        )
        return (
            0.5 * (tbar**2 * self.a_pos + sbar**2 * self.a_neg)
            + tbar * sbar * self.cross
            - quad / (2.0 * p)
        )


def _build_nodal_system(spec: ProblemSpec, u_pos: ScalarField, u_neg: ScalarField) -> _NodalSystem:
    grid = spec.grid
    dens_pos = power_density(u_pos.values, spec.p)
    dens_neg = power_density(u_neg.values, spec.p)
    conv_pos = convolve(spec.kernel, ScalarField(grid, dens_pos))
    conv_neg = convolve(spec.kernel, ScalarField(grid, dens_neg))
    cross = integrate_values(
        grid, neg_laplacian_values(grid, u_pos.values) * u_neg.values
    ) + integrate_values(grid, spec.v_values * u_pos.values * u_neg.values)
    return _NodalSystem(
        p=spec.p,
        a_pos=norm_v_sq(spec, u_pos),
        a_neg=norm_v_sq(spec, u_neg),
        cross=cross,
        b_pp=integrate_values(grid, conv_pos.values * dens_pos),
        b_pn=integrate_values(grid, conv_pos.values * dens_neg),
        b_nn=integrate_values(grid, conv_neg.values * dens_neg),
    )


def solve_nodal_linear_system(matrix: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Cramer solve of the 2x2 quadratic-exponent nodal system.

    The unknowns are the squared scalings (t^2, s^2); a nonpositive
    component means no positive-scaling projection exists for this
    splitting and raises :class:`CramerConditionError`.
    """
    a, b = matrix[0]
    b2, c = matrix[1]
    det = a * c - b * b2
    if det == 0.0:
        raise CramerConditionError("singular nodal system")
    t2 = (rhs[0] * c - b * rhs[1]) / det
    s2 = (a * rhs[1] - rhs[0] * b2) / det
    if not (t2 > 0.0 and s2 > 0.0):
        raise CramerConditionError(
            "quadratic nodal system has no positive solution (Cramer condition fails)"
        )
    return np.array([t2, s2])


def _newton_project(system: _NodalSystem, t_init: float, s_init: float) -> tuple[float, float]:
    """Damped Newton for the stationarity of the two-ray energy in the
    (t, s) = (tbar^p, sbar^p) parameterization, where it is strictly concave."""
    p = system.p
    a1, a2, c = system.a_pos, system.a_neg, system.cross
    bpp, bpn, bnn = system.b_pp, system.b_pn, system.b_nn

    def grad(t, s):
        g1 = t ** (2.0 / p - 1.0) * a1 + t ** (1.0 / p - 1.0) * s ** (1.0 / p) * c - t * bpp - s * bpn
        g2 = s ** (2.0 / p - 1.0) * a2 + s ** (1.0 / p - 1.0) * t ** (1.0 / p) * c - s * bnn - t * bpn
        return np.array([g1, g2]) / p

    def hess(t, s):
        h11 = (2.0 / p - 1.0) * t ** (2.0 / p - 2.0) * a1
        h11 += (1.0 / p - 1.0) * t ** (1.0 / p - 2.0) * s ** (1.0 / p) * c
        h11 -= bpp
        h22 = (2.0 / p - 1.0) * s ** (2.0 / p - 2.0) * a2
        h22 += (1.0 / p - 1.0) * s ** (1.0 / p - 2.0) * t ** (1.0 / p) * c
        h22 -= bnn
        h12 = (1.0 / p) * t ** (1.0 / p - 1.0) * s ** (1.0 / p - 1.0) * c - bpn
        return np.array([[h11, h12], [h12, h22]]) / p

    t, s = t_init, s_init
    scale = max(a1, a2)
    g = grad(t, s)

    def merit(gv):
        return float(np.max(np.abs(gv)))

    for _ in range(200):
        if merit(g) <= 1e-14 * scale:
            break
        h = hess(t, s)
        det = h[0, 0] * h[1, 1] - h[0, 1] * h[1, 0]
        if det == 0.0:
            raise RuntimeError("singular Hessian in nodal projection")
        dt = (-g[0] * h[1, 1] + g[1] * h[0, 1]) / det
        ds = (-g[1] * h[0, 0] + g[0] * h[1, 0]) / det
        step = 1.0
        improved = False
        for _ in range(60):
            tn, sn = t + step * dt, s + step * ds
            if tn > 0.0 and sn > 0.0:
                gn = grad(tn, sn)
                if merit(gn) < merit(g):
                    t, s, g = tn, sn, gn
                    improved = True
                    break
            step *= 0.5
        if not improved:
            break
    if merit(g) > 1e-9 * scale:
        raise RuntimeError("nodal projection Newton did not reach tolerance")
    return t, s


def nodal_project(spec: ProblemSpec, u_pos: ScalarField, u_neg: ScalarField):
    """Scalings (tbar, sbar) putting tbar u+ + sbar u- on the nodal constraint set.

    For p > 2 the unique interior maximizer of the strictly concave two-ray
    energy is found by damped Newton; for p = 2 the quadratic system in
    (t^2, s^2) is solved first (its positivity is the Cramer condition) and
    then polished by the same Newton to absorb the discrete interface
    coupling.  Returns a :class:`~choquard.functional.NodalPair`.
    """
    from .functional import NodalPair

    if spec.p < 2.0:
        raise ValueError("nodal projection requires p >= 2")
    if not np.any(u_pos.values > 0):
        raise ValueError("positive part vanishes")
    if not np.any(u_neg.values < 0):
        raise ValueError("negative part vanishes")
    system = _build_nodal_system(spec, u_pos, u_neg)
    pair = _project_system(system)
    return NodalPair(*pair)


def _project_system(system: _NodalSystem) -> tuple[float, float]:
    p = system.p
    if p == 2.0:
        matrix = np.array([[system.b_pp, system.b_pn], [system.b_pn, system.b_nn]])
        rhs = np.array([system.a_pos, system.a_neg])
        t2, s2 = solve_nodal_linear_system(matrix, rhs)
        t_init, s_init = float(t2), float(s2)  # (t, s) = (tbar^2, sbar^2)
    else:
        t_init = (system.a_pos / system.b_pp) ** (p / (2.0 * p - 2.0))
        s_init = (system.a_neg / system.b_nn) ** (p / (2.0 * p - 2.0))
    t, s = _newton_project(system, t_init, s_init)
    return t ** (1.0 / p), s ** (1.0 / p)


def _default_nodal_init(spec: ProblemSpec) -> ScalarField:
    lw = spec.grid.half_width
    a_pos = np.zeros(spec.dim)
    a_neg = np.zeros(spec.dim)
    a_pos[0] = lw / 3.0
    a_neg[0] = -lw / 3.0
    return analysis.construct_bumps(spec.grid, a_pos, a_neg, lw / 8.0)


def nodal_solve(
    spec: ProblemSpec,
    opts: SolverOptions | None = None,
    init: ScalarField | None = None,
) -> SolveReport:
    """Least-energy sign-changing solution by projected energy descent.

    Alternates a preconditioned gradient step on the energy with the nodal
    re-projection of the stepped field.  If either signed part drops below
    the sign floor the run stops with status ``sign_collapse`` (the grid
    counterpart of the sign-change question that is delicate at p = 2).
    """
    opts = opts or SolverOptions()
    _check_admissible(spec, require_nodal=True)
    grid = spec.grid
    precond = _preconditioner(spec, opts)
    w_raw = init.values.copy() if init is not None else _default_nodal_init(spec).values
    tau = opts.tau
    trace: list[TraceRow] = []
    status = "max_iters"
    it = 0

    def split_and_project(values: np.ndarray):
        u_pos = np.maximum(values, 0.0)
        u_neg = np.minimum(values, 0.0)
        fp = ScalarField(grid, u_pos)
        fn = ScalarField(grid, u_neg)
        np_pos = math.sqrt(norm_v_sq(spec, fp))
        np_neg = math.sqrt(norm_v_sq(spec, fn))
        total = math.sqrt(norm_v_sq(spec, ScalarField(grid, values)))
        if min(np_pos, np_neg) < opts.sign_floor * total:
            return None
        system = _build_nodal_system(spec, fp, fn)
        tbar, sbar = _project_system(system)
        w = ScalarField(grid, tbar * u_pos + sbar * u_neg)
        return w, system.energy(tbar, sbar), tbar * np_pos, sbar * np_neg

    projected = split_and_project(w_raw)
    if projected is None:
        empty = ScalarField(grid, w_raw)
        return _finish_report(spec, empty, 0, "sign_collapse", [])
    w, j_cur, npos, nneg = projected

    for it in range(1, opts.max_iters + 1):
        linear, force = equation_parts(spec, w)
        _, rel = relative_residual_from_parts(grid, linear, force)
        trace.append(TraceRow(it, j_cur, rel, npos, nneg))
        if rel <= opts.tol_residual:
            status = "converged"
            break
        direction = precond(linear - force)
        if opts.step_policy == "fixed":
            nxt = split_and_project(w.values - tau * direction)
            if nxt is None:
                status = "sign_collapse"
                break
            w, j_cur, npos, nneg = nxt
            continue
        accepted = False
        collapsed = False
        for _ in range(60):
            nxt = split_and_project(w.values - tau * direction)
            if nxt is None:
                collapsed = True
                break
            w_trial, j_trial, npos_t, nneg_t = nxt
            take = j_trial < j_cur
            if not take and j_trial == j_cur:
                linear_t, force_t = equation_parts(spec, w_trial)
                take = relative_residual_from_parts(grid, linear_t, force_t)[1] < rel
            if take:
                w, j_cur, npos, nneg = w_trial, j_trial, npos_t, nneg_t
                accepted = True
                tau = min(tau * 1.3, 10.0 * opts.tau)
                break
            tau *= 0.5
        if collapsed:
            status = "sign_collapse"
            break
        if not accepted:
            break
    return _finish_report(spec, w, it, status, trace)


def continuation_p_to_2(
    spec: ProblemSpec,
    p_sequence,
    opts: SolverOptions | None = None,
) -> list[SolveReport]:
    """Warm-started nodal solves along p_n decreasing toward 2, then the
    final solve at p = 2 itself, seeded by the last iterate.

    Returns one report per stage plus the final quadratic-case report; every
    stage must converge (otherwise :class:`ContinuationError`).
    """
    opts = opts or SolverOptions()
    if spec.p != 2.0:
        raise ValueError("continuation target spec must have p = 2")
    seq = [float(q) for q in p_sequence]
    if not seq or seq[0] <= 2.0:
        raise ValueError("p_sequence must start above 2")
    if any(b >= a for a, b in zip(seq, seq[1:])):
        raise ValueError("p_sequence must be strictly decreasing")
    if seq[-1] <= 2.0:
        raise ValueError("p_sequence entries must stay above 2")

    reports: list[SolveReport] = []
    init: ScalarField | None = None
    for q in seq:
        stage = spec.with_p(q)
        rep = nodal_solve(stage, opts, init=init)
        if not rep.converged:
            raise ContinuationError(q, rep)
        reports.append(rep)
        init = rep.field
    final = nodal_solve(spec, opts, init=init)
    if not final.converged:
        raise ContinuationError(2.0, final)
    reports.append(final)
    return reports
