"""Outer iteration for the solution-dependent problem.

The solution of (dd^c u)^n = G(u, .) dλ is approached through the
one-step update map: freeze the density at the current iterate, solve the
fixed-density Dirichlet problem, optionally blend with the previous
iterate.  Because G is nondecreasing in its first argument and the
fixed-density solver is order-reversing in the data, the update map
reverses order; starting from u0 (whose density uses the maximal
extension f) the even-indexed iterates then climb and the odd-indexed
ones descend, bracketing the limit.  Both chains are recorded: on a stall
they are returned as a sub/supersolution bracket instead of a bare
failure.

The balayage step performs the classical local improvement: re-solve on a
sub-box with the current iterate as boundary data and glue, which never
decreases a subsolution.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import HypothesisViolation
from .grids import Box, Grid, ScalarField, ma_density
from .radial import RadialProfile, radial_residual, solve_radial
from .rhs import BoundRhs, bind_on_grid, bind_on_mesh
from .solvers import SolverConfig, maximal_extension, solve_ma_fixed_rhs
from .expressions import grid_env

__all__ = [
    "ProblemSpec",
    "RadialProblemSpec",
    "Solution",
    "RadialSolution",
    "OuterStep",
    "SubsolutionReport",
    "prepare",
    "initial_iterate",
    "apply_T",
    "solve_mam",
    "balayage_step",
    "subsolution_check",
]


class OuterStep(NamedTuple):
    """Per-outer-step record: how far the iterate moved and how well the
    frozen-density problem was solved."""

    change: float
    inner_residual: float
    newton_iters: int
    psh_defect: float


@dataclass(frozen=True)
class ProblemSpec:
    """Grid-mode problem: boundary data, a right-hand-side family, the
    measure density, and an optional declared subsolution seed."""

    boundary: ScalarField
    rhs: object
    w_mu: object = 1.0
    v0: ScalarField | None = None
    config: SolverConfig = field(default_factory=SolverConfig)
    theorem_mode: bool = True

    def __post_init__(self):
        grid = self.boundary.grid
        if self.theorem_mode:
            ring = ~grid.interior_mask()
            if float(self.boundary.values[ring].max()) > 0:
                raise HypothesisViolation("positive boundary data",
                                          "boundary values nonpositive")
        if self.v0 is not None and self.v0.grid != grid:
            raise ValueError("subsolution seed lives on a different grid")

    @property
    def grid(self) -> Grid:
        return self.boundary.grid


@dataclass(frozen=True)
class RadialProblemSpec:
    """Radially symmetric problem on the ball of radius R."""

    n: int
    boundary_value: float
    rhs: object
    R: float = 1.0
    mesh: int = 256
    w_mu: object = 1.0
    config: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if self.boundary_value > 0:
            raise HypothesisViolation("positive boundary data",
                                      "boundary values nonpositive")


@dataclass(frozen=True)
class SubsolutionReport:
    """Three-part membership check: density margin, domination by the
    maximal extension, and discrete psh-ness."""

    margin: float
    upper_gap: float
    psh_defect: float
    tol: float

    @property
    def ok_density(self) -> bool:
        return self.margin >= -self.tol

    @property
    def ok_upper(self) -> bool:
        return self.upper_gap <= self.tol

    @property
    def ok_psh(self) -> bool:
        return self.psh_defect <= self.tol

    @property
    def passed(self) -> bool:
        return self.ok_density and self.ok_upper and self.ok_psh


@dataclass(frozen=True)
class Solution:
    """Converged (or bracketed) outer iteration on a grid."""

    u: ScalarField
    f: ScalarField
    u0: ScalarField
    phi0: ScalarField | None
    converged: bool
    outer_iters: int
    history: tuple[OuterStep, ...]
    final_residual: float
    tol_outer_residual: float
    residual_ok: bool
    sandwich_ok: bool | None
    chains_ok: bool
    bracket_lower: ScalarField
    bracket_upper: ScalarField
    psh_defect: float
    lip_t: float


@dataclass(frozen=True)
class RadialSolution:
    """Converged (or best-effort) outer iteration on the ball."""

    profile: RadialProfile
    converged: bool
    outer_iters: int
    history: tuple[OuterStep, ...]
    final_residual: float
    tol_outer_residual: float
    residual_ok: bool
    lip_t: float


@dataclass(frozen=True)
class _Prepared:
    f: ScalarField
    phi0: ScalarField | None
    u0: ScalarField
    bound: BoundRhs
    t_lo: float
    t_hi: float
    lip_t: float
    tol_outer_residual: float


def prepare(p: ProblemSpec) -> _Prepared:
    """Solve for f and u0, bind G, and verify the standing hypotheses.

    Raises HypothesisViolation when the sampled monotonicity/positivity
    checks fail or a declared subsolution seed does not check out.
    """
    cfg = p.config
    grid = p.grid
    f = maximal_extension(p.boundary, cfg, theorem_mode=p.theorem_mode)
    bound = bind_on_grid(p.rhs, grid, p.w_mu)
    u0 = solve_ma_fixed_rhs(bound(f.values[grid.interior]), p.boundary,
                            cfg).u

    phi0 = None
    if p.v0 is not None:
        phi0 = ScalarField(grid, p.v0.values + f.values)

    t_lo = float(u0.values.min())
    if phi0 is not None:
        t_lo = min(t_lo, float(phi0.values.min()))
    t_lo -= 1.0
    t_hi = max(0.0, float(f.values.max()))
    lip = bound.validate(t_lo, t_hi)
    tol_res = 10.0 * max(cfg.tol_inner, cfg.tol_outer * lip)

    if p.v0 is not None:
        rep = subsolution_check(p.v0, p, f=f)
        if not rep.passed:
            raise HypothesisViolation(
                f"declared subsolution seed fails its check "
                f"(margin {rep.margin:.3e}, above-f gap {rep.upper_gap:.3e}, "
                f"psh defect {rep.psh_defect:.3e}, tol {rep.tol:.3e})",
                "v0 is a subsolution")
    return _Prepared(f, phi0, u0, bound, t_lo, t_hi, lip, tol_res)


def initial_iterate(p: ProblemSpec, f: ScalarField | None = None
                    ) -> ScalarField:
    """First iterate: solve with the density frozen at the maximal
    extension, which produces a function below f and below the limit."""
    cfg = p.config
    if f is None:
        f = maximal_extension(p.boundary, cfg, theorem_mode=p.theorem_mode)
    bound = bind_on_grid(p.rhs, p.grid, p.w_mu)
    return solve_ma_fixed_rhs(bound(f.values[p.grid.interior]), p.boundary,
                              cfg).u


def apply_T(u: ScalarField, p: ProblemSpec,
            init: ScalarField | None = None,
            band: tuple[ScalarField, ScalarField] | None = None
            ) -> ScalarField:
    """One step of the outer update: solve with density G(u, .).

    Order-reversing: pointwise-larger input produces pointwise-smaller
    output (within solver slack).  band, when given as (phi0, f), triggers
    an advisory warning if u leaves the interval the iterates are expected
    to stay inside.
    """
    if band is not None:
        lo, hi = band
        slack = 2.0 * p.config.tol_inner
        if (float((lo.values - u.values).max()) > slack
                or float((u.values - hi.values).max()) > slack):
            warnings.warn("iterate leaves the [phi0, f] band")
    bound = bind_on_grid(p.rhs, p.grid, p.w_mu)
    dens = bound(u.values[p.grid.interior])
    return solve_ma_fixed_rhs(dens, p.boundary, p.config, init=init).u


def _picard(grid: Grid, bound: BoundRhs, boundary: ScalarField,
            cfg: SolverConfig, tol_outer: float, max_outer: int,
            u0: ScalarField):
    """Damped fixed-point loop with even/odd chain accounting.

    Returns (u, converged, steps, history, lower_env, upper_env,
    chains_ok).  Envelopes are full-shape arrays: the running max of even
    iterates (a climbing subsolution chain) and min of odd iterates.
    """
    slack = 2.0 * cfg.tol_inner
    u_cur = u0
    last_by_parity = {0: np.array(u0.values), 1: None}
    lower_env = np.array(u0.values)
    upper_env = None
    chains_ok = True
    history = []
    converged = False
    steps = 0
    for k in range(1, max_outer + 1):
        dens = bound(u_cur.values[grid.interior])
        warm = last_by_parity[k % 2]
        init = ScalarField(grid, warm) if warm is not None else u_cur
        res = solve_ma_fixed_rhs(dens, boundary, cfg, init=init)
        if cfg.theta == 1.0:
            new_vals = np.array(res.u.values)
        else:
            new_vals = u_cur.values + cfg.theta * (res.u.values
                                                   - u_cur.values)
        change = float(np.abs(new_vals - u_cur.values).max())
        parity = k % 2
        prev = last_by_parity[parity]
        if parity == 1:
            if prev is not None and float((new_vals - prev).max()) > slack:
                chains_ok = False
            if upper_env is None:
                upper_env = np.array(new_vals)
            else:
                np.minimum(upper_env, new_vals, out=upper_env)
            # every even iterate so far must sit below this odd iterate
            if float((lower_env - new_vals).max()) > slack:
                chains_ok = False
        else:
            if prev is not None and float((prev - new_vals).max()) > slack:
                chains_ok = False
            np.maximum(lower_env, new_vals, out=lower_env)
        last_by_parity[parity] = np.array(new_vals)
        history.append(OuterStep(change, res.residual, res.newton_iters,
                                 res.psh_defect))
        u_cur = ScalarField(grid, new_vals)
        steps = k
        if change < tol_outer:
            converged = True
            break
    if upper_env is None:
        upper_env = np.array(u_cur.values)
    return u_cur, converged, steps, history, lower_env, upper_env, chains_ok


def solve_mam(p, tol_outer: float | None = None,
              max_outer: int | None = None,
              init: ScalarField | None = None):
    """Outer iteration to the solution of the solution-dependent problem.

    Accepts a ProblemSpec (grid) or RadialProblemSpec (ball).  Stops when
    successive iterates move less than tol_outer in sup norm; on a stall
    the returned record still carries the even/odd envelopes as a
    certified bracket.  `init` overrides the default starting iterate
    (grid problems only); its interior is taken as-is and the boundary
    ring is replaced by the problem's boundary data.
    """
    if isinstance(p, RadialProblemSpec):
        if init is not None:
            raise ValueError("explicit initialization is grid-only")
        return _solve_mam_radial(p, tol_outer, max_outer)
    cfg = p.config
    tol_outer = cfg.tol_outer if tol_outer is None else tol_outer
    max_outer = cfg.max_outer if max_outer is None else max_outer
    prep = prepare(p)
    grid = p.grid

    if init is None:
        start = prep.u0
    else:
        vals = np.array(p.boundary.values)
        vals[grid.interior] = init.values[grid.interior]
        start = ScalarField(grid, vals)

    u, converged, steps, history, lower_env, upper_env, chains_ok = _picard(
        grid, prep.bound, p.boundary, cfg, tol_outer, max_outer, start)

    dens, defect = ma_density(u)
    final_residual = float(np.abs(
        dens.values - prep.bound(u.values[grid.interior])).max())
    residual_ok = bool(final_residual <= prep.tol_outer_residual)

    sandwich_ok = None
    if prep.phi0 is not None:
        slack = 2.0 * cfg.tol_inner
        sandwich_ok = bool(
            np.all(prep.phi0.values <= u.values + slack)
            and np.all(u.values <= prep.f.values + slack))

    return Solution(
        u=u, f=prep.f, u0=start, phi0=prep.phi0, converged=converged,
        outer_iters=steps, history=tuple(history),
        final_residual=final_residual,
        tol_outer_residual=prep.tol_outer_residual, residual_ok=residual_ok,
        sandwich_ok=sandwich_ok, chains_ok=chains_ok,
        bracket_lower=ScalarField(grid, lower_env),
        bracket_upper=ScalarField(grid, upper_env),
        psh_defect=defect, lip_t=prep.lip_t)


def _solve_mam_radial(p: RadialProblemSpec, tol_outer, max_outer):
    cfg = p.config
    tol_outer = cfg.tol_outer if tol_outer is None else tol_outer
    max_outer = cfg.max_outer if max_outer is None else max_outer
    r = np.linspace(0.0, p.R, p.mesh + 1)
    bound = bind_on_mesh(p.rhs, r[:-1], p.w_mu)

    # the radial maximal extension of constant boundary data is constant
    f_nodes = np.full(p.mesh, p.boundary_value)
    dens0 = bound(f_nodes)
    prof = solve_radial(p.n, lambda v, rr: dens0, p.boundary_value, p.R,
                        p.mesh, cfg)

    t_lo = float(prof.values.min()) - 1.0
    lip = bound.validate(t_lo, 0.0)
    tol_res = 10.0 * max(cfg.tol_inner, cfg.tol_outer * lip)

    history = []
    converged = False
    steps = 0
    last_by_parity = {0: np.array(prof.values), 1: None}
    for k in range(1, max_outer + 1):
        dens = bound(prof.values[:-1])
        warm = last_by_parity[k % 2]
        nxt = solve_radial(p.n, lambda v, rr: dens, p.boundary_value, p.R,
                           p.mesh, cfg, init=warm)
        if cfg.theta == 1.0:
            new_vals = np.array(nxt.values)
        else:
            new_vals = prof.values + cfg.theta * (nxt.values - prof.values)
        change = float(np.abs(new_vals - prof.values).max())
        last_by_parity[k % 2] = np.array(new_vals)
        vprime = np.gradient(new_vals, p.R / p.mesh)
        prof = RadialProfile(r=np.array(r), values=new_vals,
                             residual=nxt.residual,
                             newton_iters=nxt.newton_iters,
                             vprime_min=float(vprime.min()))
        history.append(OuterStep(change, nxt.residual, nxt.newton_iters,
                                 max(0.0, -prof.vprime_min)))
        steps = k
        if change < tol_outer:
            converged = True
            break

    final_residual = radial_residual(
        p.n, prof.values, p.R, lambda v, rr: bound(v))
    return RadialSolution(profile=prof, converged=converged,
                          outer_iters=steps, history=tuple(history),
                          final_residual=final_residual,
                          tol_outer_residual=tol_res,
                          residual_ok=bool(final_residual <= tol_res),
                          lip_t=lip)


def subsolution_check(u: ScalarField, p: ProblemSpec,
                      tol: float | None = None,
                      f: ScalarField | None = None) -> SubsolutionReport:
    """Membership check: density dominates G(u, .), u sits below f, and u
    is discretely psh, all within tol (default 10 h^2 (1 + max G))."""
    grid = p.grid
    if u.grid != grid:
        raise ValueError("field lives on a different grid")
    if f is None:
        f = maximal_extension(p.boundary, p.config,
                              theorem_mode=p.theorem_mode)
    bound = bind_on_grid(p.rhs, grid, p.w_mu)
    g_at_u = bound(u.values[grid.interior])
    dens, defect = ma_density(u)
    margin = float((dens.values - g_at_u).min())
    upper_gap = float((u.values - f.values).max())
    if tol is None:
        h = max(grid.spacing)
        tol = 10.0 * h ** 2 * (1.0 + float(g_at_u.max()))
    return SubsolutionReport(margin=margin, upper_gap=upper_gap,
                             psh_defect=defect, tol=float(tol))


def balayage_step(u: ScalarField, sub, p: ProblemSpec,
                  f: ScalarField | None = None,
                  check_input: bool = True) -> ScalarField:
    """Local improvement: re-solve on a sub-box and glue.

    sub gives per-real-axis node index windows (start, stop), stop
    exclusive, each window at least 5 nodes and at least 2 cells from the
    domain boundary.  The sub-box problem takes u as boundary data and is
    run through the same outer iteration; the glued result dominates u
    wherever u was a subsolution.
    """
    grid = u.grid
    cfg = p.config
    if len(sub) != 2 * grid.n:
        raise ValueError(f"need {2 * grid.n} index windows")
    windows = []
    for a, (start, stop) in enumerate(sub):
        start, stop = int(start), int(stop)
        if stop - start < 5:
            raise ValueError("sub-box needs at least 5 nodes per axis")
        if start < 2 or stop > grid.resolution[a] - 2:
            raise ValueError("sub-box must keep at least 2 cells of margin "
                             "to the domain boundary")
        windows.append((start, stop))

    if check_input:
        rep = subsolution_check(u, p, f=f)
        if not rep.passed:
            raise HypothesisViolation(
                f"balayage input fails the subsolution check "
                f"(margin {rep.margin:.3e}, tol {rep.tol:.3e})",
                "balayage starts from a subsolution")

    lo = tuple(grid.axes[a][w[0]] for a, w in enumerate(windows))
    hi = tuple(grid.axes[a][w[1] - 1] for a, w in enumerate(windows))
    local_grid = Grid(Box(lo, hi),
                      tuple(w[1] - w[0] for w in windows))
    block = tuple(slice(w[0], w[1]) for w in windows)
    local_boundary = ScalarField(local_grid, np.array(u.values[block]))

    parent_bound = bind_on_grid(p.rhs, grid, p.w_mu)
    # parent interior index of node j is j-1; the local interior covers
    # parent nodes start+1 .. stop-2
    interior_slices = tuple(slice(w[0], w[1] - 2) for w in windows)
    env = None
    if parent_bound._expr is not None:
        env = grid_env(local_grid, interior=True)
    local_bound = parent_bound.restricted(interior_slices, env=env)

    # the local maximal extension and initial iterate mirror the global
    # construction with u's restriction as data
    f_local = maximal_extension(local_boundary, cfg, theorem_mode=False)
    u0_local = solve_ma_fixed_rhs(
        local_bound(f_local.values[local_grid.interior]), local_boundary,
        cfg).u
    t_lo = float(u0_local.values.min()) - 1.0
    local_bound.validate(t_lo, max(0.0, float(f_local.values.max())))

    local_u, conv, _, _, _, _, _ = _picard(
        local_grid, local_bound, local_boundary, cfg, cfg.tol_outer,
        cfg.max_outer, u0_local)
    if not conv:
        warnings.warn("local balayage solve did not meet the outer "
                      "tolerance; returning the glued best iterate")

    glued = np.array(u.values)
    inner_block = tuple(slice(w[0] + 1, w[1] - 1) for w in windows)
    glued[inner_block] = local_u.values[local_grid.interior]
    return ScalarField(grid, glued)
