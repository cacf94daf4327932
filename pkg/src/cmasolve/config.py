"""Run configuration: a JSON schema assembled into problem objects.

A config is one JSON object; expressions are strings in the embedded
arithmetic language (coordinates x1..yn, r2, and t inside right-hand
sides).  load_config validates structure early so a malformed file
fails before any solve starts, and RunConfig.build_problem assembles
the ProblemSpec or RadialProblemSpec the subcommands run on.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

import numpy as np

from .expressions import evaluate_on_grid, parse_expression, radial_env
from .grids import Box, ScalarField, build_grid
from .iteration import ProblemSpec, RadialProblemSpec
from .rhs import ConstantRhs, ExponentialRhs, ExpressionRhs, PowerPlusRhs
from .solvers import SolverConfig

__all__ = ["ConfigError", "RunConfig", "load_config"]

_TOP_KEYS = {
    "n", "domain", "resolution", "boundary", "rhs", "mu_density",
    "subsolution_seed", "theorem_mode", "solver", "outputs", "rng_seed",
    "study", "verify",
}
_SOLVER_KEYS = {f.name for f in dataclasses.fields(SolverConfig)}
_OUTPUT_KEYS = {"field_csv", "field_bin", "study_csv"}
_STUDY_KEYS = {"resolutions", "exact", "perturbations"}
_VERIFY_KEYS = {"eps", "pairs"}
_FAMILY_KEYS = {
    "constant": {"family", "weight"},
    "exponential": {"family", "kappa", "weight"},
    "power_plus": {"family", "p", "c", "weight"},
}


class ConfigError(ValueError):
    """A structurally invalid or inconsistent run configuration."""


def _require(cond: bool, message: str):
    if not cond:
        raise ConfigError(message)


def _check_keys(d: dict, allowed: set, where: str):
    unknown = set(d) - allowed
    _require(not unknown,
             f"unknown {where} key(s): {', '.join(sorted(unknown))}")


@dataclass(frozen=True)
class RunConfig:
    """Validated contents of one JSON run configuration."""

    n: int
    domain_kind: str              # "box" or "ball"
    box: Box | None
    radius: float | None
    resolution: int
    boundary_src: object          # expression string or number
    rhs_spec: dict
    mu_src: object
    seed_src: str | None
    theorem_mode: bool
    solver: SolverConfig
    outputs: dict
    rng_seed: int
    study: dict
    verify: dict

    # -- problem assembly -------------------------------------------------

    def _grid_weight(self, src, grid):
        """Spatial weight on interior nodes from a number or expression."""
        if isinstance(src, str):
            expr = parse_expression(src, self.n, context="spatial")
            return evaluate_on_grid(expr, grid, interior=True)
        return float(src)

    def _mesh_weight(self, src):
        """Spatial weight for the radial mesh: number or callable of r."""
        if isinstance(src, str):
            expr = parse_expression(src, 1, context="spatial")
            extra = expr.variables - {"r2"}
            _require(not extra, "radial spatial expressions may use only "
                     f"r2 (got {', '.join(sorted(extra))})")
            return lambda r: np.asarray(expr(radial_env(r)), dtype=float)
        return float(src)

    def _family(self, weight):
        spec = self.rhs_spec
        if "expression" in spec:
            return ExpressionRhs(spec["expression"])
        tag = spec["family"]
        if tag == "constant":
            return ConstantRhs(weight)
        if tag == "exponential":
            return ExponentialRhs(float(spec.get("kappa", 1.0)), weight)
        return PowerPlusRhs(float(spec.get("p", 1.0)),
                            float(spec.get("c", 0.0)), weight)

    def build_problem(self, resolution: int | None = None):
        """Assemble the ProblemSpec or RadialProblemSpec to run."""
        res = self.resolution if resolution is None else int(resolution)
        if self.domain_kind == "ball":
            weight = self._mesh_weight(self.rhs_spec.get("weight", 1.0))
            mu = self._mesh_weight(self.mu_src)
            if isinstance(self.boundary_src, str):
                expr = parse_expression(self.boundary_src, 1,
                                        context="spatial")
                extra = expr.variables - {"r2"}
                _require(not extra, "radial boundary expressions may use "
                         f"only r2 (got {', '.join(sorted(extra))})")
                bval = float(expr({"r2": self.radius ** 2}))
            else:
                bval = float(self.boundary_src)
            return RadialProblemSpec(
                n=self.n, boundary_value=bval, rhs=self._family(weight),
                R=self.radius, mesh=res, w_mu=mu, config=self.solver)

        grid = build_grid(self.box, res)
        weight = self._grid_weight(self.rhs_spec.get("weight", 1.0), grid)
        mu = self._grid_weight(self.mu_src, grid)
        if isinstance(self.boundary_src, str):
            expr = parse_expression(self.boundary_src, self.n,
                                    context="spatial")
            bvals = evaluate_on_grid(expr, grid)
        else:
            bvals = np.full(grid.shape, float(self.boundary_src))
        boundary = ScalarField(grid, bvals)
        v0 = None
        if self.seed_src is not None:
            seed_expr = parse_expression(self.seed_src, self.n,
                                         context="spatial")
            v0 = ScalarField(grid, evaluate_on_grid(seed_expr, grid))
        return ProblemSpec(boundary=boundary, rhs=self._family(weight),
                           w_mu=mu, v0=v0, config=self.solver,
                           theorem_mode=self.theorem_mode)

    def exact_values(self, problem):
        """Nodal values of the study's exact-solution expression."""
        src = self.study.get("exact")
        _require(src is not None,
                 "convergence studies need study.exact in the config")
        if isinstance(problem, RadialProblemSpec):
            expr = parse_expression(src, 1, context="spatial")
            extra = expr.variables - {"r2"}
            _require(not extra, "radial exact expressions may use only r2 "
                     f"(got {', '.join(sorted(extra))})")
            r = np.linspace(0.0, problem.R, problem.mesh + 1)
            return np.asarray(expr(radial_env(r)), dtype=float)
        expr = parse_expression(src, self.n, context="spatial")
        return evaluate_on_grid(expr, problem.grid)


def _parse_domain(raw: dict, n: int):
    _require(isinstance(raw, dict) and len(raw) == 1
             and next(iter(raw)) in ("box", "ball"),
             "domain must be {\"box\": {...}} or {\"ball\": {...}}")
    kind = next(iter(raw))
    body = raw[kind]
    if kind == "ball":
        _check_keys(body, {"radius"}, "domain.ball")
        radius = float(body.get("radius", 1.0))
        _require(radius > 0, "ball radius must be positive")
        return kind, None, radius
    _check_keys(body, {"lo", "hi"}, "domain.box")
    lo = tuple(float(v) for v in body["lo"])
    hi = tuple(float(v) for v in body["hi"])
    _require(len(lo) == 2 * n and len(hi) == 2 * n,
             f"box corners need {2 * n} coordinates for n = {n}")
    _require(all(a < b for a, b in zip(lo, hi)),
             "box corners must satisfy lo < hi per axis")
    return kind, Box(lo=lo, hi=hi), None


def _parse_rhs(raw: dict) -> dict:
    _require(isinstance(raw, dict), "rhs must be an object")
    if "expression" in raw:
        _check_keys(raw, {"expression"}, "rhs")
        _require(isinstance(raw["expression"], str),
                 "rhs.expression must be a string")
        return dict(raw)
    tag = raw.get("family")
    _require(tag in _FAMILY_KEYS,
             "rhs needs either an expression or a family tag among "
             + ", ".join(sorted(_FAMILY_KEYS)))
    _check_keys(raw, _FAMILY_KEYS[tag], f"rhs ({tag})")
    return dict(raw)


def _parse_solver(raw: dict) -> SolverConfig:
    _check_keys(raw, _SOLVER_KEYS, "solver")
    kwargs = dict(raw)
    if "reg_ladder" in kwargs:
        kwargs["reg_ladder"] = tuple(float(v) for v in kwargs["reg_ladder"])
    return SolverConfig(**kwargs)


def load_config(path) -> RunConfig:
    """Read and validate one JSON run configuration."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    _require(isinstance(raw, dict), "config root must be a JSON object")
    _check_keys(raw, _TOP_KEYS, "config")
    for key in ("n", "domain", "resolution", "boundary", "rhs"):
        _require(key in raw, f"config is missing required key: {key}")

    n = int(raw["n"])
    _require(1 <= n <= 4, "n must be between 1 and 4")
    kind, box, radius = _parse_domain(raw["domain"], n)
    _require(kind == "ball" or n <= 2,
             "box domains support n in {1, 2}; use a ball for higher n")
    resolution = int(raw["resolution"])
    _require(resolution >= 3, "resolution must be at least 3")

    boundary = raw["boundary"]
    _require(isinstance(boundary, (str, int, float)),
             "boundary must be an expression string or a number")
    rhs_spec = _parse_rhs(raw["rhs"])
    mu = raw.get("mu_density", 1.0)
    _require(isinstance(mu, (str, int, float)),
             "mu_density must be an expression string or a number")
    seed = raw.get("subsolution_seed")
    _require(seed is None or isinstance(seed, str),
             "subsolution_seed must be an expression string")
    _require(seed is None or kind == "box",
             "subsolution_seed applies to box domains only")

    solver = _parse_solver(raw.get("solver", {}))
    outputs = dict(raw.get("outputs", {}))
    _check_keys(outputs, _OUTPUT_KEYS, "outputs")
    study = dict(raw.get("study", {}))
    _check_keys(study, _STUDY_KEYS, "study")
    verify = dict(raw.get("verify", {}))
    _check_keys(verify, _VERIFY_KEYS, "verify")

    return RunConfig(
        n=n, domain_kind=kind, box=box, radius=radius,
        resolution=resolution, boundary_src=boundary, rhs_spec=rhs_spec,
        mu_src=mu, seed_src=seed,
        theorem_mode=bool(raw.get("theorem_mode", True)),
        solver=solver, outputs=outputs,
        rng_seed=int(raw.get("rng_seed", 0)), study=study, verify=verify)
