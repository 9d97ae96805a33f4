"""Cone-program builder with a fixed atom vocabulary and one solve contract.

Subproblem builders elsewhere in the package never talk to a numerical
solver directly; they assemble a :class:`ConvexProgram` out of the atoms
below and call :meth:`ConvexProgram.solve`.  The vocabulary is deliberately
small:

* affine equality / inequality,
* second-order cone  ``||affine|| <= affine``,
* quadratic-over-linear  ``||affine||^2 / affine <= affine``,
* inverse  ``1/x <= affine``  (x > 0),
* power ratio  ``x^3 / y^2 <= affine``  (x, y > 0),
* even powers  ``x^2 <= affine``  and  ``x^4 <= affine``,

with a linear objective.  Anything else (bilinear products in particular) is
rejected at build time.  The rational-power atoms are lowered right here to
chains of rotated quadratic cones, so the solver only ever sees an SOCP; no
exponential or power cones are required.

Programs may declare parameters.  Re-solving after a parameter update reuses
the cached canonicalization, which is what makes the iterative solvers cheap.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np


class AtomError(ValueError):
    """An expression outside the supported atom vocabulary."""


class DimensionError(ValueError):
    """Shape bookkeeping failure while assembling a program."""


DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITERS = 200

_STATUS_MAP = {
    cp.OPTIMAL: "optimal",
    cp.INFEASIBLE: "infeasible",
    cp.UNBOUNDED: "numerical-failure",
    cp.OPTIMAL_INACCURATE: "max-iterations",
    cp.INFEASIBLE_INACCURATE: "infeasible",
    cp.UNBOUNDED_INACCURATE: "numerical-failure",
}


@dataclass
class SolveResult:
    status: str                      # optimal | infeasible | max-iterations | numerical-failure
    objective: float | None
    primal: dict[str, np.ndarray]
    iterations: int
    residuals: dict[str, float]
    solver: str = ""

    @property
    def max_residual(self) -> float:
        return max(self.residuals.values(), default=0.0)


def _as_expr(x):
    if isinstance(x, (int, float, np.ndarray)):
        return cp.Constant(np.asarray(x, dtype=float))
    return x


def _flatten(expr):
    expr = _as_expr(expr)
    return cp.reshape(expr, (int(np.prod(expr.shape)) if expr.shape else 1,), order="C")


class ConvexProgram:
    """A cone program under construction, then a reusable solve handle."""

    def __init__(self, name: str = "program"):
        self.name = name
        self._vars: dict[str, cp.Variable] = {}
        self._params: dict[str, cp.Parameter] = {}
        self._constraints: list = []
        # (name, violation expr, optional scale expr for relative measurement)
        self._checks: list[tuple[str, object, object]] = []
        self._objective = None
        self._problem: cp.Problem | None = None
        self._aux = 0

    # --- declarations ----------------------------------------------------

    def add_variable(self, name: str, shape=(), lb=None, ub=None) -> cp.Variable:
        if name in self._vars:
            raise DimensionError(f"variable {name!r} already declared")
        v = cp.Variable(shape, name=name)
        self._vars[name] = v
        if lb is not None:
            self.add_inequality(float(lb) if np.isscalar(lb) else np.asarray(lb), v,
                                name=f"{name}:lb")
        if ub is not None:
            self.add_inequality(v, float(ub) if np.isscalar(ub) else np.asarray(ub),
                                name=f"{name}:ub")
        return v

    def add_parameter(self, name: str, shape=(), value=None) -> cp.Parameter:
        if name in self._params:
            raise DimensionError(f"parameter {name!r} already declared")
        p = cp.Parameter(shape, name=name)
        if value is not None:
            p.value = np.asarray(value, dtype=float) if shape else float(value)
        self._params[name] = p
        return p

    def set_parameter(self, name: str, value) -> None:
        p = self._params[name]
        p.value = np.asarray(value, dtype=float) if p.shape else float(value)

    def _aux_var(self, shape=()) -> cp.Variable:
        self._aux += 1
        v = cp.Variable(shape, name=f"_aux{self._aux}", nonneg=True)
        return v

    def _affine(self, x, what: str):
        expr = _as_expr(x)
        if not expr.is_affine():
            raise AtomError(f"{what} must be affine (got a nonlinear expression); "
                            "bilinear or higher terms are outside the atom vocabulary")
        return expr

    def _name(self, name: str | None, kind: str) -> str:
        if name is not None:
            return name
        return f"{kind}#{len(self._checks)}"

    def _register(self, name: str, violation, scale=None) -> None:
        self._checks.append((name, violation, scale))

    # --- atoms -------------------------------------------------------------

    def add_equality(self, lhs, rhs, name: str | None = None) -> None:
        l = self._affine(lhs, "equality lhs")
        r = self._affine(rhs, "equality rhs")
        self._constraints.append(l == r)
        self._register(self._name(name, "eq"), cp.max(cp.abs(_flatten(l - r))))

    def add_inequality(self, lhs, rhs, name: str | None = None) -> None:
        l = self._affine(lhs, "inequality lhs")
        r = self._affine(rhs, "inequality rhs")
        self._constraints.append(l <= r)
        self._register(self._name(name, "ineq"), cp.max(_flatten(l - r)))

    def add_norm_le(self, vec, bound, name: str | None = None) -> None:
        """``||vec||_2 <= bound`` with vector affine ``vec``, scalar ``bound``."""
        v = _flatten(self._affine(vec, "norm argument"))
        b = self._affine(bound, "norm bound")
        if b.shape not in ((), (1,)):
            raise DimensionError("norm bound must be scalar")
        self._constraints.append(cp.SOC(cp.reshape(b, (), order="C") if b.shape else b, v))
        self._register(self._name(name, "norm"), cp.norm(v, 2) - b)

    def _soc_product_ge(self, a, b, rhs_vec) -> None:
        """Rotated cone ``a * b >= ||rhs_vec||^2`` with a, b affine scalars."""
        a = a if a.shape == () else cp.reshape(a, (), order="C")
        b = b if b.shape == () else cp.reshape(b, (), order="C")
        stack = cp.hstack([2.0 * _flatten(rhs_vec), cp.reshape(a - b, (1,), order="C")])
        self._constraints.append(cp.SOC(a + b, stack))

    def add_quad_over_lin_le(self, num, den, bound, name: str | None = None) -> None:
        """``||num||^2 / den <= bound`` with ``den > 0`` on its domain."""
        v = _flatten(self._affine(num, "quad-over-lin numerator"))
        d = self._affine(den, "quad-over-lin denominator")
        b = self._affine(bound, "quad-over-lin bound")
        self._constraints.append(d >= 0)
        self._soc_product_ge(d, b, v)
        self._register(self._name(name, "qol"),
                       cp.quad_over_lin(v, cp.reshape(d, (), order="C") if d.shape else d) - b)

    def add_square_le(self, arg, bound, name: str | None = None) -> None:
        """Elementwise ``arg^2 <= bound`` for affine ``arg``."""
        a = self._affine(arg, "square argument")
        b = self._affine(bound, "square bound")
        if a.shape != b.shape:
            raise DimensionError(f"square: shapes {a.shape} vs {b.shape}")
        self._constraints.append(cp.square(a) <= b)
        self._register(self._name(name, "square"), cp.max(_flatten(cp.square(a) - b)))

    def add_quartic_le(self, arg, bound, name: str | None = None) -> None:
        """Elementwise ``arg^4 <= bound`` lowered through an ``arg^2`` stage."""
        a = self._affine(arg, "quartic argument")
        b = self._affine(bound, "quartic bound")
        if a.shape != b.shape:
            raise DimensionError(f"quartic: shapes {a.shape} vs {b.shape}")
        s = self._aux_var(a.shape)
        self._constraints.append(cp.square(a) <= s)
        self._constraints.append(cp.square(s) <= b)
        # composed chains report a relative violation: the absolute error of a
        # fourth power amplifies the per-cone solver accuracy
        self._register(self._name(name, "quartic"),
                       cp.max(_flatten(cp.square(cp.square(a)) - b)),
                       scale=cp.max(cp.abs(_flatten(b))))

    def add_inverse_le(self, arg, bound, name: str | None = None) -> None:
        """Elementwise ``1/arg <= bound`` for ``arg > 0`` (hyperbolic cone)."""
        a = self._affine(arg, "inverse argument")
        b = self._affine(bound, "inverse bound")
        if a.shape != b.shape:
            raise DimensionError(f"inverse: shapes {a.shape} vs {b.shape}")
        af, bf = _flatten(a), _flatten(b)
        self._constraints.append(af >= 0)
        ones = np.ones(af.shape)
        # a*b >= 1  <=>  ||[2, a-b]|| <= a+b, batched over entries
        stack = cp.vstack([2.0 * ones, af - bf])
        self._constraints.append(cp.SOC(af + bf, stack, axis=0))
        self._register(self._name(name, "inv"), cp.max(ones - cp.multiply(af, bf)))

    def add_power_ratio_le(self, x, y, bound, name: str | None = None) -> None:
        """``x^3 / y^2 <= bound`` for scalars ``x, y > 0``.

        Lowered as ``x^2 <= w*y`` and ``w^2 <= bound*x`` with a fresh ``w``;
        eliminating ``w`` gives exactly ``x^3/y^2 <= bound`` on the domain.
        """
        xa = self._affine(x, "power-ratio numerator")
        ya = self._affine(y, "power-ratio denominator")
        b = self._affine(bound, "power-ratio bound")
        for e, nm in ((xa, "x"), (ya, "y"), (b, "bound")):
            if e.shape not in ((), (1,)):
                raise DimensionError(f"power-ratio {nm} must be scalar")
        w = self._aux_var()
        self._constraints.append(xa >= 0)
        self._constraints.append(ya >= 0)
        self._soc_product_ge(w, ya, xa)
        self._soc_product_ge(b, xa, w)
        self._register(self._name(name, "powratio"),
                       cp.power(cp.pos(xa), 3) - cp.multiply(b, cp.square(ya)),
                       scale=cp.abs(cp.multiply(b, cp.square(ya))))

    # --- objective and solve ------------------------------------------------

    def minimize(self, expr) -> None:
        e = self._affine(expr, "objective")
        if e.shape not in ((), (1,)):
            raise DimensionError("objective must be scalar")
        self._objective = cp.Minimize(e)

    @property
    def cvxpy_problem(self) -> cp.Problem:
        if self._objective is None:
            self._objective = cp.Minimize(0)
        if self._problem is None:
            self._problem = cp.Problem(self._objective, self._constraints)
        return self._problem

    def solve(self, tol: float = DEFAULT_TOL, max_iters: int = DEFAULT_MAX_ITERS) -> SolveResult:
        prob = self.cvxpy_problem
        gap = max(tol * 1e-1, 1e-10)
        solver_kwargs = dict(solver=cp.CLARABEL, max_iter=max_iters,
                             tol_gap_abs=gap, tol_gap_rel=gap,
                             tol_feas=max(tol * 1e-2, 1e-11))
        import warnings

        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")  # inaccurate-solution warnings re-checked below
                prob.solve(**solver_kwargs)
        except cp.error.SolverError as exc:
            return SolveResult(status="numerical-failure", objective=None, primal={},
                               iterations=0, residuals={}, solver=f"CLARABEL: {exc}")
        status = _STATUS_MAP.get(prob.status, "numerical-failure")
        primal = {}
        if status in ("optimal", "max-iterations"):
            for nm, v in self._vars.items():
                if v.value is None:
                    status = "numerical-failure"
                    break
                primal[nm] = np.array(v.value, dtype=float)
        residuals: dict[str, float] = {}
        if status in ("optimal", "max-iterations"):
            for nm, expr, scale in self._checks:
                val = expr.value
                if val is None:
                    residuals[nm] = np.inf
                    continue
                r = float(max(np.max(val), 0.0))
                if scale is not None:
                    r /= max(1.0, float(np.max(scale.value)))
                residuals[nm] = r
            # the contract is residual-based: a returned point within tolerance
            # is optimal regardless of the solver's own accuracy flag
            if max(residuals.values(), default=0.0) <= tol:
                status = "optimal"
            else:
                status = "max-iterations"
        iters = 0
        if prob.solver_stats is not None and prob.solver_stats.num_iters is not None:
            iters = int(prob.solver_stats.num_iters)
        obj = float(prob.value) if prob.value is not None and np.isfinite(prob.value) else None
        return SolveResult(status=status, objective=obj, primal=primal,
                           iterations=iters, residuals=residuals, solver="CLARABEL")

    def value(self, var_name: str) -> np.ndarray:
        v = self._vars[var_name].value
        if v is None:
            raise RuntimeError(f"variable {var_name!r} has no value yet")
        return np.array(v, dtype=float)

    def dump(self, path: str) -> None:
        """Write the canonical cone data (c, A, b, cone sizes) as JSON."""
        import json

        data, _, _ = self.cvxpy_problem.get_problem_data(cp.CLARABEL)
        a = data["A"].tocoo()
        dims = data["dims"]
        cones = {}
        for attr in ("zero", "nonneg", "exp", "soc", "psd", "p3d"):
            if hasattr(dims, attr):
                val = getattr(dims, attr)
                cones[attr] = val if isinstance(val, int) else list(val)
        payload = {
            "name": self.name,
            "objective_linear": np.asarray(data["c"]).ravel().tolist(),
            "rhs": np.asarray(data["b"]).ravel().tolist(),
            "matrix_coo": {
                "shape": [int(s) for s in a.shape],
                "row": a.row.tolist(),
                "col": a.col.tolist(),
                "val": a.data.tolist(),
            },
            "cones": cones,
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=1)
