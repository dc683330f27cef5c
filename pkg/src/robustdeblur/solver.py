"""Projected Newton outer iteration with a projected PCG inner solver.

The constraint x >= 0 is handled with an active-set strategy: cells at
the bound (x <= 0) are frozen out of the Newton system, the remaining
subspace is solved inexactly by preconditioned conjugate gradients
restricted to that subspace, the frozen cells receive a rescaled steepest
descent component, and a projected backtracking line search enforces
strict objective decrease.  Convergence is declared when the projected
gradient norm drops below ``newton_tol`` relative to its starting value.

Only the Talwar loss is accepted: it is the one loss whose data-term
Hessian diagonal stays nonnegative at every iterate, so the inner systems
are positive semidefinite by construction.  ``beta = inf`` runs the same
machinery as plain weighted least squares.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .gridfft import OpCounts, as_image, count_transforms
from .objective import Objective
from .operators import hessian_apply
from .precond import precond_build

__all__ = [
    "SolverOptions",
    "SolverReport",
    "LineSearchError",
    "LineSearchResult",
    "PcgBreakdownError",
    "projected_gradient_map",
    "projected_pcg",
    "linesearch",
    "projected_newton",
]


@dataclass(frozen=True)
class SolverOptions:
    newton_tol: float = 1e-4
    newton_maxit: int = 40
    pcg_tol: float = 1e-1
    pcg_maxit: int = 100
    linesearch_max_halvings: int = 20
    use_preconditioner: bool = False

    def __post_init__(self):
        if self.newton_tol <= 0 or self.pcg_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.newton_maxit < 1 or self.pcg_maxit < 1:
            raise ValueError("iteration caps must be at least 1")
        if self.linesearch_max_halvings < 0:
            raise ValueError("linesearch_max_halvings must be nonnegative")


@dataclass
class SolverReport:
    """Per-run diagnostics: traces, inner iteration counts, transform tally."""

    iterations: int = 0
    objective_trace: list = field(default_factory=list)
    pg_norms: list = field(default_factory=list)
    pcg_iterations: list = field(default_factory=list)
    step_lengths: list = field(default_factory=list)
    counts: OpCounts = field(default_factory=OpCounts)
    termination: str = ""

    @property
    def total_pcg_iterations(self) -> int:
        return int(sum(self.pcg_iterations))


class LineSearchError(RuntimeError):
    """No step length achieved a strict objective decrease."""


class PcgBreakdownError(RuntimeError):
    """Non-positive curvature encountered; the system is not SPD.

    Carries the last iterate so callers that can tolerate a partial
    solve (flagged as unreliable) may still use it.
    """

    def __init__(self, message: str, iterate: np.ndarray, iterations: int):
        super().__init__(message)
        self.iterate = iterate
        self.iterations = iterations


@dataclass(frozen=True)
class LineSearchResult:
    x: np.ndarray
    value: float
    step: float


def projected_gradient_map(g: np.ndarray, active: np.ndarray) -> np.ndarray:
    """Free components pass through; bound components keep only their
    negative part (the directions that could still decrease the objective
    without leaving the feasible set)."""
    g = np.asarray(g, dtype=np.float64)
    active = np.asarray(active, dtype=bool)
    if g.shape != active.shape:
        raise ValueError("gradient and active mask shapes differ")
    return np.where(active, np.minimum(g, 0.0), g)


def projected_pcg(
    hess,
    rhs: np.ndarray,
    active: np.ndarray,
    precond=None,
    tol: float = 1e-1,
    maxit: int = 100,
):
    """Conjugate gradients on the inactive subspace of ``hess s = rhs``.

    ``hess`` and ``precond`` are callables mapping images to images; both
    must be symmetric positive definite on the inactive subspace.  Every
    iterate, residual, and search direction is kept exactly zero on active
    cells.  Stops when the projected residual norm falls below ``tol``
    relative to its starting value, returning ``(s, iterations)``.

    Raises :class:`PcgBreakdownError` on non-positive curvature.
    """
    rhs = as_image(rhs, "rhs")
    active = np.asarray(active, dtype=bool)
    inactive = ~active

    def project(v):
        out = np.zeros_like(v)
        out[inactive] = v[inactive]
        return out

    x = np.zeros_like(rhs)
    r = project(rhs)
    r0_norm = np.linalg.norm(r)
    if r0_norm == 0.0:
        return x, 0
    z = project(precond(r)) if precond is not None else r
    rz = float(np.sum(r * z))
    if rz <= 0.0:
        raise PcgBreakdownError(
            f"preconditioned residual product {rz:.3e} is not positive", x, 0
        )
    p = z.copy()
    for k in range(1, maxit + 1):
        hp = project(hess(p))
        ph = float(np.sum(p * hp))
        if ph <= 0.0:
            raise PcgBreakdownError(
                f"curvature p^T H p = {ph:.3e} at iteration {k}", x, k - 1
            )
        alpha = rz / ph
        x = x + alpha * p
        r = r - alpha * hp
        if np.linalg.norm(r) <= tol * r0_norm:
            return x, k
        z = project(precond(r)) if precond is not None else r
        rz_next = float(np.sum(r * z))
        if rz_next <= 0.0:
            raise PcgBreakdownError(
                f"preconditioned residual product {rz_next:.3e} at iteration {k}",
                x,
                k,
            )
        p = z + (rz_next / rz) * p
        rz = rz_next
    return x, maxit


def linesearch(
    obj: Objective,
    x: np.ndarray,
    s: np.ndarray,
    current_value: float | None = None,
    max_halvings: int = 20,
) -> LineSearchResult:
    """Projected backtracking: first alpha in 1, 1/2, 1/4, ... whose
    projected point max(x + alpha s, 0) strictly decreases the objective."""
    if current_value is None:
        current_value = obj.value(x)
    s = as_image(s, "s")
    if not np.any(s):
        raise LineSearchError("zero search direction")
    alpha = 1.0
    for _ in range(max_halvings + 1):
        cand = np.maximum(x + alpha * s, 0.0)
        val = obj.value(cand)
        if val < current_value:
            return LineSearchResult(x=cand, value=val, step=alpha)
        alpha *= 0.5
    raise LineSearchError(
        f"no objective decrease within {max_halvings} halvings"
    )


def projected_newton(
    obj: Objective,
    x0: np.ndarray,
    opts: SolverOptions | None = None,
    callback=None,
):
    """Minimize the objective over x >= 0; returns ``(x, SolverReport)``.

    Per iteration: freeze the active set (x <= 0), solve the reduced
    Newton system inexactly with projected PCG from rhs = -gradient, give
    active cells a negative-gradient component rescaled to at most the
    magnitude of the Newton step, and line search.  ``callback`` receives
    ``(iteration, objective_value, projected_gradient_norm)`` after every
    accepted step.
    """
    if obj.loss.kind != "talwar":
        raise ValueError(
            f"solver requires the talwar loss (got {obj.loss.kind!r}); other "
            "losses can produce indefinite Hessians"
        )
    opts = opts or SolverOptions()
    x = as_image(x0, "x0").copy()
    if np.any(x < 0):
        raise ValueError("x0 must be elementwise nonnegative")

    report = SolverReport()
    with count_transforms() as tally:
        value = obj.value(x)
        report.objective_trace.append(value)
        g = obj.gradient(x)
        active = x <= 0
        pg0_norm = float(np.linalg.norm(projected_gradient_map(g, active)))
        report.pg_norms.append(pg0_norm)
        if callback is not None:
            callback(0, value, pg0_norm)
        if pg0_norm == 0.0:
            report.termination = "converged"
        else:
            x, value, g = _newton_loop(
                obj, x, value, g, active, pg0_norm, opts, callback, report
            )
    report.counts = tally.copy()
    return x, report


def _newton_loop(obj, x, value, g, active, pg0_norm, opts, callback, report):
    report.termination = "max_iterations"
    for k in range(1, opts.newton_maxit + 1):
        weights = obj.hessian_weights(x)
        precond = None
        if opts.use_preconditioner:
            precond = precond_build(obj.op, obj.lap_sq, weights.d, obj.lam)

        def hess(v, _d=weights.d):
            return hessian_apply(obj.op, obj.lap_sq, _d, obj.lam, v)

        try:
            s, inner = projected_pcg(
                hess,
                -g,
                active,
                precond.solve if precond is not None else None,
                tol=opts.pcg_tol,
                maxit=opts.pcg_maxit,
            )
        except PcgBreakdownError:
            report.termination = "pcg_breakdown"
            break
        report.pcg_iterations.append(inner)

        if np.any(active):
            g_active = np.where(active, g, 0.0)
            max_s = float(np.max(np.abs(s)))
            max_g = float(np.max(np.abs(g_active)))
            # cap the frozen-cell component at the Newton step's scale;
            # skip when the Newton step vanished (scaling would zero it)
            if max_g > max_s > 0.0:
                g_active *= max_s / max_g
            s = s - g_active

        try:
            ls = linesearch(obj, x, s, value, opts.linesearch_max_halvings)
        except LineSearchError:
            report.termination = "linesearch_failure"
            break

        x, value = ls.x, ls.value
        report.iterations = k
        report.objective_trace.append(value)
        report.step_lengths.append(ls.step)
        g = obj.gradient(x)
        active = x <= 0
        pg_norm = float(np.linalg.norm(projected_gradient_map(g, active)))
        report.pg_norms.append(pg_norm)
        if callback is not None:
            callback(k, value, pg_norm)
        if pg_norm <= opts.newton_tol * pg0_norm:
            report.termination = "converged"
            break
    return x, value, g
