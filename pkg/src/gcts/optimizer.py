"""LP/QP front end returning primal values and signed multipliers.

Multiplier convention (all solvers are mapped onto it)::

    grad f(x) - A_eq' y + A_ub' mu - z_lower + z_upper = 0
    mu, z_lower, z_upper >= 0

so ``y`` is the sensitivity of the optimal objective to ``b_eq`` and ``-mu``
the sensitivity to ``b_ub``.  Linear programs go to HiGHS dual simplex (basic
multipliers); programs with a quadratic term go to Clarabel followed by an
active-set polish.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

log = logging.getLogger(__name__)

KKT_TOL = 1e-7
ACTIVE_TOL = 1e-9


@dataclass
class MathProgram:
    """``min c'x + x'Px/2 + constant`` s.t. ``A_eq x = b_eq``, ``A_ub x <= b_ub``, ``lb <= x <= ub``."""

    c: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray
    A_ub: np.ndarray
    b_ub: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    P: np.ndarray | None = None
    constant: float = 0.0
    var_labels: Sequence[str] = ()
    eq_labels: Sequence[str] = ()
    ub_labels: Sequence[str] = ()

    def __post_init__(self):
        n = len(self.c)
        self.c = np.asarray(self.c, float)
        self.A_eq = np.asarray(self.A_eq, float).reshape(-1, n)
        self.A_ub = np.asarray(self.A_ub, float).reshape(-1, n)
        self.b_eq = np.asarray(self.b_eq, float).reshape(-1)
        self.b_ub = np.asarray(self.b_ub, float).reshape(-1)
        self.lb = np.asarray(self.lb, float).reshape(-1)
        self.ub = np.asarray(self.ub, float).reshape(-1)
        if self.P is not None:
            self.P = np.asarray(self.P, float)
            if self.P.shape != (n, n):
                raise ValueError("quadratic term has the wrong shape")
            if not np.allclose(self.P, self.P.T):
                raise ValueError("quadratic term must be symmetric")
            if n and np.linalg.eigvalsh(self.P).min() < -1e-10:
                raise ValueError("quadratic term must be positive semidefinite")
            if not np.any(self.P):
                self.P = None
        if len(self.b_eq) != self.A_eq.shape[0] or len(self.b_ub) != self.A_ub.shape[0]:
            raise ValueError("constraint matrix and right-hand side sizes differ")
        if len(self.lb) != n or len(self.ub) != n:
            raise ValueError("bound vectors must match the variable count")
        if np.any(self.lb > self.ub):
            raise ValueError("lower bound exceeds upper bound")
        self.var_labels = tuple(self.var_labels) or tuple(f"x{k}" for k in range(n))
        self.eq_labels = tuple(self.eq_labels) or tuple(f"eq{k}" for k in range(len(self.b_eq)))
        self.ub_labels = tuple(self.ub_labels) or tuple(f"ub{k}" for k in range(len(self.b_ub)))
        if (
            len(self.var_labels) != n
            or len(self.eq_labels) != len(self.b_eq)
            or len(self.ub_labels) != len(self.b_ub)
        ):
            raise ValueError("every variable and row needs a label")

    @property
    def n(self) -> int:
        return len(self.c)

    def objective(self, x: np.ndarray) -> float:
        val = float(self.c @ x) + self.constant
        if self.P is not None:
            val += 0.5 * float(x @ self.P @ x)
        return val

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self.c if self.P is None else self.c + self.P @ x


@dataclass
class SolveResult:
    status: str  # optimal | infeasible | unbounded | solver_failure
    x: np.ndarray | None = None
    objective: float = float("nan")
    eq_duals: np.ndarray | None = None
    ub_duals: np.ndarray | None = None
    lower_duals: np.ndarray | None = None
    upper_duals: np.ndarray | None = None
    kkt: dict[str, float] = field(default_factory=dict)
    message: str = ""
    program: MathProgram | None = field(default=None, repr=False)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"

    def eq_dual(self, label: str) -> float:
        return float(self.eq_duals[self.program.eq_labels.index(label)])

    def ub_dual(self, label: str) -> float:
        return float(self.ub_duals[self.program.ub_labels.index(label)])

    def value(self, label: str) -> float:
        return float(self.x[self.program.var_labels.index(label)])


def kkt_residuals(prog: MathProgram, x, y, mu, zl, zu) -> dict[str, float]:
    """Scaled stationarity, feasibility, complementarity and duality-gap residuals."""
    scale_c = 1.0 + np.abs(prog.c).max(initial=0.0)
    rhs = np.concatenate([prog.b_eq, prog.b_ub, prog.lb[np.isfinite(prog.lb)], prog.ub[np.isfinite(prog.ub)]])
    scale_b = 1.0 + np.abs(rhs).max(initial=0.0)

    grad = prog.gradient(x)
    stat = grad - prog.A_eq.T @ y + prog.A_ub.T @ mu - zl + zu
    slack_ub = prog.b_ub - prog.A_ub @ x
    feas = max(
        np.abs(prog.A_eq @ x - prog.b_eq).max(initial=0.0),
        (-slack_ub).max(initial=0.0),
        (prog.lb - x).max(initial=0.0),
        (x - prog.ub).max(initial=0.0),
    )
    lo_fin = np.isfinite(prog.lb)
    up_fin = np.isfinite(prog.ub)
    comp = max(
        np.abs(mu * slack_ub).max(initial=0.0),
        np.abs(zl[lo_fin] * (x - prog.lb)[lo_fin]).max(initial=0.0),
        np.abs(zu[up_fin] * (prog.ub - x)[up_fin]).max(initial=0.0),
        np.abs(zl[~lo_fin]).max(initial=0.0) * scale_b,
        np.abs(zu[~up_fin]).max(initial=0.0) * scale_b,
    )
    dual_neg = max((-mu).max(initial=0.0), (-zl).max(initial=0.0), (-zu).max(initial=0.0))
    quad = 0.0 if prog.P is None else float(x @ prog.P @ x)
    dual_obj = (
        prog.b_eq @ y
        - prog.b_ub @ mu
        + prog.lb[lo_fin] @ zl[lo_fin]
        - prog.ub[up_fin] @ zu[up_fin]
        - 0.5 * quad
        + prog.constant
    )
    primal_obj = prog.objective(x)
    gap = abs(primal_obj - dual_obj)
    return {
        "stationarity": float(np.abs(stat).max(initial=0.0) / scale_c),
        "feasibility": float(feas / scale_b),
        "complementarity": float(comp / (scale_b * scale_c)),
        "dual_sign": float(dual_neg / scale_c),
        "gap": float(gap / (1.0 + abs(primal_obj))),
    }


def _certify(prog: MathProgram, res: SolveResult, tol: float) -> SolveResult:
    res.kkt = kkt_residuals(prog, res.x, res.eq_duals, res.ub_duals, res.lower_duals, res.upper_duals)
    worst = max(res.kkt.values())
    if worst > tol:
        res.status = "solver_failure"
        res.message = f"KKT certification failed (worst scaled residual {worst:.3g})"
        log.warning("%s: %s", res.message, res.kkt)
    return res


def _solve_lp(prog: MathProgram) -> SolveResult:
    bounds = np.column_stack([prog.lb, prog.ub])
    kw = {}
    if prog.A_eq.shape[0]:
        kw.update(A_eq=prog.A_eq, b_eq=prog.b_eq)
    if prog.A_ub.shape[0]:
        kw.update(A_ub=prog.A_ub, b_ub=prog.b_ub)
    opts = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10, "presolve": True}
    out = linprog(prog.c, bounds=bounds, method="highs-ds", options=opts, **kw)
    if out.status == 2:
        # presolve can misjudge a feasible set that has shrunk to a point
        out = linprog(prog.c, bounds=bounds, method="highs-ds", options=dict(opts, presolve=False), **kw)
    if out.status == 2:
        return SolveResult("infeasible", message=out.message, program=prog)
    if out.status == 3:
        return SolveResult("unbounded", message=out.message, program=prog)
    if out.status != 0:
        return SolveResult("solver_failure", message=out.message, program=prog)
    m_eq = prog.A_eq.shape[0]
    m_ub = prog.A_ub.shape[0]
    y = np.asarray(out.eqlin.marginals, float) if m_eq else np.zeros(0)
    mu = -np.asarray(out.ineqlin.marginals, float) if m_ub else np.zeros(0)
    zl = np.asarray(out.lower.marginals, float)
    zu = -np.asarray(out.upper.marginals, float)
    # HiGHS may report tiny negative values of order the tolerances
    mu = np.maximum(mu, 0.0)
    zl = np.maximum(zl, 0.0)
    zu = np.maximum(zu, 0.0)
    x = np.asarray(out.x, float)
    return SolveResult("optimal", x, prog.objective(x), y, mu, zl, zu, program=prog)


def _solve_qp(prog: MathProgram, tight: bool = True) -> SolveResult:
    import clarabel

    n = prog.n
    eye = sparse.identity(n, format="csc")
    up_fin = np.flatnonzero(np.isfinite(prog.ub))
    lo_fin = np.flatnonzero(np.isfinite(prog.lb))
    blocks = [sparse.csc_matrix(prog.A_eq), sparse.csc_matrix(prog.A_ub), eye[up_fin], -eye[lo_fin]]
    A = sparse.vstack(blocks, format="csc")
    b = np.concatenate([prog.b_eq, prog.b_ub, prog.ub[up_fin], -prog.lb[lo_fin]])
    m_eq, m_ub = prog.A_eq.shape[0], prog.A_ub.shape[0]
    cones = []
    if m_eq:
        cones.append(clarabel.ZeroConeT(m_eq))
    n_nonneg = m_ub + len(up_fin) + len(lo_fin)
    if n_nonneg:
        cones.append(clarabel.NonnegativeConeT(n_nonneg))
    P = sparse.triu(sparse.csc_matrix(prog.P if prog.P is not None else np.zeros((n, n))), format="csc")
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    tol = 1e-10 if tight else 1e-8
    settings.tol_feas = tol
    settings.tol_gap_abs = tol
    settings.tol_gap_rel = tol
    settings.max_threads = 1
    solver = clarabel.DefaultSolver(P, prog.c, A, b, cones, settings)
    sol = solver.solve()
    status = str(sol.status)
    if "PrimalInfeasible" in status:
        return SolveResult("infeasible", message=status, program=prog)
    if "DualInfeasible" in status:
        return SolveResult("unbounded", message=status, program=prog)
    if status not in ("Solved", "AlmostSolved"):
        return SolveResult("solver_failure", message=status, program=prog)
    z = np.asarray(sol.z, float)
    x = np.asarray(sol.x, float)
    y = -z[:m_eq]
    mu = np.maximum(z[m_eq : m_eq + m_ub], 0.0)
    zu = np.zeros(n)
    zl = np.zeros(n)
    zu[up_fin] = np.maximum(z[m_eq + m_ub : m_eq + m_ub + len(up_fin)], 0.0)
    zl[lo_fin] = np.maximum(z[m_eq + m_ub + len(up_fin) :], 0.0)
    res = SolveResult("optimal", x, prog.objective(x), y, mu, zl, zu, program=prog)
    return _polish(prog, res)


def _polish(prog: MathProgram, res: SolveResult) -> SolveResult:
    """Re-solve the KKT system on the detected active set to clean interior-point noise."""
    x, n = res.x, prog.n
    scale = 1.0 + np.abs(x).max(initial=0.0)
    tol = 1e-6 * scale
    act_ub = np.flatnonzero(prog.b_ub - prog.A_ub @ x < tol)
    at_lo = np.flatnonzero(np.isfinite(prog.lb) & (x - prog.lb < tol))
    at_up = np.flatnonzero(np.isfinite(prog.ub) & (prog.ub - x < tol) & ~np.isin(np.arange(n), at_lo))
    m_eq = prog.A_eq.shape[0]
    eye = np.eye(n)
    # constraints treated as equalities: eq rows, active ub rows, fixed bounds
    G = np.vstack([prog.A_eq, prog.A_ub[act_ub], eye[at_lo], eye[at_up]])
    h = np.concatenate([prog.b_eq, prog.b_ub[act_ub], prog.lb[at_lo], prog.ub[at_up]])
    P = prog.P if prog.P is not None else np.zeros((n, n))
    k = G.shape[0]
    kkt = np.block([[P, G.T], [G, np.zeros((k, k))]])
    rhs = np.concatenate([-prog.c, h])
    sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
    xp, v = sol[:n], sol[n:]  # grad f + G' v = 0
    y = -v[:m_eq]
    mu = np.zeros(prog.A_ub.shape[0])
    mu[act_ub] = v[m_eq : m_eq + len(act_ub)]
    off = m_eq + len(act_ub)
    zl = np.zeros(n)
    zu = np.zeros(n)
    zl[at_lo] = -v[off : off + len(at_lo)]
    zu[at_up] = v[off + len(at_lo) :]
    if (
        min(mu.min(initial=0.0), zl.min(initial=0.0), zu.min(initial=0.0)) < -1e-9
        or not np.all(np.isfinite(sol))
    ):
        return res
    cand = SolveResult("optimal", xp, prog.objective(xp), y, mu, zl, zu, program=prog)
    old = max(kkt_residuals(prog, res.x, res.eq_duals, res.ub_duals, res.lower_duals, res.upper_duals).values())
    new = max(kkt_residuals(prog, xp, y, mu, zl, zu).values())
    return cand if new <= old else res


def _qp_fallback(prog: MathProgram, failed: SolveResult) -> SolveResult:
    """Interior-point trouble near the edge of feasibility: decide feasibility
    with the simplex code, then retry at a looser tolerance (the active-set
    polish restores full accuracy)."""
    probe = MathProgram(
        np.zeros(prog.n), prog.A_eq, prog.b_eq, prog.A_ub, prog.b_ub, prog.lb, prog.ub,
        var_labels=prog.var_labels, eq_labels=prog.eq_labels, ub_labels=prog.ub_labels,
    )
    feas = _solve_lp(probe)
    if feas.status == "infeasible":
        return SolveResult("infeasible", message=feas.message, program=prog)
    retry = _solve_qp(prog, tight=False)
    return retry if retry.status != "solver_failure" else failed


def solve(prog: MathProgram, tol: float = KKT_TOL, backend: str | None = None) -> SolveResult:
    """Solve ``prog`` and certify the KKT conditions to ``tol`` (scaled units).

    ``backend`` forces ``"lp"`` (HiGHS) or ``"qp"`` (Clarabel); by default the
    presence of a quadratic term decides.
    """
    use = backend or ("lp" if prog.P is None else "qp")
    if use == "lp" and prog.P is not None:
        raise ValueError("the LP backend cannot handle a quadratic objective")
    try:
        res = _solve_lp(prog) if use == "lp" else _solve_qp(prog)
        if use == "qp" and res.status == "solver_failure":
            res = _qp_fallback(prog, res)
    except (ValueError, np.linalg.LinAlgError) as exc:  # pragma: no cover - solver internals
        return SolveResult("solver_failure", message=str(exc), program=prog)
    if res.optimal:
        res = _certify(prog, res, tol)
    log.debug("solve[%s]: %s obj=%.10g", use, res.status, res.objective)
    return res
