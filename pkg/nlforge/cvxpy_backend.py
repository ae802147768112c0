"""
cvxpy adapter
Hands a compiled standard form to whatever conic solver cvxpy has installed
and maps the answer back onto the native RawResult contract.
"""

import logging
from typing import Any, Dict

import numpy as np

from nlforge.conic import RawResult, StandardForm, Status
from nlforge.errors import SolverError

logger = logging.getLogger(__name__)

_STATUS_MAP = {
    "optimal": Status.OPTIMAL,
    "infeasible": Status.INFEASIBLE,
    "unbounded": Status.UNBOUNDED,
}

# slack for duals recovered from the external solver
GAP_SLACK = 10.0


def _solver_options(cp, tol: float, max_iter: int) -> Dict[str, Any]:
    installed = cp.installed_solvers()
    if "CLARABEL" in installed:
        return {"solver": cp.CLARABEL, "tol_gap_abs": tol, "tol_gap_rel": tol, "tol_feas": tol,
                "max_iter": max_iter}
    if "SCS" in installed:
        return {"solver": cp.SCS, "eps_abs": tol, "eps_rel": tol, "max_iters": 100 * max_iter}
    return {}


def _checked_status(value: float, gap: float, tol: float) -> Status:
    """OPTIMAL only when the recomputed duality gap meets ``tol`` like the native solver's."""
    limit = GAP_SLACK * tol * max(1.0, abs(value))
    if not gap <= limit:
        logger.warning(f"❌ cvxpy reported optimal but the duality gap is {gap:.3e} (limit {limit:.1e})")
        return Status.NUMERICAL_FAILURE
    return Status.OPTIMAL


def solve_standard(form: StandardForm, tol: float, max_iter: int = 200) -> RawResult:
    try:
        import cvxpy as cp
    except ImportError as e:
        raise SolverError(f"cvxpy backend requested but cvxpy is not importable: {e}")

    n, m = form.n, form.A.shape[0]
    x = cp.Variable(n)
    constraints = []
    eq = None
    if m:
        eq = form.A @ x == form.b
        constraints.append(eq)
    psd_cons, link_cons = [], []
    for blk in form.blocks:
        S = cp.Variable((blk.size, blk.size), symmetric=True)
        gx = blk.G @ x[blk.cols] if blk.cols.size else np.zeros(blk.size * blk.size)
        link = cp.vec(S) == blk.h - gx
        psd = S >> 0
        link_cons.append(link)
        psd_cons.append(psd)
        constraints += [link, psd]

    problem = cp.Problem(cp.Minimize(form.c @ x), constraints)
    options = _solver_options(cp, tol, max_iter)
    logger.debug(f"cvxpy: n={n} m={m} blocks={len(form.blocks)} options={options}")
    try:
        problem.solve(**options)
    except cp.error.SolverError as e:
        logger.warning(f"❌ cvxpy solver error: {e}")
        return RawResult(Status.NUMERICAL_FAILURE, np.zeros(n), np.zeros(m), [np.zeros((b.size, b.size)) for b in form.blocks])

    status = _STATUS_MAP.get(problem.status, Status.NUMERICAL_FAILURE)
    if status != Status.OPTIMAL or x.value is None:
        return RawResult(status, np.zeros(n), np.zeros(m), [np.zeros((b.size, b.size)) for b in form.blocks])

    z = [np.asarray(c.dual_value, dtype=float).reshape(b.size, b.size) for c, b in zip(psd_cons, form.blocks)]
    z = [0.5 * (zk + zk.T) for zk in z]
    gtz = np.zeros(n)
    for blk, zk in zip(form.blocks, z):
        gtz[blk.cols] += blk.G.T @ zk.reshape(-1)

    # cvxpy's sign convention for equality duals depends on the solver; pick the one
    # that satisfies G'z + A'y + c = 0.
    y = np.zeros(m)
    if eq is not None and eq.dual_value is not None:
        y_raw = np.asarray(eq.dual_value, dtype=float).reshape(-1)
        y = min((y_raw, -y_raw), key=lambda v: np.linalg.norm(form.A.T @ v + gtz + form.c))
    dres = float(np.linalg.norm(form.A.T @ y + gtz + form.c)) / max(1.0, float(np.linalg.norm(form.c)))
    gap = abs(float(problem.value) - (-sum(float(b.h @ zk.reshape(-1)) for b, zk in zip(form.blocks, z)) - float(form.b @ y)))
    status = _checked_status(float(problem.value), gap, tol)
    return RawResult(status, np.asarray(x.value, dtype=float), y, z, 0, float("nan"), dres, gap)
