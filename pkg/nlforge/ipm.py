"""
Native conic interior-point solver
Homogeneous self-dual embedding over a direct sum of real symmetric PSD
blocks, with Nesterov-Todd scaling and a Mehrotra predictor-corrector.

    primal   min c'x       s.t.  Gx + s = h,  Ax = b,  s >= 0
    dual     max -h'z - b'y  s.t.  G'z + A'y + c = 0,  z >= 0

Every iterate keeps s, z strictly inside the cone and tau, kappa > 0; the
returned point is divided by tau.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
import scipy.linalg as sla

from nlforge.conic import ConeBlock, RawResult, StandardForm, Status

logger = logging.getLogger(__name__)

STEP_FRACTION = 0.99
REGULARIZATION = 1e-11
REFINEMENT_STEPS = 3
MIN_STEP = 1e-10
MAX_STALLS = 5


@dataclass
class _Scaling:
    """NT scaling of one block: W(z) = r' z r, W^{-T}(s) = rinv s rinv'."""

    r: np.ndarray
    rinv: np.ndarray
    lam: np.ndarray


def _nt_scaling(s: np.ndarray, z: np.ndarray) -> _Scaling:
    ls = np.linalg.cholesky(s)
    lz = np.linalg.cholesky(z)
    _, lam, vt = np.linalg.svd(lz.T @ ls)
    r = (ls @ vt.T) / np.sqrt(lam)
    vt_lsinv = sla.solve_triangular(ls, vt.T, lower=True, trans="T", check_finite=False).T
    rinv = np.sqrt(lam)[:, None] * vt_lsinv
    return _Scaling(r, rinv, lam)


def _sym(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def _mat(blk: ConeBlock, v: np.ndarray) -> np.ndarray:
    return v.reshape(blk.size, blk.size)


def _gx(form: StandardForm, x: np.ndarray) -> List[np.ndarray]:
    return [_mat(blk, blk.G @ x[blk.cols]) for blk in form.blocks]


def _gtz(form: StandardForm, zs: List[np.ndarray]) -> np.ndarray:
    out = np.zeros(form.n)
    for blk, z in zip(form.blocks, zs):
        out[blk.cols] += blk.G.T @ z.reshape(-1)
    return out


def _inner(us: List[np.ndarray], vs: List[np.ndarray]) -> float:
    return float(sum(np.vdot(u, v) for u, v in zip(us, vs)))


def _max_step(lam: np.ndarray, d: np.ndarray) -> float:
    """Largest alpha with diag(lam) + alpha d still PSD."""
    isq = 1.0 / np.sqrt(lam)
    m = _sym(isq[:, None] * d * isq[None, :])
    low = float(np.linalg.eigvalsh(m)[0])
    return np.inf if low >= 0 else -1.0 / low


class _Kkt:
    """Reduced Newton system in (dx, dy, dtau) for one scaling."""

    def __init__(self, form: StandardForm, scalings: List[_Scaling], tau: float, kappa: float):
        n, m = form.n, form.A.shape[0]
        self.form = form
        self.n, self.m = n, m
        self.gs: List[np.ndarray] = []
        self.hs: List[np.ndarray] = []
        hess = np.zeros((n, n))
        gsh = np.zeros(n)
        hsh = 0.0
        for blk, sc in zip(form.blocks, scalings):
            k = blk.size
            g3 = blk.G.reshape(k, k, -1)
            gs = np.einsum("ij,jlc,ml->imc", sc.rinv, g3, sc.rinv, optimize=True).reshape(k * k, -1)
            hs = sc.rinv @ _mat(blk, blk.h) @ sc.rinv.T
            self.gs.append(gs)
            self.hs.append(hs)
            if blk.cols.size:
                hess[np.ix_(blk.cols, blk.cols)] += gs.T @ gs
                gsh[blk.cols] += gs.T @ hs.reshape(-1)
            hsh += float(np.vdot(hs, hs))

        c, A, b = form.c, form.A, form.b
        K = np.zeros((n + m + 1, n + m + 1))
        K[:n, :n] = hess
        K[:n, n:n + m] = A.T
        K[:n, -1] = c - gsh
        K[n:n + m, :n] = A
        K[n:n + m, -1] = -b
        K[-1, :n] = -(c + gsh)
        K[-1, n:n + m] = -b
        K[-1, -1] = hsh + kappa / tau
        self.K = K

        reg = np.zeros(n + m + 1)
        reg[:n] = REGULARIZATION * max(1.0, float(np.max(np.abs(np.diag(hess)), initial=0.0)))
        reg[n:n + m] = -REGULARIZATION
        self.lu = sla.lu_factor(K + np.diag(reg), check_finite=False)

    def gs_t(self, vs: List[np.ndarray]) -> np.ndarray:
        out = np.zeros(self.n)
        for blk, gs, v in zip(self.form.blocks, self.gs, vs):
            if blk.cols.size:
                out[blk.cols] += gs.T @ v.reshape(-1)
        return out

    def gs_x(self, x: np.ndarray) -> List[np.ndarray]:
        return [_mat(blk, gs @ x[blk.cols]) for blk, gs in zip(self.form.blocks, self.gs)]

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        sol = sla.lu_solve(self.lu, rhs, check_finite=False)
        for _ in range(REFINEMENT_STEPS):
            res = rhs - self.K @ sol
            if np.linalg.norm(res) <= 1e-15 * max(1.0, np.linalg.norm(rhs)):
                break
            sol = sol + sla.lu_solve(self.lu, res, check_finite=False)
        return sol


def _direction(kkt: _Kkt, scalings, rx, ry, rz, rt, eta, rc_tilde, r_k, tau, kappa):
    """Solve the Newton system; returns (dx, dy, dtau, dkappa, ds~, dz~)."""
    n, m = kkt.n, kkt.m
    qs = [eta * (sc.rinv @ rzk @ sc.rinv.T) + rck for sc, rzk, rck in zip(scalings, rz, rc_tilde)]
    rhs = np.empty(n + m + 1)
    rhs[:n] = -eta * rx - kkt.gs_t(qs)
    rhs[n:n + m] = -eta * ry
    rhs[-1] = eta * rt + r_k / tau + _inner(kkt.hs, qs)
    sol = kkt.solve(rhs)
    dx, dy, dtau = sol[:n], sol[n:n + m], float(sol[-1])
    gdx = kkt.gs_x(dx)
    dz = [_sym(g - hs * dtau + q) for g, hs, q in zip(gdx, kkt.hs, qs)]
    ds = [_sym(rc - d) for rc, d in zip(rc_tilde, dz)]
    dkappa = (r_k - kappa * dtau) / tau
    return dx, dy, dtau, dkappa, ds, dz


def _step_length(scalings, ds, dz, tau, dtau, kappa, dkappa) -> float:
    alpha = np.inf
    for sc, dsk, dzk in zip(scalings, ds, dz):
        alpha = min(alpha, _max_step(sc.lam, dsk), _max_step(sc.lam, dzk))
    if dtau < 0:
        alpha = min(alpha, -tau / dtau)
    if dkappa < 0:
        alpha = min(alpha, -kappa / dkappa)
    return alpha


def solve_standard(form: StandardForm, tol: float, max_iter: int = 200) -> RawResult:
    """Run the interior-point method on a compiled program."""
    n, m = form.n, form.A.shape[0]
    c, A, b = form.c, form.A, form.b
    nu = form.degree
    x, y = np.zeros(n), np.zeros(m)
    s = [np.eye(blk.size) for blk in form.blocks]
    z = [np.eye(blk.size) for blk in form.blocks]
    tau = kappa = 1.0

    resx0 = max(1.0, float(np.linalg.norm(c)))
    resy0 = max(1.0, float(np.linalg.norm(b)))
    resz0 = max(1.0, float(np.sqrt(sum(np.vdot(blk.h, blk.h) for blk in form.blocks))))

    best: Optional[Tuple[float, RawResult]] = None
    stalls = 0
    status = Status.NUMERICAL_FAILURE

    for it in range(max_iter + 1):
        gx = _gx(form, x)
        gtz = _gtz(form, z)
        hz = sum(float(blk.h @ zk.reshape(-1)) for blk, zk in zip(form.blocks, z))
        cx, by = float(c @ x), float(b @ y)

        rx = A.T @ y + gtz + c * tau
        ry = A @ x - b * tau
        rz = [sk + gk - _mat(blk, blk.h) * tau for sk, gk, blk in zip(s, gx, form.blocks)]
        rt = kappa + cx + by + hz
        sz = _inner(s, z)
        mu = (sz + tau * kappa) / (nu + 1)

        pcost, dcost = cx / tau, -(by + hz) / tau
        pres = max(np.linalg.norm(ry) / resy0, np.sqrt(_inner(rz, rz)) / resz0) / tau
        dres = np.linalg.norm(rx) / resx0 / tau
        gap = sz / tau ** 2
        scale = max(1.0, abs(pcost))
        logger.debug(f"{it:3d}  pcost={pcost: .10e}  dcost={dcost: .10e}  gap={gap:.2e}  "
                     f"pres={pres:.2e}  dres={dres:.2e}  tau={tau:.2e}  kappa={kappa:.2e}")

        score = max(pres, dres, gap / scale, abs(pcost - dcost) / scale)
        if best is None or score < best[0]:
            best = (score, RawResult(Status.NUMERICAL_FAILURE, x / tau, y / tau, [zk / tau for zk in z],
                                     it, pres, dres, gap))

        if pres <= tol and dres <= tol and gap <= tol * scale and abs(pcost - dcost) <= tol * scale:
            return RawResult(Status.OPTIMAL, x / tau, y / tau, [zk / tau for zk in z], it, pres, dres, gap)

        if hz + by < 0:
            pinf = np.linalg.norm(A.T @ y + gtz) / resx0 / -(hz + by)
            if pinf <= tol:
                w = -(hz + by)
                logger.info(f"✅ Primal infeasibility certificate found after {it} iterations")
                return RawResult(Status.INFEASIBLE, np.zeros(n), y / w, [zk / w for zk in z], it, pres, dres, gap)
        if cx < 0:
            dinf = max(np.linalg.norm(A @ x) / resy0,
                       np.sqrt(sum(np.vdot(g + sk, g + sk) for g, sk in zip(gx, s))) / resz0) / -cx
            if dinf <= tol:
                logger.info(f"✅ Unboundedness certificate found after {it} iterations")
                return RawResult(Status.UNBOUNDED, x / -cx, np.zeros(m), [np.zeros_like(zk) for zk in z],
                                 it, pres, dres, gap)
        if it == max_iter:
            logger.warning(f"❌ Iteration cap {max_iter} reached (pres={pres:.2e}, dres={dres:.2e}, gap={gap:.2e})")
            break

        try:
            scalings = [_nt_scaling(sk, zk) for sk, zk in zip(s, z)]
            kkt = _Kkt(form, scalings, tau, kappa)
        except (np.linalg.LinAlgError, ValueError) as e:
            logger.warning(f"❌ Factorization failed at iteration {it}: {e}")
            break

        # predictor
        rc_aff = [np.diag(-sc.lam) for sc in scalings]
        dx, dy, dtau, dkappa, ds_a, dz_a = _direction(
            kkt, scalings, rx, ry, rz, rt, 1.0, rc_aff, -tau * kappa, tau, kappa)
        alpha_aff = min(1.0, _step_length(scalings, ds_a, dz_a, tau, dtau, kappa, dkappa))
        sigma = (1.0 - alpha_aff) ** 3

        # corrector
        rc_tilde = []
        for sc, dsk, dzk in zip(scalings, ds_a, dz_a):
            lam = sc.lam
            rc = sigma * mu * np.eye(lam.size) - np.diag(lam ** 2) - _sym(dsk @ dzk)
            rc_tilde.append(2.0 * rc / (lam[:, None] + lam[None, :]))
        r_k = -tau * kappa + sigma * mu - dtau * dkappa
        dx, dy, dtau, dkappa, ds, dz = _direction(
            kkt, scalings, rx, ry, rz, rt, 1.0 - sigma, rc_tilde, r_k, tau, kappa)
        alpha = min(1.0, STEP_FRACTION * _step_length(scalings, ds, dz, tau, dtau, kappa, dkappa))

        if alpha < MIN_STEP:
            stalls += 1
            if stalls >= MAX_STALLS:
                logger.warning(f"❌ Stalled at iteration {it} (step {alpha:.1e})")
                break
        else:
            stalls = 0

        x = x + alpha * dx
        y = y + alpha * dy
        tau = tau + alpha * dtau
        kappa = kappa + alpha * dkappa
        s = [_sym(sc.r @ (np.diag(sc.lam) + alpha * dsk) @ sc.r.T) for sc, dsk in zip(scalings, ds)]
        z = [_sym(sc.rinv.T @ (np.diag(sc.lam) + alpha * dzk) @ sc.rinv) for sc, dzk in zip(scalings, dz)]

    _, result = best
    if result.pres <= tol and result.dres <= tol and result.gap <= tol * max(1.0, abs(float(c @ result.x))):
        result.status = status = Status.OPTIMAL
    logger.debug(f"Returning best iterate from iteration {result.iterations} ({status.value})")
    return result
