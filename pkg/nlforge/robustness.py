"""
Robustness quantifiers
RoBN for distributed measurements, RoT for teleportation instruments and
RoE for states, each solved as a conic program with its dual certificate
checked after the fact. The separable cone is relaxed to PSD and PPT
throughout; every report says so.
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from nlforge import qobj
from nlforge.config import check_tol, settings
from nlforge.conic import (
    Cone,
    ConeProgram,
    ProgramBuilder,
    Solution,
    dualize,
    solve,
)
from nlforge.errors import InputError, SolverError, VerificationError
from nlforge.linalg import HermitianOperator, LinearMapOnOperators, kron_maps

logger = logging.getLogger(__name__)

RELAXATION = "PPT_OUTER"
PROPERTY_SLACK = 1e-6
SEESAW_MIN_IMPROVEMENT = 1e-7
CONVEXITY_GRID = (0.0, 0.25, 0.5, 0.75, 1.0)


@dataclass
class RobustnessReport:
    """Outcome of one robustness computation.

    ``dual_certificate["A"]`` holds the multipliers of the dominance
    constraints: a nested [a][b] list for RoBN, a list for RoT and a single
    operator for RoE.
    """

    quantifier: str
    value: float
    primal_value: float
    dual_value: float
    gap: float
    tol: float
    primal_witness: Dict[str, Any]
    dual_certificate: Dict[str, Any]
    relaxation: str = RELAXATION
    method: str = "sdp"
    status: str = "OPTIMAL"
    iterations: int = 0
    elapsed: float = 0.0
    extras: Dict[str, Any] = field(default_factory=dict)

    @property
    def certificate_blocks(self) -> List[HermitianOperator]:
        a = self.dual_certificate["A"]
        if isinstance(a, HermitianOperator):
            return [a]
        if a and isinstance(a[0], list):
            return [blk for row in a for blk in row]
        return list(a)

    @property
    def certificate_error(self) -> float:
        """|certificate value - primal value|; nan before the certificate check ran."""
        return abs(self.extras.get("certificate_value", float("nan")) - self.primal_value)


def _tolerance(tol: Optional[float]) -> float:
    return check_tol(tol)


def _solve_or_raise(program: ConeProgram, tol: float, cross_check: bool = False) -> Solution:
    sol = solve(program, tol)
    if not sol.ok:
        logger.warning(f"❌ {program.name}: solver ended with {sol.status.value}")
        raise SolverError(f"{program.name}: solver ended with {sol.status.value}", sol)
    if cross_check:
        dual_sol = solve(dualize(program), tol)
        if not dual_sol.ok:
            raise SolverError(f"dual of {program.name}: solver ended with {dual_sol.status.value}", dual_sol)
        diff = abs(dual_sol.objective_value - sol.objective_value)
        if diff > 10 * tol * max(1.0, abs(sol.objective_value)):
            raise VerificationError(
                f"{program.name}: primal {sol.objective_value:.12g} and separately solved dual "
                f"{dual_sol.objective_value:.12g} disagree",
                {"primal": sol.objective_value, "dual": dual_sol.objective_value, "difference": diff},
            )
    return sol


def _check_certificate(report: RobustnessReport, measured: Sequence[HermitianOperator],
                       normalization: Optional[float] = None):
    """A-blocks PSD and sum tr[A * object] - 1 reproducing the value.

    ``normalization`` is tr D + tr E for RoBN, which must equal 1.
    """
    tol = report.tol
    blocks = report.certificate_blocks
    floor = min(float(b.eigvalsh()[0]) for b in blocks)
    reproduced = sum(b.inner(m) for b, m in zip(blocks, measured)) - 1.0
    scale = max(1.0, abs(report.primal_value))
    limit = 10 * max(report.gap, tol) * scale * len(blocks)
    report.extras["certificate_min_eigenvalue"] = floor
    report.extras["certificate_value"] = reproduced
    diagnostics = {
        "quantifier": report.quantifier,
        "value": report.primal_value,
        "dual_value": report.dual_value,
        "certificate_value": reproduced,
        "certificate_min_eigenvalue": floor,
        "gap": report.gap,
        "limit": limit,
    }
    if normalization is not None:
        report.extras["normalization_trace"] = normalization
        diagnostics["normalization_trace"] = normalization
    if floor < -10 * tol * scale:
        raise VerificationError(f"{report.quantifier}: dual certificate is not PSD ({floor:.3e})", diagnostics)
    if abs(reproduced - report.primal_value) > limit:
        raise VerificationError(
            f"{report.quantifier}: certificate gives {reproduced:.12g}, program gives {report.primal_value:.12g}",
            diagnostics,
        )
    if report.primal_value < -10 * tol * scale:
        raise VerificationError(f"{report.quantifier}: negative robustness {report.primal_value:.3e}", diagnostics)
    if normalization is not None and abs(normalization - 1.0) > limit:
        raise VerificationError(f"{report.quantifier}: tr D + tr E = {normalization:.12g}, expected 1", diagnostics)


def _report(quantifier: str, sol: Solution, tol: float, started: float,
            primal: Dict[str, Any], dual: Dict[str, Any]) -> RobustnessReport:
    return RobustnessReport(
        quantifier=quantifier,
        value=max(0.0, sol.objective_value),
        primal_value=sol.objective_value,
        dual_value=sol.dual_value,
        gap=sol.gap,
        tol=tol,
        primal_witness=primal,
        dual_certificate=dual,
        status=sol.status.value,
        iterations=sol.iterations,
        elapsed=time.perf_counter() - started,
    )


# --- RoBN --------------------------------------------------------------------

def robn_program(m: qobj.DistributedMeasurement) -> ConeProgram:
    """min r s.t. M_ab + N_ab <= O_ab with no-signalling O (PPT) and N (PSD)."""
    dA, dB = m.dims
    oA, oB = m.outcomes
    one_A = HermitianOperator.identity((dA,))
    one_B = HermitianOperator.identity((dB,))
    b = ProgramBuilder("robn")
    r = b.scalar("r")
    O = [[b.variable(f"O[{i},{j}]", (dA, dB), Cone.PSD_AND_PPT, ppt_subsystem=1) for j in range(oB)]
         for i in range(oA)]
    N = [[b.variable(f"N[{i},{j}]", (dA, dB), Cone.PSD) for j in range(oB)] for i in range(oA)]

    for prefix, blocks, normalized in (("O", O, True), ("N", N, False)):
        alice = [b.variable(f"{prefix}_A[{i}]", (dA,)) for i in range(oA)]
        bob = [b.variable(f"{prefix}_B[{j}]", (dB,)) for j in range(oB)]
        for j in range(oB):
            b.equal(f"{prefix}:bob_marginal[{j}]",
                    sum(blocks[i][j].expr() for i in range(oA)) - bob[j].kron_identity(left=(dA,)))
        for i in range(oA):
            b.equal(f"{prefix}:alice_marginal[{i}]",
                    sum(blocks[i][j].expr() for j in range(oB)) - alice[i].kron_identity(right=(dB,)))
        if normalized:
            b.equal("bob_normalization",
                    sum(v.expr() for v in bob) - r.kron_identity(left=(dB,)), one_B)
            b.equal("alice_normalization",
                    sum(v.expr() for v in alice) - r.kron_identity(left=(dA,)), one_A)

    for i in range(oA):
        for j in range(oB):
            b.psd(f"dominance[{i},{j}]", O[i][j] - N[i][j] - m.element(i, j))
    b.minimize(r.expr())
    return b.build()


def robn(m: qobj.DistributedMeasurement, tol: Optional[float] = None,
         cross_check: bool = False) -> RobustnessReport:
    """Robustness of Buscemi nonlocality under the PPT and no-signalling relaxation."""
    tol = _tolerance(tol)
    started = time.perf_counter()
    oA, oB = m.outcomes
    program = robn_program(m)
    sol = _solve_or_raise(program, tol, cross_check)

    O = [[sol.primal[f"O[{i},{j}]"] for j in range(oB)] for i in range(oA)]
    noise = [[O[i][j] - m.element(i, j) for j in range(oB)] for i in range(oA)]
    primal = {
        "O": O,
        "N": noise,
        "O_A": [sol.primal[f"O_A[{i}]"] for i in range(oA)],
        "O_B": [sol.primal[f"O_B[{j}]"] for j in range(oB)],
    }
    dual = {
        "A": [[sol.dual[f"dominance[{i},{j}]"] for j in range(oB)] for i in range(oA)],
        "B": [sol.dual[f"O:bob_marginal[{j}]"] for j in range(oB)],
        "C": [sol.dual[f"O:alice_marginal[{i}]"] for i in range(oA)],
        "D": -1.0 * sol.dual["alice_normalization"],
        "E": -1.0 * sol.dual["bob_normalization"],
        "F": [[sol.dual[f"O[{i},{j}]:ppt"] for j in range(oB)] for i in range(oA)],
    }
    report = _report("robn", sol, tol, started, primal, dual)
    _check_certificate(report, [m.element(i, j) for i in range(oA) for j in range(oB)],
                       normalization=dual["D"].trace() + dual["E"].trace())
    logger.info(f"✅ RoBN = {report.value:.10g} (gap {report.gap:.2e}, {report.elapsed:.2f}s)")
    return report


# --- RoT ---------------------------------------------------------------------

def rot_program(t: qobj.TeleportationInstrument) -> ConeProgram:
    """min tr s - 1 s.t. J_a <= F_a, sum_a F_a = 1/d_V (x) s, F_a PPT."""
    dV, dBp = t.dims
    b = ProgramBuilder("rot")
    F = [b.variable(f"F[{a}]", (dV, dBp), Cone.PSD_AND_PPT, ppt_subsystem=1) for a in range(t.outcomes)]
    sigma = b.variable("sigma", (dBp,), Cone.PSD)
    b.equal("no_signalling", sum(f.expr() for f in F) - (1.0 / dV) * sigma.kron_identity(left=(dV,)))
    for a, f in enumerate(F):
        b.psd(f"dominance[{a}]", f - t.choi[a])
    b.minimize(sigma.trace() - 1.0)
    return b.build()


def rot(t: qobj.TeleportationInstrument, tol: Optional[float] = None,
        cross_check: bool = False) -> RobustnessReport:
    """Robustness of teleportation under the PPT relaxation of separable Choi blocks."""
    tol = _tolerance(tol)
    started = time.perf_counter()
    sol = _solve_or_raise(rot_program(t), tol, cross_check)
    primal = {
        "F": [sol.primal[f"F[{a}]"] for a in range(t.outcomes)],
        "sigma": sol.primal["sigma"],
        "noise": [sol.primal[f"F[{a}]"] - t.choi[a] for a in range(t.outcomes)],
    }
    dual = {
        "A": [sol.dual[f"dominance[{a}]"] for a in range(t.outcomes)],
        "B": sol.dual["no_signalling"],
        "W": [sol.dual[f"F[{a}]:ppt"] for a in range(t.outcomes)],
    }
    report = _report("rot", sol, tol, started, primal, dual)
    _check_certificate(report, list(t.choi))
    logger.info(f"✅ RoT = {report.value:.10g} (gap {report.gap:.2e}, {report.elapsed:.2f}s)")
    return report


# --- RoE ---------------------------------------------------------------------

def roe_program(rho: qobj.BipartiteState) -> ConeProgram:
    """min tr s - 1 s.t. rho <= s, s PSD and PPT."""
    b = ProgramBuilder("roe")
    sigma = b.variable("sigma", rho.dims, Cone.PSD_AND_PPT, ppt_subsystem=1)
    b.psd("dominance", sigma - rho.op)
    b.minimize(sigma.trace() - 1.0)
    return b.build()


def roe(rho: qobj.BipartiteState, tol: Optional[float] = None,
        cross_check: bool = False) -> RobustnessReport:
    """Generalized robustness of entanglement, relaxed to PPT.

    The certificate satisfies A >= 0 and 1 - A = P + Q^{T_B} with P = ``W``
    and Q = ``Q``; ``cross_check`` also solves the mechanically derived dual.
    """
    tol = _tolerance(tol)
    started = time.perf_counter()
    sol = _solve_or_raise(roe_program(rho), tol, cross_check)
    sigma = sol.primal["sigma"]
    primal = {"sigma": sigma, "eta": sigma.trace() - 1.0, "noise": sigma - rho.op}
    dual = {"A": sol.dual["dominance"], "W": sol.dual["sigma:psd"], "Q": sol.dual["sigma:ppt"]}
    report = _report("roe", sol, tol, started, primal, dual)
    _check_certificate(report, [rho.op])
    logger.info(f"✅ RoE = {report.value:.10g} (gap {report.gap:.2e}, {report.elapsed:.2f}s)")
    return report


def pure_state_roe(psi: np.ndarray, dims: Tuple[int, int]) -> float:
    """(sum_i sqrt(lambda_i))^2 - 1 from the Schmidt coefficients of a pure state."""
    v = np.asarray(psi, dtype=complex).reshape(dims)
    s = np.linalg.svd(v / np.linalg.norm(v), compute_uv=False)
    return float(np.sum(s) ** 2 - 1.0)


# --- RoBN of a state ---------------------------------------------------------

def robn_of_state(rho: qobj.BipartiteState, tol: Optional[float] = None,
                  seesaw: bool = False, rounds: Optional[int] = None) -> RobustnessReport:
    """RoBN generated by ``rho`` with Bell measurements on both sides, next to RoE(rho).

    Raises VerificationError when the two values disagree.
    """
    tol = _tolerance(tol)
    dAp, dBp = rho.dims
    if dAp != dBp:
        raise InputError(f"robn_of_state needs a d x d state, got dims {list(rho.dims)}")
    mA, mB = qobj.bell_measurement(dAp), qobj.bell_measurement(dBp)
    report = robn(qobj.build_distributed(mA, mB, rho), tol)
    if seesaw:
        refined, _, _ = seesaw_refine(rho, mA, mB, rounds, tol)
        report.extras["bell_value"] = report.value
        if refined.value > report.value:
            refined.extras.update({k: v for k, v in report.extras.items() if k not in refined.extras})
            report = refined
    roe_report = roe(rho, tol)
    limit = 10 * tol * len(report.certificate_blocks)
    diff = abs(report.value - roe_report.value)
    report.extras.update({
        "roe": roe_report.value,
        "roe_gap": roe_report.gap,
        "roe_certificate_error": roe_report.certificate_error,
        "difference": diff,
        "agree": diff <= limit,
    })
    if diff > limit:
        raise VerificationError(
            f"RoBN {report.value:.10g} and RoE {roe_report.value:.10g} disagree by {diff:.3e}",
            {"robn": report.value, "roe": roe_report.value, "difference": diff, "limit": limit},
        )
    return report


def _measurement_weights(report: RobustnessReport, m: qobj.DistributedMeasurement) -> np.ndarray:
    dA, dB = m.dims
    return np.stack([[blk.matrix.reshape(dA, dB, dA, dB) for blk in row]
                     for row in report.dual_certificate["A"]])


def seesaw_refine(rho: qobj.BipartiteState, mA: qobj.Povm, mB: qobj.Povm,
                  rounds: Optional[int] = None, tol: Optional[float] = None
                  ) -> Tuple[RobustnessReport, qobj.Povm, qobj.Povm]:
    """Alternate POVM updates against the current certificate, re-solving RoBN each time.

    Each half-step maximizes sum_ab tr[A_ab M_ab] over one party's POVM with
    the other fixed; the best report seen is returned with method ``seesaw``.
    """
    tol = _tolerance(tol)
    rounds = rounds or settings.NONLOCALITY_FORGE_SEESAW_ROUNDS
    best = robn(qobj.build_distributed(mA, mB, rho), tol)
    best_povms = (mA, mB)
    for k in range(rounds):
        improved = False
        for side in ("A", "B"):
            m = qobj.build_distributed(best_povms[0], best_povms[1], rho)
            weights = _measurement_weights(best, m)
            if side == "A":
                grads = qobj.alice_gradient(best_povms[1], rho, weights)
                _, new = qobj.optimal_povm(list(grads), best_povms[0].dims, tol)
                candidate_povms = (new, best_povms[1])
            else:
                grads = qobj.bob_gradient(best_povms[0], rho, weights)
                _, new = qobj.optimal_povm(list(grads), best_povms[1].dims, tol)
                candidate_povms = (best_povms[0], new)
            candidate = robn(qobj.build_distributed(*candidate_povms, rho), tol)
            logger.debug(f"🔄 seesaw round {k} side {side}: {candidate.value:.10g} (best {best.value:.10g})")
            if candidate.value > best.value + SEESAW_MIN_IMPROVEMENT:
                best, best_povms, improved = candidate, candidate_povms, True
        if not improved:
            break
    best.method = "seesaw"
    best.extras["seesaw_rounds"] = k + 1
    return best, best_povms[0], best_povms[1]


# --- property suite ----------------------------------------------------------

@dataclass
class PropertyReport:
    quantifier: str
    checks: Dict[str, int] = field(default_factory=lambda: {"faithfulness": 0, "convexity": 0, "monotonicity": 0})
    max_violation: Dict[str, float] = field(
        default_factory=lambda: {"faithfulness": 0.0, "convexity": 0.0, "monotonicity": 0.0})
    counterexamples: List[Dict[str, Any]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.counterexamples

    def record(self, prop: str, violation: float, instance: Dict[str, Any]):
        self.checks[prop] += 1
        self.max_violation[prop] = max(self.max_violation[prop], violation)
        if violation > PROPERTY_SLACK:
            logger.warning(f"❌ {self.quantifier} {prop} violated by {violation:.3e}")
            self.counterexamples.append({"property": prop, "violation": violation, **instance})


def _random_measurement(d: int, seed: int) -> qobj.DistributedMeasurement:
    rng = np.random.default_rng(seed)
    sa, sb, ss = (int(v) for v in rng.integers(0, 2**31, size=3))
    return qobj.build_distributed(qobj.random_povm((d, d), 2, sa), qobj.random_povm((d, d), 2, sb),
                                  qobj.random_state((d, d), None, ss))


def _random_instrument(d: int, seed: int) -> qobj.TeleportationInstrument:
    rng = np.random.default_rng(seed)
    sa, ss = (int(v) for v in rng.integers(0, 2**31, size=2))
    return qobj.teleportation_instrument(qobj.random_povm((d, d), 2, sa), qobj.random_state((d, d), None, ss))


def _mix_instruments(t1: qobj.TeleportationInstrument, t2: qobj.TeleportationInstrument,
                     p: float) -> qobj.TeleportationInstrument:
    return qobj.TeleportationInstrument(tuple(p * a + (1.0 - p) * b for a, b in zip(t1.choi, t2.choi)))


def _local_channel_on_output(t: qobj.TeleportationInstrument, ch: LinearMapOnOperators) -> qobj.TeleportationInstrument:
    dV = t.dims[0]
    full = kron_maps(LinearMapOnOperators.identity((dV,)), ch)
    return qobj.TeleportationInstrument(tuple(full(j) for j in t.choi))


def property_suite(quantifier: str, seeds: Sequence[int], d: int = 2,
                   tol: Optional[float] = None) -> PropertyReport:
    """Faithfulness, convexity and monotonicity checks on seeded random instances.

    ``quantifier`` is ``robn``, ``rot`` or ``roe``. Violations beyond 1e-6
    are collected as counterexamples carrying the offending objects.
    """
    tol = _tolerance(tol)
    if quantifier == "robn":
        value: Callable[[Any], float] = lambda m: robn(m, tol).value
        free = lambda s: qobj.random_free_measurement(d, (2, 2), s)
        random_obj = lambda s: _random_measurement(d, s)
        mix = lambda x, y, p: x.mix(y, p)
        simulate = lambda m, s: qobj.simulate(m, qobj.random_subroutine((d, d), m.outcomes, seed=s))
    elif quantifier == "rot":
        value = lambda t: rot(t, tol).value
        free = lambda s: qobj.teleportation_instrument(
            qobj.random_povm((d, d), 2, s), qobj.random_separable_model((d, d), 3, s + 1).state())
        random_obj = lambda s: _random_instrument(d, s)
        mix = _mix_instruments
        simulate = lambda t, s: _local_channel_on_output(t, qobj.random_channel(d, np.random.default_rng(s)))
    elif quantifier == "roe":
        value = lambda r: roe(r, tol).value
        free = lambda s: qobj.random_separable_model((d, d), 3, s).state()
        random_obj = lambda s: qobj.random_state((d, d), None, s)
        mix = lambda x, y, p: qobj.BipartiteState(p * x.op + (1.0 - p) * y.op)

        def simulate(r, s):
            rng = np.random.default_rng(s)
            ch = kron_maps(qobj.random_channel(d, rng), qobj.random_channel(d, rng))
            return qobj.BipartiteState(ch(r.op))
    else:
        raise InputError(f"unknown quantifier {quantifier!r}")

    report = PropertyReport(quantifier)
    for seed in seeds:
        obj = free(seed)
        report.record("faithfulness", value(obj), {"seed": seed, "object": obj})

        first, second = random_obj(seed), random_obj(seed + 10_000)
        v1, v2 = value(first), value(second)
        for p in CONVEXITY_GRID:
            mixed = value(mix(first, second, p))
            report.record("convexity", mixed - (p * v1 + (1.0 - p) * v2),
                          {"seed": seed, "p": p, "first": first, "second": second})

        simulated = simulate(first, seed + 20_000)
        report.record("monotonicity", value(simulated) - v1,
                      {"seed": seed, "object": first, "simulated": simulated})
    logger.info(f"{'✅' if report.passed else '❌'} {quantifier} properties over {len(seeds)} seeds: "
                f"{len(report.counterexamples)} violations")
    return report
