"""
Verification suites
Seeded acceptance batteries behind ``nlforge verify``. Instances fan out over
a thread pool capped by NONLOCALITY_FORGE_THREADS; results come back in
submission order.
"""

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from nlforge import games, qobj, robustness
from nlforge.config import check_tol, settings
from nlforge.errors import ForgeError, InputError
from nlforge.linalg import max_entangled

logger = logging.getLogger(__name__)

ROE_EXACT_TOL = 1e-6
EQUALITY_TOL = 1e-5
RESULT_TOL = 1e-4
GAP_TOL = 1e-7
CERTIFICATE_TOL = 1e-6
ISOTROPIC_VISIBILITIES = (0.5, 0.8, 1.0)
PURE_ANGLES = (math.pi / 16, math.pi / 8, math.pi / 4)


@dataclass
class InstanceResult:
    name: str
    passed: bool
    residuals: Dict[str, float] = field(default_factory=dict)
    elapsed: float = 0.0
    detail: Dict[str, Any] = field(default_factory=dict)
    counterexample: Optional[Dict[str, Any]] = None


@dataclass
class SuiteResult:
    suite: str
    tol: float
    instances: List[InstanceResult]
    elapsed: float

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.instances)

    @property
    def failures(self) -> int:
        return sum(not r.passed for r in self.instances)

    def max_residuals(self) -> Dict[str, Optional[float]]:
        out: Dict[str, Optional[float]] = {}
        for r in self.instances:
            for k, v in r.residuals.items():
                if v is None or not math.isfinite(v):
                    out.setdefault(k, None)
                    continue
                out[k] = v if out.get(k) is None else max(out[k], v)
        return out

    def to_payload(self, counterexample_files: List[str]) -> Dict[str, Any]:
        return {
            "suite": self.suite,
            "passed": self.passed,
            "instances": len(self.instances),
            "failures": self.failures,
            "max_residuals": self.max_residuals(),
            "timings": {"total": self.elapsed, **{r.name: r.elapsed for r in self.instances}},
            "tol": self.tol,
            "relaxation": robustness.RELAXATION,
            "counterexamples": counterexample_files,
            "details": [{"name": r.name, "passed": r.passed, **r.detail} for r in self.instances],
        }


Task = Tuple[str, Callable[[], InstanceResult]]


def _guarded(name: str, fn: Callable[[], InstanceResult]) -> InstanceResult:
    started = time.perf_counter()
    try:
        result = fn()
    except InputError:
        raise
    except ForgeError as e:
        logger.warning(f"❌ {name}: {e}")
        diagnostics = getattr(e, "diagnostics", None) or {}
        result = InstanceResult(name, False, detail={"error": str(e), **diagnostics},
                                counterexample={"error": str(e), **diagnostics})
    result.elapsed = time.perf_counter() - started
    return result


def run_tasks(tasks: List[Task], threads: Optional[int] = None) -> List[InstanceResult]:
    threads = threads or settings.NONLOCALITY_FORGE_THREADS
    if threads <= 1:
        return [_guarded(name, fn) for name, fn in tasks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(_guarded, name, fn) for name, fn in tasks]
        return [f.result() for f in futures]


def _compare(name: str, got: float, expected: float, limit: float, key: str = "difference",
             detail: Optional[Dict[str, Any]] = None, instance: Optional[Dict[str, Any]] = None) -> InstanceResult:
    diff = abs(got - expected)
    ok = diff <= limit
    if not ok:
        logger.warning(f"❌ {name}: {got:.10g} vs {expected:.10g} (|diff| {diff:.3e} > {limit:.1e})")
    return InstanceResult(name, ok, {key: diff}, detail={"value": got, "expected": expected, **(detail or {})},
                          counterexample=None if ok else {"value": got, "expected": expected, **(instance or {})})


def _duality(report: robustness.RobustnessReport) -> Tuple[float, float]:
    return report.gap, report.certificate_error


def _with_duality(result: InstanceResult, tol: float, *pairs: Tuple[float, float]) -> InstanceResult:
    """Record the worst duality gap and certificate error; fail the instance past their limits."""
    gap = max(p[0] for p in pairs)
    cert = max(p[1] for p in pairs)
    gap_limit, cert_limit = max(GAP_TOL, 10 * tol), max(CERTIFICATE_TOL, 100 * tol)
    result.residuals.update({"gap": gap, "certificate_error": cert})
    if not (gap <= gap_limit and cert <= cert_limit):
        logger.warning(f"❌ {result.name}: gap {gap:.3e} (limit {gap_limit:.1e}), "
                       f"certificate error {cert:.3e} (limit {cert_limit:.1e})")
        extra = {"gap": gap, "certificate_error": cert, "gap_limit": gap_limit, "certificate_limit": cert_limit}
        result.passed = False
        result.detail.update(extra)
        result.counterexample = {**(result.counterexample or {}), **extra}
    return result


def _seeded_state(d: int, seed: int) -> qobj.BipartiteState:
    rank = seed % (d * d) + 1
    return qobj.random_state((d, d), rank, seed)


# --- suites --------------------------------------------------------------------

def suite_roe(seeds: int, d: int, tol: float) -> List[Task]:
    def run(name: str, state: qobj.BipartiteState, expected: float, limit: float,
            instance: Optional[Dict[str, Any]] = None) -> InstanceResult:
        report = robustness.roe(state, tol)
        return _with_duality(_compare(name, report.value, expected, limit, instance=instance), tol, _duality(report))

    phi = qobj.BipartiteState(max_entangled(d))
    tasks: List[Task] = [("roe[phi_plus]", lambda: run("roe[phi_plus]", phi, d - 1.0, ROE_EXACT_TOL))]
    for theta in PURE_ANGLES:
        coeffs = [math.cos(theta), math.sin(theta)]
        psi = np.zeros(4)
        psi[0], psi[3] = coeffs
        expected = robustness.pure_state_roe(psi, (2, 2))
        name = f"roe[pure theta={theta:.6f}]"
        state = qobj.pure_entangled_state(coeffs)
        tasks.append((name, lambda n=name, s=state, e=expected: run(n, s, e, EQUALITY_TOL)))
    for seed in range(seeds):
        name = f"roe[separable seed={seed}]"
        state = qobj.random_separable_model((d, d), 3, seed).state()
        tasks.append((name, lambda n=name, s=state: run(n, s, 0.0, ROE_EXACT_TOL, {"state": s})))
    return tasks


def suite_robn_roe(seeds: int, d: int, tol: float) -> List[Task]:
    def run(seed: int) -> InstanceResult:
        name = f"robn_roe[seed={seed}]"
        rho = _seeded_state(d, seed)
        report = robustness.robn_of_state(rho, tol)
        result = _compare(name, report.value, report.extras["roe"], EQUALITY_TOL,
                          detail={"roe": report.extras["roe"]}, instance={"state": rho})
        return _with_duality(result, tol, _duality(report),
                             (report.extras["roe_gap"], report.extras["roe_certificate_error"]))

    return [(f"robn_roe[seed={s}]", lambda s=s: run(s)) for s in range(seeds)]


def suite_rot_robn(seeds: int, d: int, tol: float) -> List[Task]:
    def run(seed: int) -> InstanceResult:
        name = f"rot_robn[seed={seed}]"
        rho = _seeded_state(d, seed)
        bell = qobj.bell_measurement(d)
        t = qobj.teleportation_instrument(bell, rho)
        rot_report = robustness.rot(t, tol)
        robn_report = robustness.robn(qobj.build_distributed(bell, bell, rho), tol)
        result = _compare(name, rot_report.value, robn_report.value, EQUALITY_TOL,
                          detail={"rot": rot_report.value, "robn": robn_report.value},
                          instance={"state": rho, "instrument": t})
        return _with_duality(result, tol, _duality(rot_report), _duality(robn_report))

    return [(f"rot_robn[seed={s}]", lambda s=s: run(s)) for s in range(seeds)]


def suite_dsd_advantage(seeds: int, d: int, tol: float) -> List[Task]:
    def bell_case(p: float) -> InstanceResult:
        name = f"dsd_advantage[isotropic p={p}]"
        rho = qobj.isotropic_state(d, p)
        roe_report = robustness.roe(rho, tol)
        bell = qobj.bell_measurement(d)
        scores = games.verify_dsd_advantage(qobj.build_distributed(bell, bell, rho), tol)
        result = _compare(name, scores.ratio, 1.0 + roe_report.value, RESULT_TOL, key="ratio_error",
                          detail={"quantum": scores.quantum_score, "classical": scores.classical_score},
                          instance={"state": rho})
        return _with_duality(result, tol, _duality(roe_report), (scores.gap, scores.extras["certificate_error"]))

    def free_case(seed: int) -> InstanceResult:
        name = f"dsd_advantage[free seed={seed}]"
        m = qobj.random_free_measurement(d, (2, 2), seed)
        scores = games.verify_dsd_advantage(m, tol)
        result = _compare(name, scores.ratio, 1.0, EQUALITY_TOL, key="ratio_error", instance={"measurement": m})
        return _with_duality(result, tol, (scores.gap, scores.extras["certificate_error"]))

    tasks: List[Task] = [(f"dsd_advantage[isotropic p={p}]", lambda p=p: bell_case(p)) for p in ISOTROPIC_VISIBILITIES]
    tasks += [(f"dsd_advantage[free seed={s}]", lambda s=s: free_case(s)) for s in range(seeds)]
    return tasks


def suite_monotone(seeds: int, d: int, tol: float) -> List[Task]:
    bell = qobj.bell_measurement(d)
    source = qobj.build_distributed(bell, bell, qobj.BipartiteState(max_entangled(d)))

    def forward(seed: int) -> InstanceResult:
        name = f"monotone[seed={seed}]"
        s = qobj.random_subroutine(source.dims, source.outcomes, seed=seed)
        g = games.random_ensemble(source.outcomes, source.dims, seed=seed + 50_000)
        report = games.check_monotone(source, s, [g], tol)
        before, after, bound = report.checks[0]
        result = InstanceResult(name, report.passed, {"score_increase": max(report.max_increase, 0.0)},
                                detail={"before": before, "after": after, "bound": bound},
                                counterexample=None if report.passed else {"measurement": source, "subroutine": s,
                                                                           "ensemble": g, "bound": bound})
        return _with_duality(result, tol, _duality(report.robn))

    def converse(seed: int) -> InstanceResult:
        name = f"monotone[converse seed={seed}]"
        free = qobj.random_free_measurement(d, source.outcomes, seed=2000 + seed)
        candidates = [qobj.random_subroutine(free.dims, free.outcomes, seed=1000 + 5 * seed + k) for k in range(5)]
        report = games.converse_check(free, source, candidates, tol)
        result = InstanceResult(name, report.passed,
                                {"candidate_excess": max(max(report.candidate_scores) - report.ceiling, 0.0)},
                                detail={"target_score": report.target_score, "ceiling": report.ceiling,
                                        "best_candidate": max(report.candidate_scores),
                                        "coincident": report.coincident},
                                counterexample=None if report.passed else {"measurement": free,
                                                                           "failures": report.failures})
        return _with_duality(result, tol, _duality(report.source), _duality(report.target))

    tasks: List[Task] = [(f"monotone[seed={s}]", lambda s=s: forward(s)) for s in range(seeds)]
    tasks.append(("monotone[converse seed=0]", lambda: converse(0)))
    return tasks


def suite_accessible_info(seeds: int, d: int, tol: float) -> List[Task]:
    bell = qobj.bell_measurement(d)

    def bell_case(p: float) -> InstanceResult:
        name = f"accessible_info[isotropic p={p}]"
        m = qobj.build_distributed(bell, bell, qobj.isotropic_state(d, p))
        info = games.min_accessible_info(m, tol)
        expected = math.log2(1.0 + info.robn.value)
        result = _compare(name, info.witness, expected, RESULT_TOL, key="bits_error",
                          detail={"bits": info.value, "h_min": info.h_min,
                                  "h_min_conditional": info.h_min_conditional})
        return _with_duality(result, tol, _duality(info.robn))

    def free_case(seed: int) -> InstanceResult:
        name = f"accessible_info[free seed={seed}]"
        m = qobj.random_free_measurement(d, (2, 2), seed)
        info = games.min_accessible_info(m, tol)
        result = _compare(name, info.value, 0.0, RESULT_TOL, key="bits_error", instance={"measurement": m})
        return _with_duality(result, tol, _duality(info.robn))

    tasks: List[Task] = [(f"accessible_info[isotropic p={p}]", lambda p=p: bell_case(p)) for p in ISOTROPIC_VISIBILITIES]
    tasks += [(f"accessible_info[free seed={s}]", lambda s=s: free_case(s)) for s in range(seeds)]
    return tasks


def suite_properties(seeds: int, d: int, tol: float) -> List[Task]:
    def run(quantifier: str) -> InstanceResult:
        report = robustness.property_suite(quantifier, list(range(seeds)), d, tol)
        name = f"properties[{quantifier}]"
        return InstanceResult(name, report.passed, dict(report.max_violation),
                              detail={"checks": report.checks},
                              counterexample=None if report.passed else {"counterexamples": report.counterexamples})

    return [(f"properties[{q}]", lambda q=q: run(q)) for q in ("robn", "rot", "roe")]


SUITES: Dict[str, Callable[[int, int, float], List[Task]]] = {
    "roe": suite_roe,
    "dsd_advantage": suite_dsd_advantage,
    "rot_robn": suite_rot_robn,
    "robn_roe": suite_robn_roe,
    "monotone": suite_monotone,
    "accessible_info": suite_accessible_info,
    "properties": suite_properties,
}

# numbered names accepted by ``verify --suite``
SUITE_ALIASES: Dict[str, str] = {
    "result1": "dsd_advantage",
    "result2": "rot_robn",
    "result4": "robn_roe",
    "result6": "monotone",
    "result7": "accessible_info",
}


def resolve_suite(name: str) -> str:
    resolved = SUITE_ALIASES.get(name, name)
    if resolved not in SUITES:
        raise InputError(f"unknown suite {name!r} (choose from {', '.join([*SUITES, *SUITE_ALIASES])})")
    return resolved


def run_suite(name: str, seeds: int = 10, d: int = 2, tol: Optional[float] = None,
              threads: Optional[int] = None) -> SuiteResult:
    name = resolve_suite(name)
    if seeds < 1:
        raise InputError(f"--seeds must be positive, got {seeds}")
    if d < 2:
        raise InputError(f"--dims must be at least 2, got {d}")
    tol = check_tol(tol)
    started = time.perf_counter()
    logger.info(f"🔄 suite {name}: seeds={seeds} d={d} tol={tol:g}")
    results = run_tasks(SUITES[name](seeds, d, tol), threads)
    suite = SuiteResult(name, tol, results, time.perf_counter() - started)
    logger.info(f"{'✅' if suite.passed else '❌'} suite {name}: {len(results) - suite.failures}/{len(results)} passed "
                f"in {suite.elapsed:.1f}s")
    return suite
