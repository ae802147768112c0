"""
Discrimination games
Scores for distributed (DSD), teleportation (TSD) and entanglement-assisted
(ESD) state discrimination, ensembles extracted from RoBN certificates,
general scored games, the simulation-preorder monotone and single-shot
min-entropies.
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import linear_sum_assignment

from nlforge import qobj
from nlforge.config import check_tol, settings
from nlforge.conic import Cone, ProgramBuilder, solve
from nlforge.errors import InputError, SolverError, VerificationError
from nlforge.linalg import HermitianOperator
from nlforge.robustness import RobustnessReport, robn

logger = logging.getLogger(__name__)

NORMALIZATION_TOL = 1e-10
ZERO_TRACE = 1e-12
MONOTONE_SLACK = 1e-6
RESULT_TOL = 1e-4
ENUMERATION_LIMIT = 4096


@dataclass(frozen=True, eq=False)
class StateEnsemble:
    """probs[x, y] with bipartite states[x][y] on [d_A, d_B]."""

    probs: np.ndarray
    states: Tuple[Tuple[HermitianOperator, ...], ...]

    def __post_init__(self):
        p = np.array(self.probs, dtype=float)
        if p.ndim != 2:
            raise InputError(f"ensemble probabilities must be a matrix, got shape {p.shape}")
        if np.any(p < -NORMALIZATION_TOL) or abs(p.sum() - 1.0) > NORMALIZATION_TOL:
            raise InputError(f"ensemble probabilities sum to {p.sum():.12g}")
        states = tuple(tuple(row) for row in self.states)
        if len(states) != p.shape[0] or any(len(row) != p.shape[1] for row in states):
            raise InputError(f"ensemble states do not match probability shape {p.shape}")
        dims = states[0][0].dims
        for x, row in enumerate(states):
            for y, s in enumerate(row):
                if s.dims != dims or len(dims) != 2:
                    raise InputError(f"state ({x},{y}) has dims {list(s.dims)}, expected {list(dims)}")
                if not s.is_psd(NORMALIZATION_TOL) or abs(s.trace() - 1.0) > NORMALIZATION_TOL:
                    raise InputError(f"state ({x},{y}) is not a density matrix")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "states", states)

    @property
    def dims(self):
        return self.states[0][0].dims

    @property
    def shape(self) -> Tuple[int, int]:
        return self.probs.shape

    def weighted(self) -> np.ndarray:
        """p(x,y) sigma_xy as (|X|, |Y|, d, d)."""
        return np.stack([[self.probs[x, y] * s.matrix for y, s in enumerate(row)]
                         for x, row in enumerate(self.states)])

    @classmethod
    def point_mass(cls, shape: Tuple[int, int], at: Tuple[int, int], state: HermitianOperator) -> "StateEnsemble":
        filler = HermitianOperator.identity(state.dims) / state.size
        probs = np.zeros(shape)
        probs[at] = 1.0
        states = [[state if (x, y) == tuple(at) else filler for y in range(shape[1])] for x in range(shape[0])]
        return cls(probs, states)


@dataclass(frozen=True, eq=False)
class GameRules:
    """Scored game: V[a, b, x, y] in [0, 1]."""

    ensemble: StateEnsemble
    score: np.ndarray

    def __post_init__(self):
        v = np.array(self.score, dtype=float)
        if v.ndim != 4 or v.shape[2:] != self.ensemble.shape:
            raise InputError(f"score shape {v.shape} does not match ensemble {self.ensemble.shape}")
        if np.any(v < 0.0) or np.any(v > 1.0):
            raise InputError("score values must lie in [0, 1]")
        v.setflags(write=False)
        object.__setattr__(self, "score", v)

    @classmethod
    def discrimination(cls, ensemble: StateEnsemble, outcomes: Optional[Tuple[int, int]] = None) -> "GameRules":
        """V = delta_{xa} delta_{yb}."""
        nx, ny = ensemble.shape
        oA, oB = outcomes or (nx, ny)
        v = np.zeros((oA, oB, nx, ny))
        for x in range(min(nx, oA)):
            for y in range(min(ny, oB)):
                v[x, y, x, y] = 1.0
        return cls(ensemble, v)


@dataclass
class ScoreReport:
    quantum_score: float
    classical_score: float
    quantum_method: str
    classical_method: str = "sdp"
    tol: float = 0.0
    gap: float = 0.0
    extras: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.classical_score <= 0:
            raise VerificationError(f"classical score {self.classical_score} is not positive",
                                    {"classical_score": self.classical_score})

    @property
    def ratio(self) -> float:
        return self.quantum_score / self.classical_score


def random_ensemble(shape: Tuple[int, int], dims: Tuple[int, int], seed=None) -> StateEnsemble:
    """Dirichlet probabilities over Ginibre states of random rank."""
    rng = np.random.default_rng(seed)
    n = int(dims[0] * dims[1])
    probs = rng.dirichlet(np.ones(shape[0] * shape[1])).reshape(shape)
    states = [[qobj.random_density(n, int(rng.integers(1, n + 1)), rng).with_dims(dims)
               for _ in range(shape[1])] for _ in range(shape[0])]
    return StateEnsemble(probs, states)


# --- ensembles from certificates -----------------------------------------------

Certificate = Union[RobustnessReport, Sequence[Sequence[HermitianOperator]]]


def _certificate_blocks(cert: Certificate) -> List[List[HermitianOperator]]:
    if isinstance(cert, RobustnessReport):
        if cert.quantifier != "robn":
            raise InputError(f"need a RoBN certificate, got {cert.quantifier}")
        cert = cert.dual_certificate["A"]
    return [list(row) for row in cert]


def _psd_part(op: HermitianOperator) -> HermitianOperator:
    vals, vecs = np.linalg.eigh(op.matrix)
    return HermitianOperator.hermitian_part((vecs * np.clip(vals, 0.0, None)) @ vecs.conj().T, op.dims)


def certificate_weight(cert: Certificate) -> float:
    """C = sum_xy tr A_xy."""
    return float(sum(_psd_part(a).trace() for row in _certificate_blocks(cert) for a in row))


def optimal_dsd_ensemble(cert: Certificate) -> StateEnsemble:
    """p*(x,y) = tr A_xy / C and sigma*_xy = A_xy / tr A_xy.

    Blocks with trace below 1e-12 get probability zero and the maximally
    mixed state.
    """
    blocks = [[_psd_part(a) for a in row] for row in _certificate_blocks(cert)]
    traces = np.array([[a.trace() for a in row] for row in blocks])
    total = float(traces.sum())
    if total < ZERO_TRACE:
        raise InputError("certificate is identically zero; no ensemble can be extracted")
    probs = np.where(traces < ZERO_TRACE, 0.0, traces) / total
    probs /= probs.sum()
    dims = blocks[0][0].dims
    filler = HermitianOperator.identity(dims) / blocks[0][0].size
    states = [[a / t if t >= ZERO_TRACE else filler for a, t in zip(row, trow)]
              for row, trow in zip(blocks, traces)]
    return StateEnsemble(probs, states)


# --- DSD -------------------------------------------------------------------------

def dsd_classical_score(g: StateEnsemble, tol: Optional[float] = None) -> float:
    """max sum p(x,y) tr[N_xy sigma_xy] over no-signalling PPT measurements."""
    tol = check_tol(tol)
    dA, dB = g.dims
    nx, ny = g.shape
    b = ProgramBuilder("dsd_classical")
    N = [[b.variable(f"N[{x},{y}]", (dA, dB), Cone.PSD_AND_PPT, ppt_subsystem=1) for y in range(ny)]
         for x in range(nx)]
    alice = [b.variable(f"N_A[{x}]", (dA,)) for x in range(nx)]
    bob = [b.variable(f"N_B[{y}]", (dB,)) for y in range(ny)]
    for y in range(ny):
        b.equal(f"bob_marginal[{y}]", sum(N[x][y].expr() for x in range(nx)) - bob[y].kron_identity(left=(dA,)))
    for x in range(nx):
        b.equal(f"alice_marginal[{x}]", sum(N[x][y].expr() for y in range(ny)) - alice[x].kron_identity(right=(dB,)))
    b.equal("completeness", sum(v.expr() for row in N for v in row), HermitianOperator.identity((dA, dB)))
    b.maximize(sum(N[x][y].expr().inner(float(g.probs[x, y]) * g.states[x][y])
                   for x in range(nx) for y in range(ny)))
    sol = solve(b.build(), tol)
    if not sol.ok:
        raise SolverError(f"classical DSD score: solver ended with {sol.status.value}", sol)
    logger.debug(f"classical DSD score {sol.objective_value:.10g} (gap {sol.gap:.2e})")
    return float(sol.objective_value)


def _payoff_table(g: StateEnsemble, m: qobj.DistributedMeasurement) -> np.ndarray:
    """T[a, b, x, y] = p(x,y) tr[M_ab sigma_xy]."""
    oA, oB = m.outcomes
    n = m.dims[0] * m.dims[1]
    mats = m.array().reshape(oA, oB, n, n)
    return np.einsum("abij,xyji->abxy", mats, g.weighted(), optimize=True).real


def _best_bob(table: np.ndarray, f_a: Sequence[int]) -> Tuple[float, np.ndarray]:
    # gain[b, y] = sum_a T[a, b, f_a(a), y]
    oA = table.shape[0]
    gain = sum(table[a, :, f_a[a], :] for a in range(oA))
    f_b = np.argmax(gain, axis=1)
    return float(gain[np.arange(gain.shape[0]), f_b].sum()), f_b


def _best_alice(table: np.ndarray, f_b: Sequence[int]) -> Tuple[float, np.ndarray]:
    oB = table.shape[1]
    gain = sum(table[:, b, :, f_b[b]] for b in range(oB))
    f_a = np.argmax(gain, axis=1)
    return float(gain[np.arange(gain.shape[0]), f_a].sum()), f_a


def best_postprocessing(table: np.ndarray) -> Tuple[float, np.ndarray, np.ndarray]:
    """Optimal local deterministic post-processing f_A: a -> x, f_B: b -> y.

    Alice's map is enumerated when |X|^{o_A} <= 4096, otherwise coordinate
    ascent runs from fixed starts (identity-like, assignment-based, constant).
    """
    oA, oB, nx, ny = table.shape
    if nx ** oA <= ENUMERATION_LIMIT:
        best = (-np.inf, None, None)
        for f_a in itertools.product(range(nx), repeat=oA):
            value, f_b = _best_bob(table, f_a)
            if value > best[0] + 1e-15:
                best = (value, np.array(f_a), f_b)
        return best

    starts = [np.arange(oA) % nx, np.zeros(oA, dtype=int)]
    marginal_gain = table.max(axis=3).sum(axis=1)
    rows, cols = linear_sum_assignment(-marginal_gain)
    assigned = np.argmax(marginal_gain, axis=1)
    assigned[rows] = cols
    starts.append(assigned)
    best = (-np.inf, None, None)
    for f_a in starts:
        value, f_b = _best_bob(table, f_a)
        while True:
            new_value, new_a = _best_alice(table, f_b)
            new_value, new_b = _best_bob(table, new_a)
            if new_value <= value + 1e-15:
                break
            value, f_a, f_b = new_value, new_a, new_b
        if value > best[0]:
            best = (value, np.asarray(f_a), np.asarray(f_b))
    return best


def dsd_quantum_score(g: StateEnsemble, m: qobj.DistributedMeasurement, tol: Optional[float] = None) -> float:
    """Trivial-subroutine score of ``m`` improved by the best local post-processing."""
    check_tol(tol)
    if m.dims != g.dims:
        raise InputError(f"measurement dims {list(m.dims)} do not match ensemble dims {list(g.dims)}")
    oA, oB = m.outcomes
    if oA < g.shape[0] or oB < g.shape[1]:
        raise InputError(f"measurement has {oA}x{oB} outcomes for {g.shape[0]}x{g.shape[1]} questions")
    value, _, _ = best_postprocessing(_payoff_table(g, m))
    return float(value)


def identity_score(g: StateEnsemble, m: qobj.DistributedMeasurement) -> float:
    """sum p(x,y) tr[M_xy sigma_xy] with outcomes read as guesses."""
    table = _payoff_table(g, m)
    nx, ny = g.shape
    return float(sum(table[x, y, x, y] for x in range(nx) for y in range(ny)))


def verify_dsd_advantage(m: qobj.DistributedMeasurement, tol: Optional[float] = None) -> ScoreReport:
    """Quantum over classical score on the certificate ensemble equals 1 + RoBN."""
    tol = check_tol(tol)
    report = robn(m, tol)
    ensemble = optimal_dsd_ensemble(report)
    weight = certificate_weight(report)
    classical = dsd_classical_score(ensemble, tol)
    quantum = dsd_quantum_score(ensemble, m, tol)
    scores = ScoreReport(quantum, classical, "certificate_postprocessed", "sdp", tol, report.gap, {
        "robn": report.value,
        "certificate_weight": weight,
        "identity_score": identity_score(ensemble, m),
        "certificate_error": report.certificate_error,
        "expected_ratio": 1.0 + report.value,
    })
    diagnostics = {"quantum_score": quantum, "classical_score": classical, "ratio": scores.ratio,
                   **scores.extras}
    if abs(scores.ratio - (1.0 + report.value)) > RESULT_TOL:
        raise VerificationError(f"score ratio {scores.ratio:.8g} != 1 + RoBN = {1.0 + report.value:.8g}",
                                diagnostics)
    logger.info(f"✅ DSD ratio {scores.ratio:.8g} = 1 + {report.value:.8g}")
    return scores


# --- TSD and ESD -------------------------------------------------------------------

def tsd_quantum_score(g: StateEnsemble, t: qobj.TeleportationInstrument,
                      tol: Optional[float] = None) -> Tuple[float, qobj.Povm]:
    """max over Bob's POVM on [B', B] of sum p(x,y) tr[M_y (Lambda_x (x) id)(sigma_xy)]."""
    tol = check_tol(tol)
    nx, ny = g.shape
    if t.outcomes < nx:
        raise InputError(f"instrument has {t.outcomes} outcomes for {nx} questions")
    if g.dims[0] != t.dims[0]:
        raise InputError(f"ensemble dims {list(g.dims)} do not match instrument input {t.dims[0]}")
    dBp, dB = t.dims[1], g.dims[1]
    ops = []
    for y in range(ny):
        k = np.zeros((dBp * dB, dBp * dB), dtype=complex)
        for x in range(nx):
            if g.probs[x, y] > 0:
                k = k + g.probs[x, y] * t.apply(x, g.states[x][y]).matrix
        ops.append(k)
    return qobj.optimal_povm(ops, (dBp, dB), tol)


def tsd_scores(g: StateEnsemble, t: qobj.TeleportationInstrument, tol: Optional[float] = None) -> ScoreReport:
    tol = check_tol(tol)
    quantum, povm = tsd_quantum_score(g, t, tol)
    classical = dsd_classical_score(g, tol)
    return ScoreReport(quantum, classical, "sdp_bob_povm", "sdp", tol, 0.0, {"bob_povm": povm})


def teleportation_game(t: qobj.TeleportationInstrument, tol: Optional[float] = None
                       ) -> Tuple[StateEnsemble, RobustnessReport]:
    """Certificate ensemble of the measurement Bob obtains with a Bell measurement on [B', B']."""
    dBp = t.dims[1]
    report = robn(qobj.measure_instrument(t, qobj.bell_measurement(dBp)), tol)
    return optimal_dsd_ensemble(report), report


def esd_scores(g: StateEnsemble, rho: qobj.BipartiteState, tol: Optional[float] = None,
               seesaw: bool = False, rounds: Optional[int] = None) -> ScoreReport:
    """Bell-measurement score of ``rho`` against the classical score.

    With ``seesaw`` the Bell POVMs, coarse-grained by their best
    post-processing, are refined by alternating POVM SDPs; the refined score
    is reported separately under ``extras["seesaw_score"]``.
    """
    tol = check_tol(tol)
    dAp, dBp = rho.dims
    mA, mB = qobj.bell_measurement(dAp), qobj.bell_measurement(dBp)
    m = qobj.build_distributed(mA, mB, rho)
    if m.dims != g.dims:
        raise InputError(f"ensemble dims {list(g.dims)} do not match question spaces {list(m.dims)}")
    value, f_a, f_b = best_postprocessing(_payoff_table(g, m))
    classical = dsd_classical_score(g, tol)
    report = ScoreReport(value, classical, "bell_postprocessed", "sdp", tol)
    if seesaw:
        report.extras["seesaw_score"] = _esd_seesaw(g, rho, mA, mB, f_a, f_b, value, tol, rounds)
    return report


def _coarse_grain(povm: qobj.Povm, f: Sequence[int], outcomes: int) -> qobj.Povm:
    zero = HermitianOperator.zeros(povm.dims)
    elements = [sum((povm[k] for k in range(povm.outcomes) if f[k] == x), zero) for x in range(outcomes)]
    return qobj.Povm(tuple(elements))


def _esd_seesaw(g: StateEnsemble, rho: qobj.BipartiteState, mA: qobj.Povm, mB: qobj.Povm,
                f_a, f_b, start: float, tol: float, rounds: Optional[int]) -> float:
    rounds = rounds or settings.NONLOCALITY_FORGE_SEESAW_ROUNDS
    nx, ny = g.shape
    dA, dB = g.dims
    alice, bob = _coarse_grain(mA, f_a, nx), _coarse_grain(mB, f_b, ny)
    weights = np.stack([[g.probs[x, y] * g.states[x][y].matrix.reshape(dA, dB, dA, dB)
                         for y in range(ny)] for x in range(nx)])
    best = start
    for k in range(rounds):
        _, alice = qobj.optimal_povm(list(qobj.alice_gradient(bob, rho, weights)), alice.dims, tol)
        value, bob = qobj.optimal_povm(list(qobj.bob_gradient(alice, rho, weights)), bob.dims, tol)
        logger.debug(f"🔄 ESD seesaw round {k}: {value:.10g}")
        if value < best + 1e-7:
            best = max(best, value)
            break
        best = value
    return float(best)


# --- general games ---------------------------------------------------------------

def game_value(rules: GameRules, behaviour: qobj.Behaviour) -> float:
    """sum p(x,y) p(a,b|x,y) V(a,b,x,y)."""
    if behaviour.table.shape != rules.score.shape:
        raise InputError(f"behaviour shape {behaviour.table.shape} does not match score {rules.score.shape}")
    return float(np.einsum("xy,abxy,abxy->", rules.ensemble.probs, behaviour.table, rules.score))


@dataclass
class MonotoneReport:
    """``checks`` holds (source score, simulated score, bound) per ensemble."""

    robn: Optional[RobustnessReport] = None
    postprocessing_only: bool = False
    checks: List[Tuple[float, float, float]] = field(default_factory=list)
    violations: List[Dict[str, Any]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    @property
    def max_increase(self) -> float:
        return max((after - bound for _, after, bound in self.checks), default=0.0)


def _is_identity_channel(ch) -> bool:
    if ch.input_dims != ch.output_dims:
        return False
    reference = type(ch).identity(ch.input_dims).choi
    return ch.choi.allclose(reference, atol=1e-10)


def is_postprocessing(s: qobj.SimulationSubroutine) -> bool:
    """True when every pre-processing channel of ``s`` is the identity."""
    return all(_is_identity_channel(ch) for ch in s.pre_A + s.pre_B)


def check_monotone(m: qobj.DistributedMeasurement, s: qobj.SimulationSubroutine,
                   ensembles: Sequence[StateEnsemble], tol: Optional[float] = None) -> MonotoneReport:
    """No ensemble scores higher on simulate(m, s) than m allows.

    Both measurements are scored with the same search: trivial subroutine
    plus the best local relabeling. When ``s`` only post-processes, that
    search is exact and the simulated score is bounded by the source score.
    Otherwise the bound is (1 + RoBN(m)) times the classical score, which
    holds for every simulation of m.
    """
    tol = check_tol(tol)
    simulated = qobj.simulate(m, s)
    report = MonotoneReport(robn(m, tol), is_postprocessing(s))
    for k, g in enumerate(ensembles):
        before = dsd_quantum_score(g, m, tol)
        after = dsd_quantum_score(g, simulated, tol)
        if report.postprocessing_only:
            bound = before
        else:
            bound = (1.0 + report.robn.value) * dsd_classical_score(g, tol)
        report.checks.append((before, after, bound))
        if after > bound + MONOTONE_SLACK:
            logger.warning(f"❌ ensemble {k}: simulated score {after:.10g} exceeds bound {bound:.10g}")
            report.violations.append({"index": k, "before": before, "after": after, "bound": bound,
                                      "robn": report.robn.value, "ensemble": g, "measurement": m,
                                      "subroutine": s})
    return report


def separating_game(candidate: qobj.DistributedMeasurement, target: qobj.DistributedMeasurement,
                    atol: float = 1e-9) -> Optional[StateEnsemble]:
    """Point-mass ensemble on the most negative eigenvector of candidate - target.

    Returns None when the two measurements coincide within ``atol``.
    """
    if candidate.outcomes != target.outcomes or candidate.dims != target.dims:
        raise InputError("separating_game needs measurements with identical outcomes and dims")
    oA, oB = target.outcomes
    worst = (0.0, None, None)
    for a in range(oA):
        for b in range(oB):
            vals, vecs = (candidate.element(a, b) - target.element(a, b)).eigh()
            if vals[0] < worst[0]:
                worst = (float(vals[0]), (a, b), vecs[:, 0])
    if worst[1] is None or worst[0] > -atol:
        return None
    state = HermitianOperator.projector(worst[2], target.dims)
    return StateEnsemble.point_mass((oA, oB), worst[1], state)


@dataclass
class ConverseReport:
    target_score: float
    ceiling: float
    source: RobustnessReport
    target: RobustnessReport
    candidate_scores: List[float] = field(default_factory=list)
    coincident: int = 0
    failures: List[Dict[str, Any]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    @property
    def separated(self) -> bool:
        return self.target_score > self.ceiling + MONOTONE_SLACK


def converse_check(m: qobj.DistributedMeasurement, target: qobj.DistributedMeasurement,
                   candidates: Sequence[qobj.SimulationSubroutine],
                   tol: Optional[float] = None) -> ConverseReport:
    """Spot check that ``target`` cannot be simulated from ``m``.

    Needs RoBN(target) > RoBN(m). The target's certificate ensemble is the
    separating game: the target reaches (1 + RoBN(target)) times the
    classical score there, every simulation of m at most (1 + RoBN(m))
    times it. Each candidate is scored on that game and must stay under the
    ceiling; a candidate that reproduces the target is a failure too.
    """
    tol = check_tol(tol)
    source, aim = robn(m, tol), robn(target, tol)
    if aim.value <= source.value + RESULT_TOL:
        raise InputError(f"converse_check needs RoBN(target) {aim.value:.8g} above RoBN(m) {source.value:.8g}")
    game = optimal_dsd_ensemble(aim)
    ceiling = (1.0 + source.value) * dsd_classical_score(game, tol)
    report = ConverseReport(dsd_quantum_score(game, target, tol), ceiling, source, aim)
    if not report.separated:
        report.failures.append({"reason": "target does not beat the ceiling",
                                "target_score": report.target_score, "ceiling": ceiling})
    for k, s in enumerate(candidates):
        simulated = qobj.simulate(m, s)
        score = dsd_quantum_score(game, simulated, tol)
        report.candidate_scores.append(score)
        if score > ceiling + MONOTONE_SLACK:
            report.failures.append({"index": k, "reason": "candidate exceeds the ceiling",
                                    "candidate_score": score, "ceiling": ceiling})
        same_shape = (simulated.outcomes, simulated.dims) == (target.outcomes, target.dims)
        if same_shape and separating_game(simulated, target) is None:
            report.coincident += 1
            report.failures.append({"index": k, "reason": "candidate reproduces the target"})
    return report


# --- single-shot information ---------------------------------------------------------

def _normalized(p, what: str) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if np.any(p < -NORMALIZATION_TOL) or abs(p.sum() - 1.0) > NORMALIZATION_TOL:
        raise InputError(f"{what} is not normalized (sum {p.sum():.12g})")
    return p


def min_entropy(p) -> float:
    """-log2 max_x p(x)."""
    p = _normalized(p, "distribution")
    return float(-math.log2(p.max()))


def cond_min_entropy(p_joint) -> float:
    """-log2 sum_g max_x p(x, g) for a table indexed [x, g]."""
    p = _normalized(p_joint, "joint distribution")
    if p.ndim != 2:
        raise InputError(f"joint table must be 2-dimensional, got shape {p.shape}")
    return float(-math.log2(p.max(axis=0).sum()))


@dataclass
class InfoReport:
    value: float
    witness: float
    h_min: float
    h_min_conditional: float
    robn: RobustnessReport
    ensemble: StateEnsemble


def min_accessible_info(m: qobj.DistributedMeasurement, tol: Optional[float] = None) -> InfoReport:
    """log2(1 + RoBN) with a witness encoding built from the certificate ensemble.

    The witness decodes the channel output by identity, so its conditional
    guessing probability is sum p* tr[M_g sigma*_g]; the free baseline of
    the same ensemble plays the unconditional role.
    """
    tol = check_tol(tol)
    report = robn(m, tol)
    value = math.log2(1.0 + report.value)
    ensemble = optimal_dsd_ensemble(report)
    decoded = identity_score(ensemble, m)
    baseline = dsd_classical_score(ensemble, tol)
    witness = math.log2(decoded / baseline)

    # p(question, output) indexed [xy, ab]
    table = _payoff_table(ensemble, m)
    oA, oB, nx, ny = table.shape
    joint = np.clip(table.transpose(2, 3, 0, 1).reshape(nx * ny, oA * oB), 0.0, None)
    joint /= joint.sum()
    info = InfoReport(value, witness, min_entropy(ensemble.probs.reshape(-1)), cond_min_entropy(joint),
                      report, ensemble)
    if abs(witness - value) > RESULT_TOL:
        raise VerificationError(f"witness encoding reaches {witness:.8g} bits, expected {value:.8g}",
                                {"value": value, "witness": witness, "decoded": decoded,
                                 "baseline": baseline, "robn": report.value})
    logger.info(f"✅ min-accessible information {value:.8g} bits (witness {witness:.8g})")
    return info
