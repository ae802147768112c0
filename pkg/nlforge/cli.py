import argparse
import csv
import io
import logging
import os
import sys
import time
import traceback
from typing import List, Optional

import numpy as np

from nlforge import __version__, documents, games, qobj, robustness, suites
from nlforge.config import settings
from nlforge.errors import ForgeError, InputError, SolverError, VerificationError
from nlforge.linalg import max_entangled

logger = logging.getLogger(__name__)
debug_logger = logging.getLogger('debug')

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INPUT = 2


def configure_logging():
    """stderr for progress, a file handler for error traces; stdout carries reports."""
    logging.basicConfig(
        level=getattr(logging, settings.NONLOCALITY_FORGE_LOG_LEVEL),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            logging.StreamHandler(sys.stderr)
        ]
    )

    # Configure debug logger to write to the debug log file
    if not debug_logger.handlers:
        debug_handler = logging.FileHandler(settings.NONLOCALITY_FORGE_DEBUG_LOG, delay=True)
        debug_handler.setLevel(logging.ERROR)
        debug_formatter = logging.Formatter('%(asctime)s - %(levelname)s - %(message)s')
        debug_handler.setFormatter(debug_formatter)
        debug_logger.addHandler(debug_handler)
        debug_logger.setLevel(logging.ERROR)
        debug_logger.propagate = False

    # Set specific log levels for different components
    if settings.NONLOCALITY_FORGE_LOG_LEVEL != 'DEBUG':
        logging.getLogger('nlforge.ipm').setLevel(logging.WARNING)  # per-iteration lines are DEBUG
    logging.getLogger('nlforge.conic').setLevel(logging.INFO)
    logging.getLogger('nlforge.robustness').setLevel(logging.INFO)
    logging.getLogger('nlforge.suites').setLevel(logging.INFO)
    logging.getLogger('cvxpy').setLevel(logging.WARNING)


# --- input helpers ---------------------------------------------------------------

def _measurement_from_args(args) -> qobj.DistributedMeasurement:
    if args.measurement:
        if args.alice or args.bob or args.state:
            raise InputError("give either --measurement or --alice/--bob/--state, not both")
        return documents.load_measurement(args.measurement)
    if not (args.alice and args.bob and args.state):
        raise InputError("need --measurement FILE or all of --alice, --bob and --state")
    return qobj.build_distributed(documents.load_povm(args.alice), documents.load_povm(args.bob),
                                  documents.load_state(args.state))


def _write(doc, out: Optional[str]):
    documents.write_document(doc, out)
    if out:
        logger.info(f"✅ wrote {out}")


# --- subcommands ---------------------------------------------------------------------

def cmd_robn(args) -> int:
    m = _measurement_from_args(args)
    report = robustness.robn(m, args.tol, cross_check=args.cross_check)
    _write(documents.robustness_report_doc(report), args.out)
    return EXIT_OK


def cmd_roe(args) -> int:
    report = robustness.roe(documents.load_state(args.state), args.tol, cross_check=args.cross_check)
    _write(documents.robustness_report_doc(report), args.out)
    return EXIT_OK


def cmd_rot(args) -> int:
    report = robustness.rot(documents.load_instrument(args.instrument), args.tol, cross_check=args.cross_check)
    _write(documents.robustness_report_doc(report), args.out)
    return EXIT_OK


def cmd_robn_state(args) -> int:
    rho = documents.load_state(args.state)
    report = robustness.robn_of_state(rho, args.tol, seesaw=args.seesaw)
    _write(documents.robustness_report_doc(report), args.out)
    return EXIT_OK


def cmd_game(args) -> int:
    started = time.perf_counter()
    m = _measurement_from_args(args)
    report = robustness.robn(m, args.tol)
    ensemble = games.optimal_dsd_ensemble(report)
    if args.emit_ensemble:
        documents.save_object(ensemble, args.emit_ensemble)
        logger.info(f"✅ wrote ensemble to {args.emit_ensemble}")
    if args.scores or not args.emit_ensemble:
        classical = games.dsd_classical_score(ensemble, args.tol)
        quantum = games.dsd_quantum_score(ensemble, m, args.tol)
        scores = games.ScoreReport(quantum, classical, "certificate_postprocessed", "sdp", report.tol, report.gap,
                                   {"robn": report.value,
                                    "certificate_weight": games.certificate_weight(report)})
        _write(documents.score_report_doc(scores, time.perf_counter() - started), args.out)
    return EXIT_OK


def _write_counterexamples(result: suites.SuiteResult, directory: str) -> List[str]:
    files = []
    for k, r in enumerate(result.instances):
        if r.counterexample is None:
            continue
        os.makedirs(directory, exist_ok=True)
        safe = "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in r.name)
        path = os.path.join(directory, f"{k:03d}_{safe}.json")
        documents.write_json_atomic(path, documents.generic_report_doc(
            "counterexample", {"suite": result.suite, "instance": r.name, **r.counterexample}))
        files.append(path)
        logger.warning(f"❌ counterexample written to {path}")
    return files


def cmd_verify(args) -> int:
    result = suites.run_suite(args.suite, args.seeds, args.dims, args.tol)
    files = _write_counterexamples(result, args.counterexamples)
    _write(documents.suite_report_doc(result.to_payload(files)), args.out)
    return EXIT_OK if result.passed else EXIT_FAILURE


def cmd_selfcheck(args) -> int:
    from nlforge.health_checks import check_all

    statuses = check_all()
    return EXIT_OK if all(s == "OK" for s in statuses.values()) else EXIT_FAILURE


def cmd_sweep(args) -> int:
    d = args.dims
    bell = qobj.bell_measurement(d)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["p", "roe", "robn_state", "rot_ideal_channel"])
    for p in np.linspace(0.0, 1.0, args.points):
        rho = qobj.isotropic_state(d, float(p))
        roe_value = robustness.roe(rho, args.tol).value
        robn_value = robustness.robn(qobj.build_distributed(bell, bell, rho), args.tol).value
        rot_value = robustness.rot(qobj.teleportation_instrument(bell, rho), args.tol).value
        writer.writerow([format(float(p), ".17g")] + [format(v, ".17g") for v in (roe_value, robn_value, rot_value)])
        logger.info(f"🔄 p={p:.4f}: roe={roe_value:.8g} robn={robn_value:.8g} rot={rot_value:.8g}")
    text = buf.getvalue()
    if args.out:
        documents.write_text_atomic(args.out, text)
        logger.info(f"✅ wrote {args.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


BUILTINS = {
    "bell_povm": lambda a: qobj.bell_measurement(a.dims),
    "phi_plus": lambda a: qobj.BipartiteState(max_entangled(a.dims)),
    "isotropic": lambda a: qobj.isotropic_state(a.dims, a.p),
    "ideal_teleportation": lambda a: qobj.teleportation_instrument(
        qobj.bell_measurement(a.dims), qobj.BipartiteState(max_entangled(a.dims))),
    "bell_phi_plus": lambda a: qobj.bell_distributed(qobj.BipartiteState(max_entangled(a.dims))),
}


def cmd_emit(args) -> int:
    obj = BUILTINS[args.object](args)
    documents.save_object(obj, args.out)
    return EXIT_OK


# --- parser ------------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser, cross_check: bool = True):
    p.add_argument("--tol", type=float, default=None, help="Solver tolerance (default from settings).")
    p.add_argument("--out", default=None, help="Output file (default: stdout).")
    if cross_check:
        p.add_argument("--cross-check", action="store_true", help="Also solve the derived dual program.")


def _add_measurement(p: argparse.ArgumentParser):
    p.add_argument("--measurement", help="Distributed measurement document.")
    p.add_argument("--alice", help="Alice's POVM document (on [A, A']).")
    p.add_argument("--bob", help="Bob's POVM document (on [B', B]).")
    p.add_argument("--state", help="Shared state document (on [A', B']).")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nlforge", description="Robustness quantifiers and discrimination games.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("robn", help="Robustness of Buscemi nonlocality of a distributed measurement.")
    _add_measurement(p)
    _add_common(p)
    p.set_defaults(func=cmd_robn)

    p = sub.add_parser("roe", help="Generalized robustness of entanglement of a state.")
    p.add_argument("--state", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_roe)

    p = sub.add_parser("rot", help="Robustness of teleportation of an instrument.")
    p.add_argument("--instrument", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_rot)

    p = sub.add_parser("robn-state", help="RoBN generated by a state with Bell measurements, next to its RoE.")
    p.add_argument("--state", required=True)
    p.add_argument("--seesaw", action="store_true", help="Refine the Bell measurements by see-saw.")
    _add_common(p, cross_check=False)
    p.set_defaults(func=cmd_robn_state)

    p = sub.add_parser("game", help="Certificate ensemble and DSD scores of a distributed measurement.")
    _add_measurement(p)
    p.add_argument("--emit-ensemble", default=None, help="Write the extracted ensemble here.")
    p.add_argument("--scores", action="store_true", help="Compute the score report.")
    _add_common(p, cross_check=False)
    p.set_defaults(func=cmd_game)

    p = sub.add_parser("verify", help="Run an acceptance suite.")
    p.add_argument("--suite", required=True, choices=sorted([*suites.SUITES, *suites.SUITE_ALIASES]))
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--dims", type=int, default=2)
    p.add_argument("--counterexamples", default="counterexamples", help="Directory for counterexample files.")
    _add_common(p, cross_check=False)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("selfcheck", help="Run the health checks.")
    p.set_defaults(func=cmd_selfcheck)

    p = sub.add_parser("sweep", help="Isotropic visibility sweep as CSV.")
    p.add_argument("--dims", type=int, default=2)
    p.add_argument("--points", type=int, default=11)
    _add_common(p, cross_check=False)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("emit", help="Write a built-in object as a document.")
    p.add_argument("object", choices=sorted(BUILTINS))
    p.add_argument("--dims", type=int, default=2)
    p.add_argument("--p", type=float, default=0.6, help="Visibility for the isotropic state.")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_emit)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on usage errors and 0 on --help/--version
        return int(e.code or 0)
    configure_logging()
    try:
        return args.func(args)
    except InputError as e:
        logger.error(f"❌ invalid input: {e}")
        debug_logger.error(f"Input error in {args.command}: {e}\n{traceback.format_exc()}")
        return EXIT_INPUT
    except SolverError as e:
        logger.error(f"❌ solver failure: {e}")
        debug_logger.error(f"Solver error in {args.command}: {e}\n{traceback.format_exc()}")
        if e.solution is not None and getattr(args, "out", None):
            sol = e.solution
            documents.write_document(documents.generic_report_doc("robustness", {
                "status": sol.status.value,
                "objective_value": sol.objective_value,
                "dual_value": sol.dual_value,
                "gap": sol.gap,
                "iterations": sol.iterations,
                "tol": args.tol if args.tol is not None else settings.NONLOCALITY_FORGE_TOL,
            }), args.out)
        return EXIT_FAILURE
    except VerificationError as e:
        logger.error(f"❌ verification failed: {e}")
        debug_logger.error(f"Verification error in {args.command}: {e} {e.diagnostics}\n{traceback.format_exc()}")
        if getattr(args, "out", None):
            documents.write_document(documents.generic_report_doc(
                "counterexample", {"command": args.command, "error": str(e), **e.diagnostics}), args.out)
        return EXIT_FAILURE
    except ForgeError as e:
        logger.error(f"❌ {e}")
        debug_logger.error(f"Error in {args.command}: {e}\n{traceback.format_exc()}")
        return EXIT_FAILURE
