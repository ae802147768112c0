#!/usr/bin/env python3
"""
Regenerate the bundled fixture documents.

This script:
1. Builds every fixture object from the library constructors
2. Writes it through the deterministic document emitter
3. Reads it back and checks that a second write is byte-identical

The checked-in fixtures hold the exact dyadic values. A rebuild can differ
from them in the last digits where the constructors round.
"""

import argparse
import logging
import os
import sys

# Add project root to path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np

from nlforge import documents, games, qobj
from nlforge.config import settings
from nlforge.linalg import HermitianOperator, max_entangled

# Configure logging
logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)

ISOTROPIC_FAMILY = (0.0, 0.25, 0.5, 0.75, 1.0)


def fixture_objects():
    phi = qobj.BipartiteState(max_entangled(2))
    zero = HermitianOperator.projector([1.0, 0.0])
    bell = qobj.bell_measurement(2)
    z = qobj.Povm.computational(2)
    zz = qobj.Povm.computational(4).elements
    objects = {
        "phi_plus": phi,
        "product_state": qobj.product_state(zero, zero),
        "bell_povm_2": bell,
        "z_povm": z,
        "free_zz_measurement": qobj.DistributedMeasurement(
            tuple(tuple(zz[2 * a + b].with_dims((2, 2)) for b in range(2)) for a in range(2))),
        "bell_phi_plus": qobj.build_distributed(bell, bell, phi),
        "classical_instrument": qobj.teleportation_instrument(bell, qobj.product_state(zero, zero)),
        "ideal_teleportation": qobj.teleportation_instrument(bell, phi),
        "orthogonal_product_ensemble": games.StateEnsemble(
            np.full((2, 2), 0.25), [[zz[2 * x + y].with_dims((2, 2)) for y in range(2)] for x in range(2)]),
    }
    for p in ISOTROPIC_FAMILY:
        objects[f"isotropic_{p:g}"] = qobj.isotropic_state(2, p)
    return objects


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.strip().splitlines()[0])
    parser.add_argument("--out", default=settings.NONLOCALITY_FORGE_FIXTURES_DIR,
                        help="Target directory (default: NONLOCALITY_FORGE_FIXTURES_DIR).")
    args = parser.parse_args(argv)

    failures = 0
    for name, obj in fixture_objects().items():
        path = os.path.join(args.out, f"{name}.json")
        text = documents.dumps(documents.document_for(obj))
        documents.write_document(documents.document_for(obj), path)
        again = documents.dumps(documents.document_for(documents.read_document(path)))
        if again != text:
            logger.error(f"✗ {path} does not round-trip")
            failures += 1
        else:
            logger.info(f"✓ {path}")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
