"""Hierarchical seed derivation.

Every random draw in the package derives from a single master seed through
``numpy.random.SeedSequence`` spawn keys, so any run can be reproduced
bitwise.  The hierarchy is ``master -> (purpose, *indices)``: the purpose
constant picks the consumer (scenario draws, pilot plans, noise, ...) and the
trailing indices identify the trial / epoch / sweep cell.  Two consumers never
share a spawn key.
"""

import numpy as np

# Purpose identifiers (first element of every spawn key).
SCENARIO = 0
PILOT_PLAN = 1
NOISE = 2
SOLVER_INIT = 3
TRAIN_INIT = 4
TRAIN_LOOP = 5
DATASET = 6
SPLIT = 7
EVAL = 8


def seed_sequence(master_seed: int, *path: int) -> np.random.SeedSequence:
    """Seed sequence for one consumer, identified by its spawn-key path."""
    return np.random.SeedSequence(master_seed, spawn_key=tuple(path))


def rng_for(master_seed: int, *path: int) -> np.random.Generator:
    """Independent generator for the consumer identified by ``path``."""
    return np.random.default_rng(seed_sequence(master_seed, *path))


def seed_for(master_seed: int, *path: int) -> int:
    """Single 32-bit integer seed for consumers that need a plain int."""
    return int(seed_sequence(master_seed, *path).generate_state(1)[0])
