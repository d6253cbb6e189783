"""Deterministic random-number substreams for replication-level parallelism."""

import numpy as np


def substream(seed: int, index: int = 0) -> np.random.Generator:
    """Independent generator for replication `index` under a master `seed`.

    Uses the counter-based Philox bit generator keyed by
    SeedSequence(seed, spawn_key=(index,)), so the draw sequence for a given
    (seed, index) pair is identical on every platform and does not depend on
    how many other substreams exist or in which order they are created.
    """
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence(seed, spawn_key=(index,)))
    )
