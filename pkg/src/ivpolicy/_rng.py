"""Counter-based random streams keyed by (seed, stream index, ...)."""

import numpy as np


def stream(seed, *keys):
    """Return a Philox generator for the stream identified by ``(seed, *keys)``.

    Distinct key tuples give statistically independent streams, so replication
    ``r`` of an experiment can be reproduced without replaying replications
    ``0..r-1``.
    """
    entropy = [int(seed)] + [int(k) for k in keys]
    if any(e < 0 for e in entropy):
        raise ValueError(f"seeds and stream keys must be non-negative, got {entropy}")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))
