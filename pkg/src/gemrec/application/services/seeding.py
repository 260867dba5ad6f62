"""Named, independent random streams derived from one run seed."""

import numpy as np

STREAMS: dict[str, int] = {
    "embeddings": 1,
    "codebooks": 2,
    "sponsored": 3,
    "bids": 4,
    "histories": 5,
    "policy": 6,
    "shock": 7,
    "evaluation": 8,
    "audit": 9,
}


def derive_seed(seed: int, stream: str) -> int:
    """
    Derive a 32-bit seed for one named stream.

    Raises:
        KeyError: If the stream name is unknown
    """
    sequence = np.random.SeedSequence([seed, STREAMS[stream]])
    return int(sequence.generate_state(1)[0])
