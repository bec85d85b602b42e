"""Counter-mode seed derivation.

Every random stream is keyed by ``(master_seed, *path)`` where the path is a
tuple of small nonnegative integers, e.g. ``(cell_key..., redraw, dataset,
stream)``.  The derived seed depends only on that key, never on the order in
which streams are requested, so any single trial can be re-run in isolation.
"""

from __future__ import annotations

import numpy as np


def _flatten(parts):
    for p in parts:
        if isinstance(p, (tuple, list)):
            yield from _flatten(p)
        else:
            yield int(p)


def derive_seed(master_seed: int, *path) -> int:
    """Return a 64-bit seed for the stream at ``path`` under ``master_seed``."""
    key = tuple(_flatten(path))
    seq = np.random.SeedSequence(int(master_seed), spawn_key=key)
    return int(seq.generate_state(1, np.uint64)[0])
