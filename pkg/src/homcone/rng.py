"""Counter-based Gaussian increments.

Draws for time step k come from a Philox stream keyed by (seed, k); path i takes the
i-th row of that step's (paths, n) block.  Results do not depend on the order in which
steps are generated.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1


def step_normals(seed: int, step: int, paths: int, n: int) -> np.ndarray:
    """Standard normals of shape (paths, n) for time step ``step``."""
    bitgen = np.random.Philox(key=np.array([seed & MASK64, step & MASK64], dtype=np.uint64))
    return np.random.Generator(bitgen).standard_normal((paths, n))
