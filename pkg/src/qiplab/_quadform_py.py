"""Pure numpy implementation of the batched quadratic-form kernel."""

from __future__ import annotations

import numpy as np


def quad_forms(ops: np.ndarray, states: np.ndarray) -> np.ndarray:
    """Real parts of <psi_n| M_k |psi_n> for every operator/state pair.

    ops: (K, d, d) complex Hermitian stack, states: (N, d) complex rows.
    Returns a (K, N) float64 table.
    """
    return np.einsum("nd,kde,ne->kn", states.conj(), ops, states, optimize=True).real
