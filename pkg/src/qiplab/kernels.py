"""Batched quadratic forms with a compiled core and a numpy fallback.

The compiled extension is optional: if it failed to build (or was built for
a different interpreter) the import silently degrades to the einsum
implementation.  BACKEND records which one is active; benchmarks/ compares
the two.
"""

from __future__ import annotations

import numpy as np

from . import _quadform_py
from .errors import ValidationError

try:
    from . import _quadform as _compiled
except ImportError:
    _compiled = None

BACKEND = "compiled" if _compiled is not None else "python"

# Measured crossover (benchmarks/bench_quadform.py): einsum wins below this
# dimension, the compiled loop wins at and above it.
COMPILED_MIN_DIM = 3


def available_backends() -> tuple[str, ...]:
    return ("compiled", "python") if _compiled is not None else ("python",)


def default_backend(dim: int) -> str:
    if _compiled is None or dim < COMPILED_MIN_DIM:
        return "python"
    return "compiled"


def quad_forms(ops: np.ndarray, states: np.ndarray, backend: str | None = None) -> np.ndarray:
    """Table of real quadratic forms <psi_n|M_k|psi_n>, shape (K, N).

    ops must stack K Hermitian (d, d) matrices; states holds N length-d
    rows.  `backend` forces "compiled" or "python" (used by the benchmark);
    the default picks whichever measured faster for the dimension at hand.
    """
    ops = np.ascontiguousarray(ops, dtype=np.complex128)
    states = np.ascontiguousarray(states, dtype=np.complex128)
    if ops.ndim != 3 or ops.shape[1] != ops.shape[2]:
        raise ValidationError(f"ops must have shape (K, d, d), got {ops.shape}")
    if states.ndim != 2 or states.shape[1] != ops.shape[1]:
        raise ValidationError(
            f"states shape {states.shape} incompatible with operator dimension {ops.shape[1]}"
        )
    if backend is None:
        backend = default_backend(ops.shape[1])
    if backend == "compiled":
        if _compiled is None:
            raise ValidationError("compiled kernel requested but the extension is not available")
        return _compiled.quad_forms(ops, states)
    if backend == "python":
        return _quadform_py.quad_forms(ops, states)
    raise ValidationError(f"unknown backend {backend!r}")
