"""Dense linear algebra for small multi-register quantum systems.

Registers are addressed by string label through a RegisterLayout; the first
register is the most significant index (row-major basis ordering).  All
state and operator types validate their defining invariants at construction
and hold read-only arrays, so instances may be shared freely across threads.

Intended for exact toy-scale work (total dimension up to a few hundred);
nothing here is sparse, symbolic, or approximate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import LayoutError, NumericsError, ValidationError

HERMITIAN_TOL = 1e-10
PSD_TOL = 1e-10
TRACE_TOL = 1e-10
NORM_TOL = 1e-10
COMPLETENESS_TOL = 1e-8
EIG_RECONSTRUCT_TOL = 1e-9


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=np.complex128, order="C")
    out.setflags(write=False)
    return out


def dagger(a: np.ndarray) -> np.ndarray:
    return a.conj().T


def max_abs(a: np.ndarray) -> float:
    return float(np.max(np.abs(a))) if a.size else 0.0


def hermiticity_defect(a: np.ndarray) -> float:
    return max_abs(a - dagger(a))


@dataclass(frozen=True)
class RegisterLayout:
    """Ordered, uniquely named registers with local dimensions >= 2."""

    names: tuple[str, ...]
    dims: tuple[int, ...]

    def __post_init__(self):
        names = tuple(self.names)
        dims = tuple(int(d) for d in self.dims)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "dims", dims)
        if not names:
            raise LayoutError("layout needs at least one register")
        if len(names) != len(dims):
            raise LayoutError("names and dims must have equal length")
        if len(set(names)) != len(names):
            raise LayoutError(f"duplicate register names in {names}")
        for n, d in zip(names, dims):
            if not n:
                raise LayoutError("register names must be nonempty")
            if d < 2:
                raise LayoutError(f"register {n!r} has dimension {d}, need >= 2")

    @property
    def total_dim(self) -> int:
        return math.prod(self.dims)

    def axis(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise LayoutError(f"unknown register {name!r}; layout has {self.names}") from None

    def axes(self, names: Iterable[str]) -> tuple[int, ...]:
        return tuple(self.axis(n) for n in names)

    def dim_of(self, name: str) -> int:
        return self.dims[self.axis(name)]

    def concat(self, other: "RegisterLayout") -> "RegisterLayout":
        clash = set(self.names) & set(other.names)
        if clash:
            raise LayoutError(f"register names {sorted(clash)} appear on both sides")
        return RegisterLayout(self.names + other.names, self.dims + other.dims)

    def subset(self, names: Iterable[str]) -> "RegisterLayout":
        """Sub-layout of the given registers, in original layout order."""
        picked = set(names)
        for n in picked:
            self.axis(n)
        keep = [(n, d) for n, d in zip(self.names, self.dims) if n in picked]
        return RegisterLayout(tuple(n for n, _ in keep), tuple(d for _, d in keep))

    def basis_labels(self) -> tuple[str, ...]:
        """Computational basis labels, one digit per register, row-major."""
        if any(d > 10 for d in self.dims):
            raise LayoutError("digit labels need every register dimension <= 10")
        labels = [""]
        for d in self.dims:
            labels = [s + str(k) for s in labels for k in range(d)]
        return tuple(labels)

    def basis_index(self, label: str) -> int:
        if len(label) != len(self.dims):
            raise LayoutError(f"label {label!r} has wrong length for {len(self.dims)} registers")
        idx = 0
        for ch, d in zip(label, self.dims):
            k = int(ch)
            if not 0 <= k < d:
                raise LayoutError(f"digit {ch!r} in label {label!r} out of range for dim {d}")
            idx = idx * d + k
        return idx


def _check_layout_shape(layout: RegisterLayout, arr: np.ndarray, ndim: int, what: str):
    want = (layout.total_dim,) * ndim
    if arr.shape != want:
        raise LayoutError(f"{what} has shape {arr.shape}, layout requires {want}")


@dataclass(frozen=True)
class PureState:
    """Unit vector over a register layout."""

    layout: RegisterLayout
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = _freeze(np.asarray(self.amplitudes).reshape(-1))
        object.__setattr__(self, "amplitudes", amps)
        _check_layout_shape(self.layout, amps, 1, "state vector")
        norm = float(np.linalg.norm(amps))
        if abs(norm - 1.0) > NORM_TOL:
            raise ValidationError(f"state norm {norm!r} differs from 1 by more than {NORM_TOL}")

    @classmethod
    def basis(cls, layout: RegisterLayout, which: int | str) -> "PureState":
        idx = layout.basis_index(which) if isinstance(which, str) else int(which)
        if not 0 <= idx < layout.total_dim:
            raise LayoutError(f"basis index {idx} out of range for dim {layout.total_dim}")
        v = np.zeros(layout.total_dim, dtype=np.complex128)
        v[idx] = 1.0
        return cls(layout, v)

    def projector(self) -> np.ndarray:
        return np.outer(self.amplitudes, self.amplitudes.conj())

    def density(self) -> "DensityMatrix":
        return DensityMatrix(self.layout, self.projector())


@dataclass(frozen=True)
class DensityMatrix:
    """Hermitian, positive semidefinite, trace-one operator."""

    layout: RegisterLayout
    entries: np.ndarray

    def __post_init__(self):
        mat = _freeze(np.asarray(self.entries))
        object.__setattr__(self, "entries", mat)
        _check_layout_shape(self.layout, mat, 2, "density matrix")
        defect = hermiticity_defect(mat)
        if defect > HERMITIAN_TOL:
            raise ValidationError(f"density matrix hermiticity defect {defect:.3e} > {HERMITIAN_TOL}")
        lo = float(np.linalg.eigvalsh(mat)[0])
        if lo < -PSD_TOL:
            raise ValidationError(f"density matrix has eigenvalue {lo:.3e} < -{PSD_TOL}")
        tr = complex(np.trace(mat))
        if abs(tr - 1.0) > TRACE_TOL:
            raise ValidationError(f"density matrix trace {tr!r} differs from 1 by more than {TRACE_TOL}")

    @classmethod
    def pure(cls, psi: PureState) -> "DensityMatrix":
        return cls(psi.layout, psi.projector())

    @classmethod
    def maximally_mixed(cls, layout: RegisterLayout) -> "DensityMatrix":
        d = layout.total_dim
        return cls(layout, np.eye(d) / d)


@dataclass(frozen=True)
class MeasurementOperator:
    """Hermitian effect with spectrum inside [0, 1] (up to tolerance)."""

    layout: RegisterLayout
    entries: np.ndarray

    def __post_init__(self):
        mat = _freeze(np.asarray(self.entries))
        object.__setattr__(self, "entries", mat)
        _check_layout_shape(self.layout, mat, 2, "measurement operator")
        defect = hermiticity_defect(mat)
        if defect > HERMITIAN_TOL:
            raise ValidationError(f"effect hermiticity defect {defect:.3e} > {HERMITIAN_TOL}")
        evs = np.linalg.eigvalsh(mat)
        if evs[0] < -PSD_TOL or evs[-1] > 1.0 + PSD_TOL:
            raise ValidationError(
                f"effect spectrum [{evs[0]:.12g}, {evs[-1]:.12g}] leaves [-{PSD_TOL}, 1+{PSD_TOL}]"
            )

    @classmethod
    def identity(cls, layout: RegisterLayout) -> "MeasurementOperator":
        return cls(layout, np.eye(layout.total_dim))


@dataclass(frozen=True)
class Povm:
    """Ordered effects on a shared layout that resolve the identity."""

    elements: tuple[MeasurementOperator, ...]

    def __post_init__(self):
        elems = tuple(self.elements)
        object.__setattr__(self, "elements", elems)
        if not elems:
            raise ValidationError("POVM needs at least one element")
        layout = elems[0].layout
        for e in elems[1:]:
            if e.layout != layout:
                raise LayoutError("POVM elements live on different layouts")
        total = sum(e.entries for e in elems)
        defect = max_abs(total - np.eye(layout.total_dim))
        if defect > COMPLETENESS_TOL:
            raise ValidationError(f"POVM completeness defect {defect:.3e} > {COMPLETENESS_TOL}")

    @property
    def layout(self) -> RegisterLayout:
        return self.elements[0].layout

    def __len__(self) -> int:
        return len(self.elements)

    @classmethod
    def computational(cls, layout: RegisterLayout) -> "Povm":
        d = layout.total_dim
        elems = []
        for k in range(d):
            m = np.zeros((d, d))
            m[k, k] = 1.0
            elems.append(MeasurementOperator(layout, m))
        return cls(tuple(elems))


# ---------------------------------------------------------------------------
# operations on typed objects


def tensor(a, b):
    """Kronecker product; the result layout is the concatenation of both."""
    pair = (type(a), type(b))
    if pair == (PureState, PureState):
        return PureState(a.layout.concat(b.layout), np.kron(a.amplitudes, b.amplitudes))
    if pair == (DensityMatrix, DensityMatrix):
        return DensityMatrix(a.layout.concat(b.layout), np.kron(a.entries, b.entries))
    if pair == (MeasurementOperator, MeasurementOperator):
        return MeasurementOperator(a.layout.concat(b.layout), np.kron(a.entries, b.entries))
    raise ValidationError(f"cannot tensor {type(a).__name__} with {type(b).__name__}")


def partial_trace(rho: DensityMatrix, keep: Iterable[str]) -> DensityMatrix:
    """Trace out every register not named in `keep` (order is preserved)."""
    keep = list(keep)
    if not keep:
        raise LayoutError("must keep at least one register")
    layout = rho.layout
    keep_axes = layout.axes(keep)
    reduced = partial_trace_array(rho.entries, layout.dims, keep_axes)
    return DensityMatrix(layout.subset(keep), reduced)


def hermitian_eig(op) -> tuple[np.ndarray, np.ndarray]:
    """Descending eigenvalues and matching orthonormal eigenvectors.

    Accepts a DensityMatrix, MeasurementOperator, or plain square array.
    Column k of the returned matrix is the eigenvector for eigenvalue k.
    """
    mat = np.asarray(op.entries if hasattr(op, "entries") else op, dtype=np.complex128)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {mat.shape}")
    defect = hermiticity_defect(mat)
    if defect > 1e-8:
        raise ValidationError(f"hermiticity defect {defect:.3e} > 1e-08")
    vals, vecs = np.linalg.eigh(mat)
    vals = vals[::-1].copy()
    vecs = vecs[:, ::-1].copy()
    recon = max_abs((vecs * vals) @ dagger(vecs) - mat)
    if recon > EIG_RECONSTRUCT_TOL:
        raise NumericsError(f"eigendecomposition reconstruction defect {recon:.3e}")
    return vals, vecs


def born_probability(effect: MeasurementOperator, rho: DensityMatrix) -> float:
    """tr(effect . rho) as a real number clamped into [0, 1]."""
    if effect.layout.dims != rho.layout.dims or effect.layout.names != rho.layout.names:
        raise LayoutError(
            f"effect layout {effect.layout.names} does not match state layout {rho.layout.names}"
        )
    p = float(np.trace(effect.entries @ rho.entries).real)
    if p < -PSD_TOL or p > 1.0 + PSD_TOL:
        raise NumericsError(f"born probability {p!r} outside [0, 1] beyond tolerance")
    return min(max(p, 0.0), 1.0)


def partial_transpose(rho: DensityMatrix, subsystem: str) -> np.ndarray:
    """Transpose one register in place; Hermitian but possibly not PSD."""
    layout = rho.layout
    axis = layout.axis(subsystem)
    n = len(layout.dims)
    tens = rho.entries.reshape(layout.dims + layout.dims)
    perm = list(range(2 * n))
    perm[axis], perm[n + axis] = perm[n + axis], perm[axis]
    d = layout.total_dim
    return np.ascontiguousarray(tens.transpose(perm).reshape(d, d))


# ---------------------------------------------------------------------------
# array-level helpers shared by the channel and protocol machinery


def kron_all(mats: Sequence[np.ndarray]) -> np.ndarray:
    out = np.asarray(mats[0], dtype=np.complex128)
    for m in mats[1:]:
        out = np.kron(out, m)
    return out


def partial_trace_array(mat: np.ndarray, dims: Sequence[int], keep_axes: Sequence[int]) -> np.ndarray:
    dims = tuple(dims)
    n = len(dims)
    keep = sorted(keep_axes)
    tens = mat.reshape(dims + dims)
    for axis in sorted(set(range(n)) - set(keep), reverse=True):
        tens = np.trace(tens, axis1=axis, axis2=axis + tens.ndim // 2)
    d = math.prod(dims[a] for a in keep)
    return tens.reshape(d, d)


def embed_operator(op: np.ndarray, dims: Sequence[int], target_axes: Sequence[int]) -> np.ndarray:
    """Extend `op`, acting on the listed axes in the listed order, by identity.

    The target axes need not be contiguous or sorted; the operator's tensor
    factors are matched to `target_axes` positionally.
    """
    dims = tuple(dims)
    n = len(dims)
    target = list(target_axes)
    rest = [a for a in range(n) if a not in target]
    d_target = math.prod(dims[a] for a in target)
    d_rest = math.prod(dims[a] for a in rest) if rest else 1
    op = np.asarray(op, dtype=np.complex128)
    if op.shape != (d_target, d_target):
        raise LayoutError(f"operator shape {op.shape} does not match target dims {d_target}")
    full = np.kron(op, np.eye(d_rest, dtype=np.complex128))
    order = target + rest
    shaped = full.reshape(tuple(dims[a] for a in order) * 2)
    inv = [0] * n
    for pos, a in enumerate(order):
        inv[a] = pos
    perm = inv + [n + i for i in inv]
    d = math.prod(dims)
    return np.ascontiguousarray(shaped.transpose(perm).reshape(d, d))


def apply_kraus_array(
    rho: np.ndarray, dims: Sequence[int], kraus: Sequence[np.ndarray], target_axes: Sequence[int]
) -> np.ndarray:
    """Sum_k (K_k (x) I) rho (K_k (x) I)^dag on the listed axes (shape preserving)."""
    ks = [embed_operator(k, dims, target_axes) for k in kraus]
    out = np.zeros_like(rho)
    for k in ks:
        out += k @ rho @ dagger(k)
    return out


def dephase_axes(rho: np.ndarray, dims: Sequence[int], axes: Sequence[int]) -> np.ndarray:
    """Zero every element off-diagonal in the computational basis of `axes`."""
    dims = tuple(dims)
    n = len(dims)
    target = list(axes)
    rest = [a for a in range(n) if a not in target]
    order = target + rest
    d_t = math.prod(dims[a] for a in target)
    d_r = math.prod(dims[a] for a in rest) if rest else 1
    inv = [0] * n
    for pos, a in enumerate(order):
        inv[a] = pos
    fwd = order + [n + a for a in order]
    shaped = rho.reshape(dims + dims).transpose(fwd).reshape(d_t, d_r, d_t, d_r)
    shaped = shaped * np.eye(d_t)[:, None, :, None]
    back = inv + [n + i for i in inv]
    d = math.prod(dims)
    out = shaped.reshape(tuple(dims[a] for a in order) * 2).transpose(back)
    return np.ascontiguousarray(out.reshape(d, d))


def register_permutation(dims: Sequence[int], order: Sequence[int]) -> np.ndarray:
    """Unitary relabeling the basis from layout order to `order`.

    Row index runs over the permuted register order, column over the
    original, so P @ rho @ P.T.conj() re-expresses rho with registers
    reordered as `order`.
    """
    dims = tuple(dims)
    n = len(dims)
    if sorted(order) != list(range(n)):
        raise LayoutError(f"{order!r} is not a permutation of {n} axes")
    d = math.prod(dims)
    src = np.arange(d).reshape(dims).transpose(order).reshape(-1)
    p = np.zeros((d, d), dtype=np.complex128)
    p[np.arange(d), src] = 1.0
    return p


def basis_projector_array(dims: Sequence[int], axes: Sequence[int], index: int) -> np.ndarray:
    """Projector onto basis state `index` of the listed axes, identity elsewhere."""
    d_t = math.prod(tuple(dims)[a] for a in axes)
    proj = np.zeros((d_t, d_t), dtype=np.complex128)
    proj[index, index] = 1.0
    return embed_operator(proj, dims, axes)
