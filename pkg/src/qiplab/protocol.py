"""Interactive proof protocols between a verifier and a single prover.

A ProtocolSpec fixes the verifier side of a two- or three-round interaction
over a message register M and a private verifier register V; the prover
brings its own workspace P.  Three-round schedule: the prover sends a first
message, the verifier replies with a challenge, the prover responds, and
the verifier applies a final channel and measures an accept flag.
Two-round protocols drop the prover's first message (the verifier opens).

Rounds may be declared classical, which dephases M in the computational
basis before transmission.  A public-coin verifier does not apply a first
channel at all: it stashes the incoming message in a designated workspace
register, samples a uniform coin, records the coin, and transmits the coin
(a uniform-challenge verifier keeps the message intact this way, which is
what the final measurement acts on).

Prover strategies come in four forms, from the most general unentangled one
(arbitrary workspace channels with measure-and-prepare message emission) to
a fixed classical response table.  canonicalize_prover compresses the raw
form into the canonical one (pure first message plus a measure-and-prepare
response) without ever lowering the acceptance probability.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .channels import EbChannel, KrausChannel, adjoint_apply
from .errors import (
    ConditioningError,
    ContractError,
    LayoutError,
    NumericsError,
    ValidationError,
)
from .qmath import (
    DensityMatrix,
    MeasurementOperator,
    Povm,
    PureState,
    RegisterLayout,
    apply_kraus_array,
    basis_projector_array,
    dagger,
    dephase_axes,
    embed_operator,
    kron_all,
    partial_trace_array,
    register_permutation,
)

BRANCH_PROBABILITY_TOL = 1e-12
CONDITIONING_TOL = 1e-12


# ---------------------------------------------------------------------------
# prover strategies


@dataclass(frozen=True)
class EntangledStrategy:
    """Unrestricted prover: arbitrary channels on workspace plus message."""

    workspace: RegisterLayout
    first: KrausChannel
    respond: KrausChannel


@dataclass(frozen=True)
class RawUnentangledStrategy:
    """General unentangled prover move pair.

    Each move mixes workspace and message (mix_i on P+M), then emits the
    outgoing message through a measure-and-prepare channel reading the
    sub-register S plus M and writing M; S is reset to zeros afterwards.
    """

    workspace: RegisterLayout
    eb_labels: tuple[str, ...]
    mix1: KrausChannel
    emit1: EbChannel
    mix2: KrausChannel
    emit2: EbChannel

    def __post_init__(self):
        labels = tuple(self.eb_labels)
        object.__setattr__(self, "eb_labels", labels)
        if not labels:
            raise ValidationError("eb_labels must name at least one workspace register")
        for name in labels:
            self.workspace.axis(name)


@dataclass(frozen=True)
class CanonicalStrategy:
    """Pure first message plus a measure-and-prepare response on M."""

    first_message: PureState
    respond: EbChannel


@dataclass(frozen=True)
class ClassicalResponseStrategy:
    """Fixed response table over computational-basis challenge labels.

    first_message is the round-one message for three-round protocols and
    must be None for two-round ones (where the verifier opens).
    """

    first_message: PureState | None
    responses: Mapping[str, str]


ProverStrategy = (
    EntangledStrategy | RawUnentangledStrategy | CanonicalStrategy | ClassicalResponseStrategy
)


# ---------------------------------------------------------------------------
# protocol specification


@dataclass(frozen=True)
class ProtocolSpec:
    """Verifier side of a two- or three-round interaction.

    classical_rounds contains round numbers whose message is measured in the
    computational basis before transmission.  In a three-round protocol the
    rounds are (1) prover's opening message, (2) verifier's challenge,
    (3) prover's response; a two-round protocol has (1) challenge,
    (2) response.  Public-coin protocols have no v1; the coin is recorded in
    v register `coin_label`, and three-round ones stash the opening message
    in v register `saved_label`.
    """

    m_layout: RegisterLayout
    v_layout: RegisterLayout
    rounds: int
    v2: KrausChannel
    accept: MeasurementOperator
    v1: KrausChannel | None = None
    classical_rounds: frozenset[int] = frozenset()
    public_coin: bool = False
    coin_label: str | None = None
    saved_label: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "classical_rounds", frozenset(self.classical_rounds))
        if self.rounds not in (2, 3):
            raise ValidationError(f"rounds must be 2 or 3, got {self.rounds}")
        joint = self.m_layout.concat(self.v_layout)
        if not self.classical_rounds <= set(range(1, self.rounds + 1)):
            raise ValidationError(
                f"classical rounds {sorted(self.classical_rounds)} outside 1..{self.rounds}"
            )
        for name, ch in (("v1", self.v1), ("v2", self.v2)):
            if ch is None:
                continue
            if ch.in_layout != joint or ch.out_layout != joint:
                raise LayoutError(f"{name} must act on the (M, V) layout {joint.names}")
        if self.accept.layout != joint:
            raise LayoutError(f"accept flag must live on the (M, V) layout {joint.names}")
        if self.public_coin:
            if self.v1 is not None:
                raise ValidationError("public-coin protocols must not declare v1")
            if self.coin_label is None:
                raise ValidationError("public-coin protocols need coin_label")
            if self.v_layout.dim_of(self.coin_label) != self.m_layout.total_dim:
                raise LayoutError("coin register dimension must equal the message dimension")
            if self.challenge_round not in self.classical_rounds:
                raise ValidationError("the public coin must be declared a classical round")
            if self.rounds == 3:
                if self.saved_label is None:
                    raise ValidationError("three-round public-coin protocols need saved_label")
                if self.saved_label == self.coin_label:
                    raise ValidationError("saved_label and coin_label must differ")
                if self.v_layout.dim_of(self.saved_label) != self.m_layout.total_dim:
                    raise LayoutError("stash register dimension must equal the message dimension")
        elif self.v1 is None:
            raise ValidationError("private-coin protocols must declare v1")

    @property
    def challenge_round(self) -> int:
        return 2 if self.rounds == 3 else 1

    @property
    def response_round(self) -> int:
        return 3 if self.rounds == 3 else 2

    def joint_layout(self) -> RegisterLayout:
        return self.m_layout.concat(self.v_layout)


@dataclass(frozen=True)
class Transcript:
    """Record of one simulated interaction."""

    messages: tuple[str | None, ...]
    final_state: DensityMatrix
    accept_probability: float


@dataclass(frozen=True)
class MeasurementFamily:
    """Challenge/response indexed effects on the message register."""

    challenges: tuple[str, ...]
    responses: tuple[str, ...]
    operators: Mapping[tuple[str, str], MeasurementOperator]

    def __post_init__(self):
        object.__setattr__(self, "challenges", tuple(self.challenges))
        object.__setattr__(self, "responses", tuple(self.responses))
        object.__setattr__(self, "operators", dict(self.operators))
        if not self.challenges or not self.responses:
            raise ValidationError("family needs nonempty challenge and response alphabets")
        if len(set(self.challenges)) != len(self.challenges):
            raise ValidationError("duplicate challenge labels")
        if len(set(self.responses)) != len(self.responses):
            raise ValidationError("duplicate response labels")
        layout = None
        for y in self.challenges:
            for z in self.responses:
                if (y, z) not in self.operators:
                    raise ValidationError(f"family is missing the operator for {(y, z)}")
                op = self.operators[(y, z)]
                if layout is None:
                    layout = op.layout
                elif op.layout != layout:
                    raise LayoutError("family operators live on different layouts")
        if len(self.operators) != len(self.challenges) * len(self.responses):
            raise ValidationError("family has operators outside its alphabets")

    @property
    def layout(self) -> RegisterLayout:
        return self.operators[(self.challenges[0], self.responses[0])].layout

    def op(self, y: str, z: str) -> MeasurementOperator:
        return self.operators[(y, z)]


# ---------------------------------------------------------------------------
# simulator internals


def _coin_move_ops(spec: ProtocolSpec) -> tuple[list[np.ndarray], tuple[str, ...]]:
    """Kraus operators of the public-coin move and the registers they act on.

    Three rounds: swap M into the stash register, then overwrite (M, coin)
    with the uniformly correlated coin pair.  Two rounds: coin pair only.
    """
    n = spec.m_layout.total_dim
    prep = []
    for y in range(n):
        pair = np.zeros(n * n, dtype=np.complex128)
        pair[y * n + y] = 1.0
        for j in range(n):
            for c in range(n):
                bra = np.zeros(n * n, dtype=np.complex128)
                bra[j * n + c] = 1.0
                prep.append(np.sqrt(1.0 / n) * np.outer(pair, bra))
    m_names = spec.m_layout.names
    if spec.rounds == 2:
        return prep, m_names + (spec.coin_label,)
    local_dims = spec.m_layout.dims + (n, n)
    m_axes_local = tuple(range(len(m_names)))
    stash_local = len(m_names)
    coin_local = len(m_names) + 1
    swap = np.zeros((n * n, n * n), dtype=np.complex128)
    for a in range(n):
        for b in range(n):
            swap[b * n + a, a * n + b] = 1.0
    swap_full = embed_operator(swap, local_dims, m_axes_local + (stash_local,))
    ops = [
        embed_operator(k, local_dims, m_axes_local + (coin_local,)) @ swap_full for k in prep
    ]
    return ops, m_names + (spec.saved_label, spec.coin_label)


def _geometry(spec: ProtocolSpec, workspace: RegisterLayout | None):
    if workspace is not None:
        full = workspace.concat(spec.m_layout).concat(spec.v_layout)
    else:
        full = spec.joint_layout()
    m_axes = full.axes(spec.m_layout.names)
    v_axes = full.axes(spec.v_layout.names)
    p_axes = full.axes(workspace.names) if workspace is not None else ()
    return full, p_axes, m_axes, v_axes


def _zero_state(dim: int) -> np.ndarray:
    rho = np.zeros((dim, dim), dtype=np.complex128)
    rho[0, 0] = 1.0
    return rho


def _emit_with_reset_ops(emit: EbChannel, s_dim: int) -> list[np.ndarray]:
    """Kraus form of: measure-and-prepare from (S, M) to M, then reset S."""
    zero_s = np.zeros((s_dim, 1), dtype=np.complex128)
    zero_s[0, 0] = 1.0
    return [np.kron(zero_s, k) for k in emit.to_kraus().kraus_ops]


def _check_channel_dims(ch: KrausChannel, layout: RegisterLayout, what: str):
    if ch.in_layout.dims != layout.dims or ch.out_layout.dims != layout.dims:
        raise LayoutError(f"{what} does not act on layout dims {layout.dims}")


def _prover_first_move(spec, prover, rho, dims, p_axes, m_axes):
    pm_axes = tuple(p_axes) + tuple(m_axes)
    if isinstance(prover, EntangledStrategy):
        expected = prover.workspace.concat(spec.m_layout)
        _check_channel_dims(prover.first, expected, "prover first channel")
        return apply_kraus_array(rho, dims, prover.first.kraus_ops, pm_axes)
    if isinstance(prover, RawUnentangledStrategy):
        expected = prover.workspace.concat(spec.m_layout)
        _check_channel_dims(prover.mix1, expected, "prover mix1 channel")
        rho = apply_kraus_array(rho, dims, prover.mix1.kraus_ops, pm_axes)
        return _apply_emit(spec, prover, prover.emit1, rho, dims, p_axes, m_axes)
    if isinstance(prover, CanonicalStrategy):
        psi = prover.first_message
        if psi.layout.dims != spec.m_layout.dims:
            raise LayoutError("first message does not fit the message register")
        prep = EbChannel.constant(spec.m_layout, psi)
        return apply_kraus_array(rho, dims, prep.to_kraus().kraus_ops, m_axes)
    if isinstance(prover, ClassicalResponseStrategy):
        psi = prover.first_message
        if psi is None:
            raise ValidationError("three-round protocols need a first message")
        if psi.layout.dims != spec.m_layout.dims:
            raise LayoutError("first message does not fit the message register")
        prep = EbChannel.constant(spec.m_layout, psi)
        return apply_kraus_array(rho, dims, prep.to_kraus().kraus_ops, m_axes)
    raise ContractError(f"unknown prover strategy {type(prover).__name__}")


def _apply_emit(spec, prover, emit, rho, dims, p_axes, m_axes):
    s_names = [n for n in prover.workspace.names if n in prover.eb_labels]
    s_layout = prover.workspace.subset(s_names)
    expected_in = s_layout.concat(spec.m_layout)
    if emit.in_layout.dims != expected_in.dims or emit.out_layout.dims != spec.m_layout.dims:
        raise LayoutError(
            f"emission channel dims {emit.in_layout.dims}->{emit.out_layout.dims} "
            f"do not match (S, M) = {expected_in.dims}"
        )
    s_axes = tuple(p_axes[prover.workspace.axis(n)] for n in s_names)
    ops = _emit_with_reset_ops(emit, s_layout.total_dim)
    return apply_kraus_array(rho, dims, ops, s_axes + tuple(m_axes))


def _challenge_move(spec, rho, dims, m_axes, v_axes, full):
    if spec.public_coin:
        ops, names = _coin_move_ops(spec)
        axes = full.axes(names)
        rho = apply_kraus_array(rho, dims, ops, axes)
    else:
        rho = apply_kraus_array(rho, dims, spec.v1.kraus_ops, tuple(m_axes) + tuple(v_axes))
    if spec.challenge_round in spec.classical_rounds:
        rho = dephase_axes(rho, dims, m_axes)
    return rho


def classical_response_channel(layout: RegisterLayout, responses: Mapping[str, str]) -> EbChannel:
    """Measure M in the computational basis, emit the mapped basis state."""
    labels = layout.basis_labels()
    missing = [y for y in labels if y not in responses]
    if missing:
        raise ValidationError(f"response table is missing challenges {missing}")
    extra = [y for y in responses if y not in labels]
    if extra:
        raise ValidationError(f"response table has unknown challenges {extra}")
    povm = Povm.computational(layout)
    preps = tuple(PureState.basis(layout, responses[y]) for y in labels)
    return EbChannel(povm, preps)


def _prover_response_move(spec, prover, rho, dims, p_axes, m_axes):
    pm_axes = tuple(p_axes) + tuple(m_axes)
    if isinstance(prover, EntangledStrategy):
        return apply_kraus_array(rho, dims, prover.respond.kraus_ops, pm_axes)
    if isinstance(prover, RawUnentangledStrategy):
        rho = apply_kraus_array(rho, dims, prover.mix2.kraus_ops, pm_axes)
        return _apply_emit(spec, prover, prover.emit2, rho, dims, p_axes, m_axes)
    if isinstance(prover, CanonicalStrategy):
        respond = prover.respond
        if respond.in_layout.dims != spec.m_layout.dims or respond.out_layout.dims != spec.m_layout.dims:
            raise LayoutError("canonical response channel must map M to M")
        return apply_kraus_array(rho, dims, respond.to_kraus().kraus_ops, m_axes)
    if isinstance(prover, ClassicalResponseStrategy):
        if spec.challenge_round not in spec.classical_rounds:
            raise ContractError(
                "a classical-response prover needs a classical challenge round"
            )
        respond = classical_response_channel(spec.m_layout, prover.responses)
        return apply_kraus_array(rho, dims, respond.to_kraus().kraus_ops, m_axes)
    raise ContractError(f"unknown prover strategy {type(prover).__name__}")


def _workspace_of(spec, prover) -> RegisterLayout | None:
    if isinstance(prover, (EntangledStrategy, RawUnentangledStrategy)):
        ws = prover.workspace
        clash = set(ws.names) & set(spec.m_layout.names + spec.v_layout.names)
        if clash:
            raise LayoutError(f"workspace names {sorted(clash)} clash with the protocol layout")
        return ws
    return None


def run_interaction(spec: ProtocolSpec, prover: ProverStrategy) -> Transcript:
    """Simulate the full interaction and return the closing state and flag."""
    if spec.rounds == 2 and not isinstance(prover, ClassicalResponseStrategy):
        raise ContractError("two-round protocols support classical-response provers only")
    if spec.rounds == 2 and prover.first_message is not None:
        raise ValidationError("two-round protocols have no prover opening message")
    workspace = _workspace_of(spec, prover)
    full, p_axes, m_axes, v_axes = _geometry(spec, workspace)
    dims = full.dims
    rho = _zero_state(full.total_dim)
    if spec.rounds == 3:
        rho = _prover_first_move(spec, prover, rho, dims, p_axes, m_axes)
        if 1 in spec.classical_rounds:
            rho = dephase_axes(rho, dims, m_axes)
    rho = _challenge_move(spec, rho, dims, m_axes, v_axes, full)
    rho = _prover_response_move(spec, prover, rho, dims, p_axes, m_axes)
    if spec.response_round in spec.classical_rounds:
        rho = dephase_axes(rho, dims, m_axes)
    rho = apply_kraus_array(rho, dims, spec.v2.kraus_ops, tuple(m_axes) + tuple(v_axes))
    flag = embed_operator(spec.accept.entries, dims, tuple(m_axes) + tuple(v_axes))
    p = float(np.trace(flag @ rho).real)
    if p < -1e-9 or p > 1 + 1e-9:
        raise NumericsError(f"acceptance probability {p!r} escaped [0, 1]")
    p = min(max(p, 0.0), 1.0)
    return Transcript((None,) * spec.rounds, DensityMatrix(full, rho), p)


def acceptance_probability(spec: ProtocolSpec, prover: ProverStrategy) -> float:
    return run_interaction(spec, prover).accept_probability


def verifier_message_distribution(spec: ProtocolSpec) -> dict[str, float]:
    """Challenge distribution of a two-round protocol's opening move."""
    if spec.rounds != 2:
        raise ValidationError("message distribution is defined for two-round protocols")
    full, _, m_axes, v_axes = _geometry(spec, None)
    dims = full.dims
    rho = _challenge_move(spec, _zero_state(full.total_dim), dims, m_axes, v_axes, full)
    out = {}
    for idx, label in enumerate(spec.m_layout.basis_labels()):
        proj = basis_projector_array(dims, m_axes, idx)
        out[label] = float(np.trace(proj @ rho).real)
    return out


def postselected_acceptance(spec: ProtocolSpec, y: str, z: str) -> float:
    """Acceptance conditioned on challenge y being sent and response z given.

    Requires the two-round shape with both messages classical.  The joint
    state is projected onto challenge y, renormalized on V, the response is
    written into M, and the closing measurement applied.
    """
    if spec.rounds != 2 or not {1, 2} <= spec.classical_rounds:
        raise ValidationError(
            "postselection needs a two-round protocol with both rounds classical"
        )
    full, _, m_axes, v_axes = _geometry(spec, None)
    dims = full.dims
    rho = _challenge_move(spec, _zero_state(full.total_dim), dims, m_axes, v_axes, full)
    y_idx = spec.m_layout.basis_index(y)
    proj = basis_projector_array(dims, m_axes, y_idx)
    conditioned = proj @ rho @ proj
    p_y = float(np.trace(conditioned).real)
    if p_y <= CONDITIONING_TOL:
        raise ConditioningError(f"challenge {y!r} has probability {p_y!r}; cannot condition")
    sigma_v = partial_trace_array(conditioned, dims, v_axes) / p_y
    z_vec = np.zeros(spec.m_layout.total_dim, dtype=np.complex128)
    z_vec[spec.m_layout.basis_index(z)] = 1.0
    rho2 = np.kron(np.outer(z_vec, z_vec), sigma_v)
    mv_dims = spec.m_layout.dims + spec.v_layout.dims
    mv_all = tuple(range(len(mv_dims)))
    rho2 = apply_kraus_array(rho2, mv_dims, spec.v2.kraus_ops, mv_all)
    p = float(np.trace(spec.accept.entries @ rho2).real)
    if p < -1e-9 or p > 1 + 1e-9:
        raise NumericsError(f"conditional acceptance {p!r} escaped [0, 1]")
    return min(max(p, 0.0), 1.0)


# ---------------------------------------------------------------------------
# canonicalization


def canonicalize_prover(spec: ProtocolSpec, raw: ProverStrategy) -> CanonicalStrategy:
    """Fold a raw unentangled prover into canonical form, never losing value.

    Enumerates the branches of the first emission POVM; for each branch the
    residual workspace state is absorbed into the response channel through
    the Heisenberg-picture image of its POVM, and the branch with the best
    conditional acceptance wins (ties break toward the lowest index).
    """
    if not isinstance(raw, RawUnentangledStrategy):
        raise ContractError("canonicalize_prover expects the raw unentangled form")
    if spec.rounds != 3:
        raise ValidationError("canonical form is defined for three-round protocols")
    workspace = _workspace_of(spec, raw)
    pm = workspace.concat(spec.m_layout)
    _check_channel_dims(raw.mix1, pm, "mix1")
    _check_channel_dims(raw.mix2, pm, "mix2")
    dims = pm.dims
    n_p = len(workspace.names)
    m_axes = tuple(range(n_p, len(dims)))
    s_names = [n for n in workspace.names if n in raw.eb_labels]
    r_names = [n for n in workspace.names if n not in raw.eb_labels]
    s_axes = tuple(workspace.axis(n) for n in s_names)
    r_axes = tuple(workspace.axis(n) for n in r_names)
    s_layout = workspace.subset(s_names)
    expected_in = s_layout.concat(spec.m_layout)
    if raw.emit1.in_layout.dims != expected_in.dims or raw.emit2.in_layout.dims != expected_in.dims:
        raise LayoutError("emission channels must read the (S, M) registers")

    rho1 = apply_kraus_array(_zero_state(pm.total_dim), dims, raw.mix1.kraus_ops, tuple(range(len(dims))))
    d_r = math.prod(dims[a] for a in r_axes) if r_axes else 1
    d_s = s_layout.total_dim
    d_m = spec.m_layout.total_dim

    # move to (R, S, M) ordered basis once; everything below works there
    order = tuple(r_axes) + s_axes + m_axes
    perm = register_permutation(dims, order)
    rho1 = perm @ rho1 @ dagger(perm)
    mix2_ops = [perm @ k @ dagger(perm) for k in raw.mix2.kraus_ops]

    best: tuple[float, CanonicalStrategy] | None = None
    for effect, prep in zip(raw.emit1.povm.elements, raw.emit1.preps):
        e_full = np.kron(np.eye(d_r), effect.entries)
        weighted = e_full @ rho1
        q = float(np.trace(weighted).real)
        if q <= BRANCH_PROBABILITY_TOL:
            continue
        sigma_r = partial_trace_array(weighted, (d_r, d_s * d_m), (0,)) / q
        sigma_r = (sigma_r + dagger(sigma_r)) / 2
        candidate = CanonicalStrategy(
            prep, _folded_response(raw, spec, sigma_r, mix2_ops, d_r, d_s, d_m)
        )
        value = acceptance_probability(spec, candidate)
        if best is None or value > best[0]:
            best = (value, candidate)
    if best is None:
        raise NumericsError("no emission branch has positive probability")
    return best[1]


def _folded_response(raw, spec, sigma_r, mix2_ops, d_r, d_s, d_m) -> EbChannel:
    """Response channel of the canonical prover for one first-round branch.

    Builds rho_M -> trace_R[mix2(sigma_R (x) |0><0|_S (x) rho_M)] as a Kraus
    channel from M to (S, M), then pulls the second emission POVM back
    through its adjoint; the emitted states are unchanged.
    """
    vals, vecs = np.linalg.eigh(sigma_r)
    vals = np.clip(vals, 0.0, None)
    vals = vals / vals.sum()
    zero_s = np.zeros(d_s, dtype=np.complex128)
    zero_s[0] = 1.0
    insert_ops = []
    for w, vec in zip(vals, vecs.T):
        if w < 1e-14:
            continue
        chi = np.kron(vec, zero_s).reshape(-1, 1)
        insert_ops.append(np.sqrt(w) * np.kron(chi, np.eye(d_m)))
    trace_ops = []
    for i in range(d_r):
        sel = np.zeros((1, d_r), dtype=np.complex128)
        sel[0, i] = 1.0
        trace_ops.append(np.kron(sel, np.eye(d_s * d_m)))
    lam_ops = [t @ k @ j for j in insert_ops for k in mix2_ops for t in trace_ops]
    s_layout = raw.workspace.subset([n for n in raw.workspace.names if n in raw.eb_labels])
    lam = KrausChannel(spec.m_layout, s_layout.concat(spec.m_layout), tuple(lam_ops))
    pulled = tuple(adjoint_apply(lam, f) for f in raw.emit2.povm.elements)
    return EbChannel(Povm(pulled), raw.emit2.preps)


# ---------------------------------------------------------------------------
# family extraction and the CHSH instance


def joint_response_operators(spec: ProtocolSpec) -> MeasurementFamily:
    """Effects N_{y,z} on M with the challenge probability folded in.

    For a three-round protocol with classical challenge and response, the
    acceptance of a prover that opens with rho on M and answers challenge y
    with g(y) is sum_y tr(N_{y,g(y)} rho); the family is built by driving
    matrix units through the (linear) verifier pipeline.
    """
    if spec.rounds != 3:
        raise ValidationError("family extraction needs a three-round protocol")
    if spec.challenge_round not in spec.classical_rounds:
        raise ValidationError("family extraction needs a classical challenge round")
    if spec.response_round not in spec.classical_rounds:
        raise ValidationError("family extraction needs a classical response round")
    full, _, m_axes, v_axes = _geometry(spec, None)
    dims = full.dims
    d_m = spec.m_layout.total_dim
    d_v = spec.v_layout.total_dim
    labels = spec.m_layout.basis_labels()
    mv_axes = tuple(m_axes) + tuple(v_axes)
    v_zero = _zero_state(d_v)
    tables = {
        (y, z): np.zeros((d_m, d_m), dtype=np.complex128)
        for y in labels
        for z in labels
    }
    for j in range(d_m):
        for k in range(d_m):
            unit = np.zeros((d_m, d_m), dtype=np.complex128)
            unit[j, k] = 1.0
            rho = np.kron(unit, v_zero)
            if 1 in spec.classical_rounds:
                rho = dephase_axes(rho, dims, m_axes)
            rho = _challenge_move(spec, rho, dims, m_axes, v_axes, full)
            for y_idx, y in enumerate(labels):
                proj = basis_projector_array(dims, m_axes, y_idx)
                sigma_v = partial_trace_array(proj @ rho @ proj, dims, v_axes)
                for z_idx, z in enumerate(labels):
                    z_unit = np.zeros((d_m, d_m), dtype=np.complex128)
                    z_unit[z_idx, z_idx] = 1.0
                    rho2 = np.kron(z_unit, sigma_v)
                    rho2 = apply_kraus_array(rho2, dims, spec.v2.kraus_ops, mv_axes)
                    tables[(y, z)][k, j] = np.trace(spec.accept.entries @ rho2)
    ops = {}
    for key, table in tables.items():
        sym = (table + dagger(table)) / 2
        ops[key] = MeasurementOperator(spec.m_layout, sym)
    return MeasurementFamily(labels, labels, ops)


def chsh_protocol() -> tuple[ProtocolSpec, MeasurementFamily]:
    """Public-coin qubit protocol testing the CHSH condition, plus its family.

    The verifier stashes the prover's qubit, sends a uniform bit x, receives
    a bit a, and measures the stashed qubit in the Z basis (probability 1/2)
    or the X basis, accepting when the product condition a xor b = x.y
    holds; folding the private basis choice into the flag leaves the effect
    (|a><a| + H|a xor x><a xor x|H) / 2 on the stashed qubit.
    """
    m_layout = RegisterLayout(("M",), (2,))
    v_layout = RegisterLayout(("R", "C"), (2, 2))
    hadamard = np.array([[1, 1], [1, -1]]) / math.sqrt(2)
    family_ops = {}
    for x in range(2):
        for a in range(2):
            proj_a = np.zeros((2, 2))
            proj_a[a, a] = 1.0
            flip = np.zeros((2, 2))
            flip[a ^ x, a ^ x] = 1.0
            m_xa = (proj_a + hadamard @ flip @ hadamard) / 2
            family_ops[(str(x), str(a))] = MeasurementOperator(m_layout, m_xa)
    family = MeasurementFamily(("0", "1"), ("0", "1"), family_ops)
    joint = m_layout.concat(v_layout)
    flag = np.zeros((8, 8), dtype=np.complex128)
    for x in range(2):
        for a in range(2):
            proj_a = np.zeros((2, 2))
            proj_a[a, a] = 1.0
            proj_x = np.zeros((2, 2))
            proj_x[x, x] = 1.0
            flag += kron_all([proj_a, family_ops[(str(x), str(a))].entries, proj_x])
    return (
        ProtocolSpec(
            m_layout=m_layout,
            v_layout=v_layout,
            rounds=3,
            v2=KrausChannel.identity(joint),
            accept=MeasurementOperator(joint, flag),
            classical_rounds=frozenset({2, 3}),
            public_coin=True,
            coin_label="C",
            saved_label="R",
        ),
        family,
    )
