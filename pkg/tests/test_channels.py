import math

import numpy as np
import pytest

from qiplab.channels import (
    ChoiMatrix,
    EbChannel,
    KrausChannel,
    adjoint_apply,
    apply_eb,
    apply_kraus,
    channels_equal,
    check_eb_ppt,
    choi,
    eb_from_separable_choi,
)
from qiplab.errors import DecompositionError, LayoutError, ValidationError
from qiplab.qmath import (
    DensityMatrix,
    MeasurementOperator,
    Povm,
    PureState,
    RegisterLayout,
    born_probability,
    tensor,
)
from qiplab.random_instances import (
    random_density,
    random_eb_channel,
    random_effect,
    random_kraus_channel,
    random_pure,
    random_separable_choi_terms,
    random_unit_vector,
)

QUBIT = RegisterLayout(("M",), (2,))
BELL = np.array([1, 0, 0, 1]) / math.sqrt(2)


def z_measure_prepare() -> EbChannel:
    return EbChannel(
        Povm.computational(QUBIT),
        (PureState.basis(QUBIT, 0), PureState.basis(QUBIT, 1)),
    )


def test_kraus_validation():
    KrausChannel.identity(QUBIT)
    with pytest.raises(ValidationError):
        KrausChannel(QUBIT, QUBIT, (np.eye(2) * 0.5,))
    with pytest.raises(LayoutError):
        KrausChannel(QUBIT, QUBIT, (np.eye(3),))


def test_apply_kraus_identity_is_noop():
    rng = np.random.default_rng(0)
    rho = random_density(rng, QUBIT)
    out = apply_kraus(KrausChannel.identity(QUBIT), rho)
    assert np.max(np.abs(out.entries - rho.entries)) < 1e-12


def test_apply_eb_z_channel_decoheres_plus():
    plus = PureState(QUBIT, np.array([1, 1]) / math.sqrt(2))
    out = apply_eb(z_measure_prepare(), DensityMatrix.pure(plus))
    assert np.allclose(out.entries, np.eye(2) / 2, atol=1e-12)
    assert abs(np.trace(out.entries) - 1) < 1e-10


def test_eb_to_kraus_matches_displayed_sum():
    for i in range(100):
        rng = np.random.default_rng(100 + i)
        ch = random_eb_channel(rng, QUBIT, n_outcomes=3)
        rho = random_density(rng, QUBIT)
        direct = apply_eb(ch, rho)
        via_kraus = apply_kraus(ch.to_kraus(), rho)
        assert np.max(np.abs(direct.entries - via_kraus.entries)) < 1e-10


def test_rectangular_kraus_channel():
    rng = np.random.default_rng(5)
    big = RegisterLayout(("A", "B"), (2, 2))
    ch = random_kraus_channel(rng, big, QUBIT, n_kraus=3)
    rho = random_density(rng, big)
    out = apply_kraus(ch, rho)
    assert out.layout == QUBIT


def test_choi_of_identity_is_bell_projector():
    cm = choi(KrausChannel.identity(QUBIT))
    assert np.allclose(cm.operator.entries, np.outer(BELL, BELL), atol=1e-12)
    assert cm.in_dim == 2 and cm.out_dim == 2


def test_choi_of_z_channel():
    cm = choi(z_measure_prepare())
    want = np.zeros((4, 4))
    want[0, 0] = 0.5
    want[3, 3] = 0.5
    assert np.allclose(cm.operator.entries, want, atol=1e-12)


def test_choi_of_constant_prepare():
    ch = EbChannel.constant(QUBIT, PureState.basis(QUBIT, 0))
    cm = choi(ch)
    want = np.kron(np.eye(2) / 2, np.diag([1.0, 0.0]))
    assert np.allclose(cm.operator.entries, want, atol=1e-12)


def test_choi_marginal_validation():
    bad = np.diag([1.0, 0.0, 0.0, 0.0])
    layout = RegisterLayout(("in", "out"), (2, 2))
    with pytest.raises(ValidationError):
        ChoiMatrix(DensityMatrix(layout, bad), 2)


def test_choi_agrees_between_forms():
    # same channel through the eb branch and its Kraus form
    for i in range(25):
        rng = np.random.default_rng(300 + i)
        ch = random_eb_channel(rng, QUBIT, n_outcomes=3)
        a = choi(ch).operator.entries
        b = choi(ch.to_kraus()).operator.entries
        assert np.max(np.abs(a - b)) < 1e-10


def test_channels_equal():
    ident = KrausChannel.identity(QUBIT)
    dephase = KrausChannel(QUBIT, QUBIT, (np.diag([1.0, 0.0]), np.diag([0.0, 1.0])))
    assert channels_equal(ident, ident)
    assert not channels_equal(ident, dephase)
    ch = z_measure_prepare()
    assert channels_equal(ch, ch.to_kraus())
    with pytest.raises(LayoutError):
        channels_equal(ident, random_kraus_channel(np.random.default_rng(1), RegisterLayout(("A", "B"), (2, 2)), QUBIT))


def test_adjoint_duality_and_unitality():
    for i in range(100):
        rng = np.random.default_rng(500 + i)
        ch = random_kraus_channel(rng, QUBIT, n_kraus=2)
        rho = random_density(rng, QUBIT)
        effect = random_effect(rng, QUBIT)
        lhs = born_probability(effect, apply_kraus(ch, rho))
        rhs = born_probability(adjoint_apply(ch, effect), rho)
        assert abs(lhs - rhs) < 1e-10
    ident_image = adjoint_apply(ch, MeasurementOperator.identity(QUBIT))
    assert np.max(np.abs(ident_image.entries - np.eye(2))) < 1e-10


def test_adjoint_of_rectangular_channel():
    rng = np.random.default_rng(9)
    big = RegisterLayout(("A", "B"), (2, 2))
    ch = random_kraus_channel(rng, QUBIT, big, n_kraus=2)
    effect = random_effect(rng, big)
    rho = random_density(rng, QUBIT)
    lhs = born_probability(effect, apply_kraus(ch, rho))
    rhs = born_probability(adjoint_apply(ch, effect), rho)
    assert abs(lhs - rhs) < 1e-10


def test_identity_channel_is_npt():
    report = check_eb_ppt(KrausChannel.identity(QUBIT))
    assert report.verdict == "NPT"
    assert abs(report.min_eigenvalue + 0.5) < 1e-10


def test_z_channel_is_ppt():
    report = check_eb_ppt(z_measure_prepare())
    assert report.verdict == "PPT"
    assert report.min_eigenvalue >= -1e-10


def test_random_eb_channels_are_ppt():
    for i in range(100):
        rng = np.random.default_rng(700 + i)
        report = check_eb_ppt(random_eb_channel(rng, QUBIT, n_outcomes=3))
        assert report.min_eigenvalue >= -1e-10, f"instance {i}"


def test_eb_from_separable_choi_z_example():
    terms = [
        (0.5, PureState.basis(QUBIT, 0), PureState.basis(QUBIT, 0)),
        (0.5, PureState.basis(QUBIT, 1), PureState.basis(QUBIT, 1)),
    ]
    ch = eb_from_separable_choi(2, terms)
    assert channels_equal(ch, z_measure_prepare())


def test_eb_from_separable_choi_roundtrip():
    out_layout = RegisterLayout(("N",), (2,))
    for i in range(50):
        rng = np.random.default_rng(900 + i)
        terms = random_separable_choi_terms(rng, QUBIT, out_layout, n_bases=2)
        ch = eb_from_separable_choi(2, terms)
        target = sum(
            p * np.kron(v.projector(), w.projector()) for p, v, w in terms
        )
        assert np.max(np.abs(choi(ch).operator.entries - target)) < 1e-9


def test_eb_from_separable_choi_complex_vectors_conjugate_on_input_copy():
    # With complex measurement-side vectors the Choi state carries their
    # conjugates on the input copy; this pins the convention.
    rng = np.random.default_rng(42)
    u = np.linalg.qr(rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)))[0]
    terms = [
        (0.5, PureState(QUBIT, u[:, 0]), random_pure(rng, QUBIT)),
        (0.5, PureState(QUBIT, u[:, 1]), random_pure(rng, QUBIT)),
    ]
    ch = eb_from_separable_choi(2, terms)
    conj_target = sum(
        p * np.kron(np.outer(v.amplitudes.conj(), v.amplitudes), w.projector())
        for p, v, w in terms
    )
    assert np.max(np.abs(choi(ch).operator.entries - conj_target)) < 1e-12


def test_eb_from_separable_choi_errors():
    good = PureState.basis(QUBIT, 0)
    with pytest.raises(ValidationError):
        eb_from_separable_choi(2, [(-0.2, good, good), (1.2, PureState.basis(QUBIT, 1), good)])
    with pytest.raises(DecompositionError):
        eb_from_separable_choi(2, [(1.0, good, good)])  # 2|0><0| != I
