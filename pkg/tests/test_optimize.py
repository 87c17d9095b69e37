import math

import numpy as np
import pytest
import scipy.stats

from qiplab import (
    BudgetError,
    MeasurementOperator,
    NumericsError,
    RegisterLayout,
    ResolutionError,
    ValidationError,
    chsh_protocol,
)
from qiplab.optimize import (
    OptimizerConfig,
    ValueReport,
    brute_force_unentangled_value,
    exact_classical_response_value,
    fibonacci_sphere_states,
    hoeffding_floor,
    majority_amplify,
    net_covering_error,
    nexp_decide,
    seesaw_entangled_value,
    subsampling_experiment,
    uniform_weights,
)
from qiplab.protocol import MeasurementFamily
from qiplab.random_instances import (
    random_measurement_family,
    random_public_coin_spec,
)
from qiplab.utils import derived_rng

QUBIT = RegisterLayout(("M",), (2,))
TSIRELSON = (1 + 1 / math.sqrt(2)) / 2


def diag_family(table: dict[tuple[str, str], tuple[float, float]]) -> MeasurementFamily:
    challenges = tuple(sorted({y for y, _ in table}))
    responses = tuple(sorted({z for _, z in table}))
    ops = {k: MeasurementOperator(QUBIT, np.diag(v)) for k, v in table.items()}
    return MeasurementFamily(challenges, responses, ops)


def test_chsh_exact_classical_value():
    _, family = chsh_protocol()
    report = exact_classical_response_value(family, uniform_weights(family))
    assert report.value == pytest.approx(0.75, abs=1e-9)
    assert report.method == "exhaustive"
    # ties break toward the first enumerated table, the all-zeros one
    assert report.witness["responses"] == {"0": "0", "1": "0"}
    amplitudes = report.witness["state"].amplitudes
    assert abs(amplitudes[0]) == pytest.approx(1.0, abs=1e-9)


def test_constant_half_family_scores_one_half():
    ops = {
        (y, z): MeasurementOperator(QUBIT, np.eye(2) / 2) for y in "01" for z in "01"
    }
    fam = MeasurementFamily(("0", "1"), ("0", "1"), ops)
    assert exact_classical_response_value(fam).value == pytest.approx(0.5, abs=1e-12)


def test_single_challenge_value_is_the_best_response_eigenvalue():
    rng = derived_rng(3, "single-challenge")
    ops = {}
    tops = []
    for z in range(3):
        eff = np.diag(rng.uniform(0, 1, size=2))
        ops[("0", str(z))] = MeasurementOperator(QUBIT, eff)
        tops.append(eff.max())
    fam = MeasurementFamily(("0",), ("0", "1", "2"), ops)
    report = exact_classical_response_value(fam)
    assert report.value == pytest.approx(max(tops), abs=1e-12)


def test_enumeration_budget_is_enforced():
    ops = {
        (str(y), str(z)): MeasurementOperator(QUBIT, np.eye(2) / 2)
        for y in range(7)
        for z in range(8)
    }
    fam = MeasurementFamily(
        tuple(str(y) for y in range(7)), tuple(str(z) for z in range(8)), ops
    )
    with pytest.raises(BudgetError):
        exact_classical_response_value(fam)


def test_weight_validation():
    _, family = chsh_protocol()
    with pytest.raises(ValidationError):
        exact_classical_response_value(family, {"0": 1.0})
    with pytest.raises(ValidationError):
        exact_classical_response_value(family, {"0": 1.5, "1": -0.5})
    with pytest.raises(ValidationError):
        exact_classical_response_value(family, {"0": 0.9, "1": 0.9})


def test_seesaw_reaches_the_chsh_entangled_optimum():
    _, family = chsh_protocol()
    cfg = OptimizerConfig(restarts=16, seed=11)
    report = seesaw_entangled_value(family, uniform_weights(family), cfg)
    assert report.value >= TSIRELSON - 1e-4
    assert report.value <= TSIRELSON + 1e-6
    assert report.method == "seesaw"
    assert len(report.iterates) == 16
    for run in report.iterates:
        assert all(b >= a - 1e-12 for a, b in zip(run, run[1:]))


def test_seesaw_agrees_with_exact_on_a_shared_eigenvector_family():
    fam = diag_family(
        {
            ("0", "0"): (0.9, 0.2),
            ("0", "1"): (0.5, 0.1),
            ("1", "0"): (0.4, 0.0),
            ("1", "1"): (0.7, 0.3),
        }
    )
    exact = exact_classical_response_value(fam).value
    assert exact == pytest.approx(0.8, abs=1e-12)
    cfg = OptimizerConfig(restarts=8, seed=2)
    assert seesaw_entangled_value(fam, config=cfg).value == pytest.approx(exact, abs=1e-6)


def test_seesaw_dominates_the_classical_value():
    for trial in range(20):
        rng = derived_rng(21, "ordering", trial)
        fam = random_measurement_family(rng, QUBIT)
        exact = exact_classical_response_value(fam).value
        cfg = OptimizerConfig(restarts=6, seed=trial)
        assert seesaw_entangled_value(fam, config=cfg).value >= exact - 1e-6


def test_seesaw_three_response_coordinate_ascent_stays_monotone():
    rng = derived_rng(22, "three-z")
    fam = random_measurement_family(rng, QUBIT, n_challenges=2, n_responses=3)
    cfg = OptimizerConfig(restarts=5, seed=9)
    report = seesaw_entangled_value(fam, config=cfg)
    exact = exact_classical_response_value(fam).value
    assert report.value >= exact - 1e-6
    for run in report.iterates:
        assert all(b >= a - 1e-12 for a, b in zip(run, run[1:]))


def test_seesaw_rejects_oversized_response_alphabets():
    ops = {
        ("0", str(z)): MeasurementOperator(QUBIT, np.eye(2) / 2) for z in range(9)
    }
    fam = MeasurementFamily(("0",), tuple(str(z) for z in range(9)), ops)
    with pytest.raises(BudgetError):
        seesaw_entangled_value(fam)


def test_fibonacci_net_covers_the_sphere_tightly():
    points, states = fibonacci_sphere_states(2000)
    assert np.allclose(np.linalg.norm(points, axis=1), 1.0, atol=1e-12)
    assert np.allclose(np.linalg.norm(states, axis=1), 1.0, atol=1e-12)
    # Bloch vector of each state must be the matching net point
    sigma_x = np.array([[0, 1], [1, 0]])
    sigma_y = np.array([[0, -1j], [1j, 0]])
    sigma_z = np.array([[1, 0], [0, -1]])
    for idx in (0, 713, 1999):
        psi = states[idx]
        bloch = np.array(
            [
                np.vdot(psi, sigma_x @ psi).real,
                np.vdot(psi, sigma_y @ psi).real,
                np.vdot(psi, sigma_z @ psi).real,
            ]
        )
        assert np.allclose(bloch, points[idx], atol=1e-10)
    err = net_covering_error(points)
    assert 0 < err < 0.05


def test_brute_force_lands_in_the_chsh_window():
    spec, _ = chsh_protocol()
    report = brute_force_unentangled_value(spec, OptimizerConfig(net_resolution=2000))
    assert 0.748 <= report.value <= 0.750
    assert report.method == "net"
    assert report.net_error < 0.05
    assert set(report.witness["responses"]) == {"0", "1"}


def test_brute_force_stays_within_net_error_of_the_exact_solver():
    for trial in range(20):
        rng = derived_rng(77, "net-oracle", trial)
        spec, fam = random_public_coin_spec(rng)
        exact = exact_classical_response_value(fam, uniform_weights(fam)).value
        report = brute_force_unentangled_value(spec, OptimizerConfig(net_resolution=800))
        assert report.value <= exact + 1e-9
        assert report.value >= exact - report.net_error - 1e-9


def test_brute_force_on_state_independent_acceptance():
    # acceptance that ignores the stashed qubit reduces to a table search
    rng = derived_rng(78, "flat")
    spec, fam = random_public_coin_spec(rng)
    m_layout = spec.m_layout
    joint = spec.m_layout.concat(spec.v_layout)
    eye = np.eye(2)
    scores = {("0", "0"): 0.3, ("0", "1"): 0.9, ("1", "0"): 0.6, ("1", "1"): 0.2}
    flag = np.zeros((8, 8), dtype=np.complex128)
    for (x, a), c in scores.items():
        proj_a = np.outer(eye[int(a)], eye[int(a)])
        proj_x = np.outer(eye[int(x)], eye[int(x)])
        flag += c * np.kron(proj_a, np.kron(np.eye(2), proj_x))
    spec2 = type(spec)(
        m_layout=m_layout,
        v_layout=spec.v_layout,
        rounds=3,
        v2=spec.v2,
        accept=MeasurementOperator(joint, flag),
        classical_rounds=spec.classical_rounds,
        public_coin=True,
        coin_label="C",
        saved_label="R",
    )
    report = brute_force_unentangled_value(spec2, OptimizerConfig(net_resolution=200))
    assert report.value == pytest.approx((0.9 + 0.6) / 2, abs=1e-10)
    assert report.witness["responses"] == {"0": "1", "1": "0"}


def test_brute_force_rejects_multiqubit_messages():
    rng = derived_rng(79, "too-big")
    from qiplab.random_instances import random_verifier_spec

    spec = random_verifier_spec(rng, m_dim=4, classical=(2, 3))
    with pytest.raises(BudgetError):
        brute_force_unentangled_value(spec)


def test_nexp_decide_thresholds_on_chsh():
    spec, _ = chsh_protocol()
    cfg = OptimizerConfig(net_resolution=2000)
    accept = nexp_decide(spec, 0.8, 0.6, cfg)
    assert accept.accepted and accept.threshold == pytest.approx(0.7)
    reject = nexp_decide(spec, 1.0, 0.6, cfg)
    assert not reject.accepted and reject.threshold == pytest.approx(0.8)
    with pytest.raises(ValidationError):
        nexp_decide(spec, 0.6, 0.8, cfg)
    with pytest.raises(ResolutionError):
        nexp_decide(spec, 0.71, 0.69, cfg)


def test_subsampling_single_draw_deviation_is_pinned():
    _, family = chsh_protocol()
    report = subsampling_experiment(family, r=1, eps=0.1, trials=20, seed=5)
    expected = TSIRELSON - 0.75
    assert report.lhs_value == pytest.approx(0.75, abs=1e-9)
    for deviation in report.deviations:
        assert deviation == pytest.approx(expected, abs=1e-9)
    assert report.failure_fraction == 1.0
    assert report.m == 1 and report.r == 1 and report.trials == 20


def test_balanced_empirical_weights_reproduce_the_uniform_value():
    _, family = chsh_protocol()
    lhs = exact_classical_response_value(family).value
    balanced = exact_classical_response_value(family, {"0": 0.5, "1": 0.5}).value
    assert balanced == pytest.approx(lhs, abs=0.0)


def test_subsampling_deviation_decays_with_more_draws():
    _, family = chsh_protocol()
    small = subsampling_experiment(family, r=8, eps=0.1, trials=40, seed=13)
    large = subsampling_experiment(family, r=64, eps=0.1, trials=40, seed=13)
    mean_small = np.mean(small.deviations)
    mean_large = np.mean(large.deviations)
    sem = math.sqrt(
        np.var(small.deviations) / small.trials + np.var(large.deviations) / large.trials
    )
    assert mean_large <= mean_small + 2 * sem


def test_subsampling_is_deterministic_for_a_seed():
    _, family = chsh_protocol()
    one = subsampling_experiment(family, r=16, eps=0.1, trials=10, seed=3, max_workers=1)
    two = subsampling_experiment(family, r=16, eps=0.1, trials=10, seed=3, max_workers=4)
    assert one == two


def test_majority_amplify_matches_the_binomial_tail():
    assert majority_amplify(1.0, 5) == pytest.approx(1.0, abs=0.0)
    assert majority_amplify(0.0, 5) == pytest.approx(0.0, abs=0.0)
    assert majority_amplify(0.5, 41) == pytest.approx(0.5, abs=1e-12)
    value = majority_amplify(2 / 3, 41)
    assert value == pytest.approx(float(scipy.stats.binom.sf(20, 41, 2 / 3)), abs=1e-12)
    assert value >= hoeffding_floor(2 / 3, 41)
    grid = [majority_amplify(p, 9) for p in np.linspace(0, 1, 21)]
    assert all(b >= a - 1e-12 for a, b in zip(grid, grid[1:]))
    with pytest.raises(ValidationError):
        majority_amplify(0.7, 40)
    with pytest.raises(ValidationError):
        majority_amplify(1.5, 5)


def test_optimizer_config_and_report_guards():
    with pytest.raises(ValidationError):
        OptimizerConfig(restarts=0)
    with pytest.raises(ValidationError):
        OptimizerConfig(convergence_tol=0.0)
    with pytest.raises(ValidationError):
        OptimizerConfig(net_resolution=2)
    with pytest.raises(NumericsError):
        ValueReport(1.5, {}, (), "exhaustive")
    with pytest.raises(NumericsError):
        ValueReport(0.5, {}, ((0.5, 0.4),), "seesaw")
