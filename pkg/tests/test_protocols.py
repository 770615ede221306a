import itertools

import numpy as np
import pytest
from scipy.stats import chisquare

from subunit.cli import pinned_channel, swap_mixture
from subunit.exceptions import InvalidInputError, UnsupportedError
from subunit.fitting import fit_single_exponential
from subunit.liouville import BipartiteChannel, Channel
from subunit.measures import correlated_unitarity, sub_unitarity, unitarity, witness_bound
from subunit.protocols import (
    NoiseModel,
    ResetModel,
    clifford_group,
    clifford_liouville,
    conditional_channel,
    decay_spectrum,
    default_spam,
    estimate_local_unitarity,
    orthogonal_prep_bound,
    reset_effective_unitarity,
    run_protocol_1,
    run_protocol_2,
    sector_observables,
    swap_unitary_rect,
    witness_pipeline,
)
from subunit.twirl import predict_decay, twirl_matrix
from subunit.zoo import (
    depolarizing,
    identity_channel,
    make_rng,
    named_channel,
    random_bipartite,
    random_channel,
    random_unitary,
)

K = tuple(range(1, 21))


def _same_up_to_phase(u, v):
    return abs(abs(np.trace(u.conj().T @ v)) - 2) < 1e-9


def test_clifford_group_is_a_group_of_24():
    g = clifford_group(1)
    assert len(g) == 24
    for u in g:
        np.testing.assert_allclose(u.conj().T @ u, np.eye(2), atol=1e-12)
    for a, b in itertools.product(g, g):
        assert any(_same_up_to_phase(a @ b, c) for c in g)
    for a, b in itertools.combinations(g, 2):
        assert not _same_up_to_phase(a, b)


def test_clifford_group_only_single_qubit():
    with pytest.raises(UnsupportedError):
        clifford_group(2)


def test_clifford_liouville_are_signed_permutations():
    mats = clifford_liouville()
    assert mats.shape == (24, 4, 4)
    for m in mats:
        np.testing.assert_allclose(np.abs(m).sum(axis=0), 1, atol=1e-12)
        assert m[0, 0] == pytest.approx(1)


def test_sampled_clifford_indices_are_uniform():
    draws = make_rng(7).integers(0, 24, size=100_000)
    counts = np.bincount(draws, minlength=24)
    assert chisquare(counts).pvalue > 1e-3


def test_reset_model_validation():
    with pytest.raises(InvalidInputError):
        ResetModel("partial")
    with pytest.raises(InvalidInputError):
        ResetModel.depolarizing(1.2)
    with pytest.raises(InvalidInputError):
        ResetModel.bloch_state((1.0, 1.0, 0.0))
    r = ResetModel.depolarizing(0.0).channel_b(2)
    np.testing.assert_allclose(r.superop, np.eye(4))
    ideal = ResetModel().channel_b(3)
    np.testing.assert_allclose(ideal.apply(np.diag([1.0, 0, 0])), np.eye(3) / 3, atol=1e-15)


def test_swap_rect_permutes_tensor_factors(rng):
    a, b = random_unitary(2, rng), random_unitary(3, rng)
    p = swap_unitary_rect(2, 3)
    np.testing.assert_allclose(p @ np.kron(a, b) @ p.T, np.kron(b, a), atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_exact_protocol_1_matches_twirl_prediction(seed):
    rng = make_rng(seed)
    bch = random_bipartite(2, 2, 3, rng)
    rho, m, _ = default_spam()
    got = run_protocol_1(NoiseModel(bch), rho, m, K, exact=True)
    pred = predict_decay(twirl_matrix(bch), m, rho, 0, k_list=K)
    np.testing.assert_allclose(got.mean, pred.mean, atol=1e-13)
    assert got.is_exact


def test_monte_carlo_protocol_1_agrees_with_exact():
    bch = random_bipartite(2, 2, 2, make_rng(3))
    rho, m, _ = default_spam()
    k = (1, 2, 4, 8, 12)
    exact = run_protocol_1(NoiseModel(bch), rho, m, k, exact=True)
    mc = run_protocol_1(NoiseModel(bch), rho, m, k, seqs_per_k=3000, rng=11)
    z = (mc.mean - exact.mean) / mc.stderr
    assert np.all(np.abs(z) < 4), z
    assert list(mc.n_seqs) == [3000] * 5


def test_monte_carlo_is_deterministic_and_thread_independent():
    bch = random_bipartite(2, 2, 2, make_rng(3))
    rho, m, _ = default_spam()
    a = run_protocol_1(NoiseModel(bch), rho, m, (1, 3, 5), seqs_per_k=50, rng=5)
    b = run_protocol_1(NoiseModel(bch), rho, m, (1, 3, 5), seqs_per_k=50, rng=5, workers=3)
    np.testing.assert_array_equal(a.mean, b.mean)
    c = run_protocol_1(NoiseModel(bch), rho, m, (1, 3, 5), seqs_per_k=50, rng=6)
    assert not np.array_equal(a.mean, c.mean)


def test_identity_noise_gives_flat_curve():
    rho, m, _ = default_spam()
    bch = BipartiteChannel(identity_channel(4), 2, 2)
    data = run_protocol_1(NoiseModel(bch), rho, m, K, exact=True)
    np.testing.assert_allclose(data.mean, data.mean[0], atol=1e-14)


def test_multi_observable_returns_one_dataset_each():
    bch = random_bipartite(2, 2, 2, make_rng(2))
    rho, _, _ = default_spam()
    out = run_protocol_1(NoiseModel(bch), rho, sector_observables(), (1, 2, 3), exact=True)
    assert len(out) == 3


def test_decay_constant_is_spam_robust():
    rng = make_rng(8)
    bch = random_bipartite(2, 2, 2, rng)
    rho, _, _ = default_spam()
    clean = estimate_local_unitarity(NoiseModel(bch), "A", K)
    spam = NoiseModel(bch, state_prep=random_channel(4, 4, 2, rng), measurement_noise=random_channel(4, 4, 2, rng))
    noisy = estimate_local_unitarity(spam, "A", K)
    assert noisy.decays[0] == pytest.approx(clean.decays[0], abs=1e-9)
    assert not np.allclose(noisy.constants, clean.constants)


def test_protocol_input_validation():
    bch = random_bipartite(2, 2, 2, make_rng(1))
    rho, m, m_a = default_spam()
    with pytest.raises(InvalidInputError):
        run_protocol_1(NoiseModel(bch), rho, m, (3, 2), exact=True)
    with pytest.raises(InvalidInputError):
        run_protocol_1(NoiseModel(bch), rho, np.triu(np.ones((4, 4))), K, exact=True)
    with pytest.raises(InvalidInputError):
        run_protocol_1(NoiseModel(bch), rho, m, K, seqs_per_k=1, rng=0)
    with pytest.raises(InvalidInputError):
        run_protocol_2(NoiseModel(bch), rho, np.eye(4), K, exact=True)
    with pytest.raises(InvalidInputError):
        NoiseModel(bch, state_prep=identity_channel(2))


def test_monte_carlo_needs_two_qubits():
    bch = random_bipartite(2, 3, 2, make_rng(1))
    rho = np.eye(6) / 6
    with pytest.raises(UnsupportedError):
        run_protocol_1(NoiseModel(bch), rho, np.eye(6), K, seqs_per_k=10, rng=0)


def test_exact_mode_works_beyond_qubits():
    bch = random_bipartite(2, 3, 3, make_rng(1))
    rho = np.zeros((6, 6))
    rho[0, 0] = 1
    _, _, m_a = default_spam(2, 3)
    data = run_protocol_2(NoiseModel(bch), rho, m_a, K, exact=True)
    fit = fit_single_exponential(data)
    assert fit.decays[0] == pytest.approx(sub_unitarity(bch, "A", "A"), abs=1e-9)


@pytest.mark.parametrize("seed", range(10))
def test_protocol_2_ideal_reset_is_single_exponential(seed):
    bch = random_bipartite(2, 2, int(make_rng(seed).integers(1, 17)), make_rng(seed))
    rho, _, m_a = default_spam()
    data = run_protocol_2(NoiseModel(bch), rho, m_a, K, exact=True)
    fit = fit_single_exponential(data)
    assert fit.residual_rms < 1e-10
    assert fit.decays[0] == pytest.approx(sub_unitarity(bch, "A", "A"), abs=1e-9)


def test_ideal_reset_recovers_both_local_unitarities(rng):
    bch = random_bipartite(2, 2, 3, rng)
    for side in ("A", "B"):
        fit = estimate_local_unitarity(NoiseModel(bch), side, K)
        assert fit.decays[0] == pytest.approx(sub_unitarity(bch, side, side), abs=1e-9)
    with pytest.raises(InvalidInputError):
        estimate_local_unitarity(NoiseModel(bch), "C", K)


def test_reset_effective_unitarity_matches_conditional_channel(rng):
    bch = random_bipartite(2, 2, 3, rng)
    assert reset_effective_unitarity(NoiseModel(bch)) == pytest.approx(sub_unitarity(bch, "A", "A"), abs=1e-12)
    b = (0.0, 0.0, 0.4)
    state = 0.5 * np.diag([1.4, 0.6])
    noise = NoiseModel(bch, reset=ResetModel.bloch_state(b))
    assert reset_effective_unitarity(noise) == pytest.approx(unitarity(conditional_channel(bch, state)))
    fit = estimate_local_unitarity(noise, "A", K)
    assert fit.decays[0] == pytest.approx(reset_effective_unitarity(noise), abs=1e-9)


def test_reset_error_grows_as_reset_weakens():
    bch = pinned_channel()
    truth = sub_unitarity(bch, "A", "A")
    errs = []
    for p in (1.0, 0.95, 0.9, 0.8, 0.6, 0.3):
        fit = estimate_local_unitarity(NoiseModel(bch, reset=ResetModel.depolarizing(p)), "A", tuple(range(1, 31)))
        errs.append(abs(fit.decays[0] - truth) / truth)
    assert errs[0] < 1e-9
    assert all(a <= b for a, b in zip(errs, errs[1:]))
    assert errs[3] <= 0.10


@pytest.mark.parametrize("norm", [0.05, 0.1, 0.2])
def test_bloch_reset_error_small(norm):
    bch = pinned_channel()
    truth = sub_unitarity(bch, "A", "A")
    fit = estimate_local_unitarity(NoiseModel(bch, reset=ResetModel.bloch_state((0, 0, norm))), "A", K)
    assert abs(fit.decays[0] - truth) / truth <= 0.10


def test_orthogonal_prep_bound_is_tight_for_products(rng):
    a, b = random_channel(2, 2, 2, rng), random_channel(2, 2, 3, rng)
    bch = BipartiteChannel.product(a, b)
    assert orthogonal_prep_bound(bch, (0, 0, 1)) == pytest.approx(unitarity(a), abs=1e-12)


def test_orthogonal_prep_bound_for_swap():
    # conditioned on B the swap outputs a fixed state on A
    assert orthogonal_prep_bound(named_channel("swap", 2, 2), (1, 0, 0)) == pytest.approx(0, abs=1e-12)


def test_orthogonal_prep_bound_dominates_u_aa():
    rng = make_rng(21)
    for _ in range(500):
        bch = random_bipartite(2, 2, int(rng.integers(1, 17)), rng)
        b = rng.standard_normal(3)
        b /= np.linalg.norm(b)
        assert orthogonal_prep_bound(bch, b) >= sub_unitarity(bch, "A", "A") - 1e-12


def test_orthogonal_prep_bound_validation():
    bch = random_bipartite(2, 2, 2, make_rng(0))
    with pytest.raises(InvalidInputError):
        orthogonal_prep_bound(bch, (0, 0, 0.5))
    with pytest.raises(UnsupportedError):
        orthogonal_prep_bound(random_bipartite(2, 3, 2, make_rng(0)), (0, 0, 1))


def test_shot_noise_estimator_is_unbiased():
    bch = random_bipartite(2, 2, 2, make_rng(4))
    rho, _, _ = default_spam()
    proj = np.kron(np.diag([1.0, 0.0]), np.eye(2))
    k = (1, 3, 6)
    exact = run_protocol_2(NoiseModel(bch), rho, np.diag([1.0, 0.0]), k, exact=True)
    mc = run_protocol_2(NoiseModel(bch), rho, np.diag([1.0, 0.0]), k, seqs_per_k=4000, rng=3, shots=20)
    z = (mc.mean - exact.mean) / mc.stderr
    assert np.all(np.abs(z) < 4), z
    with pytest.raises(InvalidInputError):
        run_protocol_1(NoiseModel(bch), rho, 2 * proj, k, seqs_per_k=10, rng=0, shots=20)
    with pytest.raises(InvalidInputError):
        run_protocol_1(NoiseModel(bch), rho, proj, k, seqs_per_k=10, rng=0, shots=1)


def test_keep_samples():
    bch = random_bipartite(2, 2, 2, make_rng(4))
    rho, m, _ = default_spam()
    data = run_protocol_1(NoiseModel(bch), rho, m, (1, 2), seqs_per_k=7, rng=1, keep_samples=True)
    assert [len(s) for s in data.samples] == [7, 7]
    np.testing.assert_allclose([s.mean() for s in data.samples], data.mean)
    assert "samples" in data.to_dict(keep_samples=True)


def test_decay_spectrum_of_product_channel(rng):
    a, b = random_channel(2, 2, 2, rng), random_channel(2, 2, 2, rng)
    bch = BipartiteChannel.product(a, b)
    spec = decay_spectrum(bch, tuple(range(1, 31)))
    ua, ub = unitarity(a), unitarity(b)
    np.testing.assert_allclose(sorted(spec.eigenvalues), sorted([ua, ub, ua * ub]), atol=1e-6)


def test_decay_spectrum_counts_degenerate_modes():
    # a product of two identical unitaries: every decay equals one
    u = Channel.from_unitary(random_unitary(2, make_rng(3)))
    spec = decay_spectrum(BipartiteChannel.product(u, u), tuple(range(1, 31)))
    np.testing.assert_allclose(spec.eigenvalues, [1, 1, 1], atol=1e-6)
    # identical depolarizers on both sides share one decay with multiplicity two
    d = depolarizing(0.2, 2)
    spec = decay_spectrum(BipartiteChannel.product(d, d), tuple(range(1, 31)))
    ud = unitarity(d)
    np.testing.assert_allclose(sorted(spec.eigenvalues), sorted([ud, ud, ud * ud]), atol=1e-6)


def test_witness_pipeline_on_swap_family():
    est = witness_pipeline(swap_mixture(1.0), k_list=tuple(range(1, 31)))
    assert est.c_sim == pytest.approx(1.0, abs=1e-6)
    assert est.witnessed
    assert est.witness_bound == witness_bound(2, 2)
    low = witness_pipeline(swap_mixture(0.0), k_list=tuple(range(1, 31)))
    assert low.c_sim == pytest.approx(0.0, abs=1e-6)
    assert not low.witnessed
    assert low.to_dict()["witnessed"] is False


def test_witness_pipeline_tracks_correlated_unitarity():
    bch = swap_mixture(0.6)
    est = witness_pipeline(bch, k_list=tuple(range(1, 31)))
    assert est.c_sim == pytest.approx(correlated_unitarity(bch), abs=1e-5)
    assert est.u_abab_est == pytest.approx(sub_unitarity(bch, "AB", "AB"), abs=1e-5)
