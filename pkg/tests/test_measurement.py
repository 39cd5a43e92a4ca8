import numpy as np
import pytest

from diffpace.geometry import ArrayConfig, subarray_codebooks
from diffpace.measurement import (build_measurement_matrix, combined_noise,
                                  ensemble_signal_power, measure, nmse,
                                  quantize_phase, sample_pilot_plan, unvec, vec)

CFG = ArrayConfig(n_t=8, n_r=4, k_t=2, k_r=2, l_t=2, l_r=2,
                  tx_subarray_shape=(2, 2), rx_subarray_shape=(2, 1))
BOOKS = subarray_codebooks(CFG)


def make_plan(seed=0, m_t=3, m_r=2, n_b=4):
    return sample_pilot_plan(np.random.default_rng(seed), CFG, m_t, m_r, n_b)


# --- phase quantisation -----------------------------------------------------

def test_quantize_identity_on_grid_point():
    assert quantize_phase(1.0 + 0j, 1) == 1.0


def test_quantize_nearest_phase_rule():
    assert quantize_phase(np.exp(1j * 0.49 * np.pi), 1) == 1.0
    assert quantize_phase(np.exp(1j * 0.51 * np.pi), 1) == pytest.approx(-1.0)


def test_quantize_tie_breaks_to_smaller_index():
    # exactly halfway between q=0 and q=1 for one bit
    assert quantize_phase(np.exp(1j * np.pi / 2), 1) == 1.0


def test_quantize_outputs_sixteen_roots():
    rng = np.random.default_rng(1)
    roots = np.exp(2j * np.pi * np.arange(16) / 16)
    for _ in range(200):
        x = rng.standard_normal() + 1j * rng.standard_normal()
        if x == 0:
            continue
        q = quantize_phase(x, 4)
        assert np.min(np.abs(roots - q)) < 1e-12
        assert abs(abs(q) - 1.0) < 1e-12


def test_quantize_idempotent():
    for n_b in (1, 2, 4, 6):
        for q in range(1 << n_b):
            w = np.exp(2j * np.pi * q / (1 << n_b))
            assert quantize_phase(w, n_b) == w


def test_quantize_rejects_zero():
    with pytest.raises(ValueError):
        quantize_phase(0.0, 4)


# --- pilot plans --------------------------------------------------------------

def test_plan_deterministic():
    a, b = make_plan(7), make_plan(7)
    np.testing.assert_array_equal(a.combiners, b.combiners)
    np.testing.assert_array_equal(a.pilots, b.pilots)
    np.testing.assert_array_equal(a.symbols, b.symbols)


def test_plan_constant_modulus_combiners():
    plan = make_plan(3)
    np.testing.assert_allclose(np.abs(plan.combiners), 1 / np.sqrt(CFG.n_r), atol=1e-14)


def test_plan_phases_on_alphabet():
    plan = make_plan(4, n_b=2)
    phases = np.angle(plan.combiners * np.sqrt(CFG.n_r)) % (2 * np.pi)
    steps = phases / (2 * np.pi / 4)
    np.testing.assert_allclose(steps, np.round(steps), atol=1e-10)


def test_plan_symbols_unit_modulus_qpsk():
    plan = make_plan(5)
    np.testing.assert_allclose(np.abs(plan.symbols), 1.0, atol=1e-14)
    quad = (np.angle(plan.symbols) - np.pi / 4) / (np.pi / 2)
    np.testing.assert_allclose(quad, np.round(quad), atol=1e-10)


def test_pilot_ratio():
    plan = sample_pilot_plan(np.random.default_rng(0),
                             ArrayConfig(n_t=64, n_r=16, k_t=2, k_r=2, l_t=2, l_r=4,
                                         tx_subarray_shape=(8, 4),
                                         rx_subarray_shape=(4, 2)),
                             m_t=13, m_r=2, n_b=4)
    assert plan.pilot_ratio == pytest.approx(13 * 2 * 4 / (64 * 16))


# --- measurement matrix -------------------------------------------------------

def test_phi_shape():
    plan = make_plan(8)
    phi = build_measurement_matrix(plan, BOOKS)
    assert phi.shape == (plan.m_t * plan.m_r * plan.l_r, CFG.n_t * CFG.n_r)


def test_vec_identity_random_instances():
    for seed in range(100):
        rng = np.random.default_rng(seed)
        plan = sample_pilot_plan(rng, CFG, m_t=3, m_r=2, n_b=4)
        phi = build_measurement_matrix(plan, BOOKS)
        hb = rng.standard_normal((4, 8)) + 1j * rng.standard_normal((4, 8))
        direct = (plan.combiners.conj().T @ BOOKS[0].matrix @ hb
                  @ BOOKS[1].matrix.conj().T @ plan.pilots)
        assert np.abs(phi @ vec(hb) - vec(direct)).max() < 1e-10


def test_phi_zero_channel():
    plan = make_plan(9)
    phi = build_measurement_matrix(plan, BOOKS)
    np.testing.assert_array_equal(phi @ vec(np.zeros((4, 8), complex)), np.zeros(12))


def test_phi_entries_bounded_and_finite():
    plan = make_plan(10)
    phi = build_measurement_matrix(plan, BOOKS)
    assert np.all(np.isfinite(phi))
    assert np.abs(phi).max() <= CFG.l_t + 1e-12  # |a^H p| <= ||p|| <= l_t
    spectral = np.linalg.norm(phi, 2)
    assert spectral <= np.sqrt(phi.shape[0] * phi.shape[1]) * np.abs(phi).max()


def test_vec_unvec_roundtrip():
    rng = np.random.default_rng(11)
    m = rng.standard_normal((4, 8)) + 1j * rng.standard_normal((4, 8))
    np.testing.assert_array_equal(unvec(vec(m), (4, 8)), m)


# --- measurement simulation ---------------------------------------------------

def test_measure_noiseless_matches_phi():
    rng = np.random.default_rng(12)
    plan = make_plan(12)
    hb = rng.standard_normal((4, 8)) + 1j * rng.standard_normal((4, 8))
    m = measure(hb, plan, snr_db=400.0, rng=rng, codebooks=BOOKS)
    np.testing.assert_allclose(m.y, m.phi @ vec(hb), atol=1e-8)
    assert m.sigma_n < 1e-9


def test_measure_noise_energy_grows_linearly():
    plan = make_plan(13)
    rng = np.random.default_rng(13)
    energies = []
    for sigma in (0.5, 1.0, 2.0):
        total = 0.0
        for _ in range(1000):
            total += np.sum(np.abs(combined_noise(plan, sigma, rng)) ** 2)
        energies.append(total / 1000)
    # E||n||^2 = sigma^2 * m_t * m_r * l_r, so quadrupling with sigma doubling
    n_meas = plan.n_measurements
    np.testing.assert_allclose(energies, [0.25 * n_meas, n_meas, 4 * n_meas], rtol=0.05)


def test_combined_noise_block_covariance():
    plan = make_plan(14)
    rng = np.random.default_rng(14)
    draws = 10_000
    block = np.zeros((plan.m_r * plan.l_r, plan.m_r * plan.l_r), dtype=complex)
    for _ in range(draws):
        n = unvec(combined_noise(plan, 1.0, rng), (plan.m_r * plan.l_r, plan.m_t))[:, 0]
        block += np.outer(n, n.conj())
    block /= draws
    expected = np.zeros_like(block)
    for r in range(plan.m_r):
        w = plan.combiner_slot(r)
        sl = slice(r * plan.l_r, (r + 1) * plan.l_r)
        expected[sl, sl] = w.conj().T @ w
    assert np.linalg.norm(block - expected) / np.linalg.norm(expected) < 0.05


def test_ensemble_signal_power_close_to_lt():
    rng = np.random.default_rng(15)
    plan = make_plan(15)
    # normalised ensemble: E||H||_F^2 = n_t * n_r
    hs = rng.standard_normal((64, 4, 8)) + 1j * rng.standard_normal((64, 4, 8))
    hs /= np.sqrt(np.mean(np.abs(hs) ** 2))
    power = ensemble_signal_power(plan, hs, BOOKS)
    assert abs(power / CFG.l_t - 1.0) < 0.35


def test_measure_rejects_nonfinite_snr():
    plan = make_plan(16)
    with pytest.raises(ValueError):
        measure(np.zeros((4, 8), complex), plan, np.inf, np.random.default_rng(0), BOOKS)


# --- NMSE ----------------------------------------------------------------------

def test_nmse_exact_recovery_floored():
    h = np.array([1.0 + 1j, 2.0])
    assert nmse(h, h) == -200.0


def test_nmse_zero_estimate():
    h = np.array([1.0, 1j])
    assert nmse(h, np.zeros(2)) == pytest.approx(0.0)


def test_nmse_ten_percent_error():
    rng = np.random.default_rng(17)
    h = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    delta = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    delta *= np.sqrt(0.1) * np.linalg.norm(h) / np.linalg.norm(delta)
    assert nmse(h, h + delta) == pytest.approx(-10.0, abs=1e-9)


def test_nmse_rejects_zero_reference():
    with pytest.raises(ValueError):
        nmse(np.zeros(4), np.ones(4))
