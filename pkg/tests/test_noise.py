import numpy as np
import pytest

from vqt import simcore
from vqt.errors import FitError
from vqt.noise import NoiseModel, apply_readout_error, fit_scale, noisy_counts, rmse, run_noisy
from vqt.simcore import CNOT, CircuitSpec, H
from vqt.vqdp import PairBatch, build_vqdp_circuit, estimate_products


def bell():
    return CircuitSpec(2, [H(0), CNOT(0, 1)], measured_qubits=(0, 1))


def test_noise_model_validation():
    assert NoiseModel().is_ideal
    with pytest.raises(ValueError):
        NoiseModel(p2q=1.0)
    with pytest.raises(ValueError):
        NoiseModel(p_ro=-0.1)


def test_ideal_model_is_bit_exact():
    c = bell()
    assert run_noisy(c, NoiseModel(), 777, seed=11) == simcore.run_circuit(c, 777, seed=11)


def test_readout_coin_flip():
    c = CircuitSpec(1, [], measured_qubits=(0,))
    counts = noisy_counts(c, NoiseModel(p_ro=0.5), 10000, seed=0)
    assert abs(counts[0] / 10000 - 0.5) < 4 * 0.005


def test_readout_error_channel():
    p = apply_readout_error(np.array([1.0, 0, 0, 0]), 2, 0.1)
    assert p == pytest.approx([0.81, 0.09, 0.09, 0.01])


def test_deterministic_given_seed():
    c = bell()
    noise = NoiseModel(p2q=0.3, p_ro=0.02)
    assert np.array_equal(noisy_counts(c, noise, 500, 4), noisy_counts(c, noise, 500, 4))
    assert noisy_counts(c, noise, 500, 4).sum() == 500


def test_depolarising_breaks_bell_correlation():
    c = bell()
    counts = noisy_counts(c, NoiseModel(p2q=0.5), 20000, seed=1, trajectories=20000)
    odd = (counts[1] + counts[2]) / 20000
    # 8 of the 15 non-identity Paulis flip exactly one qubit
    assert odd == pytest.approx(0.5 * 8 / 15, abs=0.02)


def test_cached_and_uncached_trajectories_agree(monkeypatch):
    from vqt import noise as noise_mod

    batch = PairBatch.from_pairs(np.linspace(-1, 1, 8), np.linspace(1, -1, 8))
    circ = build_vqdp_circuit(batch)
    model = NoiseModel(p2q=0.05)
    cached = noisy_counts(circ, model, 3000, seed=2, trajectories=50)
    monkeypatch.setattr(noise_mod, "_CACHE_LIMIT", 0)
    assert np.array_equal(cached, noisy_counts(circ, model, 3000, seed=2, trajectories=50))


def test_noise_contracts_products_toward_zero():
    x = np.linspace(-1, 1, 16)
    batch = PairBatch.from_pairs(x, x)
    ideal = estimate_products(None, batch, None).z_hat
    noisy = estimate_products(None, batch, 320000, seed=0, noise=NoiseModel(p2q=0.02)).z_hat
    assert np.mean(np.abs(noisy)) < np.mean(np.abs(ideal))


def test_fit_scale_identity_and_attenuation(rng):
    t = rng.uniform(-1, 1, 200)
    cal = fit_scale(t, t)
    assert (cal.scale, cal.intercept, cal.fit_rmse) == pytest.approx((1, 0, 0), abs=1e-12)
    assert fit_scale(t / 2.22, t).scale == pytest.approx(2.22)


def test_fit_improves_rmse(rng):
    t = rng.uniform(-1, 1, 500)
    m = 0.6 * t + 0.05 + rng.normal(0, 0.02, 500)
    cal = fit_scale(m, t)
    assert cal.fit_rmse <= rmse(m, t)
    assert rmse(cal.apply(m), t) == pytest.approx(cal.fit_rmse)


@pytest.mark.parametrize(
    "measured,truth",
    [([1.0, 2.0], [1.0]), ([1.0], [1.0]), ([1.0, 2.0], [3.0, 3.0]), ([1.0, 1.0], [1.0, 2.0])],
)
def test_fit_errors(measured, truth):
    with pytest.raises(FitError):
        fit_scale(measured, truth)


def test_ideal_fit_near_unity(rng):
    x, y = rng.uniform(-1, 1, 32), rng.uniform(-1, 1, 32)
    batch = PairBatch.from_pairs(x, y)
    z = estimate_products(None, batch, 80000, seed=9).z_hat
    cal = fit_scale(z, x * y)
    assert 0.98 <= cal.scale <= 1.02 and abs(cal.intercept) <= 0.02
