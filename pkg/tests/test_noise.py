import numpy as np
import pytest

from qnetsense.fields import EncodingConfig
from qnetsense.noise import (
    KrausChannel,
    NoiseModel,
    NoisyProtocolModel,
    apply_readout_error,
    dephase,
    dephasing_channel,
    distribution_mse,
    mitigate_readout,
    noisy_distribution,
    pauli_channel,
    pauli_noise,
    symmetric_confusion,
)
from qnetsense.protocols import ProtocolModel, ProtocolRun, Strategy, ideal_distribution
from qnetsense.qcore import DensityMatrix, OutcomeDistribution, StateVector, bell_state

X_RS = np.array([1.0, np.pi / 4, np.pi / 4])
LABELS_2Q = ("00", "01", "10", "11")


def random_density(rng, qubits):
    d = 2**qubits
    v = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = v @ v.conj().T
    return DensityMatrix(rho / np.trace(rho))


def rs_run(N=1, xc=X_RS, T=1.5 * np.pi):
    return ProtocolRun(Strategy("RS", 3), X_RS, xc, EncodingConfig(T, N))


class TestDephasing:
    def test_zero_rate_is_identity(self, rng):
        rho = random_density(rng, 2)
        assert np.allclose(dephase(rho, 0, 0.0, 3.0).entries, rho.entries)

    def test_full_decoherence_of_bell_state(self):
        out = dephase(dephase(bell_state("00").density(), 0, 1e3, 1.0), 1, 1e3, 1.0).entries
        assert np.allclose(out, np.diag([0.5, 0, 0, 0.5]), atol=1e-12)

    def test_ln2_halves_coherence(self):
        plus = StateVector(np.array([1, 1]) / np.sqrt(2)).density()
        assert dephase(plus, 0, np.log(2), 1.0).entries[0, 1] == pytest.approx(0.25)

    def test_populations_untouched(self, rng):
        rho = random_density(rng, 3)
        out = dephase(rho, 1, 0.7, 0.4).entries
        assert np.allclose(np.diag(out), np.diag(rho.entries))


class TestPauliNoise:
    def test_zero_is_identity(self, rng):
        rho = random_density(rng, 2)
        assert np.allclose(pauli_noise(rho, 1, 0.0).entries, rho.entries)

    def test_three_quarters_depolarizes(self, rng):
        rho = random_density(rng, 1)
        assert np.allclose(pauli_noise(rho, 0, 0.75).entries, np.eye(2) / 2)

    def test_flip_population(self):
        out = pauli_noise(StateVector.basis("0").density(), 0, 0.01).entries
        assert out[1, 1].real == pytest.approx(2 * 0.01 / 3, rel=1e-12)


class TestChannels:
    def test_kraus_completeness(self):
        for ch in (dephasing_channel(0.3, 1.2), pauli_channel(0.2)):
            total = sum(k.conj().T @ k for k in ch.operators)
            assert np.allclose(total, np.eye(2), atol=1e-12)

    def test_incomplete_kraus_rejected(self):
        with pytest.raises(ValueError):
            KrausChannel((np.eye(2) * 0.5,))

    def test_cptp_on_random_inputs(self, rng):
        for _ in range(20):
            rho = random_density(rng, 2)
            for out in (dephase(rho, 0, 0.5, 0.9), pauli_noise(rho, 1, 0.3)):
                m = out.entries
                assert abs(np.trace(m) - 1) < 1e-12
                assert np.linalg.eigvalsh(m).min() > -1e-10


class TestNoisyDistribution:
    def test_zero_noise_is_ideal(self, rng):
        for tag, comps in (("RS", 3), ("NLE", 2), ("LE_bell", 3)):
            s = Strategy(tag, comps)
            x, xc = rng.normal(size=s.num_params), rng.normal(size=s.num_params)
            run = ProtocolRun(s, x, xc, EncodingConfig(0.8, 2))
            got = noisy_distribution(run, NoiseModel()).probs
            assert np.abs(got - ideal_distribution(run).probs).max() < 1e-12

    def test_dephasing_accumulates_with_cycles(self):
        p00 = [noisy_distribution(rs_run(N), NoiseModel(dephasing_rate=0.02))["00"] for N in (1, 2, 4)]
        assert p00[0] < 1 and p00[0] > p00[1] > p00[2]

    def test_full_depolarization_is_uniform(self):
        p = noisy_distribution(rs_run(), NoiseModel(gate_error=0.75)).probs
        assert np.allclose(p, 0.25, atol=1e-12)

    def test_noise_model_validation(self):
        with pytest.raises(ValueError):
            NoiseModel(gate_error=0.8)
        with pytest.raises(ValueError):
            NoiseModel(dephasing_rate=-1.0)
        with pytest.raises(ValueError):
            NoiseModel(readout_confusion=np.array([[0.9, 0.2], [0.2, 0.8]]))

    def test_batched_model_matches_single_run(self, rng):
        base = ProtocolModel(Strategy("NLE", 2), EncodingConfig(1.5 * np.pi, 1))
        noise = NoiseModel(dephasing_rate=0.03, gate_error=0.01, readout_confusion=symmetric_confusion(0.02))
        noisy = NoisyProtocolModel(base, noise)
        x, xc = rng.normal(size=4), rng.normal(size=4)
        want = noisy_distribution(base.run(x, xc), noise).probs
        assert np.abs(noisy.probabilities(x, xc)[0] - want).max() < 1e-12


class TestReadout:
    def test_identity_confusion(self, rng):
        d = OutcomeDistribution(LABELS_2Q, rng.dirichlet(np.ones(4)))
        eye = np.eye(2)
        assert np.allclose(apply_readout_error(d, eye).probs, d.probs)
        assert np.allclose(mitigate_readout(d, eye).probs, d.probs)

    def test_two_percent_flip(self):
        d = OutcomeDistribution(LABELS_2Q, np.array([1.0, 0, 0, 0]))
        got = apply_readout_error(d, symmetric_confusion(0.02)).probs
        assert np.allclose(got, [0.9604, 0.0196, 0.0196, 0.0004], atol=1e-12)

    def test_round_trip(self, rng):
        c = symmetric_confusion(0.04)
        for _ in range(20):
            d = OutcomeDistribution(LABELS_2Q, rng.dirichlet(np.ones(4) * 5))
            back = mitigate_readout(apply_readout_error(d, c), c).probs
            assert np.abs(back - d.probs).max() < 1e-10

    def test_singular_confusion_rejected(self):
        d = OutcomeDistribution(LABELS_2Q, np.full(4, 0.25))
        with pytest.raises(ValueError):
            mitigate_readout(d, np.full((2, 2), 0.5))

    def test_mitigation_reduces_exact_error(self):
        ideal = ideal_distribution(rs_run(xc=X_RS + 0.2))
        for flip in (0.01, 0.02, 0.05):
            c = symmetric_confusion(flip)
            noisy = apply_readout_error(ideal, c)
            assert distribution_mse(mitigate_readout(noisy, c), ideal) <= distribution_mse(noisy, ideal)
