import numpy as np
import pytest

from qnetsense.fields import (
    EncodingConfig,
    GradientSumPair,
    VectorField,
    fields_from_gradient_sum,
    frame_vectors,
    generators,
    gradient_sum_from_pair,
    nle_total_unitary,
    pair_from_gradient_sum,
    rotation_frame,
    signal_unitary,
    signal_unitary_derivatives,
    to_cartesian,
    to_spherical,
)
from qnetsense.qcore import PAULI_X, PAULI_Y, PAULI_Z, kron, pauli_dot


def random_field(rng, bmax=2.0):
    return VectorField(rng.uniform(0.1, bmax), rng.uniform(0.2, np.pi - 0.2), rng.uniform(-np.pi, np.pi))


class TestCoordinates:
    def test_equator(self):
        assert np.allclose(to_cartesian(VectorField(1, np.pi / 2, 0)), [1, 0, 0], atol=1e-15)

    def test_reference_signal(self):
        v = to_cartesian(VectorField(1, np.pi / 4, np.pi / 4))
        assert np.allclose(v, [0.5, 0.5, np.sqrt(2) / 2], atol=1e-12)

    def test_zero_vector_is_degenerate(self):
        f = to_spherical([0, 0, 0])
        assert f.B == 0 and (f.theta, f.phi) == (0, 0) and f.is_degenerate

    def test_round_trip(self, rng):
        for _ in range(100):
            f = random_field(rng)
            g = to_spherical(to_cartesian(f))
            assert np.allclose(g.as_array(), f.as_array(), atol=1e-12)
            assert abs(np.linalg.norm(f.cartesian) - f.B) < 1e-12

    def test_negative_magnitude_rejected(self):
        with pytest.raises(ValueError):
            VectorField(-1, 0, 0)


class TestSignalUnitary:
    def test_zero_field(self):
        assert np.allclose(signal_unitary(VectorField(0, 0, 0), 3.0).entries, np.eye(2))

    def test_full_turn_gives_minus_identity(self):
        assert np.allclose(signal_unitary(VectorField(1, 0, 0), np.pi).entries, -np.eye(2), atol=1e-15)

    def test_axis_fixed_by_conjugation(self, rng):
        for _ in range(20):
            f, T = random_field(rng), rng.uniform(0.1, 5)
            u = signal_unitary(f, T).entries
            h = generators(f, T)["B"]
            assert np.abs(u.conj().T @ h @ u - h).max() < 1e-12
            assert abs(abs(np.linalg.det(u)) - 1) < 1e-12

    def test_exact_derivatives(self, rng):
        f, T, h = random_field(rng), 1.3, 1e-6
        d = signal_unitary_derivatives(f, T)
        for j in range(3):
            step = np.eye(3)[j] * h
            fd = (
                signal_unitary(VectorField(*(f.as_array() + step)), T).entries
                - signal_unitary(VectorField(*(f.as_array() - step)), T).entries
            ) / (2 * h)
            assert np.abs(fd - d[j]).max() < 1e-8


class TestGenerators:
    def test_magnitude_generator_spectrum(self, rng):
        f, T = random_field(rng), 0.83
        assert np.allclose(np.linalg.eigvalsh(generators(f, T)["B"]), [-T, T])

    def test_coefficients_at_quarter_period(self):
        c = generators(VectorField(1, np.pi / 2, 0), np.pi / 2).coefficients
        assert np.allclose(c, [np.pi / 2, 1, 1])

    def test_match_finite_differences(self, rng):
        h = 1e-5
        for _ in range(20):
            f, T = random_field(rng), rng.uniform(0.1, 5)
            u = signal_unitary(f, T).entries
            gens = generators(f, T)
            for j, lab in enumerate(gens.labels):
                step = np.eye(3)[j] * h
                du = (
                    signal_unitary(VectorField(*(f.as_array() + step)), T).entries
                    - signal_unitary(VectorField(*(f.as_array() - step)), T).entries
                ) / (2 * h)
                assert np.linalg.norm(gens[lab] - 1j * u.conj().T @ du) < 1e-6

    def test_axes_orthonormal(self, rng):
        for _ in range(50):
            f, T = random_field(rng), rng.uniform(0.1, 5)
            axes = generators(f, T).axes
            assert np.abs(axes @ axes.T - np.eye(3)).max() < 1e-12

    def test_vanishing_flagged_at_full_turn(self):
        assert generators(VectorField(1, 1.0, 0.3), np.pi).vanishing == ("theta", "phi")

    def test_frame_vectors_right_handed(self, rng):
        n, n1, n2 = frame_vectors(random_field(rng))
        assert np.allclose(np.cross(n, n1), n2) and abs(n @ n1) < 1e-12


class TestRotationFrame:
    def test_trivial_frame(self):
        u = rotation_frame(VectorField(0.7, 0, 0), 0.0).entries
        assert np.allclose(u @ PAULI_Z @ u.conj().T, PAULI_Z)
        assert np.allclose(u @ PAULI_X @ u.conj().T, PAULI_X)

    def test_equatorial_field_maps_z_to_x(self):
        u = rotation_frame(VectorField(1, np.pi / 2, 0), 0.0).entries
        assert np.allclose(u @ PAULI_Z @ u.conj().T, PAULI_X, atol=1e-12)

    def test_conjugation_identities(self, rng):
        for _ in range(100):
            f, T = random_field(rng), rng.uniform(0.0, 5)
            u = rotation_frame(f, T).entries
            axes = generators(f, T).axes
            for pauli, axis in zip((PAULI_Z, PAULI_X, PAULI_Y), axes):
                assert np.abs(u @ pauli @ u.conj().T - pauli_dot(axis)).max() < 1e-10


class TestGradientSum:
    def test_equal_fields(self):
        b1, b2 = pair_from_gradient_sum(GradientSumPair([0, 0, 0], [np.sqrt(2), np.sqrt(2), 0]))
        assert np.allclose(b1, [np.sqrt(2) / 2, np.sqrt(2) / 2, 0]) and np.allclose(b1, b2)

    def test_gradient_equals_sum(self):
        _, b2 = pair_from_gradient_sum(GradientSumPair([1, 2, 3], [1, 2, 3]))
        assert np.all(b2 == 0)

    def test_round_trip(self, rng):
        for _ in range(50):
            b1, b2 = rng.normal(size=3), rng.normal(size=3)
            r1, r2 = pair_from_gradient_sum(gradient_sum_from_pair(b1, b2))
            assert np.allclose(r1, b1, atol=1e-15) and np.allclose(r2, b2, atol=1e-15)

    def test_fields_view(self):
        f1, f2 = fields_from_gradient_sum(GradientSumPair([0, 0, 0], [0, 0, 2]))
        assert f1.B == pytest.approx(1) and f2.theta == pytest.approx(0)


class TestNonlocalUnitary:
    def test_zero_field(self):
        z = VectorField(0, 0, 0)
        assert np.allclose(nle_total_unitary(z, z, 1.0).entries, np.eye(16))

    def test_module_swap_symmetry(self, rng):
        f = random_field(rng)
        u = nle_total_unitary(f, f, 0.9).entries
        perm = np.array([int(format(i, "04b")[2:] + format(i, "04b")[:2], 2) for i in range(16)])
        swap = np.eye(16)[perm]
        assert np.abs(swap @ u @ swap.T - u).max() < 1e-12

    def test_factorizes_per_qubit(self, rng):
        f1, f2, T = random_field(rng), random_field(rng), 1.1
        u = nle_total_unitary(f1, f2, T).entries
        kets = [rng.normal(size=2) + 1j * rng.normal(size=2) for _ in range(4)]
        u1, u2 = signal_unitary(f1, T).entries, signal_unitary(f2, T).entries
        want = kron(u1 @ kets[0], u1 @ kets[1], u2 @ kets[2], u2 @ kets[3])
        assert np.abs(u @ kron(*kets) - want).max() < 1e-12


class TestEncodingConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            EncodingConfig(0.0)
        with pytest.raises(ValueError):
            EncodingConfig(1.0, 0)
        assert EncodingConfig(1.0, 4.0).N == 4
