"""Vector-field coordinates, signal unitaries, generators and rotation frames.

Units follow hbar = 1: field magnitudes are angular frequencies and only the
products ``B * T`` enter the physics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .qcore import (
    PAULI_X,
    PAULI_Y,
    PAULI_Z,
    UnitaryMatrix,
    kron,
    pauli_dot,
    pauli_exponential,
    pauli_exponential_jacobian,
)

DEGENERACY_TOL = 1e-12
SPHERICAL_AXES = ("B", "theta", "phi")


@dataclass(frozen=True)
class VectorField:
    """Static field in spherical coordinates with a Cartesian view."""

    B: float
    theta: float
    phi: float

    def __post_init__(self):
        if self.B < 0:
            raise ValueError(f"field magnitude must be >= 0, got {self.B}")
        for name in ("B", "theta", "phi"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @property
    def cartesian(self) -> np.ndarray:
        st = np.sin(self.theta)
        return self.B * np.array(
            [st * np.cos(self.phi), st * np.sin(self.phi), np.cos(self.theta)]
        )

    @property
    def direction(self) -> np.ndarray:
        st = np.sin(self.theta)
        return np.array([st * np.cos(self.phi), st * np.sin(self.phi), np.cos(self.theta)])

    @property
    def is_degenerate(self) -> bool:
        """True at B = 0 or on the poles, where some angles are not identifiable."""
        return self.B <= DEGENERACY_TOL or abs(np.sin(self.theta)) <= DEGENERACY_TOL

    def as_array(self) -> np.ndarray:
        return np.array([self.B, self.theta, self.phi])

    @classmethod
    def from_cartesian(cls, v) -> "VectorField":
        return to_spherical(v)


def to_cartesian(f: VectorField) -> np.ndarray:
    return f.cartesian


def to_spherical(v) -> VectorField:
    """Inverse of ``to_cartesian``; the zero vector maps to (0, 0, 0)."""
    v = np.asarray(v, dtype=float)
    B = float(np.linalg.norm(v))
    if B <= DEGENERACY_TOL:
        return VectorField(0.0, 0.0, 0.0)
    theta = float(np.arccos(np.clip(v[2] / B, -1.0, 1.0)))
    phi = float(np.arctan2(v[1], v[0])) if np.hypot(v[0], v[1]) > DEGENERACY_TOL else 0.0
    return VectorField(B, theta, phi)


def spherical_jacobian(f: VectorField) -> np.ndarray:
    """d(Bx, By, Bz)/d(B, theta, phi) as a 3x3 matrix (columns = parameters)."""
    B, th, ph = f.B, f.theta, f.phi
    st, ct, sp, cp = np.sin(th), np.cos(th), np.sin(ph), np.cos(ph)
    return np.array(
        [
            [st * cp, B * ct * cp, -B * st * sp],
            [st * sp, B * ct * sp, B * st * cp],
            [ct, -B * st, 0.0],
        ]
    )


@dataclass(frozen=True)
class GradientSumPair:
    """Two fields described by their difference and sum."""

    grad: np.ndarray
    sum: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "grad", np.asarray(self.grad, dtype=float).reshape(3))
        object.__setattr__(self, "sum", np.asarray(self.sum, dtype=float).reshape(3))


def pair_from_gradient_sum(gs: GradientSumPair) -> tuple[np.ndarray, np.ndarray]:
    """Cartesian field vectors (B1, B2) with B1 - B2 = grad and B1 + B2 = sum."""
    return (gs.sum + gs.grad) / 2.0, (gs.sum - gs.grad) / 2.0


def gradient_sum_from_pair(b1, b2) -> GradientSumPair:
    b1 = np.asarray(b1, dtype=float)
    b2 = np.asarray(b2, dtype=float)
    return GradientSumPair(b1 - b2, b1 + b2)


def fields_from_gradient_sum(gs: GradientSumPair) -> tuple[VectorField, VectorField]:
    b1, b2 = pair_from_gradient_sum(gs)
    return to_spherical(b1), to_spherical(b2)


@dataclass(frozen=True)
class EncodingConfig:
    """Per-cycle encoding time T and number of signal-control cycles N."""

    T: float
    N: int = 1

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError(f"encoding time must be positive, got {self.T}")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"cycle count must be a positive integer, got {self.N}")
        object.__setattr__(self, "N", int(self.N))


@dataclass(frozen=True)
class GeneratorSet:
    """Generators h_j = c_j n_j.sigma for j in (B, theta, phi)."""

    coefficients: np.ndarray
    axes: np.ndarray
    n1: np.ndarray
    n2: np.ndarray
    labels: tuple[str, ...] = SPHERICAL_AXES

    @property
    def matrices(self) -> np.ndarray:
        return self.coefficients[:, None, None] * pauli_dot(self.axes)

    def __getitem__(self, label: str) -> np.ndarray:
        return self.matrices[self.labels.index(label)]

    @property
    def vanishing(self) -> tuple[str, ...]:
        """Parameters whose generator coefficient is numerically zero."""
        return tuple(
            lab for lab, c in zip(self.labels, self.coefficients) if abs(c) <= DEGENERACY_TOL
        )


def signal_unitary(f: VectorField, T: float) -> UnitaryMatrix:
    """exp(-i T B.sigma)."""
    return pauli_exponential(f.cartesian, T)


def signal_unitary_derivatives(f: VectorField, T: float) -> np.ndarray:
    """Exact d U_s / d(B, theta, phi), shape (3, 2, 2)."""
    d_cart = pauli_exponential_jacobian(f.cartesian, T)
    jac = spherical_jacobian(f)
    return np.einsum("ap,aij->pij", jac, d_cart)


def frame_vectors(f: VectorField) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Field direction n, its polar derivative n1 and n2 = n x n1."""
    th, ph = f.theta, f.phi
    n = f.direction
    n1 = np.array([np.cos(th) * np.cos(ph), np.cos(th) * np.sin(ph), -np.sin(th)])
    n2 = np.cross(n, n1)
    return n, n1, n2


def generators(f: VectorField, T: float) -> GeneratorSet:
    n, n1, n2 = frame_vectors(f)
    bt = f.B * T
    n_theta = np.cos(bt) * n1 - np.sin(bt) * n2
    n_phi = np.sin(bt) * n1 + np.cos(bt) * n2
    coeffs = np.array([T, np.sin(bt), np.sin(bt) * np.sin(f.theta)])
    return GeneratorSet(coeffs, np.stack([n, n_theta, n_phi]), n1, n2)


def rotation_frame(f: VectorField, T: float) -> UnitaryMatrix:
    """U_r mapping sigma_z, sigma_x, sigma_y onto n_B, n_theta, n_phi by conjugation."""
    n = f.direction
    u1 = pauli_exponential(n, -f.B * T / 2.0).entries
    u2 = pauli_exponential([0.0, 0.0, 1.0], f.phi / 2.0).entries
    u3 = pauli_exponential([0.0, 1.0, 0.0], f.theta / 2.0).entries
    return UnitaryMatrix(u1 @ u2 @ u3)


FRAME_PAULIS = {"B": PAULI_Z, "theta": PAULI_X, "phi": PAULI_Y}


def nle_total_unitary(f1: VectorField, f2: VectorField, T: float) -> UnitaryMatrix:
    """U_s1 (x) U_s1 (x) U_s2 (x) U_s2 over the four sensor qubits."""
    u1 = signal_unitary(f1, T).entries
    u2 = signal_unitary(f2, T).entries
    return UnitaryMatrix(kron(u1, u1, u2, u2))
