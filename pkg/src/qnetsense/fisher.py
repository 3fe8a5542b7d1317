"""Quantum and classical Fisher information, closed-form matrices and bounds."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .fields import VectorField, generators
from .qcore import StateVector

SYMMETRY_TOL = 1e-10
PSD_TOL = 1e-8
SINGULAR_RTOL = 1e-10
ZERO_PROB = 1e-12
LIMIT_DISPLACEMENTS = (1e-3, 5e-4, 2.5e-4)
LIMIT_AGREEMENT = 1e-3
# |sin(BT)| below this counts as an exact zero of the bound denominators
SIN_ZERO = 1e-12


@dataclass(frozen=True)
class FisherMatrix:
    """Symmetric PSD information matrix with named parameter axes."""

    entries: np.ndarray
    axis_labels: tuple[str, ...] = ()

    def __post_init__(self):
        m = np.array(self.entries, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("information matrix must be square")
        scale = max(1.0, float(np.abs(m).max(initial=0.0)))
        if np.abs(m - m.T).max(initial=0.0) > SYMMETRY_TOL * scale:
            raise ValueError("information matrix is not symmetric")
        m = (m + m.T) / 2.0
        if m.size and np.linalg.eigvalsh(m).min() < -PSD_TOL * scale:
            raise ValueError("information matrix is not positive semidefinite")
        labels = tuple(self.axis_labels) or tuple(f"x{i}" for i in range(m.shape[0]))
        if len(labels) != m.shape[0]:
            raise ValueError("one axis label per row required")
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)
        object.__setattr__(self, "axis_labels", labels)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)

    def block(self, labels: Sequence[str]) -> "FisherMatrix":
        idx = [self.axis_labels.index(lab) for lab in labels]
        return FisherMatrix(self.entries[np.ix_(idx, idx)], tuple(labels))

    def scaled(self, factor: float) -> "FisherMatrix":
        return FisherMatrix(self.entries * factor, self.axis_labels)


# ---------------------------------------------------------------------------
# Numerical information matrices


def qfim_from_state_derivatives(psi: np.ndarray, dpsi: np.ndarray) -> np.ndarray:
    """4 Re(<d_j psi|d_k psi> - <d_j psi|psi><psi|d_k psi>) for columns of dpsi."""
    gram = dpsi.conj().T @ dpsi
    proj = dpsi.conj().T @ psi
    f = 4.0 * np.real(gram - np.outer(proj, proj.conj()))
    return (f + f.T) / 2.0


def _pad_generator(h: np.ndarray, dim: int) -> np.ndarray:
    h = np.asarray(h, dtype=complex)
    if h.shape[0] == dim:
        return h
    if dim % h.shape[0]:
        raise ValueError(f"generator of size {h.shape[0]} does not fit a {dim}-dim probe")
    return np.kron(h, np.eye(dim // h.shape[0]))


def qfim_from_generators(probe, gens: Sequence[np.ndarray], labels: Sequence[str] = ()) -> FisherMatrix:
    """2<{h_j, h_k}> - 4<h_j><h_k> for a pure probe.

    Generators smaller than the probe act on its leading qubits and are padded
    with identities on the rest.
    """
    psi = np.asarray(probe, dtype=complex)
    hs = [_pad_generator(h, psi.size) for h in gens]
    hpsi = np.array([h @ psi for h in hs])
    means = np.real(hpsi @ psi.conj())
    second = np.real(hpsi.conj() @ hpsi.T)
    f = 4.0 * second - 4.0 * np.outer(means, means)
    return FisherMatrix((f + f.T) / 2.0, tuple(labels))


def _derivatives(func: Callable, x: np.ndarray, step: float) -> np.ndarray:
    """Central differences with one Richardson refinement, columns per parameter."""
    cols = []
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = 1.0

        def central(h):
            return (np.asarray(func(x + h * e)) - np.asarray(func(x - h * e))) / (2.0 * h)

        cols.append((4.0 * central(step / 2.0) - central(step)) / 3.0)
    return np.stack(cols, axis=-1)


def _checked_state(family: Callable, x) -> np.ndarray:
    psi = np.asarray(family(x), dtype=complex)
    if abs(np.linalg.norm(psi) - 1.0) > 1e-10:
        raise ValueError("state family returned a non-normalized member")
    return psi


def qfim_overlap(state_family: Callable, x, step: float = 1e-5, labels: Sequence[str] = ()) -> FisherMatrix:
    """Pure-state QFIM from finite-difference state derivatives."""
    if step <= 0:
        raise ValueError("step must be positive")
    x = np.asarray(x, dtype=float)
    psi = _checked_state(state_family, x)
    dpsi = _derivatives(lambda y: _checked_state(state_family, y), x, step)
    return FisherMatrix(qfim_from_state_derivatives(psi, dpsi), tuple(labels))


def weak_commutativity_residual(state_family: Callable, x, step: float = 1e-5) -> np.ndarray:
    """|Im <d_j psi|d_k psi>| for every parameter pair.

    The imaginary part is unchanged by x-dependent global phases, so no
    gauge fixing is needed.
    """
    x = np.asarray(x, dtype=float)
    dpsi = _derivatives(lambda y: _checked_state(state_family, y), x, step)
    return np.abs(np.imag(dpsi.conj().T @ dpsi))


def cfim_from_derivatives(probs: np.ndarray, dprobs: np.ndarray, zero_tol: float = ZERO_PROB) -> np.ndarray:
    """sum_k dP_k dP_k^T / P_k over outcomes with P_k above ``zero_tol``."""
    live = probs > zero_tol
    d = dprobs[live]
    f = (d / probs[live, None]).T @ d
    return (f + f.T) / 2.0


def _zero_over_zero(probs, dprobs, zero_tol) -> np.ndarray:
    """Outcomes whose probability and gradient both vanish but not identically."""
    return (probs <= zero_tol) & (np.abs(dprobs).max(axis=1) <= 1e-7)


def cfim(
    prob_family: Callable,
    x,
    step: float = 1e-5,
    labels: Sequence[str] = (),
    direction=None,
    zero_tol: float = ZERO_PROB,
) -> FisherMatrix:
    """Classical Fisher information of a distribution family.

    ``prob_family`` maps a parameter vector to probabilities (array or
    OutcomeDistribution). When some outcome has zero probability and zero
    slope at ``x`` but is populated nearby, its contribution is a 0/0 limit.
    The matrix is then evaluated at x + eps*direction for three shrinking eps
    and extrapolated quadratically to eps = 0.
    """
    x = np.asarray(x, dtype=float)

    def probs_at(y):
        p = prob_family(y)
        p = np.asarray(getattr(p, "probs", p), dtype=float)
        if p.min(initial=0.0) < -1e-9:
            raise ValueError("probability family returned a negative entry")
        return np.clip(p, 0.0, None)

    p0 = probs_at(x)
    d0 = _derivatives(probs_at, x, step)
    suspects = _zero_over_zero(p0, d0, zero_tol)
    if suspects.any():
        nearby = np.max([probs_at(x + step * 10 * e)[suspects] for e in np.eye(x.size)], axis=0)
        suspects[suspects] = nearby > zero_tol
    if not suspects.any():
        return FisherMatrix(cfim_from_derivatives(p0, d0, zero_tol), tuple(labels))

    if direction is None:
        direction = 1.0 / np.arange(1, x.size + 1)
    direction = np.asarray(direction, dtype=float)
    direction = direction / np.linalg.norm(direction)
    levels = []
    for eps in LIMIT_DISPLACEMENTS:
        y = x + eps * direction
        h = min(step, eps / 20.0)
        levels.append(cfim_from_derivatives(probs_at(y), _derivatives(probs_at, y, h), zero_tol))
    eps = np.array(LIMIT_DISPLACEMENTS)
    weights = np.array(
        [np.prod([-eps[m] / (eps[l] - eps[m]) for m in range(3) if m != l]) for l in range(3)]
    )
    limit = sum(w * f for w, f in zip(weights, levels))
    scale = max(np.abs(limit).max(), 1e-300)
    if np.abs(levels[-1] - limit).max() / scale > LIMIT_AGREEMENT:
        warnings.warn("0/0 limit extrapolation levels disagree beyond tolerance", RuntimeWarning)
    return FisherMatrix(limit, tuple(labels))


# ---------------------------------------------------------------------------
# Closed forms


def max_qfim(f: VectorField, T: float) -> FisherMatrix:
    """Largest single-field QFIM: diag(4T^2, 4 sin^2 BT, 4 sin^2 BT sin^2 theta)."""
    s2 = np.sin(f.B * T) ** 2
    return FisherMatrix(np.diag([4 * T**2, 4 * s2, 4 * s2 * np.sin(f.theta) ** 2]), ("B", "theta", "phi"))


def _mirror(m: np.ndarray) -> np.ndarray:
    return np.triu(m) + np.triu(m, 1).T


def closed_form_nle_qfim(field_vec, T: float, components: int = 3) -> tuple[FisherMatrix, FisherMatrix]:
    """Gradient block F_minus and sum block F_plus at zero gradient.

    ``field_vec`` is the common Cartesian field of both modules. For two
    components the z part must vanish.
    """
    Bx, By, Bz = np.asarray(field_vec, dtype=float)
    B = float(np.sqrt(Bx**2 + By**2 + Bz**2))
    s, s2 = np.sin(B * T), np.sin(2 * B * T)
    if components == 2:
        if abs(Bz) > 1e-12:
            raise ValueError("the 2-component closed form assumes Bz = 0")
        k = 16 * s**2 - 3 * s2**2
        fm = np.array(
            [
                [4 * Bx**2 * T**2 / B**2 + By**2 * k / B**4, 4 * Bx * By * T**2 / B**2 - Bx * By * k / B**4],
                [0.0, 4 * By**2 * T**2 / B**2 + Bx**2 * k / B**4],
            ]
        )
        fp = np.array(
            [
                [4 * Bx**2 * T**2 / B**2 + By**2 * s2**2 / B**4, 4 * Bx * By * T**2 / B**2 - Bx * By * s2**2 / B**4],
                [0.0, 4 * By**2 * T**2 / B**2 + Bx**2 * s2**2 / B**4],
            ]
        )
        return (
            FisherMatrix(_mirror(fm), ("grad_x", "grad_y")),
            FisherMatrix(_mirror(fp), ("sum_x", "sum_y")),
        )
    if components != 3:
        raise ValueError("components must be 2 or 3")
    B2, B4, B6 = B**2, B**4, B**6
    z3 = B2 + 3 * Bz**2
    fm = np.zeros((3, 3))
    fm[0, 0] = 4 / B4 * (Bx**2 * T**2 * z3 + s**2 * (By**2 + Bz**2 + 6 * Bx * By * Bz * T + 3 * By**2 * s**2)) + 3 * Bx * Bz * s2 / B6 * (
        -4 * B * By * s**2 + Bx * Bz * (-4 * B * T + s2)
    )
    fm[1, 1] = 4 / B4 * (By**2 * T**2 * z3 + s**2 * (Bx**2 + Bz**2 - 6 * Bx * By * Bz * T + 3 * Bx**2 * s**2)) + 3 * By * Bz * s2 / B6 * (
        4 * B * Bx * s**2 + By * Bz * (-4 * B * T + s2)
    )
    fm[2, 2] = 4 / B4 * (Bz**2 * T**2 * z3 + s**2 * (Bx**2 + By**2)) + 3 * s2 / B6 * (
        4 * B * (Bx**2 + By**2) * Bz**2 * T + (Bx**2 + By**2) ** 2 * s2
    )
    fm[0, 1] = 4 / B4 * (Bx * By * T**2 * z3 - s**2 * (4 * Bx * By + 3 * Bz * T * (Bx**2 - By**2))) + 3 * s2 / B6 * (
        2 * B * Bz * s**2 * (Bx**2 - By**2) + Bx * By * (-4 * B * Bz**2 * T + (B2 + Bz**2) * s2)
    )
    fm[0, 2] = 4 * Bz / B4 * (Bx * T**2 * z3 - s**2 * (Bx - 3 * By * Bz * T)) + 3 * s2 / B6 * (
        2 * B * By * s**2 * (Bx**2 + By**2) + Bx * Bz * (2 * B * T * (B2 - 2 * Bz**2) - (B2 - Bz**2) * s2)
    )
    fm[1, 2] = 4 * Bz / B4 * (By * T**2 * z3 - s**2 * (By + 3 * Bx * Bz * T)) - 3 * s2 / B6 * (
        2 * B * Bx * s**2 * (Bx**2 + By**2) - By * Bz * (2 * B * T * (B2 - 2 * Bz**2) - (B2 - Bz**2) * s2)
    )
    rho2 = Bx**2 + By**2
    fp = np.zeros((3, 3))
    fp[0, 0] = 4 / B4 * (Bx**2 * T**2 * rho2 + Bz * s**2 * (Bz - 2 * Bx * By * T)) + s2 / B6 * (
        4 * B * Bx**2 * Bz**2 * T + 4 * B * Bx * By * Bz * s**2 + (B2 * By**2 - Bx**2 * Bz**2) * s2
    )
    fp[1, 1] = 4 / B4 * (By**2 * T**2 * rho2 + Bz * s**2 * (Bz + 2 * Bx * By * T)) + s2 / B6 * (
        4 * B * By**2 * Bz**2 * T - 4 * B * Bx * By * Bz * s**2 + (B2 * Bx**2 - By**2 * Bz**2) * s2
    )
    # Written as a perfect square; it equals the numerically computed element.
    fp[2, 2] = 4 * rho2 / B4 * (Bz**2 * (T - s2 / (2 * B)) ** 2 + s**4)
    fp[0, 1] = 4 * T / B4 * (Bx * By * T * rho2 + Bz * s**2 * (Bx**2 - By**2)) + s2 / B6 * (
        4 * B * Bx * By * Bz**2 * T - 2 * B * Bz * s**2 * (Bx**2 - By**2) - Bx * By * s2 * (B2 + Bz**2)
    )
    fp[0, 2] = 4 * Bz / B4 * (Bx * T**2 * rho2 - s**2 * (Bx + By * Bz * T)) - s2 / B6 * (
        2 * B * Bx * Bz * T * (B2 - 2 * Bz**2) + rho2 * (2 * B * By * s**2 - Bx * Bz * s2)
    )
    fp[1, 2] = 4 * Bz / B4 * (By * T**2 * rho2 - s**2 * (By - Bx * Bz * T)) - s2 / B6 * (
        2 * B * By * Bz * T * (B2 - 2 * Bz**2) - rho2 * (2 * B * Bx * s**2 + By * Bz * s2)
    )
    return (
        FisherMatrix(_mirror(fm), ("grad_x", "grad_y", "grad_z")),
        FisherMatrix(_mirror(fp), ("sum_x", "sum_y", "sum_z")),
    )


def le_bell_qfim(f: VectorField, T: float) -> FisherMatrix:
    """(B, theta, phi) QFIM of two co-located qubits in Phi+; it is singular."""
    th, ph = f.theta, f.phi
    bt = f.B * T
    s, c = np.sin, np.cos
    m = np.zeros((3, 3))
    m[0, 0] = 4 * T**2 * (3 + c(2 * th) + 2 * c(2 * ph) * s(th) ** 2)
    m[1, 1] = 2 * s(bt) ** 2 * (
        3 + 3 * c(2 * bt) * c(2 * ph) + 2 * s(ph) ** 2 + c(bt) ** 2 * (2 - 4 * c(2 * th) * s(ph) ** 2)
        + 4 * c(th) * s(2 * bt) * s(2 * ph)
    )
    m[2, 2] = 2 * s(bt) ** 2 * s(th) ** 2 * (
        2 + 2 * s(bt) ** 2 + 2 * s(th) ** 2 + 2 * s(ph) ** 2 + c(2 * bt) * (c(2 * th) - 3 * c(2 * ph))
        + 2 * s(bt) ** 2 * c(2 * th) * c(2 * ph) - 4 * s(2 * bt) * c(th) * s(2 * ph)
    )
    m[0, 1] = 4 * T * (2 * s(bt) ** 2 * s(th) * s(2 * ph) - s(2 * bt) * s(2 * th) * s(ph) ** 2)
    m[0, 2] = -16 * T * s(bt) * s(th) ** 2 * s(ph) * (c(bt) * c(ph) + s(bt) * c(th) * s(ph))
    m[1, 2] = 2 * s(bt) ** 2 * (
        s(2 * bt) * s(th) * ((3 + c(2 * th)) * c(2 * ph) + 2 * s(th) ** 2) - 2 * c(2 * bt) * s(2 * th) * s(2 * ph)
    )
    return FisherMatrix(_mirror(m), ("B", "theta", "phi"))


def le_bell_qfim_planar(f: VectorField, T: float) -> FisherMatrix:
    """(B, phi) QFIM of two co-located qubits in Phi+ for an in-plane field."""
    bt, ph = f.B * T, f.phi
    m = np.array(
        [
            [16 * T**2 * np.cos(ph) ** 2, -4 * T * np.sin(2 * bt) * np.sin(2 * ph)],
            [0.0, 7 - 8 * np.cos(2 * bt) + 2 * np.cos(4 * bt) * np.cos(ph) ** 2 - np.cos(2 * ph)],
        ]
    )
    return FisherMatrix(_mirror(m), ("B", "phi"))


def le_optimal_qfim_planar(f: VectorField, T: float) -> FisherMatrix:
    """(B, phi) QFIM of the optimal two-qubit probe: diag(16T^2, 16 sin^2 BT)."""
    return FisherMatrix(np.diag([16 * T**2, 16 * np.sin(f.B * T) ** 2]), ("B", "phi"))


def closed_form_qfim(tag: str, components: int, f: VectorField, T: float, N: int = 1) -> FisherMatrix:
    """Matched-control QFIM of a whole strategy at equal module fields ``f``.

    Parameters are ordered as in the strategy's parameter vector; the N-cycle
    value is N^2 times the single-cycle one.
    """
    if components == 2:
        f = VectorField(f.B, np.pi / 2, f.phi)
    if tag == "RS":
        F = max_qfim(f, T).entries
        if components == 2:
            F = F[np.ix_([0, 2], [0, 2])]
    elif tag == "NLE":
        minus, plus = closed_form_nle_qfim(f.cartesian, T, components)
        F = _block_diag(minus.entries, plus.entries)
    elif tag == "LE_bell":
        q = (le_bell_qfim(f, T) if components == 3 else le_bell_qfim_planar(f, T)).entries
        F = _block_diag(q, q)
    elif tag == "LE_opt" and components == 2:
        q = le_optimal_qfim_planar(f, T).entries
        F = _block_diag(q, q)
    else:
        raise ValueError(f"no closed form for {tag} with {components} components")
    return FisherMatrix(N**2 * F)


def _block_diag(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.zeros((a.shape[0] + b.shape[0],) * 2)
    out[: a.shape[0], : a.shape[0]] = a
    out[a.shape[0] :, a.shape[0] :] = b
    return out


def collective_generators(f: VectorField, T: float) -> list[np.ndarray]:
    """G_j = h_j (x) I + I (x) h_j for two qubits sharing one field."""
    eye = np.eye(2)
    return [np.kron(h, eye) + np.kron(eye, h) for h in generators(f, T).matrices]


# ---------------------------------------------------------------------------
# Inversion and bounds


@dataclass(frozen=True)
class InverseReport:
    """Inverse of an information matrix, or a description of why it has none."""

    covariance: np.ndarray | None
    singular: bool
    singular_values: np.ndarray
    null_directions: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    axis_labels: tuple[str, ...] = ()

    @property
    def trace(self) -> float:
        if self.covariance is None:
            return float("inf")
        return float(np.trace(self.covariance))

    def describe_null(self) -> list[str]:
        """Human-readable non-identifiable combinations of parameters."""
        out = []
        for vec in self.null_directions.T:
            terms = [f"{v:+.3g}*{lab}" for v, lab in zip(vec, self.axis_labels) if abs(v) > 1e-6]
            out.append(" ".join(terms))
        return out


def invert_info(F) -> InverseReport:
    """Covariance lower bound F^-1, or a singularity report when ill-posed."""
    m = np.asarray(F, dtype=float)
    labels = tuple(getattr(F, "axis_labels", ()))
    u, sv, vt = np.linalg.svd(m)
    if sv.size == 0 or sv[0] == 0.0 or sv[-1] < SINGULAR_RTOL * sv[0]:
        null = vt[sv < SINGULAR_RTOL * max(sv[0] if sv.size else 0.0, 1e-300)].T
        return InverseReport(None, True, sv, null, labels)
    inv = (vt.T / sv) @ u.T
    return InverseReport((inv + inv.T) / 2.0, False, sv, np.zeros((m.shape[0], 0)), labels)


@dataclass(frozen=True)
class WeightVector:
    B: float = 1.0
    theta: float = 0.0
    phi: float = 0.0

    def __post_init__(self):
        if min(self.B, self.theta, self.phi) < 0:
            raise ValueError("weights must be nonnegative")

    @classmethod
    def cartesian(cls, f: VectorField, components: int = 3) -> "WeightVector":
        """Weights that turn spherical variances into a Cartesian variance sum."""
        if components == 2:
            return cls(1.0, 0.0, f.B**2)
        return cls(1.0, f.B**2, f.B**2 * np.sin(f.theta) ** 2)

    def as_array(self) -> np.ndarray:
        return np.array([self.B, self.theta, self.phi])


@dataclass(frozen=True)
class LocalCorrelations:
    """Two-qubit probe statistics entering the local-entanglement bound.

    ``r_*`` are <n.sigma (x) n.sigma> along each generator axis; ``local_*``
    are the summed single-qubit expectations <n.sigma>_1 + <n.sigma>_2.
    """

    r_B: float
    r_theta: float
    r_phi: float
    local_B: float = 0.0
    local_theta: float = 0.0
    local_phi: float = 0.0

    def check(self, tol: float = 1e-12) -> None:
        # x, y, z of the rotated frame correspond to theta, phi, B.
        rxx, ryy, rzz = self.r_theta, self.r_phi, self.r_B
        constraints = {
            "r_xx + r_yy + r_zz <= 1": rxx + ryy + rzz,
            "r_zz - r_xx - r_yy <= 1": rzz - rxx - ryy,
            "r_yy - r_xx - r_zz <= 1": ryy - rxx - rzz,
            "r_xx - r_yy - r_zz <= 1": rxx - ryy - rzz,
        }
        for name, value in constraints.items():
            if value > 1 + tol:
                raise ValueError(f"infeasible correlations: {name} violated ({value:.6g})")

    def as_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return (
            np.array([self.r_B, self.r_theta, self.r_phi]),
            np.array([self.local_B, self.local_theta, self.local_phi]),
        )


def optimal_correlations(weights: WeightVector, f: VectorField, T: float) -> LocalCorrelations:
    """Correlations minimizing the weighted local-entanglement bound."""
    a = np.sqrt(weights.as_array()) / np.abs(_generator_scales(f, T))
    total = a.sum()
    r = (4.0 * a - total) / total
    return LocalCorrelations(*r)


def _generator_scales(f: VectorField, T: float) -> np.ndarray:
    s = np.sin(f.B * T)
    return np.array([T, s, s * np.sin(f.theta)])


def le_variance_bound(weights: WeightVector, correlations: LocalCorrelations, f: VectorField, T: float) -> float:
    """1/4 sum_j (w_j / c_j^2) / (2 + 2 r_jj - (r_j^(1) + r_j^(2))^2).

    Parameters with zero weight are skipped.
    """
    correlations.check()
    r, local = correlations.as_arrays()
    w = weights.as_array()
    c = _generator_scales(f, T)
    total = 0.0
    for wj, cj, rj, lj in zip(w, c, r, local):
        if wj == 0.0:
            continue
        denom = 2.0 + 2.0 * rj - lj**2
        if denom <= 0.0:
            raise ValueError("correlations leave a weighted generator with zero variance")
        total += wj / cj**2 / denom
    return total / 4.0


@dataclass(frozen=True)
class PrecisionBound:
    """Lower bound on the gradient variance sum of one strategy.

    ``terms`` are the nonnegative additive pieces of the bound; ``total`` is
    their sum, or infinity when the bound diverges.
    """

    strategy: str
    components: int
    terms: dict[str, float]
    achievable: bool
    N: int = 1

    @property
    def total(self) -> float:
        return float(sum(self.terms.values()))

    @property
    def divergent(self) -> bool:
        return not np.isfinite(self.total)


BOUND_STRATEGIES = {
    ("NLE", 3): True,
    ("NLE", 2): True,
    ("RS", 3): True,
    ("RS", 2): True,
    ("LE_opt3", 3): False,
    ("LE_opt", 2): True,
    ("LE_bell", 3): False,
    ("LE_bell", 2): True,
}


def _safe_div(num: float, den: float) -> float:
    return float(num / den) if den != 0.0 else float("inf")


def precision_bound(strategy: str, components: int, f: VectorField, T: float, N: int = 1) -> PrecisionBound:
    """Tabulated gradient variance-sum bound divided by N^2."""
    key = (strategy, components)
    if key not in BOUND_STRATEGIES:
        raise ValueError(f"no bound for strategy {strategy!r} with {components} components")
    B = f.B
    s2 = float(np.sin(B * T) ** 2)
    if s2 < SIN_ZERO**2:
        s2 = 0.0
    n2 = float(N) ** 2
    if key == ("NLE", 3):
        Bz = f.cartesian[2]
        terms = {
            "encoding_time": (4 * B**2 - 3 * Bz**2) / (16 * B**2 * T**2),
            "field_rotation": _safe_div(5 * B**2 + 3 * Bz**2, 16 * s2),
        }
    elif key == ("NLE", 2):
        terms = {
            "encoding_time": 1 / (4 * T**2),
            "field_rotation": _safe_div(B**2, 4 * (1 + 3 * s2) * s2),
        }
    elif key == ("RS", 3):
        terms = {"encoding_time": 1 / (4 * T**2), "field_rotation": _safe_div(B**2, 2 * s2)}
    elif key == ("RS", 2):
        terms = {"encoding_time": 1 / (4 * T**2), "field_rotation": _safe_div(B**2, 4 * s2)}
    elif key == ("LE_opt3", 3):
        sin_abs = np.sqrt(s2)
        terms = {"combined": (1 / T + _safe_div(2 * B, sin_abs)) ** 2 / 16}
    elif key == ("LE_opt", 2):
        terms = {"encoding_time": 1 / (8 * T**2), "field_rotation": _safe_div(B**2, 8 * s2)}
    elif key == ("LE_bell", 3):
        diag = np.diag(le_bell_qfim(f, T).entries).copy()
        if s2 == 0.0:
            diag[1:] = 0.0
        terms = {
            "magnitude": _safe_div(2.0, diag[0]),
            "polar": _safe_div(2 * B**2, diag[1]),
            "azimuth": _safe_div(2 * B**2 * np.sin(f.theta) ** 2, diag[2]),
        }
    else:
        Bx = f.cartesian[0]
        c2 = np.cos(B * T) ** 2
        terms = {
            "magnitude": _safe_div(B**2 - c2 * Bx**2, 8 * s2 * T**2 * Bx**2),
            "azimuth": _safe_div(B**2, 8 * s2**2),
        }
    terms = {k: (v / n2 if np.isfinite(v) else float("inf")) for k, v in terms.items()}
    return PrecisionBound(strategy, components, terms, BOUND_STRATEGIES[key], N)


def propagate_spherical_to_cartesian(variances, f: VectorField) -> float:
    """dBx^2 + dBy^2 + dBz^2 = dB^2 + B^2 dtheta^2 + B^2 sin^2(theta) dphi^2."""
    vb, vt, vp = (float(v) for v in variances)
    return vb + f.B**2 * vt + f.B**2 * np.sin(f.theta) ** 2 * vp


def qfim_of_probe(probe: StateVector | np.ndarray, f: VectorField, T: float) -> FisherMatrix:
    """QFIM for (B, theta, phi) when the field acts on the probe's first qubit."""
    return qfim_from_generators(probe, list(generators(f, T).matrices), ("B", "theta", "phi"))
