"""Sensing strategies under the sequential signal/control scheme.

Every strategy acts on its sensor qubits with single-qubit signal unitaries,
so a run is fully described by one Cartesian field vector per qubit
(the ancilla of remote sensing carries the zero vector). Parameter vectors
use these coordinates:

=========  ==========  =======================================
strategy   components  parameters
=========  ==========  =======================================
RS         3           B, theta, phi
RS         2           B, phi  (theta = pi/2)
LE_*       3           B1, theta1, phi1, B2, theta2, phi2
LE_*       2           B1, phi1, B2, phi2  (theta = pi/2)
NLE        3           grad_x, grad_y, grad_z, sum_x, sum_y, sum_z
NLE        2           grad_x, grad_y, sum_x, sum_y  (z parts = 0)
=========  ==========  =======================================

Outcome labels: the pair of qubits (0, 1) gives the left two bits, each pair
reporting Phi+, Phi-, Psi+, Psi- as 00, 01, 10, 11.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .fields import (
    EncodingConfig,
    VectorField,
    rotation_frame,
    to_spherical,
)
from .qcore import (
    BELL_BASIS,
    OutcomeDistribution,
    StateVector,
    bell_povm,
    clean_probabilities,
    kron,
    measure_probs,
    pauli_exponential,
    pauli_exponential_jacobian,
    su2_matrix,
)

__all__ = [
    "Landscape",
    "OutcomeDistribution",
    "ProtocolModel",
    "ProtocolRun",
    "Strategy",
    "build_probe",
    "dead_outcomes",
    "distribution_jacobian",
    "evolve_sequential",
    "ideal_distribution",
    "landscape_scan",
    "peak_curvature",
    "state_jacobian",
]

STRATEGY_TAGS = ("RS", "NLE", "LE_bell", "LE_opt")
PROB_FLOOR = 1e-12

_AXES = {
    ("RS", 3): ("B", "theta", "phi"),
    ("RS", 2): ("B", "phi"),
    ("LE", 3): ("B1", "theta1", "phi1", "B2", "theta2", "phi2"),
    ("LE", 2): ("B1", "phi1", "B2", "phi2"),
    ("NLE", 3): ("grad_x", "grad_y", "grad_z", "sum_x", "sum_y", "sum_z"),
    ("NLE", 2): ("grad_x", "grad_y", "sum_x", "sum_y"),
}


@dataclass(frozen=True)
class Strategy:
    tag: str
    components: int = 3

    def __post_init__(self):
        if self.tag not in STRATEGY_TAGS:
            raise ValueError(f"unknown strategy {self.tag!r}; expected one of {STRATEGY_TAGS}")
        if self.components not in (2, 3):
            raise ValueError("components must be 2 or 3")
        if self.tag == "LE_opt" and self.components != 2:
            raise ValueError("LE_opt is only defined for the 2-component task")

    @property
    def family(self) -> str:
        return "LE" if self.tag.startswith("LE") else self.tag

    @property
    def axes(self) -> tuple[str, ...]:
        return _AXES[(self.family, self.components)]

    @property
    def num_params(self) -> int:
        return len(self.axes)

    @property
    def num_qubits(self) -> int:
        return 2 if self.tag == "RS" else 4

    @property
    def pairs(self) -> tuple[tuple[int, int], ...]:
        return ((0, 1),) if self.tag == "RS" else ((0, 1), (2, 3))

    @property
    def gradient_axes(self) -> tuple[int, ...]:
        """Indices of parameters that are gradient components (NLE only)."""
        return tuple(i for i, a in enumerate(self.axes) if a.startswith("grad"))


# ---------------------------------------------------------------------------
# Parameter vector <-> per-qubit Cartesian field vectors


def _spherical_block(params, components: int) -> tuple[np.ndarray, np.ndarray]:
    """Cartesian vector and its Jacobian for one (B, theta, phi) or (B, phi) block.

    B may be negative inside an optimizer; the formulas stay smooth there.
    """
    if components == 3:
        B, th, ph = params
        st, ct, sp, cp = np.sin(th), np.cos(th), np.sin(ph), np.cos(ph)
        vec = B * np.array([st * cp, st * sp, ct])
        jac = np.array(
            [
                [st * cp, B * ct * cp, -B * st * sp],
                [st * sp, B * ct * sp, B * st * cp],
                [ct, -B * st, 0.0],
            ]
        )
        return vec, jac
    B, ph = params
    vec = np.array([B * np.cos(ph), B * np.sin(ph), 0.0])
    jac = np.array([[np.cos(ph), -B * np.sin(ph)], [np.sin(ph), B * np.cos(ph)], [0.0, 0.0]])
    return vec, jac


def qubit_vectors(strategy: Strategy, x) -> np.ndarray:
    """Per-qubit field vectors, shape (num_qubits, 3)."""
    return qubit_vectors_with_jacobian(strategy, x)[0]


def qubit_vectors_with_jacobian(strategy: Strategy, x) -> tuple[np.ndarray, np.ndarray]:
    """Per-qubit vectors (q, 3) and their derivatives (q, 3, p) w.r.t. parameters."""
    x = np.asarray(x, dtype=float)
    p = strategy.num_params
    if x.shape != (p,):
        raise ValueError(f"{strategy.tag} expects {p} parameters, got shape {x.shape}")
    nq = strategy.num_qubits
    vecs = np.zeros((nq, 3))
    jac = np.zeros((nq, 3, p))
    c = strategy.components
    if strategy.family == "RS":
        vecs[0], jac[0] = _spherical_block(x, c)
    elif strategy.family == "LE":
        half = p // 2
        v1, j1 = _spherical_block(x[:half], c)
        v2, j2 = _spherical_block(x[half:], c)
        vecs[0] = vecs[1] = v1
        vecs[2] = vecs[3] = v2
        jac[0, :, :half] = jac[1, :, :half] = j1
        jac[2, :, half:] = jac[3, :, half:] = j2
    else:
        grad = np.zeros(3)
        total = np.zeros(3)
        grad[:c] = x[:c]
        total[:c] = x[c:]
        b1, b2 = (total + grad) / 2.0, (total - grad) / 2.0
        vecs[0] = vecs[1] = b1
        vecs[2] = vecs[3] = b2
        for i in range(c):
            for q, sgn in ((0, 1.0), (1, 1.0), (2, -1.0), (3, -1.0)):
                jac[q, i, i] = sgn / 2.0
                jac[q, i, c + i] = 0.5
    return vecs, jac


def qubit_vectors_batch(strategy: Strategy, xs: np.ndarray) -> np.ndarray:
    """Vectorized ``qubit_vectors`` over a (k, p) batch, shape (k, q, 3)."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    k = xs.shape[0]
    out = np.zeros((k, strategy.num_qubits, 3))
    c = strategy.components

    def sph(block):
        if c == 3:
            B, th, ph = block[:, 0], block[:, 1], block[:, 2]
            st = np.sin(th)
            return np.stack([B * st * np.cos(ph), B * st * np.sin(ph), B * np.cos(th)], axis=1)
        B, ph = block[:, 0], block[:, 1]
        return np.stack([B * np.cos(ph), B * np.sin(ph), np.zeros_like(B)], axis=1)

    if strategy.family == "RS":
        out[:, 0] = sph(xs)
    elif strategy.family == "LE":
        half = xs.shape[1] // 2
        out[:, 0] = out[:, 1] = sph(xs[:, :half])
        out[:, 2] = out[:, 3] = sph(xs[:, half:])
    else:
        grad = np.zeros((k, 3))
        total = np.zeros((k, 3))
        grad[:, :c] = xs[:, :c]
        total[:, :c] = xs[:, c:]
        out[:, 0] = out[:, 1] = (total + grad) / 2.0
        out[:, 2] = out[:, 3] = (total - grad) / 2.0
    return out


def parameters_from_fields(strategy: Strategy, signal) -> np.ndarray:
    """Parameter vector from a VectorField (RS) or a field pair (LE, NLE)."""
    c = strategy.components
    if strategy.family == "RS":
        f = signal
        return np.array([f.B, f.theta, f.phi]) if c == 3 else np.array([f.B, f.phi])
    f1, f2 = signal
    if strategy.family == "LE":
        pick = (lambda f: [f.B, f.theta, f.phi]) if c == 3 else (lambda f: [f.B, f.phi])
        return np.array(pick(f1) + pick(f2), dtype=float)
    b1, b2 = f1.cartesian, f2.cartesian
    return np.concatenate([(b1 - b2)[:c], (b1 + b2)[:c]])


def fields_from_parameters(strategy: Strategy, x):
    """Inverse of ``parameters_from_fields``."""
    vecs = qubit_vectors(strategy, x)
    if strategy.family == "RS":
        return to_spherical(vecs[0])
    return to_spherical(vecs[0]), to_spherical(vecs[2])


# ---------------------------------------------------------------------------
# Runs and probes


@dataclass(frozen=True)
class ProtocolRun:
    """One sensing experiment: strategy, true signal, control guess and (T, N).

    ``control=None`` means no control unit at all (identity), which differs
    from a control built from the zero field only in name.
    """

    strategy: Strategy
    signal: np.ndarray
    control: np.ndarray | None
    encoding: EncodingConfig
    probe_guess: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        p = self.strategy.num_params
        sig = np.asarray(self.signal, dtype=float).reshape(-1)
        if sig.shape != (p,):
            raise ValueError(f"signal must have {p} entries for {self.strategy.tag}")
        object.__setattr__(self, "signal", sig)
        if self.control is not None:
            ctl = np.asarray(self.control, dtype=float).reshape(-1)
            if ctl.shape != (p,):
                raise ValueError("control shape must match the signal shape")
            object.__setattr__(self, "control", ctl)
        if self.probe_guess is not None:
            object.__setattr__(self, "probe_guess", np.asarray(self.probe_guess, dtype=float))

    @classmethod
    def from_fields(cls, strategy: Strategy, signal, control=None, T: float = 1.0, N: int = 1):
        sig = parameters_from_fields(strategy, signal)
        ctl = None if control is None else parameters_from_fields(strategy, control)
        return cls(strategy, sig, ctl, EncodingConfig(T, N))

    @property
    def T(self) -> float:
        return self.encoding.T

    @property
    def N(self) -> int:
        return self.encoding.N

    def with_signal(self, x) -> "ProtocolRun":
        return replace(self, signal=np.asarray(x, dtype=float))

    def with_control(self, xc) -> "ProtocolRun":
        return replace(self, control=None if xc is None else np.asarray(xc, dtype=float))

    def matched(self) -> "ProtocolRun":
        """Same run with the control set equal to the signal."""
        return self.with_control(self.signal)

    @property
    def guess_for_probe(self) -> np.ndarray:
        if self.probe_guess is not None:
            return self.probe_guess
        return self.control if self.control is not None else self.signal

    @cached_property
    def povm(self):
        return bell_povm(self.strategy.pairs, self.strategy.num_qubits)

    @property
    def labels(self) -> tuple[str, ...]:
        return self.povm.labels


_PHI_PLUS = BELL_BASIS[:, 0]
_PHI_MINUS = BELL_BASIS[:, 1]


def _nle_probe() -> np.ndarray:
    amps = np.zeros(16, dtype=complex)
    amps[0b0011] = 1 / np.sqrt(2)
    amps[0b1100] = -1 / np.sqrt(2)
    return amps


def le_optimal_probe(guess: VectorField, T: float) -> StateVector:
    """(|+B>|+B> - |-B>|-B>)/sqrt2 with |+B>, |-B> = U_r|0>, U_r|1>.

    Taking the eigenvectors from the rotation frame fixes their relative
    phase; the two-qubit correlations are then +1 along n_B and n_phi and -1
    along n_theta.
    """
    ur = rotation_frame(guess, T).entries
    return StateVector(np.kron(ur, ur) @ _PHI_MINUS)


def build_probe(strategy: Strategy, guess: VectorField | None = None, T: float | None = None) -> StateVector:
    """Initial state of one module (RS, LE) or of the whole NLE register."""
    if strategy.tag in ("RS", "LE_bell"):
        return StateVector(_PHI_PLUS)
    if strategy.tag == "NLE":
        return StateVector(_nle_probe())
    if guess is None or T is None:
        raise ValueError("LE_opt needs a guess field and encoding time to build its probe")
    return le_optimal_probe(guess, T)


def register_probe(strategy: Strategy, T: float, guess=None) -> np.ndarray:
    """Probe over the full register; ``guess`` (parameters) is used by LE_opt only."""
    if strategy.tag == "LE_opt":
        if guess is None:
            raise ValueError("LE_opt needs guess parameters to build its probe")
        f1, f2 = fields_from_parameters(strategy, guess)
        return np.kron(np.asarray(build_probe(strategy, f1, T)), np.asarray(build_probe(strategy, f2, T)))
    if strategy.family == "LE":
        return np.kron(_PHI_PLUS, _PHI_PLUS)
    return np.asarray(build_probe(strategy))


def run_probe(run: ProtocolRun) -> np.ndarray:
    return register_probe(run.strategy, run.T, run.guess_for_probe)


# ---------------------------------------------------------------------------
# Generic route: full matrices through qcore


def cycle_unitary(run: ProtocolRun) -> np.ndarray:
    """One signal unit followed by the control unit on the full register."""
    s = run.strategy
    sig = qubit_vectors(s, run.signal)
    ctl = qubit_vectors(s, run.control) if run.control is not None else np.zeros_like(sig)
    factors = []
    for v, c in zip(sig, ctl):
        us = pauli_exponential(v, run.T).entries
        uc = pauli_exponential(c, run.T).entries.conj().T
        factors.append(uc @ us)
    return kron(*factors)


def evolve_sequential(run: ProtocolRun) -> StateVector:
    """Apply N cycles of (control after signal) to the probe."""
    step = cycle_unitary(run)
    state = run_probe(run)
    for _ in range(run.N):
        state = step @ state
    return StateVector(state)


def ideal_distribution(run: ProtocolRun) -> OutcomeDistribution:
    return measure_probs(evolve_sequential(run), run.povm)


# ---------------------------------------------------------------------------
# Fast batched route, used inside likelihood evaluations


def _per_qubit_cycles(strategy, xs, xc, T, N) -> np.ndarray:
    """(U_c^dag U_s)^N for every qubit and batch row, shape (k, q, 2, 2)."""
    vecs = qubit_vectors_batch(strategy, xs)
    us = su2_matrix(vecs, T)
    if xc is None:
        step = us
    else:
        ctl = qubit_vectors_batch(strategy, np.asarray(xc, dtype=float)[None, :])[0]
        uc_dag = np.conj(np.swapaxes(su2_matrix(ctl, T), -1, -2))
        step = uc_dag[None] @ us
    out = step
    for _ in range(N - 1):
        out = step @ out
    return out


def _apply_local(ops: np.ndarray, state: np.ndarray) -> np.ndarray:
    """Apply per-qubit 2x2 operators (k, q, 2, 2) to a register state (k or 1, 2^q)."""
    k, nq = ops.shape[:2]
    psi = np.broadcast_to(state, (k, state.shape[-1])).reshape((k,) + (2,) * nq)
    for q in range(nq):
        psi = np.moveaxis(np.einsum("kij,k...j->k...i", ops[:, q], np.moveaxis(psi, q + 1, -1)), -1, q + 1)
    return psi.reshape(k, -1)


@dataclass(frozen=True)
class ProtocolModel:
    """Maps parameter batches and a control to Bell-outcome probabilities.

    The probe is frozen at construction (it only depends on parameters for
    LE_opt, where it is built from ``probe_guess``).
    """

    strategy: Strategy
    encoding: EncodingConfig
    probe_guess: np.ndarray | None = None

    @cached_property
    def povm(self):
        return bell_povm(self.strategy.pairs, self.strategy.num_qubits)

    @property
    def labels(self) -> tuple[str, ...]:
        return self.povm.labels

    def run(self, x, xc=None) -> ProtocolRun:
        return ProtocolRun(self.strategy, x, xc, self.encoding, probe_guess=self.probe_guess)

    def probe_for(self, xc) -> np.ndarray:
        guess = self.probe_guess if self.probe_guess is not None else xc
        return register_probe(self.strategy, self.encoding.T, guess)

    def states(self, xs, xc=None) -> np.ndarray:
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        ops = _per_qubit_cycles(self.strategy, xs, xc, self.encoding.T, self.encoding.N)
        return _apply_local(ops, self.probe_for(xc)[None, :])

    def probabilities(self, xs, xc=None) -> np.ndarray:
        """Outcome probabilities, shape (k, outcomes), rows sum to 1."""
        amps = self.states(xs, xc) @ self.povm.vectors.conj().T
        p = np.abs(amps) ** 2
        return p / p.sum(axis=1, keepdims=True)

    def probabilities_multi(self, xs, xcs) -> np.ndarray:
        """Probabilities for every (signal, control) pair, shape (k, m, outcomes).

        Used by joint likelihoods over many rounds; the probe must not depend
        on the control (true unless LE_opt is built without ``probe_guess``).
        """
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        xcs = np.atleast_2d(np.asarray(xcs, dtype=float))
        if self.strategy.tag == "LE_opt" and self.probe_guess is None:
            return np.stack([self.probabilities(xs, xc) for xc in xcs], axis=1)
        s, T, N = self.strategy, self.encoding.T, self.encoding.N
        k, m = xs.shape[0], xcs.shape[0]
        us = su2_matrix(qubit_vectors_batch(s, xs), T)
        uc_dag = np.conj(np.swapaxes(su2_matrix(qubit_vectors_batch(s, xcs), T), -1, -2))
        step = uc_dag[None, :] @ us[:, None]
        total = step
        for _ in range(N - 1):
            total = step @ total
        ops = total.reshape((k * m,) + total.shape[2:])
        probe = self.probe_for(xcs[0])
        amps = _apply_local(ops, probe[None, :]) @ self.povm.vectors.conj().T
        p = np.abs(amps) ** 2
        p /= p.sum(axis=1, keepdims=True)
        return p.reshape(k, m, -1)


# ---------------------------------------------------------------------------
# Exact state derivatives


def state_jacobian(run: ProtocolRun) -> tuple[np.ndarray, np.ndarray]:
    """Final state and exact derivatives d psi / d x, shape (dim,) and (dim, p).

    Derivatives of each qubit's N-cycle unitary follow from the product rule
    applied to the closed-form SU(2) derivative.
    """
    s = run.strategy
    T, N = run.T, run.N
    vecs, vjac = qubit_vectors_with_jacobian(s, run.signal)
    ctl = qubit_vectors(s, run.control) if run.control is not None else np.zeros_like(vecs)
    probe = run_probe(run)
    nq, p = s.num_qubits, s.num_params
    totals, d_totals = [], []
    for q in range(nq):
        us = pauli_exponential(vecs[q], T).entries
        uc_dag = pauli_exponential(ctl[q], T).entries.conj().T
        step = uc_dag @ us
        d_step_v = np.einsum("ij,ajk->aik", uc_dag, pauli_exponential_jacobian(vecs[q], T))
        d_step = np.einsum("ap,aik->pik", vjac[q], d_step_v)
        powers = [np.eye(2, dtype=complex)]
        for _ in range(N):
            powers.append(step @ powers[-1])
        d_total = np.zeros((p, 2, 2), dtype=complex)
        for j in range(N):
            d_total += np.einsum("ij,pjk,kl->pil", powers[N - 1 - j], d_step, powers[j])
        totals.append(powers[N])
        d_totals.append(d_total)
    psi = kron(*totals) @ probe
    dpsi = np.zeros((psi.size, p), dtype=complex)
    for q in range(nq):
        if not np.any(d_totals[q]):
            continue
        for a in range(p):
            mats = list(totals)
            mats[q] = d_totals[q][a]
            dpsi[:, a] += kron(*mats) @ probe
    return psi, dpsi


def distribution_jacobian(run: ProtocolRun) -> tuple[np.ndarray, np.ndarray]:
    """Ideal probabilities and their exact parameter derivatives (outcomes, p)."""
    psi, dpsi = state_jacobian(run)
    vecs = run.povm.vectors.conj()
    amp = vecs @ psi
    damp = vecs @ dpsi
    probs = np.abs(amp) ** 2
    dprobs = 2.0 * np.real(amp.conj()[:, None] * damp)
    return probs, dprobs


# ---------------------------------------------------------------------------
# Likelihood landscapes


@dataclass(frozen=True)
class Landscape:
    axes: tuple[str, str]
    grid: tuple[np.ndarray, np.ndarray]
    raw: np.ndarray
    normalized: np.ndarray
    argmax: tuple[float, float]


def landscape_scan(run: ProtocolRun, axes: tuple[str, str], grid) -> Landscape:
    """Benchmark likelihood sum_i P_ref,i ln P_guess,i over a 2-D guess grid.

    The reference distribution comes from the run's true signal; guesses
    replace two signal parameters while the control stays fixed.
    """
    s = run.strategy
    idx = [s.axes.index(a) for a in axes]
    g0, g1 = (np.asarray(g, dtype=float) for g in grid)
    model = ProtocolModel(s, run.encoding, probe_guess=run.probe_guess)
    ref = model.probabilities(run.signal, run.control)[0]
    mesh = np.broadcast_to(run.signal, (g0.size, g1.size, s.num_params)).copy()
    mesh[..., idx[0]] = g0[:, None]
    mesh[..., idx[1]] = g1[None, :]
    probs = model.probabilities(mesh.reshape(-1, s.num_params), run.control)
    raw = (np.log(np.clip(probs, PROB_FLOOR, None)) @ ref).reshape(g0.size, g1.size)
    span = raw.max() - raw.min()
    normalized = (raw - raw.min()) / span if span > 1e-15 else np.zeros_like(raw)
    i, j = np.unravel_index(np.argmax(raw), raw.shape)
    return Landscape(tuple(axes), (g0, g1), raw, normalized, (float(g0[i]), float(g1[j])))


def peak_curvature(values: np.ndarray, step: float) -> float:
    """Second-difference curvature at the maximum of a 1-D profile."""
    i = int(np.argmax(values))
    i = min(max(i, 1), values.size - 2)
    return float(-(values[i + 1] - 2 * values[i] + values[i - 1]) / step**2)


def dead_outcomes(strategy: Strategy, T: float = 1.0, samples: int = 20, seed: int = 0) -> tuple[str, ...]:
    """Outcomes with zero probability at every sampled parameter point."""
    rng = np.random.default_rng(seed)
    model = ProtocolModel(strategy, EncodingConfig(T, 1))
    xs = rng.uniform(-1.0, 1.0, size=(samples, strategy.num_params))
    probs = model.probabilities(xs)
    return tuple(lab for lab, col in zip(model.labels, probs.T) if col.max() < 1e-12)
