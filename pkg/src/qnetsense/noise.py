"""Dephasing, Pauli gate error and readout error on protocol runs.

Per cycle, each sensor qubit sees its signal unit, phase damping over the
encoding time, a Pauli error, the control unit and another Pauli error.
Idle qubits (the remote-sensing ancilla) only dephase.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from typing import Sequence

import numpy as np

from .protocols import ProtocolModel, ProtocolRun, ideal_distribution, qubit_vectors_batch
from .qcore import (
    IDENTITY2,
    PAULI_X,
    PAULI_Y,
    PAULI_Z,
    DensityMatrix,
    OutcomeDistribution,
    clean_probabilities,
    su2_matrix,
)

KRAUS_TOL = 1e-10


@dataclass(frozen=True)
class KrausChannel:
    operators: tuple[np.ndarray, ...]

    def __post_init__(self):
        ops = tuple(np.array(k, dtype=complex) for k in self.operators)
        total = sum(k.conj().T @ k for k in ops)
        if np.abs(total - np.eye(ops[0].shape[0])).max() > KRAUS_TOL:
            raise ValueError("Kraus operators are not trace preserving")
        object.__setattr__(self, "operators", ops)


def dephasing_channel(rate: float, duration: float) -> KrausChannel:
    """Phase damping that multiplies coherences by exp(-rate * duration)."""
    if rate < 0 or duration < 0:
        raise ValueError("rate and duration must be nonnegative")
    lam = np.exp(-rate * duration)
    return KrausChannel((np.sqrt((1 + lam) / 2) * IDENTITY2, np.sqrt((1 - lam) / 2) * PAULI_Z))


def pauli_channel(epsilon: float) -> KrausChannel:
    """rho -> (1-eps) rho + eps/3 (X rho X + Y rho Y + Z rho Z)."""
    if not 0.0 <= epsilon <= 0.75:
        raise ValueError("Pauli error probability must lie in [0, 3/4]")
    a = np.sqrt(epsilon / 3)
    return KrausChannel((np.sqrt(1 - epsilon) * IDENTITY2, a * PAULI_X, a * PAULI_Y, a * PAULI_Z))


def _apply_kraus_batch(rho: np.ndarray, ops: Sequence[np.ndarray], qubit: int, n: int) -> np.ndarray:
    """Single-qubit Kraus map on a batch of density matrices (k, d, d)."""
    k = rho.shape[0]
    t = rho.reshape((k,) + (2,) * (2 * n))
    out = np.zeros_like(t)
    ket, bra = qubit + 1, qubit + 1 + n
    for op in ops:
        m = np.moveaxis(np.tensordot(op, t, axes=([1], [ket])), 0, ket)
        m = np.moveaxis(np.tensordot(op.conj(), m, axes=([1], [bra])), 0, bra)
        out += m
    return out.reshape(rho.shape)


def apply_channel(rho, channel: KrausChannel, qubit: int) -> DensityMatrix:
    mat = np.asarray(rho, dtype=complex)
    n = int(round(np.log2(mat.shape[0])))
    if not 0 <= qubit < n:
        raise ValueError("qubit index out of range")
    out = _apply_kraus_batch(mat[None], channel.operators, qubit, n)[0]
    return DensityMatrix((out + out.conj().T) / 2)


def dephase(rho, qubit: int, rate: float, duration: float) -> DensityMatrix:
    return apply_channel(rho, dephasing_channel(rate, duration), qubit)


def pauli_noise(rho, qubit: int, epsilon: float) -> DensityMatrix:
    return apply_channel(rho, pauli_channel(epsilon), qubit)


def symmetric_confusion(flip: float) -> np.ndarray:
    """Per-bit confusion matrix with equal 0->1 and 1->0 flip probability."""
    if not 0.0 <= flip <= 1.0:
        raise ValueError("flip probability must lie in [0, 1]")
    return np.array([[1 - flip, flip], [flip, 1 - flip]])


def _check_confusion(c: np.ndarray) -> np.ndarray:
    c = np.asarray(c, dtype=float)
    if c.shape != (2, 2) or c.min() < 0 or c.max() > 1 or np.abs(c.sum(axis=0) - 1).max() > 1e-12:
        raise ValueError("confusion matrix must be 2x2, column-stochastic, entries in [0, 1]")
    return c


@dataclass(frozen=True)
class NoiseModel:
    """Noise knobs; ``readout_confusion`` is one 2x2 matrix shared by all bits or one per bit.

    Confusion entries are C[read, true] so columns sum to one.
    """

    dephasing_rate: float = 0.0
    gate_error: float = 0.0
    readout_confusion: tuple[np.ndarray, ...] | np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.dephasing_rate < 0:
            raise ValueError("dephasing rate must be nonnegative")
        if not 0.0 <= self.gate_error <= 0.75:
            raise ValueError("gate error must lie in [0, 3/4]")
        rc = self.readout_confusion
        if rc is not None:
            arr = np.asarray(rc, dtype=float)
            mats = (arr,) if arr.ndim == 2 else tuple(arr)
            object.__setattr__(self, "readout_confusion", tuple(_check_confusion(m) for m in mats))

    @property
    def is_noiseless(self) -> bool:
        return self.dephasing_rate == 0.0 and self.gate_error == 0.0 and self.readout_confusion is None

    @property
    def has_state_noise(self) -> bool:
        return self.dephasing_rate > 0.0 or self.gate_error > 0.0

    def confusion_for(self, num_bits: int) -> np.ndarray | None:
        if self.readout_confusion is None:
            return None
        mats = self.readout_confusion
        if len(mats) == 1:
            mats = mats * num_bits
        if len(mats) != num_bits:
            raise ValueError(f"need {num_bits} confusion matrices, got {len(mats)}")
        return reduce(np.kron, mats)


def _full_confusion(confusion, num_bits: int) -> np.ndarray:
    c = np.asarray(confusion, dtype=float)
    if c.shape == (2**num_bits, 2**num_bits):
        return c
    if c.shape == (2, 2):
        return reduce(np.kron, [_check_confusion(c)] * num_bits)
    return reduce(np.kron, [_check_confusion(m) for m in c])


def _bits(dist: OutcomeDistribution) -> int:
    return len(dist.labels[0])


def apply_readout_error(dist: OutcomeDistribution, confusion) -> OutcomeDistribution:
    """Left-multiply the probabilities by the tensor-product confusion matrix.

    Labels must be in ascending binary order, as produced by ``bell_povm``.
    """
    m = _full_confusion(confusion, _bits(dist))
    return OutcomeDistribution(dist.labels, clean_probabilities(m @ dist.probs))


def mitigate_readout(dist: OutcomeDistribution, confusion) -> OutcomeDistribution:
    """Invert the confusion matrix, clip negatives to zero and renormalize."""
    m = _full_confusion(confusion, _bits(dist))
    if np.linalg.cond(m) > 1e12:
        raise ValueError("confusion matrix is singular; mitigation impossible")
    raw = np.clip(np.linalg.solve(m, dist.probs), 0.0, None)
    return OutcomeDistribution(dist.labels, raw / raw.sum())


# ---------------------------------------------------------------------------
# Density-matrix evolution


def _kron_batch(ops: np.ndarray) -> np.ndarray:
    """(k, q, 2, 2) per-qubit operators -> (k, 2^q, 2^q) tensor products."""
    out = ops[:, 0]
    for q in range(1, ops.shape[1]):
        k, a = out.shape[0], out.shape[1]
        out = np.einsum("kij,klm->kiljm", out, ops[:, q]).reshape(k, 2 * a, 2 * a)
    return out


def _dephasing_mask(n: int, lam: float) -> np.ndarray:
    """Elementwise factor lam^(number of qubits whose ket and bra bits differ)."""
    idx = np.arange(2**n)
    diff = idx[:, None] ^ idx[None, :]
    counts = np.array([bin(v).count("1") for v in range(2**n)])[diff]
    return lam**counts


def evolve_density_batch(model: ProtocolModel, xs, xc, noise: NoiseModel) -> np.ndarray:
    """Noisy final density matrices for a batch of signal parameters, (k, d, d)."""
    s = model.strategy
    T, N = model.encoding.T, model.encoding.N
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    k, n = xs.shape[0], s.num_qubits
    us = _kron_batch(su2_matrix(qubit_vectors_batch(s, xs), T))
    uc = None
    if xc is not None:
        ctl = su2_matrix(qubit_vectors_batch(s, np.asarray(xc, dtype=float)[None, :]), T)
        uc = np.conj(np.swapaxes(_kron_batch(ctl), -1, -2))[0]
    psi = model.probe_for(xc)
    rho = np.broadcast_to(np.outer(psi, psi.conj()), (k, psi.size, psi.size)).copy()
    active = [0] if s.tag == "RS" else list(range(n))
    mask = _dephasing_mask(n, np.exp(-noise.dephasing_rate * T)) if noise.dephasing_rate > 0 else None
    pauli_ops = pauli_channel(noise.gate_error).operators if noise.gate_error > 0 else None
    for _ in range(N):
        rho = us @ rho @ np.conj(np.swapaxes(us, -1, -2))
        if mask is not None:
            rho = rho * mask
        if pauli_ops is not None:
            for q in active:
                rho = _apply_kraus_batch(rho, pauli_ops, q, n)
        if uc is not None:
            rho = uc @ rho @ uc.conj().T
            if pauli_ops is not None:
                for q in active:
                    rho = _apply_kraus_batch(rho, pauli_ops, q, n)
    return rho


@dataclass(frozen=True)
class NoisyProtocolModel:
    """Protocol model whose probabilities include state noise and readout error."""

    base: ProtocolModel
    noise: NoiseModel

    @property
    def strategy(self):
        return self.base.strategy

    @property
    def encoding(self):
        return self.base.encoding

    @property
    def labels(self):
        return self.base.labels

    def run(self, x, xc=None) -> ProtocolRun:
        return self.base.run(x, xc)

    def probabilities(self, xs, xc=None) -> np.ndarray:
        if not self.noise.has_state_noise:
            p = self.base.probabilities(xs, xc)
        else:
            rho = evolve_density_batch(self.base, xs, xc, self.noise)
            vecs = self.base.povm.vectors
            p = np.real(np.einsum("oi,kij,oj->ko", vecs.conj(), rho, vecs))
            p = np.clip(p, 0.0, None)
            p /= p.sum(axis=1, keepdims=True)
        conf = self.noise.confusion_for(len(self.labels[0]))
        if conf is not None:
            p = p @ conf.T
        return p


def noisy_distribution(run: ProtocolRun, noise: NoiseModel) -> OutcomeDistribution:
    """Outcome distribution of one run under the noise model."""
    model = ProtocolModel(run.strategy, run.encoding, probe_guess=run.probe_guess)
    if noise.is_noiseless:
        return ideal_distribution(run)
    p = NoisyProtocolModel(model, noise).probabilities(run.signal, run.control)[0]
    return OutcomeDistribution(model.labels, clean_probabilities(p))


def noisy_density(run: ProtocolRun, noise: NoiseModel) -> DensityMatrix:
    model = ProtocolModel(run.strategy, run.encoding, probe_guess=run.probe_guess)
    rho = evolve_density_batch(model, run.signal, run.control, noise)[0]
    return DensityMatrix((rho + rho.conj().T) / 2)


def distribution_mse(a: OutcomeDistribution | np.ndarray, b: OutcomeDistribution | np.ndarray) -> float:
    pa = np.asarray(getattr(a, "probs", a), dtype=float)
    pb = np.asarray(getattr(b, "probs", b), dtype=float)
    return float(np.mean((pa - pb) ** 2))


__all__ = [
    "KrausChannel",
    "NoiseModel",
    "NoisyProtocolModel",
    "apply_channel",
    "apply_readout_error",
    "dephase",
    "dephasing_channel",
    "distribution_mse",
    "evolve_density_batch",
    "mitigate_readout",
    "noisy_density",
    "noisy_distribution",
    "pauli_channel",
    "pauli_noise",
    "symmetric_confusion",
]
