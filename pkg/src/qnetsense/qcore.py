"""Dense statevector / density-matrix kernel for networks of at most four qubits.

Qubit 0 is the most significant bit of a basis index, so the ket ``|0011>``
has qubits 0 and 1 in state 0 and is basis index 3. ``np.kron(a, b)`` places
``a`` on the lower-numbered qubits.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from typing import Iterable, Sequence

import numpy as np

MAX_QUBITS = 4
NORM_TOL = 1e-12
UNITARY_TOL = 1e-10
POVM_TOL = 1e-10
NEGATIVE_PROB_TOL = 1e-12

IDENTITY2 = np.eye(2, dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = np.stack([PAULI_X, PAULI_Y, PAULI_Z])

# Columns are Phi+, Phi-, Psi+, Psi- in the computational basis; their labels
# follow the same order.
BELL_BASIS = np.array(
    [
        [1, 1, 0, 0],
        [0, 0, 1, 1],
        [0, 0, 1, -1],
        [1, -1, 0, 0],
    ],
    dtype=complex,
) / np.sqrt(2)
BELL_LABELS = ("00", "01", "10", "11")


def _qubit_count(dim: int) -> int:
    k = int(round(np.log2(dim))) if dim > 0 else -1
    if k < 1 or 2**k != dim:
        raise ValueError(f"dimension {dim} is not a power of two >= 2")
    if k > MAX_QUBITS:
        raise ValueError(f"{k} qubits exceeds the {MAX_QUBITS}-qubit cap")
    return k


@dataclass(frozen=True)
class StateVector:
    """Normalized pure state on 1-4 qubits."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex).reshape(-1)
        _qubit_count(amps.size)
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"state norm {norm!r} differs from 1")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def num_qubits(self) -> int:
        return _qubit_count(self.amplitudes.size)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.amplitudes, dtype=dtype)

    @classmethod
    def basis(cls, bits: str) -> "StateVector":
        amps = np.zeros(2 ** len(bits), dtype=complex)
        amps[int(bits, 2)] = 1.0
        return cls(amps)

    @classmethod
    def normalized(cls, amplitudes) -> "StateVector":
        amps = np.asarray(amplitudes, dtype=complex)
        return cls(amps / np.linalg.norm(amps))

    def density(self) -> "DensityMatrix":
        return DensityMatrix(np.outer(self.amplitudes, self.amplitudes.conj()))


@dataclass(frozen=True)
class DensityMatrix:
    """Hermitian, unit-trace, positive semidefinite matrix on 1-4 qubits."""

    entries: np.ndarray

    def __post_init__(self):
        rho = np.array(self.entries, dtype=complex)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise ValueError("density matrix must be square")
        _qubit_count(rho.shape[0])
        if np.abs(rho - rho.conj().T).max() > NORM_TOL:
            raise ValueError("density matrix is not Hermitian")
        tr = np.trace(rho).real
        if abs(tr - 1.0) > NORM_TOL:
            raise ValueError(f"density matrix trace {tr!r} differs from 1")
        if np.linalg.eigvalsh(rho).min() < -1e-10:
            raise ValueError("density matrix has a negative eigenvalue")
        rho.setflags(write=False)
        object.__setattr__(self, "entries", rho)

    @property
    def num_qubits(self) -> int:
        return _qubit_count(self.entries.shape[0])

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)

    @classmethod
    def maximally_mixed(cls, num_qubits: int) -> "DensityMatrix":
        dim = 2**num_qubits
        return cls(np.eye(dim, dtype=complex) / dim)


@dataclass(frozen=True)
class UnitaryMatrix:
    entries: np.ndarray

    def __post_init__(self):
        u = np.array(self.entries, dtype=complex)
        if u.ndim != 2 or u.shape[0] != u.shape[1]:
            raise ValueError("unitary must be square")
        _qubit_count(u.shape[0])
        if np.abs(u.conj().T @ u - np.eye(u.shape[0])).max() > UNITARY_TOL:
            raise ValueError("matrix is not unitary")
        u.setflags(write=False)
        object.__setattr__(self, "entries", u)

    @property
    def num_qubits(self) -> int:
        return _qubit_count(self.entries.shape[0])

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)

    def adjoint(self) -> "UnitaryMatrix":
        return UnitaryMatrix(self.entries.conj().T)

    def __matmul__(self, other):
        if isinstance(other, UnitaryMatrix):
            return UnitaryMatrix(self.entries @ other.entries)
        if isinstance(other, StateVector):
            return StateVector(self.entries @ other.amplitudes)
        return self.entries @ np.asarray(other)


@dataclass(frozen=True)
class OutcomeDistribution:
    """Probabilities over labelled measurement outcomes."""

    labels: tuple[str, ...]
    probs: np.ndarray

    def __post_init__(self):
        p = np.array(self.probs, dtype=float).reshape(-1)
        labels = tuple(self.labels)
        if len(labels) != p.size:
            raise ValueError("labels and probabilities differ in length")
        if p.min(initial=0.0) < 0 or p.max(initial=0.0) > 1 + 1e-12:
            raise ValueError("probabilities must lie in [0, 1]")
        if abs(p.sum() - 1.0) > POVM_TOL:
            raise ValueError(f"probabilities sum to {p.sum()!r}, not 1")
        p.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "probs", p)

    def __getitem__(self, label: str) -> float:
        return float(self.probs[self.labels.index(label)])

    def as_dict(self) -> dict[str, float]:
        return {lab: float(p) for lab, p in zip(self.labels, self.probs)}


@dataclass(frozen=True)
class PovmSet:
    """Complete set of PSD measurement operators with outcome labels.

    ``vectors`` holds the kets of rank-1 projective elements when available;
    it lets pure states be measured without forming outer products.
    """

    elements: tuple[np.ndarray, ...]
    labels: tuple[str, ...]
    vectors: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        elems = tuple(np.array(e, dtype=complex) for e in self.elements)
        if len(elems) != len(self.labels):
            raise ValueError("one label per element required")
        dim = elems[0].shape[0]
        total = np.zeros((dim, dim), dtype=complex)
        for e in elems:
            if np.abs(e - e.conj().T).max() > POVM_TOL:
                raise ValueError("POVM element is not Hermitian")
            if np.linalg.eigvalsh(e).min() < -POVM_TOL:
                raise ValueError("POVM element is not positive semidefinite")
            total += e
        if np.abs(total - np.eye(dim)).max() > POVM_TOL:
            raise ValueError("POVM elements do not sum to the identity")
        object.__setattr__(self, "elements", elems)
        object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def dim(self) -> int:
        return self.elements[0].shape[0]


def kron(*operands):
    """Tensor product of states or operators, left operand on lower qubits.

    Wrapped operands of one kind return the same wrapper; anything else gives
    a plain array. Results beyond four qubits are rejected.
    """
    if not operands:
        raise ValueError("kron needs at least one operand")
    arrays = [np.asarray(op, dtype=complex) for op in operands]
    out = arrays[0]
    for a in arrays[1:]:
        out = np.kron(out, a)
    if out.shape[0] > 2**MAX_QUBITS:
        raise ValueError(f"tensor product exceeds {MAX_QUBITS} qubits")
    kinds = {type(op) for op in operands}
    if len(kinds) == 1:
        kind = kinds.pop()
        if kind is StateVector:
            return StateVector(out)
        if kind is DensityMatrix:
            return DensityMatrix(out)
        if kind is UnitaryMatrix:
            return UnitaryMatrix(out)
    return out


def pauli_dot(v) -> np.ndarray:
    """v . sigma for a real 3-vector (or a stack of them along the last axis)."""
    v = np.asarray(v, dtype=float)
    return np.tensordot(v, PAULIS, axes=([-1], [0]))


def su2_matrix(v, t: float) -> np.ndarray:
    """exp(-i t v.sigma) for one or many 3-vectors, closed form."""
    v = np.asarray(v, dtype=float)
    r = np.linalg.norm(v, axis=-1)
    safe = np.where(r > 0, r, 1.0)
    unit = v / safe[..., None]
    c = np.cos(r * t)[..., None, None]
    s = np.where(r > 0, np.sin(r * t), 0.0)[..., None, None]
    return c * IDENTITY2 - 1j * s * pauli_dot(unit)


def pauli_exponential(v, t: float) -> UnitaryMatrix:
    """exp(-i |v| t v_hat.sigma) = cos(|v|t) I - i sin(|v|t) v_hat.sigma."""
    v = np.asarray(v, dtype=float)
    if v.shape != (3,):
        raise ValueError("v must be a real 3-vector")
    return UnitaryMatrix(su2_matrix(v, t))


def pauli_exponential_jacobian(v, t: float) -> np.ndarray:
    """Exact derivatives d/dv_a of exp(-i t v.sigma), shape (3, 2, 2)."""
    v = np.asarray(v, dtype=float)
    r = np.linalg.norm(v)
    if r == 0.0:
        return -1j * t * PAULIS
    unit = v / r
    c, s = np.cos(r * t), np.sin(r * t)
    out = np.empty((3, 2, 2), dtype=complex)
    for a in range(3):
        d_cos = -t * s * unit[a]
        d_vec = t * c * unit[a] * unit + s * (np.eye(3)[a] - unit[a] * unit) / r
        out[a] = d_cos * IDENTITY2 - 1j * pauli_dot(d_vec)
    return out


def expm_hermitian(generator, t: float = 1.0) -> np.ndarray:
    """exp(-i t H) via eigendecomposition of a Hermitian H."""
    h = np.asarray(generator, dtype=complex)
    if np.abs(h - h.conj().T).max() > 1e-12:
        raise ValueError("generator must be Hermitian")
    w, vecs = np.linalg.eigh(h)
    return (vecs * np.exp(-1j * t * w)) @ vecs.conj().T


def partial_trace(rho, keep: Iterable[int]) -> DensityMatrix:
    """Reduced state on the qubits in ``keep`` (returned in ascending order)."""
    mat = np.asarray(rho, dtype=complex)
    n = _qubit_count(mat.shape[0])
    keep = sorted(set(int(q) for q in keep))
    if not keep:
        raise ValueError("keep-set must not be empty")
    if keep[0] < 0 or keep[-1] >= n:
        raise ValueError(f"qubit indices must lie in [0, {n - 1}]")
    traced = [q for q in range(n) if q not in keep]
    tensor = mat.reshape([2] * (2 * n))
    # Contract each traced qubit's ket index against its bra index, highest first
    # so earlier axis numbers stay valid.
    for q in sorted(traced, reverse=True):
        cur = tensor.ndim // 2
        tensor = np.trace(tensor, axis1=q, axis2=q + cur)
    dim = 2 ** len(keep)
    return DensityMatrix(tensor.reshape(dim, dim))


def bell_state(label: str) -> StateVector:
    return StateVector(BELL_BASIS[:, BELL_LABELS.index(label)])


def _permute_qubits(vec: np.ndarray, order: Sequence[int]) -> np.ndarray:
    """Reorder tensor factors: factor j of ``vec`` moves to qubit order[j]."""
    n = len(order)
    tensor = vec.reshape([2] * n)
    inverse = np.argsort(order)
    return np.transpose(tensor, inverse).reshape(-1)


def bell_povm(pairs: Sequence[Sequence[int]], num_qubits: int | None = None) -> PovmSet:
    """Bell-basis projective measurement on one or two disjoint qubit pairs.

    Outcome labels concatenate per-pair Bell labels in the order the pairs are
    given. Qubits outside every pair are left unmeasured.
    """
    pairs = [tuple(int(q) for q in p) for p in pairs]
    if not 1 <= len(pairs) <= 2 or any(len(p) != 2 for p in pairs):
        raise ValueError("expected one or two qubit pairs")
    used = [q for p in pairs for q in p]
    if len(set(used)) != len(used):
        raise ValueError("qubit pairs overlap")
    n = num_qubits if num_qubits is not None else max(used) + 1
    _qubit_count(2**n)
    if max(used) >= n:
        raise ValueError("pair index outside the register")
    idle = [q for q in range(n) if q not in used]
    order = used + idle
    idle_dim = 2 ** len(idle)

    elements, labels, vectors = [], [], []
    for combo in product(range(4), repeat=len(pairs)):
        ket = np.array([1.0 + 0j])
        for b in combo:
            ket = np.kron(ket, BELL_BASIS[:, b])
        label = "".join(BELL_LABELS[b] for b in combo)
        if idle:
            # Projector = |ket><ket| (x) I on idle qubits, assembled then permuted.
            proj = np.kron(np.outer(ket, ket.conj()), np.eye(idle_dim))
            tensor = proj.reshape([2] * (2 * n))
            inverse = list(np.argsort(order))
            tensor = np.transpose(tensor, inverse + [n + i for i in inverse])
            elements.append(tensor.reshape(2**n, 2**n))
        else:
            full = _permute_qubits(ket, order)
            vectors.append(full)
            elements.append(np.outer(full, full.conj()))
        labels.append(label)
    vec_arr = np.array(vectors) if vectors else None
    return PovmSet(tuple(elements), tuple(labels), vectors=vec_arr)


def clean_probabilities(p: np.ndarray) -> np.ndarray:
    """Clip tiny negatives from rounding and renormalize; reject real negatives."""
    p = np.asarray(p, dtype=float)
    if p.min(initial=0.0) < -NEGATIVE_PROB_TOL:
        raise ValueError(f"probability {p.min()!r} is negative beyond tolerance")
    p = np.clip(p, 0.0, None)
    return np.clip(p / p.sum(), 0.0, 1.0)


def measure_probs(state, povm: PovmSet) -> OutcomeDistribution:
    arr = np.asarray(state, dtype=complex)
    if arr.shape[0] != povm.dim:
        raise ValueError(f"state dimension {arr.shape[0]} != POVM dimension {povm.dim}")
    if arr.ndim == 1:
        if povm.vectors is not None:
            raw = np.abs(povm.vectors.conj() @ arr) ** 2
        else:
            raw = np.array([np.vdot(arr, e @ arr).real for e in povm.elements])
    else:
        raw = np.array([np.trace(e @ arr).real for e in povm.elements])
    return OutcomeDistribution(povm.labels, clean_probabilities(raw))


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(m)
    return (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T


def state_fidelity(a, b) -> float:
    """Uhlmann fidelity (squared convention); pure inputs reduce to overlaps."""
    x = np.asarray(a, dtype=complex)
    y = np.asarray(b, dtype=complex)
    if x.shape[0] != y.shape[0]:
        raise ValueError("states differ in dimension")
    if x.ndim == 1 and y.ndim == 1:
        f = abs(np.vdot(x, y)) ** 2
    elif x.ndim == 1:
        f = np.vdot(x, y @ x).real
    elif y.ndim == 1:
        f = np.vdot(y, x @ y).real
    else:
        # (trace norm of sqrt(x) sqrt(y))^2, symmetric in its arguments
        f = np.linalg.svd(_psd_sqrt(x) @ _psd_sqrt(y), compute_uv=False).sum() ** 2
    return float(np.clip(f, 0.0, 1.0))
