"""State-vector and density-matrix algebra for small qubit registers.

Convention used throughout the package: qubit 0 is the most significant bit
of the computational-basis index, so for an n-qubit register the basis state
|b0 b1 ... b_{n-1}> has index sum_k b_k * 2**(n-1-k).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

NORM_TOL = 1e-12
HERM_TOL = 1e-12
TRACE_TOL = 1e-10
EIG_FLOOR = -1e-10

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)


def bit_of(index: int, qubit: int, n_qubits: int) -> int:
    """Bit value of `qubit` in basis index `index` (qubit 0 = MSB)."""
    return (index >> (n_qubits - 1 - qubit)) & 1


def bit_mask(qubit: int, n_qubits: int) -> int:
    return 1 << (n_qubits - 1 - qubit)


@dataclass(frozen=True)
class StateVector:
    """Normalized pure state of an n-qubit register."""

    n_qubits: int
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape != (2**self.n_qubits,):
            raise ValueError(
                f"amplitude vector has shape {amps.shape}, expected ({2**self.n_qubits},)"
            )
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"state vector not normalized: |psi| = {norm}")
        amps = amps.copy()
        amps.flags.writeable = False
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def basis(cls, n_qubits: int, index: int = 0) -> "StateVector":
        amps = np.zeros(2**n_qubits, dtype=complex)
        amps[index] = 1.0
        return cls(n_qubits, amps)

    @classmethod
    def from_bits(cls, bits: str) -> "StateVector":
        """State |bits> with qubit 0 the leftmost character."""
        n = len(bits)
        return cls.basis(n, int(bits, 2))

    def projector(self) -> "DensityMatrix":
        return DensityMatrix(self.n_qubits, np.outer(self.amplitudes, self.amplitudes.conj()))

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


@dataclass(frozen=True)
class DensityMatrix:
    """Hermitian, unit-trace operator on an n-qubit register."""

    n_qubits: int
    elements: np.ndarray = field(repr=False)

    def __post_init__(self):
        dim = 2**self.n_qubits
        mat = np.asarray(self.elements, dtype=complex)
        if mat.shape != (dim, dim):
            raise ValueError(f"matrix has shape {mat.shape}, expected ({dim}, {dim})")
        if np.max(np.abs(mat - mat.conj().T)) > 1e-9:
            raise ValueError("density matrix is not Hermitian")
        tr = np.trace(mat).real
        if abs(tr - 1.0) > 1e-8:
            raise ValueError(f"density matrix trace is {tr}, expected 1")
        mat = mat.copy()
        mat.flags.writeable = False
        object.__setattr__(self, "elements", mat)

    @classmethod
    def maximally_mixed(cls, n_qubits: int) -> "DensityMatrix":
        dim = 2**n_qubits
        return cls(n_qubits, np.eye(dim, dtype=complex) / dim)


def _check_unitary(u: np.ndarray, dim: int) -> np.ndarray:
    u = np.asarray(u, dtype=complex)
    if u.shape != (dim, dim):
        raise ValueError(f"operator has shape {u.shape}, expected ({dim}, {dim})")
    if np.linalg.norm(u.conj().T @ u - np.eye(dim)) > NORM_TOL * dim:
        raise ValueError("operator is not unitary")
    return u


def apply_single_qubit_unitary(state: StateVector, q: int, u: np.ndarray) -> StateVector:
    """Apply a 2x2 unitary to qubit q, identity elsewhere."""
    n = state.n_qubits
    if not 0 <= q < n:
        raise ValueError(f"qubit index {q} out of range for {n} qubits")
    u = _check_unitary(u, 2)
    # reshape so the target qubit is its own axis
    tensor = state.amplitudes.reshape((2**q, 2, 2 ** (n - q - 1)))
    out = np.einsum("ab,ibj->iaj", u, tensor).reshape(-1)
    nrm = np.linalg.norm(out)
    return StateVector(n, out / nrm)


def apply_two_qubit_phase(state: StateVector, i: int, j: int, alphas) -> StateVector:
    """Multiply each amplitude by exp(-i * alpha_ab) keyed on the bits of qubits i, j.

    alphas is the 4-tuple (alpha_00, alpha_01, alpha_10, alpha_11).
    """
    if i == j:
        raise ValueError("phase gate requires two distinct qubits")
    n = state.n_qubits
    alphas = np.asarray(alphas, dtype=float)
    if alphas.shape != (4,):
        raise ValueError("alphas must have exactly 4 entries")
    idx = np.arange(2**n)
    a = (idx >> (n - 1 - i)) & 1
    b = (idx >> (n - 1 - j)) & 1
    phases = np.exp(-1j * alphas[2 * a + b])
    return StateVector(n, state.amplitudes * phases)


def measure_qubits_projective(state: StateVector, qubits, rng: np.random.Generator):
    """Projective measurement of `qubits` in the computational basis.

    Returns (outcome bits as a tuple, collapsed state, Born probability of
    the sampled outcome).
    """
    qubits = list(qubits)
    if len(set(qubits)) != len(qubits):
        raise ValueError("measured qubits must be distinct")
    n = state.n_qubits
    k = len(qubits)
    idx = np.arange(2**n)
    pattern = np.zeros(2**n, dtype=np.int64)
    for pos, q in enumerate(qubits):
        pattern |= ((idx >> (n - 1 - q)) & 1) << (k - 1 - pos)
    probs = np.bincount(pattern, weights=np.abs(state.amplitudes) ** 2, minlength=2**k)
    total = probs.sum()
    if total < 1e-14:
        raise ValueError("state has vanishing total probability")
    probs = probs / total
    u = rng.random()
    outcome = int(np.searchsorted(np.cumsum(probs), u, side="right"))
    outcome = min(outcome, 2**k - 1)
    p = float(probs[outcome])
    amps = np.where(pattern == outcome, state.amplitudes, 0.0)
    amps = amps / np.linalg.norm(amps)
    bits = tuple((outcome >> (k - 1 - pos)) & 1 for pos in range(k))
    return bits, StateVector(n, amps), p


def partial_trace(rho: DensityMatrix, keep) -> DensityMatrix:
    """Reduced density matrix over the kept qubits (in the order given)."""
    keep = list(keep)
    if not keep:
        raise ValueError("keep set must be nonempty")
    if len(set(keep)) != len(keep):
        raise ValueError("kept qubits must be distinct")
    n = rho.n_qubits
    drop = [q for q in range(n) if q not in keep]
    tensor = rho.elements.reshape([2] * (2 * n))
    # trace out the dropped qubits pairwise (row axis q, column axis n+q)
    for count, q in enumerate(sorted(drop)):
        row = q - count
        col = row + (n - count)
        tensor = np.trace(tensor, axis1=row, axis2=col)
    m = len(keep)
    remaining = [q for q in range(n) if q in keep]
    perm = [remaining.index(q) for q in keep]
    tensor = tensor.transpose(perm + [m + p for p in perm])
    dim = 2**m
    return DensityMatrix(m, tensor.reshape(dim, dim))


def squared_fidelity(rho: DensityMatrix, target: StateVector) -> float:
    """Overlap <target| rho |target>, clamped to [0, 1]."""
    if rho.n_qubits != target.n_qubits:
        raise ValueError("dimension mismatch between state and density matrix")
    v = target.amplitudes
    val = np.vdot(v, rho.elements @ v).real
    if val < EIG_FLOOR or val > 1 + 1e-10:
        raise ValueError(f"fidelity {val} outside [0, 1] beyond tolerance")
    return float(min(max(val, 0.0), 1.0))


def von_neumann_entropy(rho: DensityMatrix) -> float:
    """Entropy -tr(rho log2 rho) in bits; eigenvalues below 1e-14 contribute zero."""
    mat = rho.elements
    if np.max(np.abs(mat - mat.conj().T)) > HERM_TOL * mat.shape[0]:
        raise ValueError("entropy requires a Hermitian matrix")
    evals = np.linalg.eigvalsh(mat)
    if evals.min() < EIG_FLOOR:
        raise ValueError(f"negative eigenvalue {evals.min()} below tolerance")
    evals = evals[evals > 1e-14]
    return float(-np.sum(evals * np.log2(evals)))


def trace_distance(a: DensityMatrix, b: DensityMatrix) -> float:
    """Half the trace norm of (a - b)."""
    if a.n_qubits != b.n_qubits:
        raise ValueError("dimension mismatch")
    evals = np.linalg.eigvalsh(a.elements - b.elements)
    return float(0.5 * np.sum(np.abs(evals)))
