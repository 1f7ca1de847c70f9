"""Dense linear algebra and dynamics primitives shared by the physics modules.

Conventions
-----------
* hbar = 1; Hamiltonians and rates are angular frequencies.
* The first subsystem of a :class:`CompositeSpace` is the most significant
  tensor index, so ``np.kron(A, B)`` acts with ``A`` on the first label.
* Collapse channels enter the master equation as
  ``rate * (2 c rho c^+ - c^+ c rho - rho c^+ c)``; an excited level relaxing
  through ``sigma^-`` at rate ``gamma`` therefore decays as ``exp(-2 gamma t)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from typing import Iterable, Sequence

import math

import numpy as np

from .errors import StepSizeError

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-10
POSITIVITY_TOL = 1e-8
TRACE_DRIFT_LIMIT = 1e-6

PAULI_I = np.eye(2, dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
HADAMARD = (PAULI_X + PAULI_Z) / np.sqrt(2)
PAULIS = {"x": PAULI_X, "y": PAULI_Y, "z": PAULI_Z}


def lowering(dim: int) -> np.ndarray:
    """Truncated annihilation operator; for ``dim == 2`` this is also sigma^- = |0><1|."""
    return np.diag(np.sqrt(np.arange(1, dim)), 1).astype(complex)


def kron_all(ops: Iterable[np.ndarray]) -> np.ndarray:
    return reduce(np.kron, ops)


def _scale(m: np.ndarray) -> float:
    return max(1.0, float(np.max(np.abs(m)))) if m.size else 1.0


def is_hermitian(m: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    # tolerance is relative to the largest entry so GHz-scale couplings pass
    return bool(np.max(np.abs(m - m.conj().T), initial=0.0) <= tol * _scale(m))


@dataclass(frozen=True)
class CompositeSpace:
    """Ordered labelled subsystems defining tensor-product indexing."""

    subsystems: tuple[tuple[str, int], ...]

    def __post_init__(self):
        subs = tuple((str(label), int(dim)) for label, dim in self.subsystems)
        if not subs:
            raise ValueError("a space needs at least one subsystem")
        labels = [label for label, _ in subs]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate subsystem labels in {labels}")
        for label, dim in subs:
            if dim < 1:
                raise ValueError(f"subsystem {label!r} has non-positive dimension {dim}")
        object.__setattr__(self, "subsystems", subs)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(label for label, _ in self.subsystems)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(dim for _, dim in self.subsystems)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"unknown subsystem label {label!r}; have {self.labels}") from None

    def dim_of(self, label: str) -> int:
        return self.dims[self.index(label)]

    def subspace(self, labels: Sequence[str]) -> "CompositeSpace":
        """Sub-space over ``labels``, kept in this space's order."""
        keep = {self.index(label) for label in labels}
        return CompositeSpace(tuple(s for i, s in enumerate(self.subsystems) if i in keep))

    def basis_index(self, **levels: int) -> int:
        """Flat index of a product basis state; unspecified subsystems are at level 0."""
        for label in levels:
            self.index(label)
        idx = [levels.get(label, 0) for label in self.labels]
        return int(np.ravel_multi_index(idx, self.dims))


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class StateVector:
    space: CompositeSpace
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        amps = _readonly(np.ravel(self.amplitudes))
        if amps.shape[0] != self.space.dim:
            raise ValueError(f"state has {amps.shape[0]} amplitudes, space needs {self.space.dim}")
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def normalized(cls, space: CompositeSpace, amplitudes) -> "StateVector":
        amps = np.asarray(amplitudes, dtype=complex)
        norm = np.linalg.norm(amps)
        if norm == 0:
            raise ValueError("cannot normalize the zero vector")
        return cls(space, amps / norm)

    @classmethod
    def basis(cls, space: CompositeSpace, **levels: int) -> "StateVector":
        amps = np.zeros(space.dim, dtype=complex)
        amps[space.basis_index(**levels)] = 1.0
        return cls(space, amps)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def projector(self) -> np.ndarray:
        return np.outer(self.amplitudes, self.amplitudes.conj())

    def tensor(self, other: "StateVector") -> "StateVector":
        space = CompositeSpace(self.space.subsystems + other.space.subsystems)
        return StateVector(space, np.kron(self.amplitudes, other.amplitudes))


@dataclass(frozen=True)
class DensityMatrix:
    """Density operator; construction checks Hermiticity, unit trace and positivity."""

    space: CompositeSpace
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = _readonly(self.matrix)
        d = self.space.dim
        if m.shape != (d, d):
            raise ValueError(f"density matrix shape {m.shape} does not match space dimension {d}")
        if not is_hermitian(m):
            raise ValueError("density matrix is not Hermitian")
        tr = np.trace(m)
        if abs(tr - 1) > TRACE_TOL:
            raise ValueError(f"density matrix trace {tr} differs from 1")
        lowest = np.linalg.eigvalsh(m)[0]
        if lowest < -POSITIVITY_TOL:
            raise ValueError(f"density matrix has negative eigenvalue {lowest}")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_state(cls, psi: StateVector) -> "DensityMatrix":
        return cls(psi.space, psi.projector())

    @classmethod
    def maximally_mixed(cls, space: CompositeSpace) -> "DensityMatrix":
        return cls(space, np.eye(space.dim) / space.dim)

    @property
    def purity(self) -> float:
        return float(np.real(np.trace(self.matrix @ self.matrix)))

    def expect(self, op: np.ndarray) -> float:
        return float(np.real(np.trace(self.matrix @ op)))


@dataclass(frozen=True)
class HermitianOperator:
    space: CompositeSpace
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = _readonly(self.matrix)
        d = self.space.dim
        if m.shape != (d, d):
            raise ValueError(f"operator shape {m.shape} does not match space dimension {d}")
        if not is_hermitian(m):
            raise ValueError("operator is not Hermitian within tolerance")
        object.__setattr__(self, "matrix", m)

    def spectrum(self) -> tuple[np.ndarray, np.ndarray]:
        return np.linalg.eigh(self.matrix)


@dataclass(frozen=True)
class CollapseChannel:
    operator: np.ndarray = field(repr=False)
    rate: float
    label: str = ""

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError(f"collapse rate must be non-negative, got {self.rate}")
        object.__setattr__(self, "operator", _readonly(self.operator))


def embed(op: np.ndarray, targets: Sequence[str] | str, space: CompositeSpace) -> np.ndarray:
    """Lift ``op`` acting on ``targets`` (in the given order) to the full space."""
    if isinstance(targets, str):
        targets = [targets]
    targets = list(targets)
    if len(set(targets)) != len(targets):
        raise ValueError(f"repeated target labels {targets}")
    t_idx = [space.index(t) for t in targets]
    t_dims = [space.dims[i] for i in t_idx]
    op = np.asarray(op, dtype=complex)
    dt = int(np.prod(t_dims))
    if op.shape != (dt, dt):
        raise ValueError(f"operator shape {op.shape} does not match target dimension {dt}")
    rest = [i for i in range(len(space.dims)) if i not in t_idx]
    r_dims = [space.dims[i] for i in rest]
    full = np.kron(op, np.eye(int(np.prod(r_dims)) if rest else 1))
    n = len(space.dims)
    order = t_idx + rest
    # axis a of the product tensor belongs to subsystem order[a]
    perm = np.argsort(order)
    tensor = full.reshape(t_dims + r_dims + t_dims + r_dims)
    tensor = tensor.transpose(list(perm) + [p + n for p in perm])
    return tensor.reshape(space.dim, space.dim)


def propagator(H: HermitianOperator | np.ndarray, t: float) -> np.ndarray:
    """exp(-i H t) by spectral decomposition."""
    m = H.matrix if isinstance(H, HermitianOperator) else np.asarray(H, dtype=complex)
    if not is_hermitian(m):
        raise ValueError("propagator needs a Hermitian generator")
    evals, evecs = np.linalg.eigh(m)
    return (evecs * np.exp(-1j * evals * t)) @ evecs.conj().T


def evolve_unitary(H: HermitianOperator, psi0: StateVector, t: float) -> StateVector:
    if H.space.dim != psi0.space.dim:
        raise ValueError("Hamiltonian and state dimensions differ")
    return StateVector(psi0.space, propagator(H, t) @ psi0.amplitudes)


@dataclass(frozen=True)
class LindbladTrajectory:
    times: np.ndarray
    states: tuple[DensityMatrix, ...]
    dt: float
    max_trace_error: float
    max_hermiticity_error: float
    halving_error: float | None = None

    @property
    def final(self) -> DensityMatrix:
        return self.states[-1]


def _lindblad_rhs(H: np.ndarray, channels: Sequence[CollapseChannel]):
    heff = H.astype(complex)
    jumps = []
    for ch in channels:
        if ch.rate == 0:
            continue
        c = ch.operator
        heff = heff - 1j * ch.rate * (c.conj().T @ c)
        jumps.append(math.sqrt(2 * ch.rate) * c)
    # rates folded into the stacked jumps: sum_k J_k rho J_k^dag in one batched product
    stack = np.array(jumps, dtype=complex).reshape(-1, *heff.shape)
    stack_dag = stack.conj().transpose(0, 2, 1)

    def rhs(rho):
        out = -1j * (heff @ rho)
        out = out + out.conj().T
        if len(stack):
            out += (stack @ rho @ stack_dag).sum(axis=0)
        return out

    return rhs


def _integrate(rhs, rho0: np.ndarray, dt: float, n_steps: int, sample_every: int):
    rho = rho0.copy()
    tr0 = np.trace(rho0).real
    samples = [rho.copy()]
    max_tr = 0.0
    max_herm = 0.0
    for step in range(1, n_steps + 1):
        k1 = rhs(rho)
        k2 = rhs(rho + 0.5 * dt * k1)
        k3 = rhs(rho + 0.5 * dt * k2)
        k4 = rhs(rho + dt * k3)
        rho = rho + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if step % sample_every == 0:
            drift = abs(np.trace(rho).real - tr0)
            if not np.isfinite(drift) or drift > TRACE_DRIFT_LIMIT:
                raise StepSizeError(f"trace drift {drift:.3e} at t={step * dt:.6g}; reduce dt")
            max_tr = max(max_tr, drift)
            max_herm = max(max_herm, float(np.max(np.abs(rho - rho.conj().T))))
            samples.append(rho.copy())
    return samples, max_tr, max_herm


def evolve_lindblad(
    H: HermitianOperator,
    channels: Sequence[CollapseChannel],
    rho0: DensityMatrix,
    t_final: float,
    dt: float,
    sample_every: int = 1,
    check_convergence: bool = False,
) -> LindbladTrajectory:
    """Integrate the master equation with classical fixed-step RK4.

    ``t_final`` must be an integer number of steps. Samples are taken every
    ``sample_every`` steps (the initial state included). With
    ``check_convergence`` the run is repeated at ``dt/2`` and the largest
    element-wise difference over all samples is stored as ``halving_error``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if t_final < 0:
        raise ValueError("t_final must be non-negative")
    if sample_every < 1:
        raise ValueError("sample_every must be >= 1")
    d = H.space.dim
    if rho0.space.dim != d:
        raise ValueError("initial state and Hamiltonian dimensions differ")
    for ch in channels:
        if ch.operator.shape != (d, d):
            raise ValueError(f"collapse operator {ch.label!r} has shape {ch.operator.shape}")
    n_steps = int(round(t_final / dt))
    if abs(n_steps * dt - t_final) > 1e-9 * max(t_final, dt):
        raise ValueError(f"t_final={t_final} is not a multiple of dt={dt}")
    if n_steps % sample_every:
        raise ValueError("number of steps must be a multiple of sample_every")

    rhs = _lindblad_rhs(H.matrix, channels)
    samples, max_tr, max_herm = _integrate(rhs, np.array(rho0.matrix), dt, n_steps, sample_every)
    halving = None
    if check_convergence:
        fine, _, _ = _integrate(rhs, np.array(rho0.matrix), dt / 2, 2 * n_steps, 2 * sample_every)
        halving = max(float(np.max(np.abs(a - b))) for a, b in zip(samples, fine))
    times = np.arange(len(samples)) * dt * sample_every
    symmetric = [0.5 * (s + s.conj().T) for s in samples]
    for t, s in zip(times, symmetric):
        lowest = np.linalg.eigvalsh(s)[0]
        if lowest < -POSITIVITY_TOL:
            raise StepSizeError(f"eigenvalue {lowest:.3e} at t={t:.6g} breaks positivity; reduce dt")
    states = tuple(DensityMatrix(rho0.space, s) for s in symmetric)
    return LindbladTrajectory(times, states, dt, max_tr, max_herm, halving)


def partial_trace(rho: DensityMatrix, keep: Sequence[str] | str) -> DensityMatrix:
    if isinstance(keep, str):
        keep = [keep]
    if not keep:
        raise ValueError("keep must name at least one subsystem")
    space = rho.space
    keep_idx = sorted({space.index(label) for label in keep})
    n = len(space.dims)
    tensor = rho.matrix.reshape(space.dims + space.dims)
    # einsum letters: row axes a.., column axes shared for traced subsystems
    letters = [chr(ord("a") + i) for i in range(2 * n)]
    rows = letters[:n]
    cols = [letters[n + i] if i in keep_idx else letters[i] for i in range(n)]
    out = [rows[i] for i in keep_idx] + [cols[i] for i in keep_idx]
    reduced = np.einsum("".join(rows + cols) + "->" + "".join(out), tensor)
    sub = space.subspace([space.labels[i] for i in keep_idx])
    return DensityMatrix(sub, reduced.reshape(sub.dim, sub.dim))


def fidelity_pure(target: StateVector, rho: DensityMatrix) -> float:
    """<target| rho |target> for a pure target state."""
    if target.space.dim != rho.space.dim:
        raise ValueError("target and density matrix dimensions differ")
    v = target.amplitudes
    return float(np.real(v.conj() @ rho.matrix @ v))


def operator_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Spectral-norm distance between two operators."""
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b), 2))


def unitarity_error(u: np.ndarray) -> float:
    return operator_distance(u.conj().T @ u, np.eye(u.shape[0]))
