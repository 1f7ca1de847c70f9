"""Cavity-QND gate algebra for writing to and reading from the topological qubit.

Operator spaces
---------------
* spins: one qubit per lattice spin in the :class:`SelectionMask`, labelled
  ``spin0``, ``spin1``, ...; basis |0> is sigma_z = +1.
* cavity: Fock states {0, 1}.
* ancilla: levels {0, 1, 2}; only {0, 1} carry logical information.

The ancilla-cavity exchange flips |1>_A|0>_c to |2>_A|1>_c in ``pi/(2 lam)``,
not ``pi/lam``; the latter returns the photon with a sign. Both are exposed so
reports can quote the discrepancy.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np
from scipy.linalg import expm

from .core import (
    HADAMARD,
    PAULI_I,
    PAULI_X,
    PAULI_Y,
    PAULI_Z,
    PAULIS,
    CompositeSpace,
    DensityMatrix,
    StateVector,
    embed,
    kron_all,
    lowering,
    operator_distance,
    partial_trace,
    unitarity_error,
)
from .errors import CavityLeak

Axis = Literal["x", "y", "z"]


@dataclass(frozen=True)
class QndParams:
    """Dispersive cavity coupling ``g`` with blue detuning ``delta``."""

    g: float
    delta: float

    def __post_init__(self):
        if self.g <= 0 or self.delta <= 0:
            raise ValueError("g and delta must be positive")
        if self.delta < 5 * self.g:
            warnings.warn(f"delta/g = {self.delta / self.g:.3g} < 5: outside the dispersive regime")

    @property
    def chi(self) -> float:
        return self.g**2 / (2 * self.delta)

    @property
    def tau(self) -> float:
        return math.pi / (2 * self.chi)


@dataclass(frozen=True)
class AncillaParams:
    """Raman-assisted ancilla-cavity exchange; ``lam = g_prime * omega_a / delta_prime``."""

    g_prime: float
    omega_a: float
    delta_prime: float

    def __post_init__(self):
        if self.g_prime <= 0 or self.omega_a <= 0 or self.delta_prime <= 0:
            raise ValueError("ancilla couplings must be positive")

    @property
    def lam(self) -> float:
        return self.g_prime * self.omega_a / self.delta_prime

    def lam_with(self, g: float) -> float:
        """Exchange rate if the lattice coupling ``g`` is used in place of g'."""
        return g * self.omega_a / self.delta_prime


@dataclass(frozen=True)
class SelectionMask:
    participating: tuple[bool, ...]

    def __post_init__(self):
        object.__setattr__(self, "participating", tuple(bool(p) for p in self.participating))
        if not self.participating:
            raise ValueError("mask covers no spins")

    @classmethod
    def all(cls, n: int) -> "SelectionMask":
        return cls((True,) * n)

    @property
    def n_spins(self) -> int:
        return len(self.participating)

    @property
    def n_selected(self) -> int:
        return sum(self.participating)

    @property
    def selected(self) -> list[int]:
        return [i for i, p in enumerate(self.participating) if p]

    def require_nonempty(self):
        if self.n_selected == 0:
            raise ValueError("string operation requested with no selected spins")


def spin_space(n: int) -> CompositeSpace:
    return CompositeSpace(tuple((f"spin{i}", 2) for i in range(n)))


@dataclass(frozen=True)
class LogicalTsq:
    """Logical basis of the topological qubit: |psi_+> = logical 0, |psi_-> = logical 1."""

    basis: tuple[StateVector, StateVector]

    def __post_init__(self):
        a, b = self.basis
        if a.space.dim != b.space.dim:
            raise ValueError("basis states live in different spaces")
        gram = np.array([[x.amplitudes.conj() @ y.amplitudes for y in self.basis] for x in self.basis])
        if np.max(np.abs(gram - np.eye(2))) > 1e-10:
            raise ValueError("TSQ basis is not orthonormal")

    @classmethod
    def abstract(cls) -> "LogicalTsq":
        space = CompositeSpace((("tsq", 2),))
        return cls((StateVector.basis(space, tsq=0), StateVector.basis(space, tsq=1)))

    @classmethod
    def from_midgap(cls, pair) -> "LogicalTsq":
        return cls(tuple(pair.states))

    def physical_state(self, amplitudes: Sequence[complex]) -> StateVector:
        a, b = amplitudes
        return StateVector(self.basis[0].space, a * self.basis[0].amplitudes + b * self.basis[1].amplitudes)

    def logical_amplitudes(self, state: StateVector) -> np.ndarray:
        return np.array([v.amplitudes.conj() @ state.amplitudes for v in self.basis])


# -- QND string evolution -------------------------------------------------------


def qnd_unitary_closed_form(n_selected: int, n_c: int) -> np.ndarray:
    """I for an empty cavity, (-i)^N prod sigma_z with one photon."""
    if n_selected < 1:
        raise ValueError("need at least one selected spin")
    if n_c not in (0, 1):
        raise ValueError("photon number must be 0 or 1")
    if n_c == 0:
        return np.eye(2**n_selected, dtype=complex)
    return (-1j) ** n_selected * kron_all([PAULI_Z] * n_selected)


def qnd_hamiltonian(
    qnd: QndParams, mask: SelectionMask, n_photons: int = 1, residual: float = 0.0
) -> tuple[CompositeSpace, np.ndarray]:
    """chi a^+a sum_l sigma_z^l on cavity (x) spins.

    Unselected spins couple with ``residual * chi`` (residual = (g/Omega_x)^2
    for an imperfect dark-state switch; 0 models the ideal switch).
    """
    space = CompositeSpace((("cavity", n_photons + 1),) + spin_space(mask.n_spins).subsystems)
    number = lowering(n_photons + 1).conj().T @ lowering(n_photons + 1)
    total = np.zeros((space.dim, space.dim), dtype=complex)
    for i, on in enumerate(mask.participating):
        weight = 1.0 if on else residual
        if weight:
            total += weight * embed(np.kron(number, PAULI_Z), ["cavity", f"spin{i}"], space)
    return space, qnd.chi * total


def qnd_unitary_brute_force(
    qnd: QndParams, mask: SelectionMask, n_c: int, residual: float = 0.0, duration: float | None = None
) -> np.ndarray:
    """exp(-i tau H_QND) by direct matrix exponentiation, restricted to photon sector ``n_c``.

    Acts on all spins of the mask; unselected spins see the identity when
    ``residual`` is 0.
    """
    mask.require_nonempty()
    space, h = qnd_hamiltonian(qnd, mask, n_photons=max(1, n_c), residual=residual)
    u = expm(-1j * (qnd.tau if duration is None else duration) * h)
    n_spin = 2**mask.n_spins
    block = slice(n_c * n_spin, (n_c + 1) * n_spin)
    return u[block, block]


def _lift_selected(op_on_selected: np.ndarray, mask: SelectionMask) -> np.ndarray:
    space = spin_space(mask.n_spins)
    return embed(op_on_selected, [f"spin{i}" for i in mask.selected], space)


def direct_string(axis: Axis, mask: SelectionMask) -> np.ndarray:
    mask.require_nonempty()
    return _lift_selected(kron_all([PAULIS[axis]] * mask.n_selected), mask)


# per-site rotations V with V sigma_z V^+ = sigma_axis
_ROTATIONS = {
    "z": PAULI_I,
    "x": HADAMARD,
    # exp(-i pi/4 sigma_x) sigma_z exp(+i pi/4 sigma_x) = -sigma_y, hence the + sign
    "y": expm(1j * math.pi / 4 * PAULI_X),
}


def string_operator(axis: Axis, mask: SelectionMask) -> np.ndarray:
    """prod_l sigma_l^axis over the selected spins, built by conjugating U_z.

    Checked against the direct Pauli product; a mismatch above 1e-12 raises.
    """
    mask.require_nonempty()
    u_z = direct_string("z", mask)
    v = _lift_selected(kron_all([_ROTATIONS[axis]] * mask.n_selected), mask)
    out = v @ u_z @ v.conj().T
    err = operator_distance(out, direct_string(axis, mask))
    if err > 1e-12:
        raise RuntimeError(f"string conjugation for axis {axis} off by {err:.3e}")
    return out


def printed_y_conjugation_residual(n_selected: int = 1) -> float:
    """Distance between R U_z R (R = prod exp(-i pi/4 sigma_z)) and U_y."""
    r = kron_all([expm(-1j * math.pi / 4 * PAULI_Z)] * n_selected)
    u_z = kron_all([PAULI_Z] * n_selected)
    u_y = kron_all([PAULI_Y] * n_selected)
    return operator_distance(r @ u_z @ r, u_y)


def controlled_string_cavity(mask: SelectionMask, qnd: QndParams | None = None) -> np.ndarray:
    """|0><0|_c (x) I + |1><1|_c (x) U_z on cavity {0,1} (x) spins.

    Generated from the QND evolution with the (-i)^N photon-branch phase removed.
    """
    mask.require_nonempty()
    qnd = qnd or QndParams(g=1.0, delta=10.0)
    _, h = qnd_hamiltonian(qnd, mask)
    u = expm(-1j * qnd.tau * h)
    n_spin = 2**mask.n_spins
    u[n_spin:, :] *= 1j**mask.n_selected
    return u


# -- ancilla-mediated sequence -------------------------------------------------


def ancilla_space(mask: SelectionMask) -> CompositeSpace:
    return CompositeSpace((("ancilla", 3), ("cavity", 2)) + spin_space(mask.n_spins).subsystems)


def exchange_hamiltonian(anc: AncillaParams, mask: SelectionMask, lam: float | None = None) -> np.ndarray:
    """lam (a^+ |2><1| + a |1><2|) on ancilla (x) cavity (x) spins."""
    space = ancilla_space(mask)
    lam = anc.lam if lam is None else lam
    flip = np.zeros((3, 3), dtype=complex)
    flip[2, 1] = 1.0
    a = lowering(2)
    term = np.kron(flip, a.conj().T)
    return lam * embed(term + term.conj().T, ["ancilla", "cavity"], space)


def compensation_phase(n_selected: int) -> float:
    """Ancilla phase theta restoring U_2 after the sequence: pi + N pi / 2."""
    return math.pi + n_selected * math.pi / 2


def ancilla_sequence(
    qnd: QndParams,
    anc: AncillaParams,
    mask: SelectionMask,
    transfer_time: float | None = None,
    compensate: bool = True,
    phase_offset: float = 0.0,
) -> np.ndarray:
    """Exchange, QND for tau, exchange, then the ancilla phase exp(i theta |1><1|).

    ``transfer_time`` defaults to ``pi/(2 lam)``. ``phase_offset`` is added
    to theta (negative-control hook). Raises :class:`CavityLeak` if the block
    with cavity vacuum in and out, ancilla in {0,1}, is not unitary.
    """
    mask.require_nonempty()
    space = ancilla_space(mask)
    t_x = math.pi / (2 * anc.lam) if transfer_time is None else transfer_time
    u_x = expm(-1j * t_x * exchange_hamiltonian(anc, mask))
    _, h_qnd = qnd_hamiltonian(qnd, mask)
    u_q = embed(expm(-1j * qnd.tau * h_qnd), ["cavity"] + [f"spin{i}" for i in range(mask.n_spins)], space)
    u = u_x @ u_q @ u_x
    if compensate:
        theta = compensation_phase(mask.n_selected) + phase_offset
        u = embed(np.diag([1.0, np.exp(1j * theta), 1.0]), ["ancilla"], space) @ u
    block = logical_block(u, mask)
    leak = unitarity_error(block)
    if leak > 1e-8:
        raise CavityLeak(f"logical block deviates from unitarity by {leak:.3e}")
    return u


def logical_block(u: np.ndarray, mask: SelectionMask) -> np.ndarray:
    """Restriction of an ancilla (x) cavity (x) spins operator to ancilla {0,1}, cavity vacuum."""
    space = ancilla_space(mask)
    n_spin = 2**mask.n_spins
    rows = []
    for level in (0, 1):
        start = space.basis_index(ancilla=level, cavity=0)
        rows.extend(range(start, start + n_spin))
    return u[np.ix_(rows, rows)]


def controlled_string_target(mask: SelectionMask) -> np.ndarray:
    """|0><0|_A (x) I + |1><1|_A (x) U_z on ancilla {0,1} (x) spins."""
    n_spin = 2**mask.n_spins
    out = np.zeros((2 * n_spin, 2 * n_spin), dtype=complex)
    out[:n_spin, :n_spin] = np.eye(n_spin)
    out[n_spin:, n_spin:] = direct_string("z", mask)
    return out


def best_phase_deviation(block: np.ndarray, mask: SelectionMask) -> float:
    """Distance to U_2 after the best single ancilla phase on the |1> branch."""
    n_spin = 2**mask.n_spins
    u_z = direct_string("z", mask)
    b1 = block[n_spin:, n_spin:]
    phase = np.exp(-1j * np.angle(np.trace(u_z.conj().T @ b1)))
    fixed = block.copy()
    fixed[n_spin:, :] *= phase
    return operator_distance(fixed, controlled_string_target(mask))


# -- logical controlled gates and swaps -----------------------------------------


def controlled_pauli(axis: Literal["x", "z"]) -> np.ndarray:
    """|0><0|_A (x) I + |1><1|_A (x) S^axis on ancilla (x) TSQ logical qubit."""
    if axis not in ("x", "z"):
        raise ValueError("controlled Pauli axis must be 'x' or 'z'")
    p0 = np.diag([1.0, 0.0]).astype(complex)
    p1 = np.diag([0.0, 1.0]).astype(complex)
    return np.kron(p0, PAULI_I) + np.kron(p1, PAULIS[axis])


JOINT_SPACE = CompositeSpace((("ancilla", 2), ("tsq", 2)))
_H_A = np.kron(HADAMARD, PAULI_I)


def swap_in_gate() -> np.ndarray:
    # written right to left: U_cs^x acts first
    return _H_A @ controlled_pauli("z") @ _H_A @ controlled_pauli("x")


def swap_out_gate() -> np.ndarray:
    return controlled_pauli("x") @ _H_A @ controlled_pauli("z") @ _H_A


def _check_normalized(a: complex, b: complex):
    if abs(abs(a) ** 2 + abs(b) ** 2 - 1) > 1e-12:
        raise ValueError(f"amplitudes ({a}, {b}) are not normalized")


def swap_in(alpha: complex, beta: complex) -> StateVector:
    """Write (alpha|0> + beta|1>)_A into a memory initialised in |psi_+>."""
    _check_normalized(alpha, beta)
    psi = np.kron([alpha, beta], [1.0, 0.0])
    return StateVector(JOINT_SPACE, swap_in_gate() @ psi)


def swap_out(stored: Sequence[complex]) -> StateVector:
    """Read logical amplitudes ``stored`` out to an ancilla prepared in |0>_A."""
    a, b = stored
    _check_normalized(a, b)
    psi = np.kron([1.0, 0.0], [a, b])
    return StateVector(JOINT_SPACE, swap_out_gate() @ psi)


def memory_purity_after_swap_in(alpha: complex, beta: complex) -> float:
    rho = DensityMatrix.from_state(swap_in(alpha, beta))
    return partial_trace(rho, ["tsq"]).purity


def lift_to_physical(joint: StateVector, tsq: LogicalTsq) -> StateVector:
    """Map an ancilla (x) logical state to ancilla (x) the TSQ's physical space."""
    coeffs = joint.amplitudes.reshape(2, 2)
    basis = np.stack([v.amplitudes for v in tsq.basis])
    phys = coeffs @ basis
    space = CompositeSpace((("ancilla", 2),) + tsq.basis[0].space.subsystems)
    return StateVector(space, phys.ravel())


# -- diagnostic: physical strings on the midgap pair ------------------------------


@dataclass(frozen=True)
class StringProjection:
    matrix: np.ndarray
    nearest_pauli: str
    distance: float
    weight: float


def project_string_on_tsq(tsq: LogicalTsq, axis: Axis, mask: SelectionMask) -> StringProjection:
    """Single-particle string (sigma^axis on selected sites, I elsewhere) in the TSQ basis.

    Reports the 2x2 matrix, the closest of {I, X, Y, Z} up to a global phase
    and the distance to it. Diagnostic only: nothing is asserted.
    """
    space = tsq.basis[0].space
    n_sites = space.dim // 2
    if mask.n_spins != n_sites:
        raise ValueError(f"mask covers {mask.n_spins} spins, chain has {n_sites} sites")
    local = np.zeros((space.dim, space.dim), dtype=complex)
    for j, on in enumerate(mask.participating):
        local[2 * j : 2 * j + 2, 2 * j : 2 * j + 2] = PAULIS[axis] if on else PAULI_I
    v = np.stack([b.amplitudes for b in tsq.basis], axis=1)
    m = v.conj().T @ local @ v
    best = ("I", math.inf)
    for name, p in (("I", PAULI_I), ("X", PAULI_X), ("Y", PAULI_Y), ("Z", PAULI_Z)):
        phase = np.exp(1j * np.angle(np.trace(p.conj().T @ m)))
        d = operator_distance(m, phase * p)
        if d < best[1]:
            best = (name, d)
    return StringProjection(m, best[0], best[1], float(np.linalg.norm(m, 2)))


# -- verification report -----------------------------------------------------------


def _check(name: str, distance: float, tol: float, **extra) -> dict:
    return {"name": name, "distance": float(distance), "tolerance": tol, "passed": bool(distance <= tol), **extra}


def verification_report(
    n_max: int = 4,
    n_qnd_max: int = 6,
    trials: int = 100,
    seed: int = 0,
    qnd: QndParams | None = None,
    anc: AncillaParams | None = None,
    phase_offset: float = 0.0,
) -> dict:
    """Brute-force every gate identity; one entry per check with pass/fail."""
    qnd = qnd or QndParams(g=1.0, delta=10.0)
    anc = anc or AncillaParams(g_prime=1.0, omega_a=10.0, delta_prime=100.0)
    checks = []
    for n in range(1, n_qnd_max + 1):
        mask = SelectionMask.all(n)
        for n_c in (0, 1):
            d = operator_distance(qnd_unitary_brute_force(qnd, mask, n_c), qnd_unitary_closed_form(n, n_c))
            checks.append(_check(f"qnd_closed_form[N={n},n_c={n_c}]", d, 1e-10))
    for n in range(1, n_max + 1):
        mask = SelectionMask.all(n)
        for axis in ("x", "y", "z"):
            d = operator_distance(string_operator(axis, mask), direct_string(axis, mask))
            checks.append(_check(f"string_identity[{axis},N={n}]", d, 1e-12))
        block = logical_block(ancilla_sequence(qnd, anc, mask, phase_offset=phase_offset), mask)
        d = operator_distance(block, controlled_string_target(mask))
        checks.append(_check(f"controlled_string_sequence[N={n}]", d, 1e-8,
                             theta=compensation_phase(n) + phase_offset))
    rng = np.random.Generator(np.random.Philox(seed))
    roundtrip = operator_distance(swap_out_gate() @ swap_in_gate(), np.eye(4))
    checks.append(_check("swap_out_after_swap_in[operator]", roundtrip, 1e-12))
    worst_in = 0.0
    worst_purity = 0.0
    for _ in range(trials):
        v = rng.normal(size=2) + 1j * rng.normal(size=2)
        alpha, beta = v / np.linalg.norm(v)
        out = swap_in(alpha, beta).amplitudes
        worst_in = max(worst_in, float(np.max(np.abs(out - np.kron([1, 0], [alpha, beta])))))
        worst_purity = max(worst_purity, abs(1 - memory_purity_after_swap_in(alpha, beta)))
    checks.append(_check("swap_in_target_state[random]", worst_in, 1e-12, trials=trials))
    checks.append(_check("memory_purity_after_swap_in[random]", worst_purity, 1e-10, trials=trials))

    mask1 = SelectionMask.all(1)
    literal = ancilla_sequence(qnd, anc, mask1, transfer_time=math.pi / anc.lam, compensate=False)
    notes = {
        "transfer_time": {
            "used": "pi/(2*lambda)",
            "printed": "pi/lambda",
            "deviation_with_printed_time_best_phase": best_phase_deviation(logical_block(literal, mask1), mask1),
        },
        "y_string_conjugation": {
            "used": "V U_z V^+ with V = exp(+i pi/4 sigma_x) per site",
            "printed": "R = exp(-i pi/4 sigma_z), R U_z R",
            "printed_residual": printed_y_conjugation_residual(1),
        },
        "lambda": {"used": "g_prime*Omega_A/delta_prime", "value": anc.lam},
    }
    return {
        "checks": checks,
        "all_passed": all(c["passed"] for c in checks),
        "discrepancies": notes,
        "seed": seed,
    }
