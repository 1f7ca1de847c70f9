"""Superconducting qubit -> atom state transfer through a two-cavity optomechanical chain.

Subsystems, first = most significant index:
``sc_qubit, microwave (b), mechanical (d), optical (a), atom``; every boson
is truncated at one quantum. That is exact here: the initial state holds at
most one excitation, the Hamiltonian conserves excitation number and every
collapse operator lowers it.

In the single-excitation sector the Hamiltonian is a five-site mirror
symmetric chain ``s -g- b -G2- d -G1- a -g- atom``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Literal, Sequence

import numpy as np

from .core import (
    CollapseChannel,
    CompositeSpace,
    DensityMatrix,
    HermitianOperator,
    StateVector,
    embed,
    evolve_lindblad,
    evolve_unitary,
    fidelity_pure,
    lowering,
    partial_trace,
)
from .errors import ConvergenceError

LABELS = ("sc_qubit", "microwave", "mechanical", "optical", "atom")
MIN_PEAK_SAMPLES = 600
# largest |eigenvalue| * dt for the default RK4 step
DEFAULT_STEP_PHASE = 0.01

Convention = Literal["linear", "angular", "mixed"]


@dataclass(frozen=True)
class TransferParams:
    """Couplings in angular frequency; light-matter ``g`` is shared by both qubits."""

    g: float
    g_big_1: float
    g_big_2: float
    k_order: int | None = None

    def __post_init__(self):
        if not self.g > 0:
            raise ValueError("g must be positive")
        if self.g_big_1 < 0 or self.g_big_2 < 0:
            raise ValueError("optomechanical couplings must be non-negative")
        if self.k_order is not None:
            r = self.g_big_1 / self.g
            if self.g_big_1 != self.g_big_2 or abs(2 * r * r - (4 * self.k_order**2 - 1)) > 1e-12 * max(1, r * r):
                raise ValueError(f"couplings do not satisfy the k={self.k_order} resonance")

    @property
    def r(self) -> float:
        if self.g_big_1 != self.g_big_2:
            raise ValueError("r = G/g needs G1 == G2")
        return self.g_big_1 / self.g

    def scaled_optomechanics(self, fraction: float) -> "TransferParams":
        """Both G scaled by (1 + fraction); the resonance tag is dropped."""
        return TransferParams(self.g, self.g_big_1 * (1 + fraction), self.g_big_2 * (1 + fraction))


@dataclass(frozen=True)
class DecayRates:
    kappa_a: float = 0.0
    kappa_b: float = 0.0
    kappa_d: float = 0.0
    gamma_a: float = 0.0
    gamma_s: float = 0.0

    def __post_init__(self):
        for name in ("kappa_a", "kappa_b", "kappa_d", "gamma_a", "gamma_s"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    def scaled(self, factor: float) -> "DecayRates":
        return DecayRates(*(factor * v for v in self.as_tuple()))

    def as_tuple(self) -> tuple[float, ...]:
        return (self.kappa_a, self.kappa_b, self.kappa_d, self.gamma_a, self.gamma_s)


@dataclass(frozen=True)
class TransferScenario:
    alpha: complex
    beta: complex
    t_final: float | None = None
    n_samples: int = MIN_PEAK_SAMPLES

    def __post_init__(self):
        if abs(abs(self.alpha) ** 2 + abs(self.beta) ** 2 - 1) > 1e-10:
            raise ValueError("|alpha|^2 + |beta|^2 must be 1")
        if self.n_samples < 1:
            raise ValueError("n_samples must be positive")


EQUATOR = TransferScenario(1 / math.sqrt(2), 1 / math.sqrt(2))

BENCHMARK_PRINTED = {"g": 6 * math.pi, "kappa_a": 1.0, "kappa_b": 1.0, "kappa_d": 0.1, "gamma_a": 0.1, "gamma_s": 0.1}


def benchmark_inputs(convention: Convention = "linear") -> tuple[float, DecayRates]:
    """Benchmark couplings in rad/us under a reading of the printed 'MHz' numbers.

    * ``linear``: every number is a linear frequency, multiplied by 2 pi.
    * ``angular``: every number is already angular.
    * ``mixed``: g = 6 pi is angular (g/2pi = 3 MHz) but the rates are linear.

    The first two share all ratios and so give identical F2(g t) curves.
    """
    p = BENCHMARK_PRINTED
    rates = DecayRates(p["kappa_a"], p["kappa_b"], p["kappa_d"], p["gamma_a"], p["gamma_s"])
    if convention == "linear":
        return 2 * math.pi * p["g"], rates.scaled(2 * math.pi)
    if convention == "angular":
        return p["g"], rates
    if convention == "mixed":
        return p["g"], rates.scaled(2 * math.pi)
    raise ValueError(f"unknown frequency convention {convention!r}")


def build_transfer_space() -> CompositeSpace:
    return CompositeSpace(tuple((label, 2) for label in LABELS))


def _ops(space: CompositeSpace) -> dict[str, np.ndarray]:
    low = lowering(2)
    return {label: embed(low, label, space) for label in LABELS}


def resonance_coupling(k_order: int, g: float) -> TransferParams:
    """G = g sqrt((4k^2 - 1)/2), so that 2 r^2 = 4 k^2 - 1."""
    if k_order < 1:
        raise ValueError("k_order must be >= 1")
    big = g * math.sqrt((4 * k_order**2 - 1) / 2)
    return TransferParams(g, big, big, k_order)


def nearest_resonance_order(r_target: float) -> int:
    """Integer k >= 1 whose resonant r is closest to ``r_target``."""
    k = max(1, round(math.sqrt((2 * r_target**2 + 1) / 4)))
    candidates = [c for c in (k - 1, k, k + 1) if c >= 1]
    return min(candidates, key=lambda c: abs(math.sqrt((4 * c * c - 1) / 2) - r_target))


def build_transfer_hamiltonian(p: TransferParams) -> HermitianOperator:
    space = build_transfer_space()
    o = _ops(space)
    s, b, d, a, at = (o[label] for label in LABELS)

    def exchange(x, y):
        return x.conj().T @ y + y.conj().T @ x

    h = p.g * exchange(b, s) + p.g * exchange(a, at) + p.g_big_1 * exchange(d, a) + p.g_big_2 * exchange(d, b)
    return HermitianOperator(space, h)


def excitation_number() -> np.ndarray:
    o = _ops(build_transfer_space())
    return sum(op.conj().T @ op for op in o.values())


def single_excitation_indices() -> list[int]:
    space = build_transfer_space()
    return [space.basis_index(**{label: 1}) for label in LABELS]


def single_excitation_spectrum(p: TransferParams) -> np.ndarray:
    idx = single_excitation_indices()
    h = build_transfer_hamiltonian(p).matrix[np.ix_(idx, idx)]
    return np.linalg.eigvalsh(h)


def closed_form_spectrum(p: TransferParams) -> np.ndarray:
    w = math.sqrt(p.g**2 + 2 * p.r**2 * p.g**2)
    return np.sort(np.array([-w, -p.g, 0.0, p.g, w]))


def collapse_channels(d: DecayRates) -> list[CollapseChannel]:
    o = _ops(build_transfer_space())
    pairs = [
        ("optical", d.kappa_a),
        ("microwave", d.kappa_b),
        ("mechanical", d.kappa_d),
        ("atom", d.gamma_a),
        ("sc_qubit", d.gamma_s),
    ]
    return [CollapseChannel(o[label], rate, label) for label, rate in pairs]


def initial_state(s: TransferScenario) -> StateVector:
    space = build_transfer_space()
    amps = np.zeros(space.dim, dtype=complex)
    amps[space.basis_index()] = s.alpha
    amps[space.basis_index(sc_qubit=1)] = s.beta
    return StateVector(space, amps)


def target_atom_state(s: TransferScenario) -> StateVector:
    return StateVector(CompositeSpace((("atom", 2),)), [s.alpha, s.beta])


def atom_fidelity(rho: DensityMatrix, s: TransferScenario) -> float:
    return fidelity_pure(target_atom_state(s), partial_trace(rho, ["atom"]))


def unitary_transfer(p: TransferParams, s: TransferScenario, t: float | None = None) -> float:
    """Closed-system F2 at ``t`` (default pi/g)."""
    t = math.pi / p.g if t is None else t
    psi = evolve_unitary(build_transfer_hamiltonian(p), initial_state(s), t)
    return atom_fidelity(DensityMatrix.from_state(psi), s)


@dataclass(frozen=True)
class TransferCurve:
    times: np.ndarray
    f2: np.ndarray
    excitation: np.ndarray
    g: float
    dt: float
    max_trace_error: float
    max_hermiticity_error: float
    halving_error: float | None

    @property
    def pi_g_t(self) -> np.ndarray:
        # literal "pi g t" axis; the transfer time t = pi/g sits at pi^2
        return math.pi * self.g * self.times

    @property
    def peak(self) -> float:
        return float(self.f2.max())

    @property
    def t_peak(self) -> float:
        return float(self.times[int(np.argmax(self.f2))])


def _sector_indices() -> list[int]:
    """Vacuum plus the five single-excitation states, which hold every state the dynamics reach."""
    return [build_transfer_space().basis_index()] + single_excitation_indices()


def _restrict(p: TransferParams, d: DecayRates):
    idx = _sector_indices()
    ix = np.ix_(idx, idx)
    space = CompositeSpace((("sector", len(idx)),))
    h = HermitianOperator(space, build_transfer_hamiltonian(p).matrix[ix])
    channels = []
    for ch in collapse_channels(d):
        full = ch.operator
        # the sector must be closed under every jump for the restriction to be exact
        leak = np.delete(full[:, idx], idx, axis=0)
        if np.any(leak != 0):
            raise RuntimeError(f"collapse operator {ch.label!r} leaves the low-excitation sector")
        channels.append(CollapseChannel(full[ix], ch.rate, ch.label))
    return idx, space, h, channels


def _default_substeps(p: TransferParams, d: DecayRates, interval: float) -> int:
    _, _, h, _ = _restrict(p, d)
    scale = float(np.max(np.abs(np.linalg.eigvalsh(h.matrix)))) + 2 * sum(d.as_tuple())
    return max(1, math.ceil(interval * scale / DEFAULT_STEP_PHASE))


def _lift(rho_sector: np.ndarray, idx: list[int]) -> DensityMatrix:
    space = build_transfer_space()
    full = np.zeros((space.dim, space.dim), dtype=complex)
    full[np.ix_(idx, idx)] = rho_sector
    return DensityMatrix(space, full)


def _run_curve(p, d, s, t_final, substeps, check):
    interval = t_final / s.n_samples
    dt = interval / substeps
    idx, sector, h, channels = _restrict(p, d)
    psi = initial_state(s).amplitudes
    if np.linalg.norm(np.delete(psi, idx)) > 0:
        raise ValueError("initial state lies outside the low-excitation sector")
    rho0 = DensityMatrix.from_state(StateVector(sector, psi[idx]))
    traj = evolve_lindblad(h, channels, rho0, t_final, dt, sample_every=substeps, check_convergence=check)
    states = [_lift(r.matrix, idx) for r in traj.states]
    f2 = np.array([atom_fidelity(r, s) for r in states])
    n_exc = excitation_number()
    exc = np.array([r.expect(n_exc) for r in states])
    if np.any(np.diff(exc) > 1e-9):
        raise RuntimeError("mean excitation number increased under dissipation")
    return traj, f2, exc, dt


def lindblad_transfer(
    p: TransferParams,
    d: DecayRates,
    s: TransferScenario = EQUATOR,
    dt: float | None = None,
    check_convergence: bool = True,
    tolerance: float = 1e-6,
) -> TransferCurve:
    """F2(t) over [0, t_final] (default 3 pi / g), sampled ``s.n_samples`` times.

    ``dt`` is an upper bound; the step is shrunk to divide the sample interval.
    With ``check_convergence`` the run is repeated at dt/2 and the change in
    peak F2 must stay below ``tolerance`` (else :class:`ConvergenceError`).
    """
    if s.n_samples < MIN_PEAK_SAMPLES:
        raise ValueError(f"peak detection needs n_samples >= {MIN_PEAK_SAMPLES}")
    t_final = 3 * math.pi / p.g if s.t_final is None else s.t_final
    interval = t_final / s.n_samples
    substeps = _default_substeps(p, d, interval) if dt is None else max(1, math.ceil(interval / dt - 1e-9))
    traj, f2, exc, step = _run_curve(p, d, s, t_final, substeps, False)
    halving = None
    if check_convergence:
        _, f2_fine, _, _ = _run_curve(p, d, s, t_final, 2 * substeps, False)
        halving = abs(float(f2_fine.max()) - float(f2.max()))
        if halving > tolerance:
            raise ConvergenceError(f"peak F2 moved by {halving:.3e} when halving dt={step:.3e}")
    return TransferCurve(
        times=traj.times,
        f2=f2,
        excitation=exc,
        g=p.g,
        dt=step,
        max_trace_error=traj.max_trace_error,
        max_hermiticity_error=traj.max_hermiticity_error,
        halving_error=halving,
    )


def _map(fn: Callable, items: Iterable, workers: int) -> list:
    items = list(items)
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def mismatch_sweep(
    p: TransferParams,
    d: DecayRates,
    s: TransferScenario,
    fractions: Sequence[float],
    workers: int = 1,
    **kwargs,
) -> list[tuple[float, float]]:
    """Peak F2 with both optomechanical couplings scaled by (1 + fraction)."""
    for f in fractions:
        if abs(f) > 0.5:
            raise ValueError(f"mismatch fraction {f} outside [-0.5, 0.5]")
    peaks = _map(lambda f: lindblad_transfer(p.scaled_optomechanics(f), d, s, **kwargs).peak, fractions, workers)
    return list(zip((float(f) for f in fractions), peaks))


@dataclass(frozen=True)
class LargeRRow:
    k_order: int
    r: float
    peak: float
    peak_without_mechanical_decay: float

    @property
    def gap(self) -> float:
        return self.peak_without_mechanical_decay - self.peak


def large_r_study(
    g: float, k_list: Sequence[int], d: DecayRates, s: TransferScenario = EQUATOR, workers: int = 1, **kwargs
) -> list[LargeRRow]:
    """Peak F2 with and without mechanical damping for each resonance order."""
    if not k_list:
        raise ValueError("k_list is empty")
    no_mech = replace(d, kappa_d=0.0)

    def row(k: int) -> LargeRRow:
        p = resonance_coupling(k, g)
        with_d = lindblad_transfer(p, d, s, **kwargs).peak
        without = with_d if d.kappa_d == 0 else lindblad_transfer(p, no_mech, s, **kwargs).peak
        return LargeRRow(k, p.r, with_d, without)

    return _map(row, k_list, workers)


def cardinal_scenarios() -> list[tuple[str, TransferScenario]]:
    h = 1 / math.sqrt(2)
    return [
        ("+z", TransferScenario(1, 0)),
        ("-z", TransferScenario(0, 1)),
        ("+x", TransferScenario(h, h)),
        ("-x", TransferScenario(h, -h)),
        ("+y", TransferScenario(h, 1j * h)),
        ("-y", TransferScenario(h, -1j * h)),
    ]


def bloch_sweep(p: TransferParams, d: DecayRates, workers: int = 1, **kwargs) -> list[tuple[str, float]]:
    scenarios = cardinal_scenarios()
    peaks = _map(lambda item: lindblad_transfer(p, d, item[1], **kwargs).peak, scenarios, workers)
    return [(name, peak) for (name, _), peak in zip(scenarios, peaks)]
