"""1D spin-orbit-coupled lattice: phase diagram, gap, edge modes and mass domains.

Single-particle basis is ``site (x) spin`` with spin index 0 = up, 1 = down,
so the amplitude of site ``j``, spin ``s`` sits at ``2*j + s``. Lattice
constant and hbar are 1 throughout; only :func:`hopping_integrals` sees
physical units.

In momentum space the chain reads ``H_k = -(d_z sigma_z + d_y sigma_y)`` with
``d_y = 2 t_so sin k`` and ``d_z = -gamma_z + 2 t_s cos k``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np
from scipy import integrate

from .core import PAULI_Y, PAULI_Z, CompositeSpace, HermitianOperator, StateVector
from .errors import DomainTooWeak, GapClosed, LeakageExceeded, NotTopological, QuadratureError

MAX_SITES = 10_000
WINDING_SNAP_TOL = 1e-3


@dataclass(frozen=True)
class LatticeParams:
    t_s: float
    t_so: float
    gamma_z: float
    n_sites: int
    boundary: Literal["open", "periodic"] = "open"

    def __post_init__(self):
        if not self.t_s > 0:
            raise ValueError(f"t_s must be positive, got {self.t_s}")
        if self.n_sites < 2:
            raise ValueError(f"need at least 2 sites, got {self.n_sites}")
        if self.boundary not in ("open", "periodic"):
            raise ValueError(f"boundary must be 'open' or 'periodic', got {self.boundary!r}")

    @property
    def is_topological(self) -> bool:
        return abs(self.gamma_z) < 2 * self.t_s and self.t_so != 0


@dataclass(frozen=True)
class BlochVector:
    k: float
    d_y: float
    d_z: float


@dataclass(frozen=True)
class DomainField:
    """Local Zeeman field ``gamma_0 * sigma_axis`` defining a TSQ segment.

    ``site_range`` is the inclusive segment ``[x1, x2]`` that hosts the qubit.
    The field is applied on every site *outside* it, which makes the rest of
    the chain trivial and leaves exactly two bound states, one at each end of
    the segment.
    """

    gamma_0: float
    axis: Literal["y", "z"]
    site_range: tuple[int, int]

    def __post_init__(self):
        if self.axis not in ("y", "z"):
            raise ValueError(f"axis must be 'y' or 'z', got {self.axis!r}")
        x1, x2 = (int(v) for v in self.site_range)
        if x1 > x2:
            raise ValueError(f"empty site range {self.site_range}")
        object.__setattr__(self, "site_range", (x1, x2))

    def field_sites(self, n_sites: int) -> list[int]:
        x1, x2 = self.site_range
        if x1 < 0 or x2 >= n_sites:
            raise ValueError(f"site range {self.site_range} outside chain of {n_sites} sites")
        return [j for j in range(n_sites) if j < x1 or j > x2]

    def with_amplitude(self, gamma_0: float) -> "DomainField":
        return DomainField(gamma_0, self.axis, self.site_range)


@dataclass(frozen=True)
class MidgapPair:
    """Two in-gap modes of a finite chain.

    ``energies`` are the two eigenvalues, sorted. ``states`` are the
    position-localized combinations of the two eigenvectors, ordered left to
    right (``|psi_+>``, ``|psi_->``); ``eigenstates`` are the energy
    eigenvectors in the order of ``energies``.
    """

    energies: tuple[float, float]
    states: tuple[StateVector, StateVector]
    eigenstates: tuple[StateVector, StateVector] = field(repr=False)
    splitting: float
    localization_lengths: tuple[float, float]

    @property
    def centers(self) -> tuple[float, float]:
        out = []
        for s in self.states:
            p = site_probabilities(s)
            out.append(float(p @ np.arange(len(p))))
        return tuple(out)


def chain_space(n_sites: int) -> CompositeSpace:
    return CompositeSpace((("site", n_sites), ("spin", 2)))


def _d_components(k, params: LatticeParams):
    return 2 * params.t_so * np.sin(k), -params.gamma_z + 2 * params.t_s * np.cos(k)


def bloch_vector(k: float, params: LatticeParams) -> BlochVector:
    if not -math.pi < k <= math.pi:
        raise ValueError(f"k={k} outside (-pi, pi]")
    d_y, d_z = _d_components(k, params)
    return BlochVector(k, float(d_y), float(d_z))


def _k_grid(n_k: int) -> np.ndarray:
    return np.linspace(-np.pi, np.pi, n_k + 1)


def winding_number(params: LatticeParams, n_k: int = 1024) -> int:
    """Revolutions of (d_y, d_z) about the origin across the Brillouin zone.

    Signed: +1 for ``t_so > 0`` inside ``|gamma_z| < 2 t_s``, -1 for
    ``t_so < 0``, 0 in the trivial phase.
    """
    if n_k < 64:
        raise ValueError(f"n_k must be >= 64, got {n_k}")
    if band_minimum(params) < 1e-9 * params.t_s:
        raise GapClosed(f"Bloch vector vanishes for {params}")
    d_y, d_z = _d_components(_k_grid(n_k), params)
    theta = np.arctan2(d_y, d_z)
    steps = np.angle(np.exp(1j * np.diff(theta)))
    w = steps.sum() / (2 * np.pi)
    nearest = round(w)
    if abs(w - nearest) > WINDING_SNAP_TOL:
        raise RuntimeError(f"winding {w} not near an integer; increase n_k")
    return int(nearest)


def bulk_gap(params: LatticeParams) -> float:
    """Closed-form bulk gap ``min(|2 t_s - |gamma_z||, 2|t_so|)``.

    This is exact when the smallest |d(k)| sits at k = 0, pi or pi/2, which
    covers ``gamma_z = 0`` and ``|t_so| >= t_s`` with ``|gamma_z| <= 2 t_s``.
    Elsewhere it can exceed the true gap (see :func:`band_minimum`).
    """
    return min(abs(2 * params.t_s - abs(params.gamma_z)), 2 * abs(params.t_so))


def band_minimum(params: LatticeParams) -> float:
    """Exact min_k |d(k)|.

    With c = cos k, |d|^2 = 4 t_so^2 (1 - c^2) + (2 t_s c - gamma_z)^2 is a
    quadratic in c, minimised over [-1, 1] at an end point or at its vertex.
    """
    t_s, t_so, gz = params.t_s, params.t_so, params.gamma_z

    def f(c):
        return 4 * t_so**2 * (1 - c * c) + (2 * t_s * c - gz) ** 2

    candidates = [f(-1.0), f(1.0)]
    curvature = t_s**2 - t_so**2
    if curvature > 0:
        vertex = t_s * gz / (2 * curvature)
        if -1 < vertex < 1:
            candidates.append(f(vertex))
    return math.sqrt(max(min(candidates), 0.0))


def bulk_gap_numeric(params: LatticeParams, n_k: int = 8192) -> float:
    """Half the minimum band separation, min_k |d(k)|, on a dense grid."""
    d_y, d_z = _d_components(_k_grid(n_k), params)
    return float(np.min(np.hypot(d_y, d_z)))


def build_open_chain(params: LatticeParams, domain: DomainField | None = None) -> HermitianOperator:
    """Real-space chain Hamiltonian (2N x 2N), periodic if ``params.boundary`` says so."""
    n = params.n_sites
    if n > MAX_SITES:
        raise ValueError(f"{n} sites exceeds the {MAX_SITES}-site guard")
    if domain is not None and params.boundary != "open":
        raise ValueError("mass domains require an open chain")
    h = np.zeros((2 * n, 2 * n), dtype=complex)
    up = np.arange(n) * 2
    dn = up + 1
    bonds = [(j, j + 1) for j in range(n - 1)]
    if params.boundary == "periodic" and n > 2:
        bonds.append((n - 1, 0))
    for i, j in bonds:
        h[2 * i, 2 * j] -= params.t_s
        h[2 * i + 1, 2 * j + 1] += params.t_s
        # t_so (c+_{i up} c_{j dn} - c+_{j up} c_{i dn}) for j = i + 1
        h[2 * i, 2 * j + 1] += params.t_so
        h[2 * j, 2 * i + 1] -= params.t_so
    h = h + h.conj().T
    h[up, up] = params.gamma_z
    h[dn, dn] = -params.gamma_z
    if domain is not None:
        local = domain.gamma_0 * (PAULI_Y if domain.axis == "y" else PAULI_Z)
        for j in domain.field_sites(n):
            h[2 * j : 2 * j + 2, 2 * j : 2 * j + 2] += local
    return HermitianOperator(chain_space(n), h)


def site_probabilities(state: StateVector) -> np.ndarray:
    return (np.abs(state.amplitudes) ** 2).reshape(-1, 2).sum(axis=1)


def _localization_length(prob: np.ndarray) -> float:
    """Decay length (sites) of the site probability away from its peak.

    Least-squares fit of log p against distance from the peak over a window
    of N/4 sites on either side.
    """
    n = len(prob)
    width = max(2, n // 4)
    j0 = int(np.argmax(prob))
    sites = np.arange(max(0, j0 - width), min(n, j0 + width + 1))
    p = prob[sites]
    # bipartite modes vanish on alternate sites; fit only the occupied ones
    mask = p > 1e-12 * p.max()
    if mask.sum() < 2:
        return float("nan")
    slope = np.polyfit(np.abs(sites - j0)[mask], np.log(p[mask]), 1)[0]
    return float(-1.0 / slope) if slope < 0 else float("inf")


def _pair_from_eigensystem(
    evals: np.ndarray, evecs: np.ndarray, space: CompositeSpace, idx: np.ndarray
) -> MidgapPair:
    idx = idx[np.argsort(evals[idx])]
    vecs = evecs[:, idx]
    n = space.dims[0]
    position = np.repeat(np.arange(n, dtype=float), 2)
    xproj = vecs.conj().T @ (position[:, None] * vecs)
    _, u = np.linalg.eigh(xproj)
    loc = vecs @ u
    states = []
    for col in range(2):
        v = loc[:, col]
        k = np.argmax(np.abs(v))
        v = v * np.exp(-1j * np.angle(v[k]))
        states.append(StateVector(space, v))
    probs = [site_probabilities(s) for s in states]
    lengths = (_localization_length(probs[0]), _localization_length(probs[1]))
    energies = (float(evals[idx[0]]), float(evals[idx[1]]))
    return MidgapPair(
        energies=energies,
        states=(states[0], states[1]),
        eigenstates=(StateVector(space, vecs[:, 0]), StateVector(space, vecs[:, 1])),
        splitting=abs(energies[1] - energies[0]),
        localization_lengths=lengths,
    )


def zero_modes(params: LatticeParams) -> MidgapPair:
    if params.boundary != "open":
        raise ValueError("zero modes need an open chain")
    if winding_number(params) == 0:
        raise NotTopological(f"trivial phase for {params}")
    H = build_open_chain(params)
    evals, evecs = np.linalg.eigh(H.matrix)
    idx = np.argsort(np.abs(evals))[:2]
    return _pair_from_eigensystem(evals, evecs, H.space, idx)


def check_domain(params: LatticeParams, domain: DomainField) -> None:
    """Raise :class:`DomainTooWeak` unless the field makes its region trivial.

    For a y-field the threshold is ``|gamma_0| > 2|t_so|``; a z-field adds to
    the uniform Zeeman term, so it needs ``|gamma_z + gamma_0| > 2 t_s``.
    """
    if domain.axis == "y":
        if abs(domain.gamma_0) <= 2 * abs(params.t_so):
            raise DomainTooWeak(f"|gamma_0|={abs(domain.gamma_0)} <= 2|t_so|={2 * abs(params.t_so)}")
    elif abs(params.gamma_z + domain.gamma_0) <= 2 * params.t_s:
        raise DomainTooWeak(
            f"|gamma_z + gamma_0|={abs(params.gamma_z + domain.gamma_0)} <= 2 t_s={2 * params.t_s}"
        )


def midgap_states(params: LatticeParams, domain: DomainField) -> MidgapPair:
    check_domain(params, domain)
    H = build_open_chain(params, domain)
    evals, evecs = np.linalg.eigh(H.matrix)
    idx = np.argsort(np.abs(evals))[:2]
    return _pair_from_eigensystem(evals, evecs, H.space, idx)


# -- time-dependent ramps ----------------------------------------------------


@dataclass(frozen=True)
class Ramp:
    """Piecewise-linear schedule of gamma_0 through ``(time, value)`` knots."""

    knots: tuple[tuple[float, float], ...]

    def __post_init__(self):
        knots = tuple((float(t), float(v)) for t, v in self.knots)
        if len(knots) < 2:
            raise ValueError("a ramp needs at least two knots")
        times = [t for t, _ in knots]
        if times[0] != 0 or any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("ramp knots must start at t=0 and strictly increase")
        object.__setattr__(self, "knots", knots)

    @classmethod
    def linear(cls, start: float, stop: float, duration: float) -> "Ramp":
        return cls(((0.0, start), (duration, stop)))

    @property
    def duration(self) -> float:
        return self.knots[-1][0]

    def __call__(self, t):
        times, values = zip(*self.knots)
        return np.interp(t, times, values)


@dataclass(frozen=True)
class RotationTrajectory:
    """Samples of the midgap two-level Bloch vector along a ramp.

    ``bloch[:, i]`` are the Pauli expectation values in the instantaneous
    localized basis (|psi_+>, |psi_->); their length is ``1 - leakage``.
    """

    times: np.ndarray
    gamma_0: np.ndarray
    bloch: np.ndarray
    leakage: np.ndarray
    splitting: np.ndarray


def _gauge_to(reference: np.ndarray | None, v: np.ndarray) -> np.ndarray:
    if reference is None:
        k = np.argmax(np.abs(v))
        return v * np.exp(-1j * np.angle(v[k]))
    return v * np.exp(-1j * np.angle(reference.conj() @ v))


def tsq_rotation(
    params: LatticeParams,
    domain: DomainField,
    ramp: Ramp,
    dt: float,
    sample_every: int = 1,
    max_leakage: float = 0.05,
) -> RotationTrajectory:
    """Evolve |psi_+> while the domain amplitude follows ``ramp``.

    Each step of length ``dt`` uses the Hamiltonian frozen at the step
    midpoint and is propagated exactly. The ramp must keep the domain above
    threshold throughout, since the midgap pair is re-identified at every
    sample.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    for _, value in ramp.knots:
        check_domain(params, domain.with_amplitude(value))
    n_steps = int(round(ramp.duration / dt))
    if abs(n_steps * dt - ramp.duration) > 1e-9 * ramp.duration:
        raise ValueError(f"ramp duration {ramp.duration} is not a multiple of dt={dt}")

    propagators: dict[float, np.ndarray] = {}

    def step_op(g0: float) -> np.ndarray:
        if g0 not in propagators:
            h = build_open_chain(params, domain.with_amplitude(g0)).matrix
            w, v = np.linalg.eigh(h)
            propagators[g0] = (v * np.exp(-1j * w * dt)) @ v.conj().T
        return propagators[g0]

    refs: list[np.ndarray | None] = [None, None]

    def sample(t: float, psi: np.ndarray):
        g0 = float(ramp(t))
        pair = midgap_states(params, domain.with_amplitude(g0))
        basis = []
        for i, s in enumerate(pair.states):
            v = _gauge_to(refs[i], s.amplitudes)
            refs[i] = v
            basis.append(v)
        c = np.array([b.conj() @ psi for b in basis])
        cross = np.conj(c[0]) * c[1]
        bloch = (2 * cross.real, 2 * cross.imag, abs(c[0]) ** 2 - abs(c[1]) ** 2)
        leak = 1.0 - float(np.sum(np.abs(c) ** 2))
        if leak > max_leakage:
            raise LeakageExceeded(f"leakage {leak:.3g} at t={t:.6g} exceeds {max_leakage}")
        return g0, bloch, leak, pair.splitting

    pair0 = midgap_states(params, domain.with_amplitude(float(ramp(0.0))))
    psi = np.array(pair0.states[0].amplitudes)
    rows = [(0.0, *sample(0.0, psi))]
    for step in range(1, n_steps + 1):
        t_mid = (step - 0.5) * dt
        psi = step_op(float(ramp(t_mid))) @ psi
        if step % sample_every == 0 or step == n_steps:
            rows.append((step * dt, *sample(step * dt, psi)))
    times = np.array([r[0] for r in rows])
    return RotationTrajectory(
        times=times,
        gamma_0=np.array([r[1] for r in rows]),
        bloch=np.array([r[2] for r in rows]),
        leakage=np.array([r[3] for r in rows]),
        splitting=np.array([r[4] for r in rows]),
    )


def fit_rotation_axis(bloch: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Axis normal to the best-fit plane of a Bloch trajectory, and the
    trajectory's components along it."""
    centered = bloch - bloch.mean(axis=0)
    _, _, vt = np.linalg.svd(centered)
    axis = vt[-1]
    return axis, bloch @ axis


# -- hopping integrals ---------------------------------------------------------


@dataclass(frozen=True)
class WannierInputs:
    """Microscopic lattice inputs, in any consistent units with hbar = 1.

    ``v0`` is the trap depth of V(x) = -v0 cos^2(2 k0 x); ``omega_rabi`` is the
    Raman Rabi amplitude and ``delta_one_photon`` its one-photon detuning.
    """

    v0: float
    k0: float
    mass: float
    omega_rabi: float
    delta_one_photon: float

    def __post_init__(self):
        if not self.v0 > 0:
            raise ValueError("v0 must be positive")
        if not (self.k0 > 0 and self.mass > 0):
            raise ValueError("k0 and mass must be positive")
        if self.omega_rabi != 0:
            ratio = abs(self.delta_one_photon) / abs(self.omega_rabi)
            if ratio < 5:
                raise ValueError(f"|Delta|/Omega = {ratio:.3g} < 5: far-detuned limit violated")
            if ratio < 10:
                warnings.warn(f"|Delta|/Omega = {ratio:.3g} < 10; far-detuned approximation is marginal")

    @classmethod
    def in_recoil_units(cls, v0: float, omega_rabi: float = 0.0, delta_one_photon: float = 1.0):
        """k0 = 1 and m = 1/2 so that the recoil energy k0^2/2m is 1."""
        return cls(v0=v0, k0=1.0, mass=0.5, omega_rabi=omega_rabi, delta_one_photon=delta_one_photon)

    @property
    def recoil_energy(self) -> float:
        return self.k0**2 / (2 * self.mass)

    @property
    def lattice_constant(self) -> float:
        return math.pi / (2 * self.k0)

    @property
    def trap_frequency(self) -> float:
        return math.sqrt(8 * self.v0 * self.k0**2 / self.mass)


def zeeman_from_detuning(delta_0: float) -> float:
    """Effective z Zeeman energy of a two-photon detuning, gamma_z = delta_0 / 2."""
    return delta_0 / 2


def _gaussian(inputs: WannierInputs):
    mw = inputs.mass * inputs.trap_frequency
    norm = (mw / math.pi) ** 0.25
    return mw, lambda x: norm * np.exp(-0.5 * mw * x * x)


def _quad(f, lo: float, hi: float, center: float) -> float:
    val, err = integrate.quad(f, lo, hi, points=[center], epsabs=0.0, epsrel=1e-10, limit=400)
    if err > 1e-8 * abs(val) + 1e-300 and err > 1e-14:
        raise QuadratureError(f"quadrature error estimate {err:.3e} for value {val:.3e}")
    return val


def spin_orbit_overlap(inputs: WannierInputs, shift: float = 0.0) -> float:
    """Overlap of sin(2 k0 x) between neighbouring Gaussians, the pair displaced by ``shift``."""
    mw, phi = _gaussian(inputs)
    a = inputs.lattice_constant
    width = 12 / math.sqrt(mw)
    center = shift + a / 2
    return _quad(
        lambda x: phi(x - shift) * math.sin(2 * inputs.k0 * x) * phi(x - shift - a),
        center - width,
        center + width,
        center,
    )


def hopping_integrals(inputs: WannierInputs) -> tuple[float, float]:
    """(t_s, t_so) in recoil energies from harmonic-oscillator Wannier functions.

    t_s is reported with the sign that makes it positive in the chain
    Hamiltonian (the bare matrix element is negative).
    """
    mw, phi = _gaussian(inputs)
    a = inputs.lattice_constant
    omega = inputs.trap_frequency
    width = 12 / math.sqrt(mw)

    def neighbour_energy(x):
        y = x - a
        # (p^2/2m) phi(y) for the Gaussian, written out analytically
        kinetic = (0.5 * omega - 0.5 * inputs.mass * omega**2 * y * y) * phi(y)
        potential = -inputs.v0 * math.cos(2 * inputs.k0 * x) ** 2 * phi(y)
        return phi(x) * (kinetic + potential)

    t_s = -_quad(neighbour_energy, a / 2 - width, a / 2 + width, a / 2)
    prefactor = inputs.omega_rabi**2 / inputs.delta_one_photon if inputs.omega_rabi else 0.0
    t_so = prefactor * spin_orbit_overlap(inputs) if prefactor else 0.0
    er = inputs.recoil_energy
    return t_s / er, t_so / er


def chain_spectrum(params: LatticeParams, domain: DomainField | None = None) -> np.ndarray:
    return np.linalg.eigvalsh(build_open_chain(params, domain).matrix)


def splitting_sweep(t_s: float, t_so: float, gamma_z: float, sizes: Sequence[int]) -> list[MidgapPair]:
    return [zero_modes(LatticeParams(t_s, t_so, gamma_z, n)) for n in sizes]
