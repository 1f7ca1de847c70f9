"""Scalar error budget for storing a superconducting qubit in the topological memory.

All rates are taken in one common unit (the quoted values 220, 10 and 1 are
all read as MHz without factors of 2*pi), which is what gives P = 4840.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Literal

import numpy as np

LossFigure = Literal["quoted", "bound", "sqrt", "at_delta"]

UNIT_NOTE = "g, gamma, kappa, delta share one unit (no 2*pi applied); P = g^2/(kappa*gamma) is unit-free"


def _check_probability(name: str, value: float) -> None:
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name}={value} is not a probability")


@dataclass(frozen=True)
class BudgetInputs:
    """Budget constants; ``None`` entries resolve to their design defaults.

    ``delta`` defaults to the loss-optimal detuning, ``omega_a`` to 10 g and
    ``delta_prime`` to 10 omega_a. ``loss_figure`` selects which photon-loss
    probability enters the controlled-operation fidelity; ``f_cs`` overrides
    that fidelity outright.
    """

    n_atoms: int = 5
    g: float = 220.0
    gamma: float = 10.0
    kappa: float = 1.0
    delta: float | None = None
    omega_a: float | None = None
    delta_prime: float | None = None
    epsilon_addr: float = 0.01
    p_interface: float = 0.01
    addressed_sites: int = 2
    loss_figure: LossFigure = "quoted"
    quoted_loss: float = 0.03
    f_cs: float | None = None
    f2: float = 0.95

    def __post_init__(self):
        if self.n_atoms < 0:
            raise ValueError("n_atoms must be non-negative")
        for name in ("g", "gamma", "kappa"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("delta", "omega_a", "delta_prime"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise ValueError(f"{name} must be positive")
        if self.addressed_sites < 0:
            raise ValueError("addressed_sites must be non-negative")
        if self.loss_figure not in ("quoted", "bound", "sqrt", "at_delta"):
            raise ValueError(f"unknown loss_figure {self.loss_figure!r}")
        for name in ("epsilon_addr", "p_interface", "quoted_loss", "f2"):
            _check_probability(name, getattr(self, name))
        if self.f_cs is not None:
            _check_probability("f_cs", self.f_cs)

    @property
    def resolved_omega_a(self) -> float:
        return 10 * self.g if self.omega_a is None else self.omega_a

    @property
    def resolved_delta_prime(self) -> float:
        return 10 * self.resolved_omega_a if self.delta_prime is None else self.delta_prime


@dataclass(frozen=True)
class BudgetReport:
    gamma_eff: float
    purcell_p: float
    tau: float
    delta: float
    p_loss_at_delta: float
    delta_star: float
    p_loss_min: float
    p_loss_sqrt: float
    p_loss_used: float
    f_cs_model: float
    f_cs: float
    f1: float
    f2: float
    f_total: float
    lattice_shift_ratio: float
    notes: tuple[str, ...] = ()
    audit: tuple[str, ...] = field(default=(), repr=False)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["notes"] = list(self.notes)
        d["audit"] = list(self.audit)
        return d


def effective_decay(gamma: float, g: float, delta: float) -> float:
    """Dispersively suppressed spontaneous emission rate gamma g^2 / delta^2."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    return gamma * g**2 / delta**2


def purcell(g: float, kappa: float, gamma: float) -> float:
    if not (kappa > 0 and gamma > 0):
        raise ValueError("kappa and gamma must be positive")
    return g**2 / (kappa * gamma)


def gate_time(g: float, delta: float) -> float:
    """QND gate time pi / (2 chi) with chi = g^2 / (2 delta)."""
    return math.pi * delta / g**2


def loss_probability(inputs: BudgetInputs, delta: float) -> float:
    """(kappa + N gamma_eff) tau at detuning ``delta``."""
    gamma_eff = effective_decay(inputs.gamma, inputs.g, delta)
    return (inputs.kappa + inputs.n_atoms * gamma_eff) * gate_time(inputs.g, delta)


def optimal_detuning(inputs: BudgetInputs) -> float:
    return inputs.g * math.sqrt(inputs.n_atoms * inputs.gamma / inputs.kappa)


def loss_scan(inputs: BudgetInputs, n_points: int = 400_001, span: float = 1000.0) -> tuple[float, float]:
    """Brute-force minimum of the loss over a log grid of detunings.

    The grid spans a factor ``span`` either side of g and never consults the
    analytic optimum.
    """
    deltas = np.geomspace(inputs.g / span, inputs.g * span, n_points)
    gamma_eff = inputs.gamma * inputs.g**2 / deltas**2
    losses = (inputs.kappa + inputs.n_atoms * gamma_eff) * np.pi * deltas / inputs.g**2
    i = int(np.argmin(losses))
    return float(deltas[i]), float(losses[i])


def photon_loss(inputs: BudgetInputs) -> tuple[float, float, float]:
    """Return (loss at the operating detuning, optimal detuning, minimal loss)."""
    delta_star = optimal_detuning(inputs)
    delta = delta_star if inputs.delta is None else inputs.delta
    p_min = 2 * math.pi * math.sqrt(inputs.n_atoms / purcell(inputs.g, inputs.kappa, inputs.gamma))
    return loss_probability(inputs, delta), delta_star, p_min


def controlled_op_fidelity(inputs: BudgetInputs, p_loss: float) -> float:
    """Independent-channel product (1-p_loss)(1-eps0)^sites(1-P_i)."""
    for name, value in (("p_loss", p_loss), ("epsilon_addr", inputs.epsilon_addr), ("p_interface", inputs.p_interface)):
        _check_probability(name, value)
    return (1 - p_loss) * (1 - inputs.epsilon_addr) ** inputs.addressed_sites * (1 - inputs.p_interface)


def memory_fidelity(f_cs: float) -> float:
    """Read and write each take two controlled operations."""
    _check_probability("f_cs", f_cs)
    return f_cs**2


def total_fidelity(f1: float, f2: float) -> float:
    _check_probability("f1", f1)
    _check_probability("f2", f2)
    return f1 * f2


def lattice_shift_check(n_atoms: int, g: float, delta: float, delta_prime: float) -> float:
    """Atom-induced cavity shift N g^2 / delta as a fraction of delta'."""
    if not (delta > 0 and delta_prime > 0):
        raise ValueError("delta and delta_prime must be positive")
    return n_atoms * g**2 / delta / delta_prime


def loss_discrepancy_note(inputs: BudgetInputs) -> str:
    p = purcell(inputs.g, inputs.kappa, inputs.gamma)
    bound = 2 * math.pi * math.sqrt(inputs.n_atoms / p)
    root = math.sqrt(inputs.n_atoms / p)
    return (
        f"DISCREPANCY: the quoted photon-loss figure of about 3% does not equal the bound "
        f"2*pi*sqrt(N/P) = {bound:.4f}; sqrt(N/P) = {root:.4f} matches it. Both are reported and "
        f"loss_figure selects which one enters f_cs."
    )


def build_report(inputs: BudgetInputs) -> BudgetReport:
    p = purcell(inputs.g, inputs.kappa, inputs.gamma)
    p_delta, delta_star, p_min = photon_loss(inputs)
    delta = delta_star if inputs.delta is None else inputs.delta
    p_sqrt = math.sqrt(inputs.n_atoms / p)
    used = {
        "quoted": inputs.quoted_loss,
        "bound": p_min,
        "sqrt": p_sqrt,
        "at_delta": p_delta,
    }[inputs.loss_figure]
    if not 0 <= used <= 1:
        raise ValueError(f"selected loss figure {inputs.loss_figure!r} = {used} is not a probability")
    f_cs_model = controlled_op_fidelity(inputs, used)
    f_cs = f_cs_model if inputs.f_cs is None else inputs.f_cs
    f1 = memory_fidelity(f_cs)
    f_total = total_fidelity(f1, inputs.f2)
    gamma_eff = effective_decay(inputs.gamma, inputs.g, delta)
    tau = gate_time(inputs.g, delta)
    shift = lattice_shift_check(inputs.n_atoms, inputs.g, delta, inputs.resolved_delta_prime)
    n, g, gam, kap = inputs.n_atoms, inputs.g, inputs.gamma, inputs.kappa
    audit = (
        f"P = g^2/(kappa*gamma) = {g!r}^2/({kap!r}*{gam!r}) = {p!r}",
        f"delta = {delta!r} ({'optimal' if inputs.delta is None else 'supplied'})",
        f"gamma_eff = gamma*g^2/delta^2 = {gam!r}*{g!r}^2/{delta!r}^2 = {gamma_eff!r}",
        f"tau = pi*delta/g^2 = pi*{delta!r}/{g!r}^2 = {tau!r}",
        f"P_loss(delta) = (kappa + N*gamma_eff)*tau = ({kap!r} + {n}*{gamma_eff!r})*{tau!r} = {p_delta!r}",
        f"delta* = g*sqrt(N*gamma/kappa) = {delta_star!r}",
        f"P_loss_min = 2*pi*sqrt(N/P) = 2*pi*sqrt({n}/{p!r}) = {p_min!r}",
        f"sqrt(N/P) = {p_sqrt!r}",
        f"loss figure '{inputs.loss_figure}' = {used!r}",
        f"f_cs model = (1-{used!r})*(1-{inputs.epsilon_addr!r})^{inputs.addressed_sites}*(1-{inputs.p_interface!r}) = {f_cs_model!r}",
        f"f_cs used = {f_cs!r} ({'model' if inputs.f_cs is None else 'override'})",
        f"F1 = f_cs^2 = {f1!r}",
        f"F = F1*F2 = {f1!r}*{inputs.f2!r} = {f_total!r}",
        f"shift ratio = (N*g^2/delta)/delta' = ({n}*{g!r}^2/{delta!r})/{inputs.resolved_delta_prime!r} = {shift!r}",
    )
    return BudgetReport(
        gamma_eff=gamma_eff,
        purcell_p=p,
        tau=tau,
        delta=delta,
        p_loss_at_delta=p_delta,
        delta_star=delta_star,
        p_loss_min=p_min,
        p_loss_sqrt=p_sqrt,
        p_loss_used=used,
        f_cs_model=f_cs_model,
        f_cs=f_cs,
        f1=f1,
        f2=inputs.f2,
        f_total=f_total,
        lattice_shift_ratio=shift,
        notes=(loss_discrepancy_note(inputs), UNIT_NOTE),
        audit=audit,
    )
