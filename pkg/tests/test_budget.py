import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from topomem.budget import (
    BudgetInputs,
    build_report,
    controlled_op_fidelity,
    effective_decay,
    lattice_shift_check,
    loss_probability,
    loss_scan,
    memory_fidelity,
    photon_loss,
    purcell,
    total_fidelity,
)

QUOTED = BudgetInputs(delta=2200.0, f_cs=0.95)


class TestScalars:
    def test_effective_decay(self):
        assert effective_decay(10, 220, 2200) == pytest.approx(0.1)
        assert effective_decay(10, 220, 220) == pytest.approx(10)
        assert effective_decay(10, 1, 1e6) == pytest.approx(1e-11)

    def test_effective_decay_guard(self):
        with pytest.raises(ValueError):
            effective_decay(10, 220, 0)

    def test_purcell(self):
        assert purcell(220, 1, 10) == pytest.approx(4840)
        assert purcell(math.sqrt(10), 1, 10) == pytest.approx(1)
        assert purcell(440, 1, 10) == pytest.approx(4 * 4840)

    def test_purcell_guard(self):
        with pytest.raises(ValueError):
            purcell(220, 0, 10)

    def test_fidelity_composition(self):
        assert memory_fidelity(0.95) == pytest.approx(0.9025)
        assert total_fidelity(0.90, 0.95) == pytest.approx(0.855)
        assert total_fidelity(0.7, 1.0) == pytest.approx(0.7)

    @pytest.mark.parametrize("fn, args", [(memory_fidelity, (1.2,)), (total_fidelity, (0.5, -0.1))])
    def test_fidelity_bounds(self, fn, args):
        with pytest.raises(ValueError):
            fn(*args)

    def test_lattice_shift(self):
        g = 220.0
        assert lattice_shift_check(5, g, 10 * g, 100 * g) == pytest.approx(0.005)
        assert lattice_shift_check(0, g, 10 * g, 100 * g) == 0
        assert lattice_shift_check(5, g, 20 * g, 100 * g) == pytest.approx(0.0025)


class TestPhotonLoss:
    def test_minimum_matches_scan(self):
        _, delta_star, p_min = photon_loss(QUOTED)
        scan_delta, scan_min = loss_scan(QUOTED)
        assert p_min == pytest.approx(2 * math.pi * math.sqrt(5 / 4840), rel=1e-12)
        assert scan_min == pytest.approx(p_min, rel=1e-6)
        assert scan_delta == pytest.approx(delta_star, rel=1e-3)

    def test_value_is_about_twenty_percent(self):
        assert photon_loss(QUOTED)[2] == pytest.approx(0.20195, abs=1e-5)

    def test_optimum_consistency(self):
        _, delta_star, p_min = photon_loss(QUOTED)
        assert loss_probability(QUOTED, delta_star) == pytest.approx(p_min, rel=1e-12)

    def test_lossless_cavity_limit(self):
        inputs = BudgetInputs(kappa=1e-12)
        delta = 2200.0
        assert loss_probability(inputs, delta) == pytest.approx(5 * 10 * math.pi / delta, rel=1e-9)

    @settings(max_examples=40, deadline=None)
    @given(log_delta=st.floats(0, 6))
    def test_minimum_is_a_lower_bound(self, log_delta):
        delta = 10.0**log_delta
        assert loss_probability(QUOTED, delta) >= photon_loss(QUOTED)[2] * (1 - 1e-12)

    def test_convex(self):
        deltas = np.geomspace(10, 1e5, 400)
        losses = np.array([loss_probability(QUOTED, d) for d in deltas])
        # convex in delta: second differences on a uniform grid stay non-negative
        lin = np.linspace(100, 1e4, 400)
        second = np.diff([loss_probability(QUOTED, d) for d in lin], 2)
        assert np.all(second >= -1e-15)
        assert np.argmin(losses) not in (0, len(losses) - 1)

    def test_scan_resolution_stable(self):
        coarse, _ = loss_scan(QUOTED, n_points=100_001)
        fine, _ = loss_scan(QUOTED, n_points=200_001)
        step = math.log(1e6) / 100_000
        assert abs(math.log(coarse / fine)) <= step


class TestControlledOp:
    def test_quoted_inputs(self):
        assert controlled_op_fidelity(BudgetInputs(), 0.03) == pytest.approx(0.97 * 0.99**2 * 0.99)
        assert controlled_op_fidelity(BudgetInputs(), 0.03) == pytest.approx(0.941, abs=5e-4)

    def test_no_errors(self):
        assert controlled_op_fidelity(BudgetInputs(epsilon_addr=0, p_interface=0), 0) == 1

    @pytest.mark.parametrize("kwargs, p", [(dict(epsilon_addr=1.0), 0.0), (dict(p_interface=1.0), 0.0), ({}, 1.0)])
    def test_absorbing_failure(self, kwargs, p):
        assert controlled_op_fidelity(BudgetInputs(**kwargs), p) == 0

    def test_site_multiplicity(self):
        one = controlled_op_fidelity(BudgetInputs(addressed_sites=1), 0.0)
        two = controlled_op_fidelity(BudgetInputs(addressed_sites=2), 0.0)
        assert two == pytest.approx(one * 0.99)


class TestInputs:
    @pytest.mark.parametrize(
        "kwargs",
        [dict(g=0), dict(gamma=-1), dict(kappa=0), dict(delta=0.0), dict(epsilon_addr=1.5), dict(p_interface=-0.1),
         dict(f_cs=1.1), dict(loss_figure="guess"), dict(n_atoms=-1)],
    )
    def test_invariants(self, kwargs):
        with pytest.raises(ValueError):
            BudgetInputs(**kwargs)

    def test_resolved_defaults(self):
        inputs = BudgetInputs()
        assert inputs.resolved_omega_a == pytest.approx(2200)
        assert inputs.resolved_delta_prime == pytest.approx(22000)


class TestReport:
    def test_quoted_constants(self):
        r = build_report(QUOTED)
        assert r.purcell_p == pytest.approx(4840)
        assert r.gamma_eff == pytest.approx(0.1)
        assert r.f1 == pytest.approx(0.9025)
        assert r.f_total == pytest.approx(0.857375)
        assert r.lattice_shift_ratio == pytest.approx(0.005)
        assert r.p_loss_min <= r.p_loss_at_delta

    def test_discrepancy_reported(self):
        r = build_report(QUOTED)
        note = r.notes[0]
        assert "DISCREPANCY" in note and "3%" in note
        assert "0.2019" in note and "0.0321" in note

    @pytest.mark.parametrize(
        "figure, expected",
        [("quoted", 0.03), ("sqrt", math.sqrt(5 / 4840)), ("bound", 2 * math.pi * math.sqrt(5 / 4840))],
    )
    def test_loss_figure_selection(self, figure, expected):
        r = build_report(BudgetInputs(loss_figure=figure))
        assert r.p_loss_used == pytest.approx(expected)
        assert r.f_cs == pytest.approx(r.f_cs_model)

    def test_modelled_chain(self):
        r = build_report(BudgetInputs())
        assert r.f_cs == pytest.approx(0.94119003)
        assert r.f1 == pytest.approx(0.94119003**2)
        assert r.delta == pytest.approx(r.delta_star)

    def test_all_zero_errors(self):
        r = build_report(BudgetInputs(epsilon_addr=0, p_interface=0, quoted_loss=0, f2=1.0))
        assert r.f_cs == r.f1 == r.f_total == 1

    def test_fields_are_probabilities(self):
        r = build_report(BudgetInputs(loss_figure="at_delta", delta=5000.0))
        for name in ("p_loss_at_delta", "p_loss_min", "f_cs", "f1", "f2", "f_total"):
            assert 0 <= getattr(r, name) <= 1
        assert r.f_total <= min(r.f1, r.f2)

    def test_unphysical_selected_loss(self):
        with pytest.raises(ValueError):
            build_report(BudgetInputs(loss_figure="at_delta", delta=1e7))

    def test_deterministic_json(self):
        a = json.dumps(build_report(QUOTED).as_dict(), sort_keys=True)
        b = json.dumps(build_report(QUOTED).as_dict(), sort_keys=True)
        assert a == b

    def test_audit_trail_shows_substitutions(self):
        audit = build_report(QUOTED).audit
        assert audit[0] == "P = g^2/(kappa*gamma) = 220.0^2/(1.0*10.0) = 4840.0"
        assert any(line.startswith("F = F1*F2") for line in audit)
