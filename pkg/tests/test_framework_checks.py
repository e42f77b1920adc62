from __future__ import annotations

import math

import numpy as np
import pytest

from helishape.biotsavart import helicity
from helishape.errors import PreconditionError
from helishape.fieldspace import magnetic_energy
from helishape.framework_checks import (
    PropertyReport,
    check_disjoint_minimality,
    check_outward_flow_continuity,
    check_reverse_monotonicity,
    check_translation_invariance,
    extend_by_zero,
    is_grid_aligned,
    lower_bound_constant,
    solve,
)
from helishape.geometry import Ball, Ellipsoid, Torus, rasterize
from helishape.transform import constant_generator, radial_generator

O = (0.0, 0.0, 0.0)
H = 0.1


def test_extension_by_zero_keeps_energy_and_helicity():
    inner, outer = rasterize(Ball(O, 0.6), H), rasterize(Ball(O, 1.0), H)
    B = solve(inner, "nu").eigenfield
    E = extend_by_zero(B, outer)
    assert magnetic_energy(E) == pytest.approx(magnetic_energy(B), rel=1e-12)
    assert helicity(E) == pytest.approx(helicity(B), rel=1e-10)
    with pytest.raises(PreconditionError):
        extend_by_zero(solve(outer, "nu").eigenfield, inner)


def test_monotonicity_matches_scaling_oracle(oracles):
    rep = check_reverse_monotonicity(Ball(O, 0.8), Ball(O, 1.0), "nu", h=H)
    assert rep.passed and rep.property == "monotonicity"
    nu1 = solve(rasterize(Ball(O, 1.0), H), "nu").nu_or_eta
    assert rep.slack == pytest.approx(1 / 0.8 - 1, abs=0.06)
    assert rep.details["mechanism_ok"]
    assert rep.details["extended_quotient"] >= nu1 * (1 - 1e-6)


def test_monotonicity_equal_domains_zero_slack():
    rep = check_reverse_monotonicity(Ball(O, 1.0), Ball(O, 1.0), "eta", h=H)
    assert rep.slack == 0.0 and rep.passed


def test_monotonicity_requires_inclusion():
    with pytest.raises(PreconditionError):
        check_reverse_monotonicity(Ball(O, 1.0), Ball(O, 0.8), "nu", h=H)


def test_outward_flow_sandwich_radial():
    rep = check_outward_flow_continuity(Ball(O, 1.0), radial_generator(4.0), which="nu", h=H)
    assert rep.passed
    vals = rep.details["values"]
    mu0 = rep.left
    assert all(v <= mu0 * (1 + 1e-9) for v in vals)
    assert vals[0] >= vals[1] >= vals[2]  # increasing toward mu0 as t decreases
    for t, v in zip(rep.details["times"], vals):
        assert abs(v - mu0) <= 2 * rep.details["C_hat"] * t * mu0
    assert rep.details["C_hat"] <= rep.details["C_bound"]


def test_outward_flow_rejects_inward_generator():
    inward = constant_generator((1.0, 0.0, 0.0), support_radius=4.0)
    with pytest.raises(PreconditionError):
        check_outward_flow_continuity(Ball(O, 1.0), inward, which="nu", h=H)


def test_disjoint_minimality_examples():
    same = check_disjoint_minimality(Ball(O, 1.0), Ball((2.6, 0, 0), 1.0), "nu", h=H)
    assert same.passed and abs(same.slack) < 1e-3
    small = check_disjoint_minimality(Ball(O, 1.0), Ball((2.0, 0, 0), 0.5), "nu", h=H)
    assert small.passed
    assert small.details["mu_2"] > small.details["mu_1"]
    with pytest.raises(PreconditionError):
        check_disjoint_minimality(Ball(O, 1.0), Ball((2.05, 0, 0), 1.0), "nu", h=H)


def test_translation_aligned_exact_and_unaligned_close():
    assert is_grid_aligned((0.3, 0.0, -0.2), H) and not is_grid_aligned((0.37, 0, 0), H)
    rep = check_translation_invariance(Ball(O, 1.0), (3 * H, 0.0, 0.0), "nu", h=H)
    assert rep.passed and abs(rep.slack) <= 1e-10
    rep0 = check_translation_invariance(Ball(O, 1.0), (0.0, 0.0, 0.0), "nu", h=H)
    assert rep0.slack == 0.0
    rep2 = check_translation_invariance(Ellipsoid(O, (1.3, 1.0, 0.7)), (0.37, 0.21, 0.11), "nu", h=H)
    assert rep2.tolerance == 0.03
    assert rep2.passed


def test_report_is_deterministic():
    a = check_translation_invariance(Ball(O, 1.0), (0.37, 0.21, 0.11), "nu", h=H)
    b = check_translation_invariance(Ball(O, 1.0), (0.37, 0.21, 0.11), "nu", h=H)
    assert a.row() == b.row()
    assert isinstance(a, PropertyReport)
    assert {"prov_h", "prov_domain_hash", "prov_shifted_hash", "prov_seed"} <= set(a.row())


def test_lower_bound_constant():
    triples = []
    for spec in (Ball(O, 1.0), Ellipsoid(O, (1.3, 1.0, 0.7)), Torus(O, 1.0, 0.4)):
        d = rasterize(spec, H)
        triples.append((d.volume(), solve(d, "nu").nu_or_eta, solve(d, "eta").nu_or_eta))
    out = lower_bound_constant(triples)
    assert out["nu_times_R_min"] >= 0.95
    assert out["constant"] >= 0.95 * (4 * math.pi / 3) ** (1 / 3)


def test_unknown_objective():
    with pytest.raises(ValueError):
        check_translation_invariance(Ball(O, 1.0), (0, 0, 0), "lambda", h=H)
