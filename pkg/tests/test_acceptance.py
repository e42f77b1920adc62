"""Acceptance suite: the eight top-level criteria at grid spacing h = 0.05.

Each test records one PASS/FAIL line that is printed in the terminal summary.
Expensive solves are shared through the framework_checks solve cache.
"""
from __future__ import annotations

import itertools
import math

import numpy as np
import pytest

from helishape.analytic import spheromak
from helishape.biotsavart import helicity
from helishape.corpus import CONVEX, standard_corpus
from helishape.fieldspace import (
    Section,
    flux_through_section,
    harmonic_basis,
    project_div_free_tangent,
    sample,
)
from helishape.framework_checks import SOLVER_TOL, solve, standard_suite
from helishape.geometry import (
    Ball,
    Ellipsoid,
    ball_condition,
    diameter,
    equal_volume_ball_radius,
    hausdorff,
    packing_volume_bound,
    rasterize,
    spec_from_text,
)
from helishape.optimize import FeasibleClass, bound_tracker, feasibility, minimize
from helishape.spectral import objective
from helishape.transform import (
    FlowMap,
    energy_constant_bound,
    energy_estimate_check,
    image_domain,
    pullback_covector,
    pushforward,
    radial_generator,
)

H = 0.05
O = (0.0, 0.0, 0.0)


@pytest.fixture(scope="module")
def domains():
    return {name: rasterize(spec, H) for name, spec in standard_corpus().items()}


def smooth_field(seed: int):
    rng = np.random.default_rng(seed)
    C, k = rng.standard_normal((3, 4)), rng.standard_normal((3, 3))

    def f(p):
        return np.stack([C[i, 0] + C[i, 1] * np.sin(p @ k[i]) + C[i, 2] * p[:, (i + 1) % 3]
                         + C[i, 3] * p[:, i] ** 2 for i in range(3)], axis=1)

    return f


def test_ball_anchor(acceptance, oracles):
    root = oracles["tan_root"]
    errors = {"nu": [], "eta": []}
    for h in (0.1, 0.07, 0.05):
        d = rasterize(Ball(O, 1.0), h)
        for which in errors:
            errors[which].append(abs(solve(d, which).nu_or_eta - root) / root)
    ok = all(e[-1] <= 0.05 and e[0] > e[1] > e[2] for e in errors.values())
    detail = ", ".join(f"{w} errors {[round(x, 4) for x in e]}" for w, e in errors.items())
    assert acceptance(1, "ball eigenvalue anchor within 5%, monotone in h", ok, detail)


def test_isoperimetric_bound(acceptance, domains):
    products = {n: solve(d, "nu").nu_or_eta * equal_volume_ball_radius(d.volume())
                for n, d in domains.items()}
    ok = len(products) == 5 and min(products.values()) >= 0.95
    detail = ", ".join(f"{n}={v:.3f}" for n, v in products.items())
    assert acceptance(2, "nu * R >= 0.95 on the corpus", ok, detail)


def test_scaling_law(acceptance):
    rel = {}
    for name, spec, big in (("ball", Ball(O, 1.0), Ball(O, 2.0)),
                            ("ellipsoid", Ellipsoid(O, (1.3, 1.0, 0.7)),
                             Ellipsoid(O, (2.6, 2.0, 1.4)))):
        small = solve(rasterize(spec, H), "nu").nu_or_eta
        large = solve(rasterize(big, 2 * H), "nu").nu_or_eta
        rel[name] = abs(2 * large - small) / small
    ok = max(rel.values()) <= 0.02
    assert acceptance(3, "scaling nu(2 Omega) * 2 = nu(Omega) within 2%", ok,
                      ", ".join(f"{n} rel {v:.2e}" for n, v in rel.items()))


def test_property_suite(acceptance):
    reports = list(standard_suite(h=H, tol=0.05, objectives=("nu", "eta")))
    failed = [f"{n}/{r.objective}" for n, r in reports if not r.passed]
    kinds = {r.property for _, r in reports}
    ok = not failed and len(kinds) == 4 and len(reports) == 2 * 10
    detail = f"{len(reports)} reports" + (f", failed {failed}" if failed else "")
    assert acceptance(4, "monotonicity, outward flow, disjoint minimality, translation", ok,
                      detail)


def test_isomorphism_checks(acceptance):
    ball = rasterize(Ball(O, 1.0), H)
    gen = radial_generator(4.0)
    fm = FlowMap(gen, 0.05)
    img = image_domain(Ball(O, 1.0), fm, reference=ball)
    B = project_div_free_tangent(sample(ball, spheromak), 1e-10)
    H0, Ht = helicity(B), helicity(pushforward(B, fm, img).field)
    dh = abs(Ht - H0) / abs(H0)

    cut = lambda p: smooth_field(1)(p) * np.clip(1 - np.sum(p * p, axis=1), 0, None)[:, None]
    Bc = sample(ball, cut)
    F = smooth_field(2)
    lhs = pushforward(Bc, fm, img).raw.dot(sample(img, F))
    rhs = Bc.dot(pullback_covector(F, fm, ball))
    adj = abs(lhs - rhs) / abs(rhs)

    fe = FlowMap(gen, 0.04)
    reports = [energy_estimate_check(project_div_free_tangent(sample(ball, smooth_field(s)), 1e-10),
                                     fe, source=Ball(O, 1.0)) for s in range(6)]
    C = max(r.C for r in reports)
    bound = energy_constant_bound(gen, ball, 0.04)
    energy_ok = all(r.holds(C) for r in reports) and C <= bound
    ok = dh <= 0.05 and adj <= 0.02 and energy_ok
    assert acceptance(5, "helicity transport, adjoint identity, energy estimate", ok,
                      f"dH/H={dh:.2e}, adjoint rel={adj:.2e}, C={C:.2f} over {len(reports)} "
                      f"fields, a-priori bound {bound:.2f}")


def test_topology_and_zero_flux(acceptance, domains):
    dims = {n: harmonic_basis(domains[n]).dimension for n in ("ball", "torus")}
    torus = domains["torus"]
    Z = solve(torus, "eta").eigenfield
    sec = Section(axis=1, index=torus.dims[1] // 2 - 1, label=1)
    flux = abs(flux_through_section(Z, sec)) / (H**2 * np.abs(Z.values).sum())
    gaps = {}
    for n in CONVEX:
        nu, eta = solve(domains[n], "nu").nu_or_eta, solve(domains[n], "eta").nu_or_eta
        gaps[n] = abs(nu - eta) / nu
    ok = dims == {"ball": 0, "torus": 1} and flux <= SOLVER_TOL and max(gaps.values()) <= SOLVER_TOL
    assert acceptance(6, "harmonic dimensions, zero meridian flux, eta = nu on convex domains", ok,
                      f"dims={dims}, relative flux {flux:.1e}, max |nu-eta|/nu "
                      f"{max(gaps.values()):.1e}")


def test_packing_and_hausdorff(acceptance, domains):
    packing = {}
    for n, d in domains.items():
        r0 = ball_condition(d, 4.0).r_uniform
        packing[n] = (d.volume(), packing_volume_bound(diameter(d), r0))
    pack_ok = all(v >= b for v, b in packing.values())
    names = list(domains)
    dist = {(a, b): hausdorff(domains[a], domains[b]) for a in names for b in names}
    axioms_ok = all(dist[a, a] == 0.0 for a in names)
    axioms_ok &= all(math.isclose(dist[a, b], dist[b, a], abs_tol=1e-12) for a in names for b in names)
    axioms_ok &= all(dist[a, b] > 0 for a in names for b in names if a != b)
    axioms_ok &= all(dist[a, b] <= dist[a, c] + dist[c, b] + 2 * H
                     for a, b, c in itertools.product(names, repeat=3))
    ok = pack_ok and axioms_ok
    assert acceptance(7, "packing volume bound, Hausdorff metric axioms", ok,
                      ", ".join(f"{n} V={v:.2f}>={b:.3f}" for n, (v, b) in packing.items()))


def test_optimizer_contract(acceptance):
    V, r0 = 4 * math.pi / 3, 0.4
    notes, ok = [], True
    balls = minimize(FeasibleClass(r0, V, "balls", h=H), "nu", budget=4)
    ok &= isinstance(balls.best.spec, Ball) and math.isclose(balls.best.spec.radius, 1.0)
    runs = {"ellipsoids": minimize(FeasibleClass(r0, V, "ellipsoids", h=H), "nu", budget=14, seed=0),
            "tori": minimize(FeasibleClass(r0, V, "tori", h=0.1), "nu", budget=8, seed=0)}
    ell = runs["ellipsoids"]
    ok &= ell.best.value <= balls.best.value + ell.tol * balls.best.value
    for name, st in {"balls": balls, **runs}.items():
        ok &= all(b <= a for a, b in zip(st.history, st.history[1:]))
        ok &= st.best.feasible and st.best.margin >= 0
        ok &= all(feasibility(e.spec, st.cls)[0] == e.feasible for e in st.evaluations[:3])
        again = objective(rasterize(spec_from_text(st.best_spec_text()), st.cls.h), "nu", st.tol)
        rel = abs(again.nu_or_eta - st.best.value) / st.best.value
        ok &= rel <= 2 * st.tol
        ok &= bound_tracker(st)["penalty_calibrated"]
        notes.append(f"{name} best {st.best.value:.4f} in {st.n_evals} evals")
    assert acceptance(8, "optimizer contract", bool(ok), ", ".join(notes))
