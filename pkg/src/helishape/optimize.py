"""Derivative-free search for low nu / eta domains in a constrained shape class.

The class fixes the volume ``V`` and a floor ``r0`` on the uniform ball
radius.  Candidates come from a parameterized family, are dilated exactly to
volume ``V`` and are evaluated on a voxel grid of spacing ``h``.  The ball
condition enters as a penalty with a ``2h`` margin; infeasible candidates
are never passed to the eigensolver.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize as nelder_mead
from scipy.stats import special_ortho_group

from .analytic import BALL_CURL_EIGENVALUE
from .errors import EmptyClassError, InvalidSpecError, ResolutionError
from .geometry.ballcond import ball_condition
from .geometry.io import spec_to_text
from .geometry.specs import UNIT_BALL_VOLUME, Ball, Ellipsoid, StarShaped, Torus, Union
from .geometry.voxel import VoxelDomain, equal_volume_ball_radius, normalize_components, rasterize
from .spectral import objective as spectral_objective

log = logging.getLogger(__name__)

FAMILIES = ("balls", "ellipsoids", "star", "tori", "unions")
OPTIMIZER_TOL = 1e-6


def _star_modes(degree: int) -> list[tuple[int, int]]:
    # l = 1 modes are (to first order) translations and carry no shape information
    return [(l, m) for l in range(2, degree + 1) for m in range(-l, l + 1)]


@dataclass(frozen=True)
class FeasibleClass:
    """``{Omega in family : |Omega| = V, uniform ball radius >= r0}``.

    ``degree`` is the star-shaped harmonic degree and ``k`` the number of
    balls in the unions family.  ``bounds`` overrides the per-parameter box.
    """

    r0: float
    V: float
    family: str = "ellipsoids"
    h: float = 0.1
    degree: int = 2
    k: int = 2
    bounds: tuple | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidSpecError(f"family must be one of {FAMILIES}, got {self.family!r}")
        if not (self.r0 > 0 and self.V > 0 and self.h > 0):
            raise InvalidSpecError("r0, V and h must be positive")
        if self.family == "unions" and self.k < 1:
            raise InvalidSpecError("unions need at least one ball")

    @property
    def empty(self) -> bool:
        return self.V < UNIT_BALL_VOLUME * self.r0**3

    @property
    def ball_radius(self) -> float:
        return equal_volume_ball_radius(self.V)

    @property
    def dimension(self) -> int:
        return {"balls": 0, "ellipsoids": 2, "tori": 1,
                "star": len(_star_modes(self.degree)), "unions": self.k - 1}[self.family]

    def box(self) -> np.ndarray:
        if self.bounds is not None:
            b = np.asarray(self.bounds, dtype=float).reshape(self.dimension, 2)
            return b
        default = {"ellipsoids": (-1.0, 1.0), "tori": (math.log(0.1), math.log(0.9)),
                   "star": (-0.3, 0.3), "unions": (-2.0, 2.0), "balls": (0.0, 0.0)}
        return np.tile(default[self.family], (self.dimension, 1))

    def start(self) -> np.ndarray:
        """The ball for families that contain it; a fat torus otherwise."""
        if self.family == "tori":
            return np.array([math.log(0.5)])
        return np.zeros(self.dimension)

    def decode(self, params) -> object:
        """Parameter vector to a spec at volume ``V``, centered at the origin."""
        p = np.clip(np.asarray(params, dtype=float), *self.box().T) if self.dimension else []
        fam = self.family
        if fam == "balls":
            spec = Ball((0, 0, 0), 1.0)
        elif fam == "ellipsoids":
            # nu and eta are rotation invariant, so only the sorted axes matter
            axes = sorted((math.exp(p[0]), math.exp(p[1]), 1.0), reverse=True)
            spec = Ellipsoid((0, 0, 0), tuple(axes))
        elif fam == "tori":
            spec = Torus((0, 0, 0), 1.0, math.exp(p[0]))
        elif fam == "star":
            spec = StarShaped((0, 0, 0), 1.0,
                              tuple((l, m, float(v)) for (l, m), v in zip(_star_modes(self.degree), p)))
        else:
            return self._union(np.concatenate([[0.0], p]))
        return rescale_to_volume(spec, self.V)

    def _union(self, logw: np.ndarray) -> Union:
        # Radii in the given ratios with total volume V, placed along x with
        # a gap that leaves room for exterior balls of radius r0.
        w = np.exp(logw)
        s = (self.V / (UNIT_BALL_VOLUME * np.sum(w**3))) ** (1 / 3)
        radii = s * w
        gap = 2 * self.r0 + 2 * self.h
        span = 2 * radii.sum() + gap * (len(radii) - 1)
        x = -span / 2
        balls = []
        for r in radii:
            balls.append(Ball((x + r, 0.0, 0.0), float(r)))
            x += 2 * r + gap
        return Union(tuple(balls))


def rescale_to_volume(spec, V: float):
    """Uniform dilation (about the spec's own center) to volume ``V``."""
    vol = spec.volume()
    if not vol > 0:
        raise InvalidSpecError("spec has no volume")
    s = (V / vol) ** (1 / 3)
    if isinstance(spec, Union):
        from .geometry.specs import spec_center

        c = spec_center(spec)
        return spec.translated(-c).scaled(s).translated(c)
    return spec.scaled(s)


@dataclass(frozen=True)
class FeasibilityReport:
    feasible: bool
    r_uniform: float
    margin: float  # r_uniform - (r0 - 2h); negative when infeasible
    class_empty: bool
    r_cap: float


def feasibility(spec, cls: FeasibleClass, h: float | None = None,
                domain: VoxelDomain | None = None) -> tuple[bool, FeasibilityReport]:
    """Flag ``r_uniform >= r0 - 2h`` on the rasterized spec."""
    h = h if h is not None else cls.h
    if cls.empty:
        return False, FeasibilityReport(False, 0.0, -math.inf, True, 0.0)
    d = domain if domain is not None else rasterize(spec, h)
    r_cap = max(2.0 * cls.r0, 2.0 * h)
    rep = ball_condition(d, r_cap)
    need = cls.r0 - 2 * h
    ok = rep.r_uniform >= need
    return ok, FeasibilityReport(bool(ok), rep.r_uniform, rep.r_uniform - need, False, r_cap)


@dataclass(frozen=True)
class Evaluation:
    params: tuple
    spec: object
    feasible: bool
    value: float  # the objective, or the penalized value when infeasible
    mu: float | None
    residual: float | None
    margin: float
    domain_hash: str

    def row(self) -> dict:
        return {
            "params": " ".join(repr(float(x)) for x in self.params),
            "feasible": self.feasible,
            "value": self.value,
            "mu": self.mu if self.mu is not None else "",
            "residual": self.residual if self.residual is not None else "",
            "margin": self.margin,
            "domain_hash": self.domain_hash,
        }


@dataclass
class OptimizerState:
    cls: FeasibleClass
    objective: str
    seed: int
    tol: float
    penalty_base: float
    simplex: np.ndarray | None = None
    evaluations: list = field(default_factory=list)
    best: Evaluation | None = None
    history: list = field(default_factory=list)  # best feasible value after each evaluation
    ball_value: float | None = None
    restarts: int = 0

    @property
    def n_evals(self) -> int:
        return len(self.evaluations)

    def best_spec_text(self) -> str:
        return spec_to_text(self.best.spec) if self.best is not None else ""


def penalty_base(cls: FeasibleClass) -> float:
    """Strict upper bound for any feasible value, used as the penalty floor.

    A feasible domain contains a ball of radius about ``r0 - 2h`` and both nu
    and eta decrease under inclusion, so feasible values stay below the
    eigenvalue of that ball; the factor 2 absorbs discretization error.
    """
    return 2.0 * BALL_CURL_EIGENVALUE / max(cls.r0 - 2 * cls.h, cls.h)


class _Evaluator:
    def __init__(self, cls: FeasibleClass, which: str, tol: float, seed: int, state: OptimizerState):
        self.cls, self.which, self.tol, self.seed, self.state = cls, which, tol, seed, state
        self._spectra: dict[str, tuple[float, float]] = {}

    def domain(self, spec) -> VoxelDomain:
        d = rasterize(spec, self.cls.h)
        if isinstance(spec, Union):
            d = normalize_components(d, _union_radius(spec) + 4 * self.cls.h)
        return d

    def spectrum(self, d: VoxelDomain) -> tuple[float, float]:
        key = d.digest()
        if key not in self._spectra:
            r = spectral_objective(d, self.which, self.tol, seed=self.seed)
            self._spectra[key] = (r.nu_or_eta, r.residual)
        return self._spectra[key]

    def __call__(self, params) -> Evaluation:
        params = np.asarray(params, dtype=float)
        if self.cls.dimension:
            params = np.clip(params, *self.cls.box().T)
        spec = self.cls.decode(params)
        d = self.domain(spec)
        try:
            ok, rep = feasibility(spec, self.cls, domain=d)
        except ResolutionError:
            ok, rep = False, FeasibilityReport(False, 0.0, -self.cls.r0, False, 0.0)
        if ok:
            mu, res = self.spectrum(d)
            ev = Evaluation(tuple(params), spec, True, mu, mu, res, rep.margin, d.digest())
        else:
            value = self.state.penalty_base + max(0.0, -rep.margin) / self.cls.h
            ev = Evaluation(tuple(params), spec, False, value, None, None, rep.margin, d.digest())
        st = self.state
        st.evaluations.append(ev)
        if ev.feasible and (st.best is None or ev.value < st.best.value):
            st.best = ev
        if st.best is not None:
            st.history.append(st.best.value)
        return ev


def _union_radius(spec: Union) -> float:
    return max(float(np.linalg.norm(m.center)) + m.radius for m in spec.members)


def _initial_simplex(x0: np.ndarray, step: float, rng: np.random.Generator) -> np.ndarray:
    n = len(x0)
    R = special_ortho_group.rvs(n, random_state=rng) if n > 1 else np.ones((1, 1))
    return np.vstack([x0, x0 + step * R.T])


def minimize(cls: FeasibleClass, which: str = "nu", budget: int = 40, seed: int = 0, *,
             tol: float = OPTIMIZER_TOL, step: float = 0.25, max_restarts: int = 3,
             init_retries: int = 8) -> OptimizerState:
    """Nelder-Mead over the family parameters with restart on stagnation.

    ``budget`` bounds the number of candidate evaluations.  The first vertex
    of the initial simplex is :meth:`FeasibleClass.start` (the ball where the
    family contains it); the others are a seeded random rotation of the
    coordinate steps.
    """
    if cls.empty:
        raise EmptyClassError(f"V={cls.V} is below the volume of a ball of radius r0={cls.r0}")
    if budget < 1:
        raise ValueError("budget must be positive")
    rng = np.random.default_rng(seed)
    state = OptimizerState(cls, which, seed, tol, penalty_base(cls))
    ev = _Evaluator(cls, which, tol, seed, state)

    ball = rescale_to_volume(Ball((0, 0, 0), 1.0), cls.V)
    bd = rasterize(ball, cls.h)
    state.ball_value = ev.spectrum(bd)[0]

    n = cls.dimension
    if n == 0:
        ev(np.zeros(0))
        if state.best is None:
            raise EmptyClassError("the ball is not feasible at this resolution")
        return state

    lo, hi = cls.box().T
    x0 = cls.start()
    simplex = np.clip(_initial_simplex(x0, step, rng), lo, hi)
    first = [ev(v) for v in simplex]
    retries = 0
    while state.best is None and retries < init_retries:
        retries += 1
        x = rng.uniform(lo, hi)
        simplex[np.argmax([e.value for e in first])] = x
        first.append(ev(x))
    if state.best is None:
        raise EmptyClassError(f"no feasible candidate among {state.n_evals} initial points")

    order = np.argsort([e.value for e in first[: n + 1]])
    simplex = simplex[order]
    lookup = {}

    def f(x):
        key = tuple(np.round(np.clip(x, lo, hi), 12))
        if key not in lookup:
            if state.n_evals >= budget:
                raise _BudgetExhausted
            lookup[key] = ev(x).value
        return lookup[key]

    for e in first:
        lookup[tuple(np.round(e.params, 12))] = e.value
    cur_step = step
    while state.n_evals < budget and state.restarts <= max_restarts:
        before = state.best.value
        try:
            res = nelder_mead(f, simplex[0], method="Nelder-Mead",
                              options={"initial_simplex": simplex, "xatol": 1e-3,
                                       "fatol": tol, "maxfev": budget})
            state.simplex = res.final_simplex[0]
        except _BudgetExhausted:
            break
        if state.best.value >= before - tol * abs(before) and state.restarts > 0:
            break
        state.restarts += 1
        cur_step *= 0.5
        best_x = np.asarray(state.best.params)
        simplex = np.clip(_initial_simplex(best_x, cur_step, rng), lo, hi)
    if state.simplex is None:
        state.simplex = simplex
    return state


class _BudgetExhausted(Exception):
    pass


def bound_tracker(state: OptimizerState) -> dict:
    """Best value against the universal lower bound ``1 / R(V)`` and the ball."""
    R = state.cls.ball_radius
    lower = 1.0 / R
    best = state.best.value
    feasible_values = [e.value for e in state.evaluations if e.feasible]
    infeasible_values = [e.value for e in state.evaluations if not e.feasible]
    return {
        "lower_bound": lower,
        "best": best,
        "gap": best - lower,
        "best_times_R": best * R,
        "ball_value": state.ball_value,
        "beats_ball": bool(state.ball_value is not None and best < state.ball_value),
        "penalty_calibrated": bool(not infeasible_values
                                   or min(infeasible_values) > max(feasible_values)),
        "n_evals": state.n_evals,
    }
