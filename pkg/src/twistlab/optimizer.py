"""Derivative-free maximization over unit-sphere directions.

Coarse grid scan followed by Nelder-Mead refinement from the best grid cells
plus fixed analytic seeds.  Everything is deterministic: no randomness is
used, so repeated runs are bit-identical.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.optimize import minimize

from .spin_core import Direction

# equatorial x / equatorial y / near-pole starts; asymptotically optimal axes
ANALYTIC_SEEDS = ((math.pi / 2, 0.0), (math.pi / 2, math.pi / 2), (1e-6, 0.0))


@dataclass(frozen=True)
class SphereDomain:
    """Rectangle in (polar, azimuth) space with a grid resolution per axis."""

    xi_lo: float = 0.0
    xi_hi: float = math.pi
    theta_lo: float = -math.pi
    theta_hi: float = math.pi
    xi_cells: int = 24
    theta_cells: int = 24

    def __post_init__(self) -> None:
        if not (0.0 <= self.xi_lo < self.xi_hi <= math.pi):
            raise ValueError("polar range must satisfy 0 <= lo < hi <= pi")
        if not (-math.pi <= self.theta_lo < self.theta_hi <= math.pi):
            raise ValueError("azimuth range must satisfy -pi <= lo < hi <= pi")
        if min(self.xi_cells, self.theta_cells) < 4:
            raise ValueError("grid resolution must be at least 4 per axis")

    def grid(self) -> tuple[np.ndarray, np.ndarray]:
        xi = np.linspace(self.xi_lo, self.xi_hi, self.xi_cells)
        th = np.linspace(self.theta_lo, self.theta_hi, self.theta_cells)
        return xi, th

    def contains(self, xi: float, theta: float) -> bool:
        return self.xi_lo <= xi <= self.xi_hi and self.theta_lo <= theta <= self.theta_hi


FULL_SPHERE = SphereDomain()
# azimuth restricted to (0, pi); used for joint rotation/readout searches
HEMISPHERE = SphereDomain(theta_lo=1e-6, theta_hi=math.pi)


@dataclass(frozen=True)
class SphereMaximum:
    direction: Direction
    xi: float
    theta: float
    value: float
    converged: bool
    skipped: int = 0


@dataclass(frozen=True)
class JointMaximum:
    rotation: Direction
    readout: Direction
    value: float
    converged: bool
    skipped: int = 0


def _evaluate(objective: Callable[[float, float], float], xi: float, theta: float) -> float:
    try:
        v = float(objective(xi, theta))
    except (ArithmeticError, FloatingPointError):
        return -math.inf
    return v if math.isfinite(v) else -math.inf


def maximize_on_sphere(
    objective: Callable[[Direction], float],
    domain: SphereDomain = FULL_SPHERE,
    extra_seeds: Iterable[tuple[float, float]] = (),
    top_cells: int = 3,
    maxiter: int = 200,
) -> SphereMaximum:
    """Maximize objective(direction); refined value never drops below the grid value."""

    def f(xi: float, theta: float) -> float:
        return objective(Direction.from_angles(xi, theta))

    xg, tg = domain.grid()
    values = np.empty((len(xg), len(tg)))
    skipped = 0
    for i, xi in enumerate(xg):
        for j, th in enumerate(tg):
            values[i, j] = _evaluate(f, xi, th)
            if not math.isfinite(values[i, j]):
                skipped += 1
    order = np.argsort(values, axis=None)[::-1]
    starts = [(float(xg[k // len(tg)]), float(tg[k % len(tg)])) for k in order[:top_cells]]
    starts += [s for s in ANALYTIC_SEEDS if domain.contains(*s)]
    starts += [s for s in extra_seeds if domain.contains(*s)]

    best_xi, best_theta = starts[0]
    best = values.flat[order[0]]
    converged = False
    bounds = [(domain.xi_lo, domain.xi_hi), (domain.theta_lo, domain.theta_hi)]
    for start in starts:
        res = minimize(lambda p: -_evaluate(f, p[0], p[1]), np.asarray(start),
                       method="Nelder-Mead", bounds=bounds,
                       options={"maxiter": maxiter, "fatol": 1e-10, "xatol": 1e-10})
        if -res.fun > best:
            best = -res.fun
            best_xi, best_theta = float(res.x[0]), float(res.x[1])
            converged = converged or bool(res.success)
        elif res.success:
            converged = True
    return SphereMaximum(Direction.from_angles(best_xi, best_theta),
                         best_xi, best_theta, float(best), converged, skipped)


def maximize_joint(
    objective: Callable[[Direction, Direction], float],
    domain_n: SphereDomain = HEMISPHERE,
    domain_m: SphereDomain = HEMISPHERE,
    extra_seeds: Sequence[tuple[float, float, float, float]] = (),
    restarts: int = 6,
    coarse_cells: int = 6,
    maxiter: int = 400,
) -> JointMaximum:
    """Maximize objective(rotation, readout) over the product of two sphere domains."""

    def f(p) -> float:
        try:
            v = float(objective(Direction.from_angles(p[0], p[1]), Direction.from_angles(p[2], p[3])))
        except (ArithmeticError, FloatingPointError):
            return -math.inf
        return v if math.isfinite(v) else -math.inf

    def axis(domain: SphereDomain, lo: float, hi: float) -> np.ndarray:
        return np.linspace(lo, hi, coarse_cells)

    xn = axis(domain_n, domain_n.xi_lo, domain_n.xi_hi)
    tn = axis(domain_n, domain_n.theta_lo, domain_n.theta_hi)
    xm = axis(domain_m, domain_m.xi_lo, domain_m.xi_hi)
    tm = axis(domain_m, domain_m.theta_lo, domain_m.theta_hi)
    skipped = 0
    scored: list[tuple[float, tuple[float, float, float, float]]] = []
    for a in xn:
        for b in tn:
            for c in xm:
                for d in tm:
                    v = f((a, b, c, d))
                    if not math.isfinite(v):
                        skipped += 1
                    scored.append((v, (float(a), float(b), float(c), float(d))))
    scored.sort(key=lambda s: s[0], reverse=True)

    starts = [p for _, p in scored[:max(1, restarts - len(extra_seeds))]]
    starts += [tuple(map(float, s)) for s in extra_seeds]
    starts = starts[:max(restarts, len(extra_seeds))]

    best_v, best_p = scored[0]
    converged = False
    bounds = [(domain_n.xi_lo, domain_n.xi_hi), (domain_n.theta_lo, domain_n.theta_hi),
              (domain_m.xi_lo, domain_m.xi_hi), (domain_m.theta_lo, domain_m.theta_hi)]
    for start in starts:
        res = minimize(lambda p: -f(p), np.asarray(start), method="Nelder-Mead", bounds=bounds,
                       options={"maxiter": maxiter, "maxfev": 2 * maxiter,
                                "fatol": 1e-10, "xatol": 1e-10, "adaptive": True})
        if -res.fun > best_v:
            best_v = -res.fun
            best_p = tuple(map(float, res.x))
            converged = converged or bool(res.success)
        elif res.success:
            converged = True
    return JointMaximum(Direction.from_angles(best_p[0], best_p[1]),
                        Direction.from_angles(best_p[2], best_p[3]),
                        float(best_v), converged, skipped)
