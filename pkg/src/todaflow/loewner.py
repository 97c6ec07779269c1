"""Radial Loewner dynamics: slit growth from a circle.

The inverse map ``w(z, q)`` of a growing slit domain obeys

    dw/dq = w (eta(q) + w) / (eta(q) - w),   |eta(q)| = 1,

with ``q = log r`` the capacity time.  A family starts from the exterior of
the disk of radius ``exp(q0)`` (where ``z = exp(q0) * w``) and grows a slit
whose tip is the image of the driving point ``eta(q)``.  Forward maps are
recovered by integrating the same ODE backward along characteristics.

Integration is RK4 with substeps shrunk in proportion to the distance from
the driving singularity; a tracked point that comes within ``ABSORB_TOL`` of
``eta`` has been swallowed by the slit.  Points are integrated independently
(vectorized, no cross-point state), so results do not depend on evaluation
order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import laurent
from .errors import (
    InsufficientSamplesError,
    IntegrationBreakdownError,
    PointAbsorbedError,
)
from .laurent import LaurentMap

ABSORB_TOL = 1e-9
DEFAULT_BASE_STEP = 1e-3
TIP_OFFSET = 1e-4


class DrivingFunction:
    """Unimodular driving ``eta(q) = exp(i theta(q))``.

    Three constructions: a constant angle, linear interpolation through
    knots, and a seeded Brownian path built from fixed-grid increments with
    variance ``kappa * dq`` (reproducible and refinable).
    """

    def __init__(self, kind, theta0=0.0, knots=None, kappa=0.0, seed=0, dq_grid=1e-3,
                 q_range=(0.0, 1.0)):
        self.kind = kind
        self.theta0 = float(theta0)
        self.kappa = float(kappa)
        self.seed = int(seed)
        self.dq_grid = float(dq_grid)
        if kind == "constant":
            self._grid = None
        elif kind == "piecewise_linear":
            knots = sorted((float(q), float(th)) for q, th in knots)
            if len(knots) < 2:
                raise ValueError("piecewise-linear driving needs at least two knots")
            self._knot_q = np.array([q for q, _ in knots])
            self._knot_th = np.array([th for _, th in knots])
        elif kind == "brownian":
            if kappa < 0:
                raise ValueError("kappa must be non-negative")
            lo, hi = float(q_range[0]), float(q_range[1])
            if hi <= lo:
                raise ValueError("empty q range for the Brownian grid")
            n = int(np.ceil((hi - lo) / self.dq_grid)) + 1
            rng = np.random.default_rng(self.seed)
            increments = rng.normal(0.0, np.sqrt(self.kappa * self.dq_grid), size=n)
            self._grid_q = lo + self.dq_grid * np.arange(n + 1)
            self._grid_th = self.theta0 + np.concatenate([[0.0], np.cumsum(increments)])
        else:
            raise ValueError(f"unknown driving kind {kind!r}")

    @classmethod
    def constant(cls, theta0=0.0):
        return cls("constant", theta0=theta0)

    @classmethod
    def piecewise_linear(cls, knots):
        return cls("piecewise_linear", knots=knots)

    @classmethod
    def brownian(cls, kappa, seed, dq_grid=1e-3, q_range=(0.0, 1.0)):
        return cls("brownian", kappa=kappa, seed=seed, dq_grid=dq_grid, q_range=q_range)

    def theta(self, q):
        q = np.asarray(q, dtype=float)
        if self.kind == "constant":
            out = np.full(q.shape, self.theta0)
        elif self.kind == "piecewise_linear":
            out = np.interp(q, self._knot_q, self._knot_th)
        else:
            out = np.interp(q, self._grid_q, self._grid_th)
        return out if out.ndim else float(out)

    def eta(self, q):
        return np.exp(1j * np.asarray(self.theta(q)))


@dataclass(frozen=True)
class LoewnerFamily:
    """A driving function plus the capacity interval it acts on."""

    q0: float
    q_max: float
    driving: DrivingFunction
    z_samples: tuple = field(default_factory=tuple)
    base_step: float = DEFAULT_BASE_STEP

    def __post_init__(self):
        if self.q_max <= self.q0:
            raise ValueError("q_max must exceed q0")
        r0 = np.exp(self.q0)
        for z in self.z_samples:
            if abs(z) <= r0:
                raise ValueError(f"tracked point {z} does not start outside radius {r0}")

    @property
    def r0(self) -> float:
        return float(np.exp(self.q0))


def default_family(q0=0.0, q_max=0.5, driving=None, n_tracked=12, seed_angle=0.37,
                   radius_factor=3.0, base_step=DEFAULT_BASE_STEP) -> LoewnerFamily:
    """Family with a ring of tracked points placed off the likely slit path."""
    if driving is None:
        driving = DrivingFunction.constant(0.0)
    r0 = np.exp(q0)
    angles = seed_angle + 2.0 * np.pi * np.arange(n_tracked) / n_tracked
    pts = tuple(radius_factor * r0 * np.exp(1j * angles))
    return LoewnerFamily(q0=q0, q_max=q_max, driving=driving, z_samples=pts,
                         base_step=base_step)


@dataclass
class AdvanceResult:
    """Batch integration outcome: final points, absorption flags and times."""

    w: np.ndarray
    absorbed: np.ndarray
    q_absorbed: np.ndarray
    min_eta_distance: np.ndarray


def _loewner_rhs(w, eta):
    return w * (eta + w) / (eta - w)


def _integrate(w0, q_from, q_to, driving, base_step=DEFAULT_BASE_STEP,
               absorb_tol=ABSORB_TOL, max_steps=5_000_000) -> AdvanceResult:
    """March every point independently, with per-point adaptive substeps.

    Absorption fires when a point enters the ``absorb_tol`` ball around the
    driving point, or when a step carries it inside the unit disk (the step
    law ``h ~ |eta - w|`` decrements the distance by a fixed amount per step
    near the singularity, so a swallowed trajectory crosses rather than
    converges); in the first case the reported absorption ``q`` includes the
    asymptotic time-to-contact ``|eta - w|^2 / 4``.
    """
    w = np.atleast_1d(np.asarray(w0, dtype=complex)).copy()
    npts = len(w)
    q = np.full(npts, float(q_from))
    absorbed = np.zeros(npts, dtype=bool)
    q_abs = np.full(npts, np.nan)
    min_dist = np.full(npts, np.inf)
    direction = 1.0 if q_to >= q_from else -1.0
    steps = 0
    while True:
        idx = np.flatnonzero((np.abs(q_to - q) > 1e-15) & ~absorbed)
        if len(idx) == 0:
            break
        wi, qi = w[idx], q[idx]
        eta_i = driving.eta(qi)
        dist = np.abs(eta_i - wi)
        min_dist[idx] = np.minimum(min_dist[idx], dist)
        hit = dist < absorb_tol
        if np.any(hit):
            absorbed[idx[hit]] = True
            q_abs[idx[hit]] = qi[hit] + direction * dist[hit] ** 2 / 4.0
            keep = ~hit
            idx, wi, qi, dist = idx[keep], wi[keep], qi[keep], dist[keep]
            if len(idx) == 0:
                continue
        h = base_step * np.minimum(1.0, dist / 4.0)
        h = np.minimum(h, np.abs(q_to - qi)) * direction
        k1 = _loewner_rhs(wi, driving.eta(qi))
        k2 = _loewner_rhs(wi + 0.5 * h * k1, driving.eta(qi + 0.5 * h))
        k3 = _loewner_rhs(wi + 0.5 * h * k2, driving.eta(qi + 0.5 * h))
        k4 = _loewner_rhs(wi + h * k3, driving.eta(qi + h))
        w_new = wi + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
        dead = ~np.isfinite(w_new) | (np.abs(w_new) < 1.0 - 1e-6)
        if np.any(dead):
            absorbed[idx[dead]] = True
            q_abs[idx[dead]] = qi[dead]
            min_dist[idx[dead]] = 0.0
        w[idx] = np.where(dead, wi, w_new)
        q[idx] = np.where(dead, qi, qi + h)
        steps += 1
        if steps > max_steps:
            raise IntegrationBreakdownError(f"integration exceeded {max_steps} substeps")
    return AdvanceResult(w=w, absorbed=absorbed, q_absorbed=q_abs, min_eta_distance=min_dist)


def advance_inverse(w, q_from: float, q_to: float, driving: DrivingFunction,
                    base_step: float = DEFAULT_BASE_STEP):
    """Integrate the inverse-map ODE from ``q_from`` to ``q_to``.

    Accepts a scalar or an array of starting points with ``|w| > 1``.  A
    swallowed point raises :class:`PointAbsorbedError` carrying the
    absorption ``q`` (for arrays, the first absorbed point's).
    """
    scalar = np.isscalar(w) or np.asarray(w).ndim == 0
    res = _integrate(w, q_from, q_to, driving, base_step)
    if np.any(res.absorbed):
        q_hit = float(np.nanmin(res.q_absorbed))
        raise PointAbsorbedError(
            f"point swallowed by the slit at q = {q_hit:.6f}", q_absorbed=q_hit
        )
    return complex(res.w[0]) if scalar else res.w


def advance_many(w, q_from: float, q_to: float, driving: DrivingFunction,
                 base_step: float = DEFAULT_BASE_STEP) -> AdvanceResult:
    """Batch variant of :func:`advance_inverse` reporting per-point absorption."""
    return _integrate(w, q_from, q_to, driving, base_step)


def forward_map(w, q: float, family: LoewnerFamily):
    """Forward map ``z(w, q)``: backward characteristics down to the initial disk.

    ``z(w, q0) = exp(q0) * w``; for ``q > q0`` the point is carried backward
    by the inverse ODE and then pushed through the initial map.
    """
    if not (family.q0 <= q <= family.q_max + 1e-12):
        raise ValueError(f"q = {q} outside family range [{family.q0}, {family.q_max}]")
    scalar = np.isscalar(w) or np.asarray(w).ndim == 0
    if q == family.q0:
        z = family.r0 * np.asarray(w, dtype=complex)
        return complex(z) if scalar else z
    res = _integrate(w, q, family.q0, family.driving, family.base_step)
    if np.any(res.absorbed):
        raise IntegrationBreakdownError("backward characteristic hit the driving point")
    z = family.r0 * res.w
    return complex(z[0]) if scalar else z


def slit_trace(family: LoewnerFamily, q_grid) -> np.ndarray:
    """Tip positions along the run: images of the driving point.

    The tip at each ``q`` is evaluated at two small radial offsets from
    ``eta(q)`` and Richardson-extrapolated (the offset enters quadratically
    at a simple critical point).
    """
    q_grid = np.atleast_1d(np.asarray(q_grid, dtype=float))
    tips = np.empty(len(q_grid), dtype=complex)
    for i, q in enumerate(q_grid):
        eta = family.driving.eta(q)
        t1 = forward_map(eta * (1.0 + TIP_OFFSET), q, family)
        t2 = forward_map(eta * (1.0 + 0.5 * TIP_OFFSET), q, family)
        tips[i] = (4.0 * t2 - t1) / 3.0
    return tips


@dataclass(frozen=True)
class EtaEstimate:
    eta: complex
    spread: float
    n_alive: int


def extract_eta(family: LoewnerFamily, q: float, dq: float = 1e-3) -> EtaEstimate:
    """Recover the driving value at ``q`` from the tracked exterior points.

    For each surviving tracked point, ``d log w / dq`` is estimated by a
    central difference and inverted through

        eta = -w (1 + d log w/dq) / (1 - d log w/dq),

    which must come out the same for every point; the spread over points is
    returned as a consistency diagnostic.
    """
    if not family.z_samples:
        raise InsufficientSamplesError("family tracks no points")
    if not (family.q0 < q - dq and q + dq <= family.q_max + 1e-12):
        raise ValueError("q +/- dq must lie inside the family range")
    w0 = np.asarray(family.z_samples, dtype=complex) / family.r0
    lo = _integrate(w0, family.q0, q - dq, family.driving, family.base_step)
    mid = _integrate(lo.w, q - dq, q, family.driving, family.base_step)
    hi = _integrate(mid.w, q, q + dq, family.driving, family.base_step)
    alive = ~(lo.absorbed | mid.absorbed | hi.absorbed)
    if np.count_nonzero(alive) < 2:
        raise InsufficientSamplesError(
            f"only {np.count_nonzero(alive)} tracked points survive at q = {q}"
        )
    dlogw = np.log(hi.w[alive] / lo.w[alive]) / (2.0 * dq)
    eta_pts = -mid.w[alive] * (1.0 + dlogw) / (1.0 - dlogw)
    eta_hat = complex(np.mean(eta_pts))
    spread = float(np.max(np.abs(eta_pts - eta_hat)))
    return EtaEstimate(eta=eta_hat, spread=spread, n_alive=int(np.count_nonzero(alive)))


def fitted_radius(family: LoewnerFamily, q: float, w_small=1e2, w_large=1e3) -> float:
    """Leading coefficient of ``z(., q)`` from two far-field evaluations."""
    v1 = forward_map(complex(w_small), q, family)
    v2 = forward_map(complex(w_large), q, family)
    r = (v2 - v1) / (w_large - w_small)
    return float(r.real)


def fit_map(family: LoewnerFamily, q: float, order: int = 10, radius: float = 2.0,
            n: int = 128) -> LaurentMap:
    """Truncated Laurent fit of ``z(., q)`` from samples on ``|w| = radius``."""
    theta = 2.0 * np.pi * np.arange(n) / n
    ws = radius * np.exp(1j * theta)
    z = forward_map(ws, q, family)
    modes = np.fft.fft(z) / n
    r = (modes[1] / radius).real
    coeffs = np.array([modes[-j % n] * radius ** j for j in range(order + 1)], dtype=complex)
    return LaurentMap(r, coeffs)


def boundary_bracket(family: LoewnerFamily, q: float, dt0: float = 1e-3,
                     dtheta: float = 1e-4, n: int = 128, safety: float = 0.05,
                     erode: int = 3):
    """Poisson bracket ``{z, zbar}`` of the family on the unit circle.

    The capacity is used as the t0 axis (``dq/dt0 = 1``).  Boundary nodes
    whose backward characteristics pass within ``safety`` of the driving
    point are masked out: those are the slit points, where the history of
    the parametrization runs into the tip singularity.  The valid set is
    then eroded by ``erode`` grid slots, because finite-difference stencils
    adjacent to the slit arc straddle the critical trajectory and produce
    junk derivatives.  Returns ``(bracket values, valid mask)`` over the
    ``n``-point grid; masked entries are NaN.
    """
    if not (family.q0 < q - dt0 and q + dt0 <= family.q_max + 1e-12):
        raise ValueError("q +/- dt0 must lie inside the family range")
    theta = 2.0 * np.pi * np.arange(n) / n

    def z_batch(offsets_theta, q_target):
        starts = np.exp(1j * (theta + offsets_theta))
        res = _integrate(starts, q_target, family.q0, family.driving, family.base_step)
        z = family.r0 * res.w
        bad = res.absorbed | (res.min_eta_distance < safety)
        return z, bad

    z_tp, bad1 = z_batch(+dtheta, q)
    z_tm, bad2 = z_batch(-dtheta, q)
    z_qp, bad3 = z_batch(0.0, q + dt0)
    z_qm, bad4 = z_batch(0.0, q - dt0)
    valid = ~(bad1 | bad2 | bad3 | bad4)
    for _ in range(max(erode, 0)):
        valid = valid & np.roll(valid, 1) & np.roll(valid, -1)
    dz_dlogw = -1j * (z_tp - z_tm) / (2.0 * dtheta)
    dz_dt = (z_qp - z_qm) / (2.0 * dt0)
    dzbar_dlogw = -1j * (np.conj(z_tp) - np.conj(z_tm)) / (2.0 * dtheta)
    dzbar_dt = (np.conj(z_qp) - np.conj(z_qm)) / (2.0 * dt0)
    bracket = dz_dlogw * dzbar_dt - dz_dt * dzbar_dlogw
    bracket[~valid] = np.nan
    return bracket, valid
