"""Hydrodynamic transport of the capacity along the higher flows.

For a rank-1 family, every deformation time enters through the single
function ``q``; its dependence on the harmonic times is a quasilinear
transport equation

    dq/ds = c(q) dq/dt0,    c_k(q) = 2 Re phi_k(eta(q)),

solved here by straight characteristics: the value at ``(t0, s)`` is the
initial value at ``t0 + c(q) s``, found by an implicit Newton solve per
node.  Characteristic crossing (the gradient catastrophe) ends the classical
solution; the solver refuses to run past it.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import PchipInterpolator

from . import laurent, loewner
from .errors import ShockError

_FD_STEP = 1e-6


def _read_two_columns(path, names):
    with open(path, newline="", encoding="utf-8") as handle:
        rows = list(csv.reader(handle))
    if rows and not _is_number(rows[0][0]):
        header = [c.strip() for c in rows[0]]
        if header[:2] != list(names):
            raise ValueError(f"expected columns {names}, found {header[:2]}")
        rows = rows[1:]
    data = np.array([[float(a), float(b)] for a, b, *_ in rows])
    return data[:, 0], data[:, 1]


def _is_number(text):
    try:
        float(text)
        return True
    except ValueError:
        return False


def read_profile_csv(path) -> "Profile":
    """Load a (t0, q) table, with or without a header row."""
    grid, q_values = _read_two_columns(path, ("t0", "q"))
    return Profile(grid, q_values)


def write_profile_csv(path, profile: "Profile"):
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["t0", "q"])
        for t0, q in zip(profile.grid, profile.q_values):
            writer.writerow([repr(float(t0)), repr(float(q))])


def read_speed_csv(path):
    """Load an externally supplied (q, c) speed table as an interpolating callable."""
    q, c = _read_two_columns(path, ("q", "c"))
    order = np.argsort(q)
    q, c = q[order], c[order]

    def speed(value):
        return float(np.interp(value, q, c))

    return speed


@dataclass(frozen=True)
class Profile:
    """Initial data ``q0(t0)`` on a strictly increasing grid, PCHIP-interpolated."""

    grid: np.ndarray
    q_values: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float).copy()
        qv = np.asarray(self.q_values, dtype=float).copy()
        if grid.ndim != 1 or grid.shape != qv.shape:
            raise ValueError("grid and q_values must be matching 1-D arrays")
        if len(grid) < 2 or np.any(np.diff(grid) <= 0):
            raise ValueError("profile grid must be strictly increasing")
        if not (np.all(np.isfinite(grid)) and np.all(np.isfinite(qv))):
            raise ValueError("profile data must be finite")
        grid.setflags(write=False)
        qv.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "q_values", qv)
        interp = PchipInterpolator(grid, qv, extrapolate=True)
        object.__setattr__(self, "_interp", interp)
        object.__setattr__(self, "_deriv", interp.derivative())

    def value(self, t0):
        return self._interp(t0)

    def derivative(self, t0):
        return self._deriv(t0)


def _speed_derivative(speed, q: float, h: float = _FD_STEP) -> float:
    return (speed(q + h) - speed(q - h)) / (2.0 * h)


def characteristic_speed(k: int, family: loewner.LoewnerFamily, q: float,
                         fit_order: int | None = None, fit_radius: float = 2.0,
                         n_fit: int = 128) -> float:
    """Transport speed ``c_k(q) = 2 Re phi_k(eta(q))`` of the k-th real flow.

    ``k = 1`` needs no map data (``phi_1 = r w`` exactly); higher ``k`` fits
    a truncated map to the family at ``q`` and projects the flow generator.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    eta = family.driving.eta(q)
    if k == 1:
        return float(2.0 * np.exp(q) * np.cos(family.driving.theta(q)))
    if fit_order is None:
        fit_order = max(8, k + 2)
    fitted = loewner.fit_map(family, q, order=fit_order, radius=fit_radius, n=n_fit)
    phi = laurent.phi_k(fitted, k, complex(eta))
    return float(2.0 * phi.real)


def shock_time(initial: Profile, speed) -> float:
    """First gradient catastrophe ``s* = 1 / max d/dt0 c(q0(t0))`` (inf if none).

    The maximum is taken over a refined sampling of the profile grid.
    """
    lo, hi = initial.grid[0], initial.grid[-1]
    dense = np.linspace(lo, hi, max(8 * len(initial.grid), 256))
    q0 = initial.value(dense)
    cprime = np.array([_speed_derivative(speed, q) for q in q0])
    slope = cprime * initial.derivative(dense)
    peak = float(np.max(slope))
    if peak <= 0.0:
        return float(np.inf)
    return 1.0 / peak


def _solve_node(t0: float, s: float, initial: Profile, speed, tol: float, max_iter: int) -> float:
    q = float(initial.value(t0))
    if s == 0.0:
        return q

    def g(qv):
        return qv - float(initial.value(t0 + speed(qv) * s))

    gq = g(q)
    for _ in range(max_iter):
        if abs(gq) <= tol:
            return q
        slope = 1.0 - float(initial.derivative(t0 + speed(q) * s)) * _speed_derivative(speed, q) * s
        if slope <= 0.0:
            raise ShockError(
                f"characteristic crossing at t0 = {t0}",
                s_star=shock_time(initial, speed),
            )
        q_new = q - gq / slope
        g_new = g(q_new)
        if not np.isfinite(g_new) or abs(g_new) >= abs(gq):
            q_new, g_new = _bisect_node(g, q, gq)
        q, gq = q_new, g_new
    if abs(gq) > tol:
        raise ShockError(
            f"implicit solve stalled at t0 = {t0} (residual {abs(gq):.3e})",
            s_star=shock_time(initial, speed),
        )
    return q


def _bisect_node(g, q_seed: float, g_seed: float):
    """Expand a bracket around the Newton seed, then bisect once inside it."""
    span = max(1.0, abs(q_seed))
    for _ in range(60):
        lo, hi = q_seed - span, q_seed + span
        glo, ghi = g(lo), g(hi)
        if np.isfinite(glo) and np.isfinite(ghi) and glo * ghi <= 0:
            break
        span *= 2.0
    else:
        return q_seed, g_seed
    for _ in range(8):
        mid = 0.5 * (lo + hi)
        gmid = g(mid)
        if glo * gmid <= 0:
            hi, ghi = mid, gmid
        else:
            lo, glo = mid, gmid
    mid = 0.5 * (lo + hi)
    return mid, g(mid)


def solve_characteristics(initial: Profile, speed, s: float, tol: float = 1e-12,
                          max_iter: int = 50) -> Profile:
    """Transport the profile by ``s`` along straight characteristics.

    Each output node solves ``q = q0(t0 + c(q) s)`` by Newton iteration with
    a bisection fallback.  Raises :class:`ShockError` (reporting the critical
    ``s*``) if ``s`` reaches the gradient catastrophe or a crossing is
    detected at any node.
    """
    s_star = shock_time(initial, speed)
    if s >= s_star:
        raise ShockError(
            f"requested s = {s} is past the gradient catastrophe s* = {s_star}", s_star=s_star
        )
    out = np.empty_like(initial.q_values)
    for i, t0 in enumerate(initial.grid):
        q = _solve_node(float(t0), float(s), initial, speed, tol, max_iter)
        crossing = 1.0 - _speed_derivative(speed, q) * float(
            initial.derivative(t0 + speed(q) * s)
        ) * s
        if crossing <= 0.0:
            raise ShockError(
                f"characteristic crossing detected at node t0 = {t0}", s_star=s_star
            )
        out[i] = q
    return Profile(initial.grid.copy(), out)
