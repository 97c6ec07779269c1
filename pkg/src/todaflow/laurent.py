"""Truncated Laurent-series algebra on the unit circle.

The central object is the map ``z(w) = r*w + a0 + a1/w + ... + aM/w**M``
from the exterior of the unit disk onto the exterior of a compact planar
domain.  Everything here is spectral: series are represented by samples on a
uniform grid of the unit circle and manipulated through the FFT, so products
never touch an explicit convolution.  Grid sizes are powers of two and must
satisfy ``n >= 4*(M+1)`` to keep quadratic nonlinearities alias-free.

Conventions
-----------
* grid nodes are ``theta_j = 2*pi*j/n``, ``w_j = exp(i*theta_j)``;
* the Fourier coefficient of ``w**m`` of a sampled function is
  ``fft(samples)[m % n] / n``;
* the angular derivative ``d/d(log w) = w d/dw`` is computed spectrally,
  with a winding correction so that log-type samples differentiate exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import RootFindError, SeriesBudgetError

DEFAULT_ORDER = 16
DEFAULT_GRID = 128

#: Relative tolerance of the Newton inversion in :func:`inverse_evaluate`.
INVERSION_TOL = 1e-12
INVERSION_MAX_ITER = 60


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def default_grid_size(order: int) -> int:
    """Smallest admissible power-of-two grid for a map of truncation ``order``."""
    n = DEFAULT_GRID
    while n < 4 * (order + 1):
        n *= 2
    return n


def circle_grid(n: int) -> np.ndarray:
    """Unit-circle nodes ``exp(2*pi*i*j/n)``, ``j = 0..n-1``."""
    if not _is_power_of_two(n):
        raise ValueError(f"grid size must be a power of two, got {n}")
    return np.exp(2j * np.pi * np.arange(n) / n)


def fourier_coefficient(samples: np.ndarray, m: int) -> complex:
    """Coefficient of ``w**m`` of a grid-sampled boundary function."""
    n = len(samples)
    return np.fft.fft(samples)[m % n] / n


@dataclass(frozen=True)
class LaurentMap:
    """Exterior conformal map ``z(w) = r*w + a0 + a1/w + ... + aM/w**M``.

    ``r`` is the (positive, real) exterior conformal radius; ``coeffs`` holds
    ``a0 .. aM``.  Instances are immutable value objects.
    """

    r: float
    coeffs: np.ndarray

    def __post_init__(self):
        r = float(self.r)
        if not np.isfinite(r) or r <= 0.0:
            raise ValueError(f"leading coefficient must be positive, got {self.r}")
        coeffs = np.asarray(self.coeffs, dtype=complex).reshape(-1).copy()
        if not np.all(np.isfinite(coeffs)):
            raise ValueError("map coefficients must be finite")
        coeffs.setflags(write=False)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def order(self) -> int:
        """Truncation order M (index of the deepest 1/w power)."""
        return max(len(self.coeffs) - 1, 0)

    def with_order(self, order: int) -> "LaurentMap":
        """Zero-pad or truncate the coefficient tail to the given order."""
        padded = np.zeros(order + 1, dtype=complex)
        keep = min(len(self.coeffs), order + 1)
        padded[:keep] = self.coeffs[:keep]
        return LaurentMap(self.r, padded)

    def to_json(self) -> dict:
        return {
            "r": self.r,
            "coeffs": [[float(c.real), float(c.imag)] for c in self.coeffs],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "LaurentMap":
        coeffs = np.array([complex(re, im) for re, im in obj.get("coeffs", [])], dtype=complex)
        return cls(float(obj["r"]), coeffs)

    def dumps(self) -> str:
        return json.dumps(self.to_json())

    @classmethod
    def loads(cls, text: str) -> "LaurentMap":
        return cls.from_json(json.loads(text))


@dataclass(frozen=True)
class OuterSeries:
    """Series ``c0 + sum_{k>=1} c_k w**(-k)`` analytic outside the unit disk."""

    c0: complex
    tail: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=complex))

    def __post_init__(self):
        tail = np.asarray(self.tail, dtype=complex).reshape(-1).copy()
        tail.setflags(write=False)
        object.__setattr__(self, "c0", complex(self.c0))
        object.__setattr__(self, "tail", tail)

    @property
    def order(self) -> int:
        return len(self.tail)

    def __call__(self, w):
        w = np.asarray(w, dtype=complex)
        out = np.full(w.shape, self.c0, dtype=complex)
        iw = 1.0 / w
        p = np.ones_like(w)
        for c in self.tail:
            p = p * iw
            out = out + c * p
        return out if out.ndim else out[()]


@dataclass(frozen=True)
class BoundarySamples:
    """Values of a boundary function on the global circle grid."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values).copy()
        if values.ndim != 1:
            raise ValueError("boundary samples must be one-dimensional")
        if not _is_power_of_two(len(values)):
            raise ValueError(f"grid size must be a power of two, got {len(values)}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return len(self.values)

    @property
    def theta(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(self.n) / self.n


def _resolve_grid(m: LaurentMap, n: int | None) -> int:
    if n is None:
        n = default_grid_size(m.order)
    if not _is_power_of_two(n):
        raise ValueError(f"grid size must be a power of two, got {n}")
    if n < 4 * (m.order + 1):
        raise ValueError(f"grid size {n} below the dealiasing floor 4*(M+1)={4 * (m.order + 1)}")
    return n


def evaluate(m: LaurentMap, w):
    """Evaluate ``z(w) = r*w + sum_j a_j w**(-j)``.

    ``w`` may be a scalar or an array; ``w = 0`` is rejected.
    """
    w = np.asarray(w, dtype=complex)
    if np.any(w == 0):
        raise ValueError("the map is not defined at w = 0")
    out = m.r * w
    if len(m.coeffs):
        iw = 1.0 / w
        p = np.ones_like(w)
        for j, a in enumerate(m.coeffs):
            if j > 0:
                p = p * iw
            out = out + a * p
    return out if out.ndim else out[()]


def derivative(m: LaurentMap, w):
    """Evaluate ``z'(w) = r - sum_{j>=1} j a_j w**(-j-1)``."""
    w = np.asarray(w, dtype=complex)
    if np.any(w == 0):
        raise ValueError("the map is not defined at w = 0")
    out = np.full(w.shape, m.r, dtype=complex)
    iw = 1.0 / w
    p = iw.copy()
    for j, a in enumerate(m.coeffs):
        if j == 0:
            continue
        p = p * iw
        out = out - j * a * p
    return out if out.ndim else out[()]


def boundary_derivative(m: LaurentMap, n: int | None = None) -> BoundarySamples:
    """Samples of ``z'`` on the global circle grid."""
    n = _resolve_grid(m, n)
    return BoundarySamples(derivative(m, circle_grid(n)))


def critical_points(m: LaurentMap) -> np.ndarray:
    """All zeros of ``z'``: roots of the degree-(M+1) polynomial ``z'(w) w^(M+1)``."""
    M = m.order
    coeffs = np.zeros(M + 2, dtype=complex)  # ascending powers of w
    coeffs[M + 1] = m.r
    for j in range(1, M + 1):
        coeffs[M - j] = -j * m.coeffs[j]
    return np.roots(coeffs[::-1])


def univalence_witness(m: LaurentMap, n: int | None = None):
    """Check the univalence invariant of the boundary map.

    The sampled part requires pairwise-distinct boundary images and
    ``|z'| > 0`` on the grid; since the series is truncated, the critical
    points of the map are also located exactly, and any zero of ``z'`` on or
    outside the unit circle flags the map.  Returns
    ``(ok, min_separation, min_derivative, theta_worst)`` with
    ``theta_worst`` locating the worst derivative or escaped critical point.
    """
    n = _resolve_grid(m, n)
    w = circle_grid(n)
    z = evaluate(m, w)
    zp = np.abs(derivative(m, w))
    imin = int(np.argmin(zp))
    theta_worst = 2.0 * np.pi * imin / n
    dist = np.abs(z[:, None] - z[None, :])
    np.fill_diagonal(dist, np.inf)
    min_sep = float(dist.min())
    sep_floor = 1e-9 * max(m.r, 1.0)
    ok = (min_sep > sep_floor) and (zp[imin] > 1e-8)
    if ok and m.order > 0:
        crit = critical_points(m)
        escaped = crit[np.abs(crit) >= 1.0 - 1e-9]
        if len(escaped):
            ok = False
            worst = escaped[np.argmax(np.abs(escaped))]
            theta_worst = float(np.angle(worst))
    return ok, min_sep, float(zp[imin]), theta_worst


def _boundary_power_modes(m: LaurentMap, k: int, n: int) -> np.ndarray:
    """FFT modes (coefficient of w**index) of ``z(w)**k`` sampled on the grid."""
    w = circle_grid(n)
    return np.fft.fft(evaluate(m, w) ** k) / n


def ak_projection(m: LaurentMap, k: int, n: int | None = None) -> np.polynomial.Polynomial:
    """Flow generator ``A_k``: strictly positive powers of ``z**k`` plus half its free term.

    Returns a degree-``k`` polynomial in ``w``.  ``A_0 = log w`` is a special
    symbol and is never produced here; callers handle it themselves.
    """
    if k < 1:
        raise ValueError("ak_projection is defined for k >= 1")
    n = _resolve_grid(m, n)
    budget = n // 2 - 1
    if k > budget or k * m.order > budget:
        raise SeriesBudgetError(
            f"z**{k} spans powers [{-k * m.order}, {k}] but the grid of size {n} "
            f"resolves only |m| <= {budget}"
        )
    modes = _boundary_power_modes(m, k, n)
    coeffs = np.zeros(k + 1, dtype=complex)
    coeffs[0] = 0.5 * modes[0]
    coeffs[1 : k + 1] = modes[1 : k + 1]
    return np.polynomial.Polynomial(coeffs)


def phi_k(m: LaurentMap, k: int, w, n: int | None = None):
    """Velocity generator ``phi_k(w) = w * d/dw A_k(w)``."""
    ak = ak_projection(m, k, n)
    weighted = np.polynomial.Polynomial(ak.coef * np.arange(len(ak.coef)))
    w = np.asarray(w, dtype=complex)
    out = weighted(w)
    return out if out.ndim else complex(out)


def schwarz_extension(h) -> OuterSeries:
    """Analytic extension of real boundary data to the exterior of the disk.

    Given real samples ``h`` on the grid, returns the series ``Phi`` analytic
    in ``|w| > 1`` with ``Re Phi = h`` on the circle: ``c0`` is the mean of
    ``h`` and ``c_k = 2 h_{-k}`` picks up the negative Fourier modes.
    """
    values = h.values if isinstance(h, BoundarySamples) else np.asarray(h)
    if np.iscomplexobj(values) and np.max(np.abs(values.imag)) > 1e-13 * max(
        1.0, float(np.max(np.abs(values)))
    ):
        raise ValueError("schwarz_extension requires real boundary data")
    values = values.real.astype(float)
    if not _is_power_of_two(len(values)):
        raise ValueError("grid size must be a power of two")
    n = len(values)
    modes = np.fft.fft(values) / n
    c0 = float(modes[0].real)
    kmax = n // 2 - 1
    tail = 2.0 * modes[n - np.arange(1, kmax + 1)]
    return OuterSeries(c0, tail)


def _winding_number(samples: np.ndarray) -> int:
    """Net winding of the imaginary part, detected from wrapped increments."""
    d = np.diff(np.concatenate([samples, samples[:1]])).imag
    wrapped = (d + np.pi) % (2.0 * np.pi) - np.pi
    return int(np.rint(np.sum(wrapped) / (2.0 * np.pi)))


def log_derivative(samples: np.ndarray) -> np.ndarray:
    """Spectral ``d/d(log w)`` of grid samples, exact for log-type data.

    A sample set whose imaginary part winds ``W`` times around the circle
    (e.g. ``log w`` itself, with ``W = 1``) is split into ``W * log w`` plus a
    single-valued remainder before differentiating.
    """
    samples = np.asarray(samples, dtype=complex)
    n = len(samples)
    winding = _winding_number(samples)
    if winding != 0:
        theta = 2.0 * np.pi * np.arange(n) / n
        ref = 1j * np.angle(np.exp(1j * theta))
        samples = samples - winding * ref
    modes = np.fft.fft(samples)
    freqs = np.fft.fftfreq(n, d=1.0 / n)
    freqs[n // 2] = 0.0
    deriv = np.fft.ifft(modes * freqs)
    return deriv + winding


def poisson_bracket(f_fn, g_fn, w: np.ndarray, t0: float,
                    dt0: float | None = None) -> BoundarySamples:
    """Finite-difference Poisson bracket ``{f, g}`` on the circle grid.

    ``f_fn(w, t)`` and ``g_fn(w, t)`` must return boundary samples for the
    grid ``w`` at deformation time ``t``.  The angular derivative
    ``d/d(log w)`` is spectral; the ``t0`` derivative uses central
    differences with step ``dt0`` (default ``1e-4 * max(|t0|, 1)``).
    """
    if dt0 is None:
        dt0 = 1e-4 * max(abs(t0), 1.0)
    if dt0 <= 0:
        raise ValueError("dt0 must be positive")
    w = np.asarray(w, dtype=complex)
    f0 = np.asarray(f_fn(w, t0), dtype=complex)
    g0 = np.asarray(g_fn(w, t0), dtype=complex)
    df_dt = (np.asarray(f_fn(w, t0 + dt0), dtype=complex) - np.asarray(f_fn(w, t0 - dt0), dtype=complex)) / (
        2.0 * dt0
    )
    dg_dt = (np.asarray(g_fn(w, t0 + dt0), dtype=complex) - np.asarray(g_fn(w, t0 - dt0), dtype=complex)) / (
        2.0 * dt0
    )
    bracket = log_derivative(f0) * dg_dt - df_dt * log_derivative(g0)
    return BoundarySamples(bracket)


def inverse_evaluate(m: LaurentMap, z: complex, tol: float = INVERSION_TOL,
                     max_iter: int = INVERSION_MAX_ITER) -> complex:
    """Invert the map at an exterior point by damped Newton iteration.

    Seeded at ``z / r``; the damping factor halves whenever a full step would
    increase the residual.  Raises :class:`RootFindError` on non-convergence
    or when the solution lands inside the unit disk (``z`` was not exterior).
    """
    z = complex(z)
    w = z / m.r
    if w == 0:
        w = 1.5 + 0.0j
    resid = evaluate(m, w) - z
    scale = max(1.0, abs(z))
    for _ in range(max_iter):
        if abs(resid) <= tol * scale:
            break
        dz = derivative(m, w)
        if dz == 0:
            raise RootFindError(f"map derivative vanished at w={w}")
        full_step = resid / dz
        lam = 1.0
        while True:
            w_try = w - lam * full_step
            if w_try != 0:
                resid_try = evaluate(m, w_try) - z
                if abs(resid_try) < abs(resid):
                    break
            lam *= 0.5
            if lam < 2.0 ** -20:
                raise RootFindError(
                    f"Newton inversion stalled at w={w} (residual {abs(resid):.3e}); "
                    "the target may be too close to or inside the contour"
                )
        w, resid = w_try, resid_try
    else:
        raise RootFindError(
            f"Newton inversion did not converge in {max_iter} iterations (residual {abs(resid):.3e})"
        )
    if abs(w) < 1.0 - 1e-9:
        raise RootFindError(f"inverse landed at |w|={abs(w):.6f} < 1; z={z} is not exterior")
    return w
