"""Microfacet statistics: NDFs, Smith Lambda, masking, visible-normal sampling.

Masking-related quantities are defined on the full sphere of query
directions.  The Lambda function uses the antisymmetric continuation
(Lambda(-w) = -1 - Lambda(w)), which is what makes the distant masking
factor consistent for directions below the macro horizon: there it acts
as the visible-projected-area normalizer 1/Lambda(-w) rather than a
probability, so it may exceed 1.

Facet normals always live in the upper hemisphere (heightfield
convention); callers dealing with transmission mirror their frame
before calling in here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from .geometry import dot
from .rng import RandomStream

BECKMANN = "beckmann"
GGX = "ggx"

ALPHA_MIN = 1e-4
ALPHA_MAX = 4.0
_COS_CLAMP = 1e-7
_SQRT_PI = np.sqrt(np.pi)


@dataclass(frozen=True)
class RoughnessProfile:
    """NDF family with anisotropic roughness.

    alpha values are clamped to [1e-4, 4]; the smooth limit alpha -> 0
    degenerates to a delta distribution and is outside the model.
    """

    family: str
    alpha_x: float
    alpha_y: float

    def __post_init__(self):
        if self.family not in (BECKMANN, GGX):
            raise ValueError(f"unknown NDF family: {self.family!r}")
        object.__setattr__(self, "alpha_x", float(np.clip(self.alpha_x, ALPHA_MIN, ALPHA_MAX)))
        object.__setattr__(self, "alpha_y", float(np.clip(self.alpha_y, ALPHA_MIN, ALPHA_MAX)))

    @property
    def isotropic(self) -> bool:
        return self.alpha_x == self.alpha_y

    def with_alpha(self, alpha_x: float, alpha_y: float | None = None) -> "RoughnessProfile":
        return RoughnessProfile(self.family, alpha_x, alpha_x if alpha_y is None else alpha_y)


def ggx(alpha_x: float, alpha_y: float | None = None) -> RoughnessProfile:
    return RoughnessProfile(GGX, alpha_x, alpha_x if alpha_y is None else alpha_y)


def beckmann(alpha_x: float, alpha_y: float | None = None) -> RoughnessProfile:
    return RoughnessProfile(BECKMANN, alpha_x, alpha_x if alpha_y is None else alpha_y)


@dataclass
class MicronormalSample:
    """A visible facet normal together with its exact density (sr^-1)."""

    m: np.ndarray
    density: float


# ---------------------------------------------------------------------------
# Normal distribution functions


def ndf_D(m: np.ndarray, p: RoughnessProfile) -> np.ndarray:
    """Anisotropic NDF density per solid angle of the facet normal.

    Zero below the macro horizon; normalized so the cosine-weighted
    integral over the upper hemisphere is 1.
    """
    m = np.asarray(m, dtype=np.float64)
    mx, my, mz = m[..., 0], m[..., 1], m[..., 2]
    ax, ay = p.alpha_x, p.alpha_y
    up = mz > 0.0
    mz_safe = np.where(up, mz, 1.0)
    if p.family == GGX:
        q = np.maximum((mx / ax) ** 2 + (my / ay) ** 2 + mz**2, 1e-300)
        d = 1.0 / (np.pi * ax * ay * q * q)
    else:
        t2 = ((mx / ax) ** 2 + (my / ay) ** 2) / mz_safe**2
        d = np.exp(-t2) / (np.pi * ax * ay * mz_safe**4)
    return np.where(up, d, 0.0)


# ---------------------------------------------------------------------------
# Smith Lambda and masking


def _alpha_proj_sq(w: np.ndarray, p: RoughnessProfile) -> np.ndarray:
    """Squared roughness projected onto the azimuth of w."""
    wx, wy = w[..., 0], w[..., 1]
    s2 = wx * wx + wy * wy
    s2_safe = np.where(s2 > 0.0, s2, 1.0)
    ap2 = (p.alpha_x**2 * wx * wx + p.alpha_y**2 * wy * wy) / s2_safe
    return np.where(s2 > 0.0, ap2, p.alpha_x**2)


def smith_lambda(w: np.ndarray, p: RoughnessProfile) -> np.ndarray:
    """Closed-form Smith Lambda on the full sphere.

    Grazing directions are clamped at |cos theta| = 1e-7.  Satisfies
    Lambda(-w) = -1 - Lambda(w).
    """
    w = np.asarray(w, dtype=np.float64)
    c = w[..., 2]
    sign = np.where(c >= 0.0, 1.0, -1.0)
    ac = np.maximum(np.abs(c), _COS_CLAMP)
    tan2 = (1.0 - ac * ac) / (ac * ac)
    ap2 = _alpha_proj_sq(w, p)
    if p.family == GGX:
        lam_up = 0.5 * (np.sqrt(1.0 + ap2 * tan2) - 1.0)
    else:
        # erfc form of (erf(a) - 1)/2 + exp(-a^2)/(2 a sqrt(pi)), a = cot/alpha
        a = 1.0 / np.sqrt(np.maximum(ap2 * tan2, 1e-300))
        lam_up = -0.5 * special.erfc(a) + np.exp(-a * a) / (2.0 * a * _SQRT_PI)
    return np.where(sign > 0.0, lam_up, -1.0 - lam_up)


def g1_local(w: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Heaviside facet-side factor: 1 where w·m > 0, else 0."""
    return np.where(dot(np.asarray(w, float), np.asarray(m, float)) > 0.0, 1.0, 0.0)


def g1_dist(w: np.ndarray, p: RoughnessProfile) -> np.ndarray:
    """Distant masking factor |1 / (1 + Lambda(w))| on the full sphere.

    Above the horizon this is the usual Smith masking probability in
    [0, 1].  Below it equals 1/Lambda(-w), the projected-area
    normalizer of the visible-normal distribution, which exceeds 1 for
    steep downward queries.
    """
    w = np.asarray(w, dtype=np.float64)
    lam = smith_lambda(w, p)
    up = w[..., 2] > 0.0
    with np.errstate(divide="ignore"):
        val = np.where(up, 1.0 / (1.0 + lam), -1.0 / (1.0 + lam))
    return val


def g1(w: np.ndarray, m: np.ndarray, p: RoughnessProfile) -> np.ndarray:
    """Full-spherical single-direction masking: local Heaviside x distant."""
    return g1_local(w, m) * g1_dist(w, p)


# ---------------------------------------------------------------------------
# Visible-normal distribution (VNDF)


def pdf_vndf(w: np.ndarray, m: np.ndarray, p: RoughnessProfile) -> np.ndarray:
    """Density of visible normals from w, per solid angle of m.

    g1_dist(w) * <w·m> * D(m) / |w·z|; integrates to 1 over m for any
    query direction, above or below the horizon.
    """
    w = np.asarray(w, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    cwm = dot(w, m)
    ac = np.maximum(np.abs(w[..., 2]), _COS_CLAMP)
    factor = np.maximum(cwm, 0.0) * ndf_D(m, p) / ac
    with np.errstate(invalid="ignore"):
        val = g1_dist(w, p) * factor
    # The straight-down pole of g1_dist only meets factor == 0.
    return np.where(factor > 0.0, val, 0.0)


def _sample_slope_ggx(c, s, u1, u2):
    """Visible slopes for the unit-roughness GGX config.

    (c, s) = (cos, sin) of the stretched query; valid for c of either
    sign.  Marginal CDF in the slope_x direction is closed-form:
    F(x) = (c x + s) / sqrt(1 + x^2).
    """
    near_normal = s < 1e-6
    # Generic branch: invert the marginal, then the conditional.
    v = np.where(near_normal, 0.5, -c + u1 * (1.0 + c))  # target CDF value
    v = np.clip(v, -1.0, 1.0)
    xmax = c / np.maximum(s, 1e-300)

    def _cdf(x):
        return (c * x + s) / np.sqrt(1.0 + x * x)

    # Squaring the CDF equation gives (c^2-v^2) x^2 + 2 c s x + (s^2-v^2) = 0
    # with discriminant v^2 (1 - v^2).  Use the cancellation-free root pair.
    a = c * c - v * v
    disc = np.abs(v) * np.sqrt(np.maximum(1.0 - v * v, 0.0))
    q = -(c * s + np.sign(c * s + 1e-300) * disc)
    q = np.where(np.abs(q) > 1e-300, q, 1e-300)
    a_safe = np.where(np.abs(a) > 1e-300, a, 1e-300)
    cand = np.stack([q / a_safe, (s * s - v * v) / q], axis=0)
    err = np.abs(_cdf(cand) - v) + np.where(cand > xmax + 1e-9, 1e30, 0.0)
    err = np.where(np.isfinite(cand), err, np.inf)
    x = np.take_along_axis(cand, np.argmin(err, axis=0)[None], axis=0)[0]
    x = np.minimum(x, xmax)
    # Newton polish on the exact CDF; monotone on the support.
    for _ in range(3):
        f = _cdf(x) - v
        df = (c - s * x) / (1.0 + x * x) ** 1.5
        step = f / np.maximum(df, 1e-300)
        x = np.minimum(x - step, xmax)

    # Conditional slope_y ~ (1 + x^2 + y^2)^-2: substitute y = sqrt(A) tan(psi)
    # so psi has density prop. to cos^2 on (-pi/2, pi/2).  The CDF equation
    # psi + sin(2 psi)/2 + pi/2 = pi u has a flat derivative at the ends, so
    # invert by bisection with a short Newton polish.
    target = u2 * np.pi
    lo_p = np.full_like(u2, -0.5 * np.pi)
    hi_p = np.full_like(u2, 0.5 * np.pi)
    psi = np.zeros_like(u2)
    for _ in range(40):
        g = psi + 0.5 * np.sin(2.0 * psi) + 0.5 * np.pi - target
        go_hi = g < 0.0
        lo_p = np.where(go_hi, psi, lo_p)
        hi_p = np.where(go_hi, hi_p, psi)
        psi = 0.5 * (lo_p + hi_p)
    for _ in range(2):
        g = psi + 0.5 * np.sin(2.0 * psi) + 0.5 * np.pi - target
        dg = 1.0 + np.cos(2.0 * psi)
        psi = np.clip(psi - g / np.maximum(dg, 1e-6), lo_p, hi_p)
    y = np.sqrt(1.0 + x * x) * np.tan(psi)

    # Near-normal query: the visible distribution is the bare slope
    # distribution; sample it radially.
    r = np.sqrt(u1 / np.maximum(1.0 - u1, 1e-300))
    phi = 2.0 * np.pi * u2
    x = np.where(near_normal, r * np.cos(phi), x)
    y = np.where(near_normal, r * np.sin(phi), y)
    return x, y


def _beckmann_marginal_cdf(x, c, s):
    return 0.5 * c * _SQRT_PI * (1.0 + special.erf(x)) + 0.5 * s * np.exp(-x * x)


def _sample_slope_beckmann(c, s, u1, u2):
    """Visible slopes for the unit-roughness Beckmann config.

    Marginal in slope_x is (c - s x) exp(-x^2) on (-inf, c/s]; inverted
    by bisection plus Newton polish.  Valid for c of either sign.
    """
    near_normal = s < 1e-6
    xmax = np.where(near_normal, 12.0, c / np.maximum(s, 1e-300))
    xmax = np.minimum(xmax, 1e12)
    lo = np.full_like(c, -12.0)
    hi = xmax
    total = _beckmann_marginal_cdf(hi, c, s) - _beckmann_marginal_cdf(lo, c, s)
    target = _beckmann_marginal_cdf(lo, c, s) + u1 * total
    x = 0.5 * (lo + hi)
    for _ in range(50):
        val = _beckmann_marginal_cdf(x, c, s)
        go_hi = val < target
        lo = np.where(go_hi, x, lo)
        hi = np.where(go_hi, hi, x)
        x = 0.5 * (lo + hi)
    for _ in range(2):
        f = _beckmann_marginal_cdf(x, c, s) - target
        df = (c - s * x) * np.exp(-x * x)
        step = np.where(np.abs(df) > 1e-300, f / np.where(np.abs(df) > 1e-300, df, 1.0), 0.0)
        x = np.clip(x - step, -12.0, xmax)

    # Conditional slope_y is Gaussian with sigma = 1/sqrt(2).
    y = special.erfinv(np.clip(2.0 * u2 - 1.0, -1.0 + 1e-16, 1.0 - 1e-16))

    rn_x = special.erfinv(np.clip(2.0 * u1 - 1.0, -1.0 + 1e-16, 1.0 - 1e-16))
    x = np.where(near_normal & (c > 0), rn_x, x)
    return x, y


def sample_vndf_batch(w: np.ndarray, p: RoughnessProfile, rs: RandomStream):
    """Sample facet normals proportional to <w·m> D(m) over visible m.

    Works for queries anywhere on the sphere via slope-space inversion
    in the roughness-stretched configuration.  Returns (m, density)
    with the exact per-solid-angle density.
    """
    w = np.atleast_2d(np.asarray(w, dtype=np.float64))
    n = w.shape[0]
    ax, ay = p.alpha_x, p.alpha_y

    ws = np.stack([ax * w[:, 0], ay * w[:, 1], w[:, 2]], axis=-1)
    ws = ws / np.linalg.norm(ws, axis=-1, keepdims=True)
    c = np.clip(ws[:, 2], -1.0 + 1e-9, 1.0)
    s = np.sqrt(np.maximum(0.0, 1.0 - c * c))
    # Azimuth of the stretched query; slopes are sampled in the frame
    # where the query lies in the xz-plane.
    cos_phi = np.where(s > 1e-12, ws[:, 0] / np.where(s > 1e-12, s, 1.0), 1.0)
    sin_phi = np.where(s > 1e-12, ws[:, 1] / np.where(s > 1e-12, s, 1.0), 0.0)

    u1 = rs.uniform(n)
    u2 = rs.uniform(n)
    if p.family == GGX:
        sx, sy = _sample_slope_ggx(c, s, u1, u2)
    else:
        sx, sy = _sample_slope_beckmann(c, s, u1, u2)

    # Rotate back, then unstretch.
    rx = cos_phi * sx - sin_phi * sy
    ry = sin_phi * sx + cos_phi * sy
    slope_x = ax * rx
    slope_y = ay * ry

    m = np.stack([-slope_x, -slope_y, np.ones(n)], axis=-1)
    m = m / np.linalg.norm(m, axis=-1, keepdims=True)
    dens = pdf_vndf(w, m, p)
    return m, dens


def sample_vndf(w: np.ndarray, p: RoughnessProfile, rs: RandomStream) -> MicronormalSample:
    """Single-query convenience wrapper around sample_vndf_batch."""
    m, dens = sample_vndf_batch(np.asarray(w, float)[None, :], p, rs)
    return MicronormalSample(m=m[0], density=float(dens[0]))
