"""Direction algebra in the local shading frame.

All BSDF math happens in a local frame whose geometric normal is
``(0, 0, 1)``.  Directions are plain numpy arrays of shape ``(..., 3)``,
unit length, and may point into either hemisphere.  Functions broadcast
over leading axes.
"""

from __future__ import annotations

import numpy as np

OMEGA_G = np.array([0.0, 0.0, 1.0])

# Unit-length tolerance for direction invariants.
UNIT_TOL = 1e-9


def normalize(v: np.ndarray) -> np.ndarray:
    """Return v / ||v||.  Zero vectors raise rather than produce NaNs."""
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(n == 0.0):
        raise ValueError("cannot normalize a zero vector")
    return v / n


def dot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.sum(a * b, axis=-1)


def is_unit(v: np.ndarray, tol: float = UNIT_TOL) -> np.ndarray:
    return np.abs(np.linalg.norm(v, axis=-1) - 1.0) <= tol


def spherical_direction(theta, phi) -> np.ndarray:
    """Unit vector from polar angle theta (from +z) and azimuth phi."""
    st = np.sin(theta)
    return np.stack(
        [st * np.cos(phi), st * np.sin(phi), np.cos(theta) * np.ones_like(phi)],
        axis=-1,
    )


def flip_z(v: np.ndarray, side) -> np.ndarray:
    """Mirror v through the macro surface plane when side == -1.

    ``side`` is +1 (above) or -1 (below) and broadcasts against the
    leading axes of v.  Mirroring preserves azimuth, which matters for
    anisotropic roughness.
    """
    out = np.array(v, dtype=np.float64, copy=True)
    out[..., 2] = out[..., 2] * side
    return out


def half_vector(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Normalized a + b.  Symmetric in its arguments.

    Raises ValueError on the degenerate a = -b input instead of
    returning a NaN direction.
    """
    s = np.asarray(a, dtype=np.float64) + np.asarray(b, dtype=np.float64)
    n = np.linalg.norm(s, axis=-1, keepdims=True)
    if np.any(n < 1e-12):
        raise ValueError("half vector undefined for opposite directions")
    return s / n


def half_vector_or_none(a: np.ndarray, b: np.ndarray):
    """half_vector that signals the degenerate case with None (scalar use)."""
    s = np.asarray(a, dtype=np.float64) + np.asarray(b, dtype=np.float64)
    n = np.linalg.norm(s)
    if n < 1e-12:
        return None
    return s / n


def reflect(d: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Mirror the incident flow d about the facet normal m.

    d points along the propagation of light into the facet; the result
    is the outgoing flow direction, unit length whenever d and m are.
    """
    d = np.asarray(d, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    return d - 2.0 * dot(d, m)[..., None] * m


def refract(d: np.ndarray, m: np.ndarray, eta_ratio: float):
    """Snell-refract the incident flow d through a facet with normal m.

    ``eta_ratio`` is n_incident / n_transmitted.  Returns the
    transmitted flow direction, or None under total internal
    reflection.  Scalar (single-direction) variant.
    """
    if eta_ratio <= 0.0:
        raise ValueError("eta_ratio must be positive")
    d = np.asarray(d, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    cos_i = -float(dot(d, m))  # >0 when d hits the front side of m
    sign = 1.0
    if cos_i < 0.0:
        # Hitting the back face: refract relative to -m.
        m = -m
        cos_i = -cos_i
        sign = -1.0
    sin2_t = eta_ratio * eta_ratio * max(0.0, 1.0 - cos_i * cos_i)
    if sin2_t >= 1.0:
        return None
    cos_t = np.sqrt(1.0 - sin2_t)
    t = eta_ratio * d + (eta_ratio * cos_i - cos_t) * m
    return normalize(t)


def refract_batch(d: np.ndarray, m: np.ndarray, eta_ratio: np.ndarray):
    """Vectorized refract for front-side hits (d·m < 0).

    Returns (t, tir_mask); rows with total internal reflection hold an
    unspecified direction and are flagged in the mask.
    """
    d = np.asarray(d, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    eta_ratio = np.asarray(eta_ratio, dtype=np.float64)
    cos_i = -dot(d, m)
    sin2_t = eta_ratio**2 * np.maximum(0.0, 1.0 - cos_i**2)
    tir = sin2_t >= 1.0
    cos_t = np.sqrt(np.maximum(0.0, 1.0 - sin2_t))
    t = eta_ratio[..., None] * d + (eta_ratio * cos_i - cos_t)[..., None] * m
    n = np.linalg.norm(t, axis=-1, keepdims=True)
    n = np.where(n < 1e-300, 1.0, n)
    return t / n, tir


def make_frame(n: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Right-handed orthonormal basis (t, b, n) for a unit normal n.

    The tangent is anchored to the world x-axis away from the poles so
    anisotropic materials get a stable orientation.
    """
    n = np.asarray(n, dtype=np.float64)
    up = np.array([0.0, 0.0, 1.0])
    if abs(float(n @ up)) > 0.999:
        up = np.array([1.0, 0.0, 0.0])
    t = normalize(np.cross(up, n))
    b = np.cross(n, t)
    return t, b, n


def to_local(t: np.ndarray, b: np.ndarray, n: np.ndarray, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    return np.stack([dot(v, t), dot(v, b), dot(v, n)], axis=-1)


def to_world(t: np.ndarray, b: np.ndarray, n: np.ndarray, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    return v[..., 0:1] * t + v[..., 1:2] * b + v[..., 2:3] * n
