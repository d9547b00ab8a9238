"""Exact unpolarized Fresnel reflectance for conductors and dielectrics.

Conductors use a 3-channel (RGB) complex index of refraction; dielectrics
a scalar relative index.  The same values double as discrete branch
probabilities in the samplers, so both forms are exact rather than
Schlick approximations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ConductorIor:
    """Per-channel complex IOR, eta + i kappa, all channels positive."""

    eta: np.ndarray
    kappa: np.ndarray

    def __post_init__(self):
        eta = np.asarray(self.eta, dtype=np.float64).reshape(3)
        kappa = np.asarray(self.kappa, dtype=np.float64).reshape(3)
        if np.any(eta <= 0.0) or np.any(kappa <= 0.0):
            raise ValueError("conductor eta and kappa must be positive")
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "kappa", kappa)


@dataclass(frozen=True)
class DielectricIor:
    """Relative index of refraction, interior over exterior."""

    eta: float

    def __post_init__(self):
        if self.eta <= 0.0:
            raise ValueError("dielectric eta must be positive")
        object.__setattr__(self, "eta", float(self.eta))


def fresnel_conductor(cos_theta, ior: ConductorIor) -> np.ndarray:
    """Unpolarized conductor reflectance per channel.

    cos_theta is measured against the facet normal, clamped to [0, 1];
    broadcasts to shape (..., 3).
    """
    c = np.clip(np.asarray(cos_theta, dtype=np.float64), 0.0, 1.0)[..., None]
    c2 = c * c
    s2 = 1.0 - c2
    eta, k = ior.eta, ior.kappa
    e2k2 = eta * eta - k * k
    t0 = e2k2 - s2
    a2b2 = np.sqrt(np.maximum(t0 * t0 + 4.0 * eta * eta * k * k, 0.0))
    t1 = a2b2 + c2
    a = np.sqrt(np.maximum(0.5 * (a2b2 + t0), 0.0))
    t2 = 2.0 * a * c
    rs = (t1 - t2) / (t1 + t2)
    t3 = c2 * a2b2 + s2 * s2
    t4 = t2 * s2
    rp = rs * (t3 - t4) / (t3 + t4)
    return np.clip(0.5 * (rs + rp), 0.0, 1.0)


def fresnel_dielectric(cos_theta_signed, ior: DielectricIor) -> np.ndarray:
    """Unpolarized dielectric reflectance.

    The sign of cos_theta_signed tells which side the light arrives
    from: positive means exterior.  Returns 1 under total internal
    reflection and exactly 0 when eta == 1.
    """
    c = np.clip(np.asarray(cos_theta_signed, dtype=np.float64), -1.0, 1.0)
    outside = c >= 0.0
    n_i = np.where(outside, 1.0, ior.eta)
    n_t = np.where(outside, ior.eta, 1.0)
    ci = np.abs(c)
    sin2_t = (n_i / n_t) ** 2 * (1.0 - ci * ci)
    tir = sin2_t >= 1.0
    ct = np.sqrt(np.maximum(0.0, 1.0 - sin2_t))
    rs = (n_i * ci - n_t * ct) / (n_i * ci + n_t * ct)
    rp = (n_i * ct - n_t * ci) / (n_i * ct + n_t * ci)
    f = 0.5 * (rs * rs + rp * rp)
    return np.where(tir, 1.0, np.clip(f, 0.0, 1.0))
