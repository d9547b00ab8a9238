"""Material descriptions: a roughness profile plus conductor or dielectric optics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fresnel import ConductorIor, DielectricIor
from .microfacet import RoughnessProfile

CONDUCTOR = "conductor"
DIELECTRIC = "dielectric"


@dataclass(frozen=True)
class MaterialSpec:
    """A microfacet surface.

    ``fresnel_one`` forces F = 1 on conductors for white-furnace runs.
    Dielectric eta is interior/exterior; eta == 1 is the degenerate
    pass-through material.
    """

    kind: str
    roughness: RoughnessProfile
    conductor_ior: ConductorIor | None = None
    dielectric_ior: DielectricIor | None = None
    fresnel_one: bool = False

    def __post_init__(self):
        if self.kind == CONDUCTOR:
            if self.conductor_ior is None and not self.fresnel_one:
                raise ValueError("conductor material needs an IOR or fresnel_one")
        elif self.kind == DIELECTRIC:
            if self.dielectric_ior is None:
                raise ValueError("dielectric material needs an IOR")
            if self.fresnel_one:
                raise ValueError("fresnel_one only applies to conductors")
        else:
            raise ValueError(f"unknown material kind: {self.kind!r}")

    @property
    def is_conductor(self) -> bool:
        return self.kind == CONDUCTOR

    @property
    def eta(self) -> float:
        assert self.kind == DIELECTRIC
        return self.dielectric_ior.eta

    def with_roughness(self, roughness: RoughnessProfile) -> "MaterialSpec":
        return MaterialSpec(
            self.kind, roughness, self.conductor_ior, self.dielectric_ior, self.fresnel_one
        )


def conductor(
    roughness: RoughnessProfile,
    eta=None,
    kappa=None,
    fresnel_one: bool = False,
) -> MaterialSpec:
    ior = None
    if eta is not None:
        ior = ConductorIor(np.asarray(eta, float), np.asarray(kappa, float))
    return MaterialSpec(CONDUCTOR, roughness, conductor_ior=ior, fresnel_one=fresnel_one)


def dielectric(roughness: RoughnessProfile, eta: float) -> MaterialSpec:
    return MaterialSpec(DIELECTRIC, roughness, dielectric_ior=DielectricIor(eta))


# RGB complex IORs for common metals (approximate values in sRGB primaries).
METAL_IOR = {
    "copper": (np.array([0.2004, 0.9240, 1.1022]), np.array([3.9129, 2.4528, 2.1421])),
    "aluminum": (np.array([1.3456, 0.9652, 0.6177]), np.array([7.4746, 6.3995, 5.3031])),
    "gold": (np.array([0.1431, 0.3749, 1.4424]), np.array([3.9831, 2.3857, 1.6032])),
}


def metal(name: str, roughness: RoughnessProfile, fresnel_one: bool = False) -> MaterialSpec:
    eta, kappa = METAL_IOR[name]
    return conductor(roughness, eta, kappa, fresnel_one=fresnel_one)
