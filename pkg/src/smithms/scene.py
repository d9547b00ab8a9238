"""Plain-text scene descriptions.

Format: one ``key = value`` pair per line, ``#`` starts a comment,
unknown keys are errors.  Repeated ``light`` keys accumulate.

    geometry = sphere
    material = conductor
    ndf = ggx
    alpha = 1.0
    preset = copper
    fresnel_one = false
    light = directional 0.3,-0.4,0.85 1,1,1
    light = env 1,1,1
    camera_position = 0,-3.2,0.8
    camera_lookat = 0,0,0
    camera_fov = 38
    resolution = 64,64
"""

from __future__ import annotations

import numpy as np

from . import microfacet as mf
from .materials import METAL_IOR, conductor, dielectric, metal
from .render import Camera, Light, SceneSpec

_KNOWN_KEYS = {
    "geometry",
    "material",
    "ndf",
    "alpha",
    "alpha_x",
    "alpha_y",
    "eta",
    "preset",
    "conductor_eta",
    "conductor_kappa",
    "fresnel_one",
    "roughness_texture",
    "light",
    "camera_position",
    "camera_lookat",
    "camera_fov",
    "resolution",
    "indirect",
}


def _parse_vec(text: str, n: int = 3) -> np.ndarray:
    parts = [float(p) for p in text.split(",")]
    if len(parts) != n:
        raise ValueError(f"expected {n} comma-separated numbers, got {text!r}")
    return np.asarray(parts, dtype=np.float64)


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "1", "yes", "on"):
        return True
    if t in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _parse_light(text: str) -> Light:
    parts = text.split()
    kind = parts[0]
    if kind == "directional":
        if len(parts) != 3:
            raise ValueError("directional light needs: direction r,g,b")
        return Light("directional", _parse_vec(parts[1]), _parse_vec(parts[2]))
    if kind == "point":
        if len(parts) != 3:
            raise ValueError("point light needs: position r,g,b")
        return Light("point", _parse_vec(parts[1]), _parse_vec(parts[2]))
    if kind == "env":
        if len(parts) != 2:
            raise ValueError("env light needs: r,g,b")
        return Light("env", None, _parse_vec(parts[1]))
    raise ValueError(f"unknown light kind: {kind!r}")


def parse_scene_text(text: str, base_dir: str = ".") -> SceneSpec:
    """Parse the key = value format; fails loudly on unknown keys."""
    values: dict[str, str] = {}
    lights: list[Light] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, val = (p.strip() for p in line.split("=", 1))
        if key not in _KNOWN_KEYS:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        if key == "light":
            lights.append(_parse_light(val))
        else:
            if key in values:
                raise ValueError(f"line {lineno}: duplicate key {key!r}")
            values[key] = val

    geometry = values.get("geometry", "sphere")
    family = values.get("ndf", "ggx")
    if family not in (mf.GGX, mf.BECKMANN):
        raise ValueError(f"unknown ndf family {family!r}")
    ax = float(values.get("alpha_x", values.get("alpha", "0.5")))
    ay = float(values.get("alpha_y", values.get("alpha", str(ax))))
    prof = mf.RoughnessProfile(family, ax, ay)

    kind = values.get("material", "conductor")
    if kind == "conductor":
        if "preset" in values:
            if values["preset"] not in METAL_IOR:
                raise ValueError(f"unknown metal preset {values['preset']!r}")
            mat = metal(values["preset"], prof, fresnel_one=_parse_bool(values.get("fresnel_one", "false")))
        elif "conductor_eta" in values:
            mat = conductor(
                prof,
                _parse_vec(values["conductor_eta"]),
                _parse_vec(values["conductor_kappa"]),
                fresnel_one=_parse_bool(values.get("fresnel_one", "false")),
            )
        else:
            mat = conductor(prof, fresnel_one=True)
            if not _parse_bool(values.get("fresnel_one", "true")):
                raise ValueError("conductor needs a preset, an explicit IOR, or fresnel_one")
    elif kind == "dielectric":
        mat = dielectric(prof, float(values.get("eta", "1.5")))
    else:
        raise ValueError(f"unknown material kind {kind!r}")

    texture = None
    if "roughness_texture" in values:
        import os

        path = values["roughness_texture"]
        if not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        texture = np.loadtxt(path, delimiter=",", ndmin=2)
        if np.any(texture <= 0.0):
            raise ValueError("roughness texture values must be positive")

    camera = Camera(
        position=_parse_vec(values.get("camera_position", "0,-3.2,0.8")),
        look_at=_parse_vec(values.get("camera_lookat", "0,0,0")),
        vfov_deg=float(values.get("camera_fov", "38")),
    )
    res = values.get("resolution", "64,64").split(",")
    resolution = (int(res[0]), int(res[1]))

    return SceneSpec(
        geometry=geometry,
        material=mat,
        lights=lights,
        camera=camera,
        resolution=resolution,
        roughness_texture=texture,
        indirect=_parse_bool(values.get("indirect", "false")),
    )


def load_scene(path: str) -> SceneSpec:
    import os

    with open(path, "r", encoding="utf-8") as fh:
        return parse_scene_text(fh.read(), base_dir=os.path.dirname(os.path.abspath(path)))
