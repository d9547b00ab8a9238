"""Desk-scale validation renderer: sphere/slab scenes under delta and
constant-environment lights, evaluated with the path-space estimators.

Deliberately small: direct lighting (plus an optional single indirect
bounce), pinhole camera, two analytic shapes.  Every pixel owns a
counter-based random stream derived from (seed, pixel index), so output
is bitwise independent of the thread count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import estimators as est
from . import microfacet as mf
from .geometry import make_frame, normalize, to_local, to_world
from .image import ImageBuffer
from .materials import MaterialSpec, conductor, dielectric, metal
from .paths import EvalConventions
from .rng import RandomStream

SPHERE = "sphere"
SLAB = "slab"

# Slab half-extent in world units; the slab is the z = 0 square.
SLAB_HALF = 1.5

THREADS_ENV_VAR = "SMITHMS_THREADS"


@dataclass
class Light:
    kind: str  # directional | point | env
    vector: np.ndarray | None = None  # toward-light direction or position
    radiance: np.ndarray = field(default_factory=lambda: np.ones(3))


@dataclass
class Camera:
    position: np.ndarray
    look_at: np.ndarray
    vfov_deg: float = 35.0

    def basis(self):
        fwd = normalize(self.look_at - self.position)
        up = np.array([0.0, 0.0, 1.0])
        if abs(float(fwd @ up)) > 0.999:
            up = np.array([0.0, 1.0, 0.0])
        right = normalize(np.cross(fwd, up))
        return fwd, right, np.cross(right, fwd)

    def pixel_rays(self, x: int, y: int, width: int, height: int, jitter: np.ndarray):
        """Rays through one pixel; jitter has shape (spp, 2) in [0,1)."""
        fwd, right, cam_up = self.basis()
        tan_half = np.tan(np.deg2rad(self.vfov_deg) * 0.5)
        aspect = width / height
        px = (x + jitter[:, 0]) / width
        py = (y + jitter[:, 1]) / height
        u = (2.0 * px - 1.0) * tan_half * aspect
        v = (1.0 - 2.0 * py) * tan_half
        d = fwd[None] + u[:, None] * right[None] + v[:, None] * cam_up[None]
        d = d / np.linalg.norm(d, axis=-1, keepdims=True)
        o = np.broadcast_to(self.position, d.shape)
        return o, d


@dataclass
class SceneSpec:
    geometry: str
    material: MaterialSpec
    lights: list[Light]
    camera: Camera
    resolution: tuple[int, int] = (64, 64)
    roughness_texture: np.ndarray | None = None  # lat-long scalar grid
    indirect: bool = False

    def __post_init__(self):
        if self.geometry not in (SPHERE, SLAB):
            raise ValueError(f"unknown geometry: {self.geometry!r}")
        if not self.lights:
            raise ValueError("scene needs at least one light")
        if self.resolution[0] < 16 or self.resolution[1] < 16:
            raise ValueError("resolution must be at least 16x16")


@dataclass
class RunConfig:
    spp: int = 4
    max_bounces: int = 10
    estimator: str = "bdpt"  # pt | bdpt
    vertex_mode: str = "consistent"
    seed: int = 0
    threads: int = 1
    n_eval_samples: int = 1

    def __post_init__(self):
        if self.spp < 1:
            raise ValueError("spp must be >= 1")
        if self.estimator not in ("pt", "bdpt"):
            raise ValueError("estimator must be pt or bdpt")

    @property
    def conventions(self) -> EvalConventions:
        return EvalConventions(vertex_mode=self.vertex_mode, max_bounces=self.max_bounces)

    def effective_threads(self) -> int:
        env = os.environ.get(THREADS_ENV_VAR)
        if env:
            return max(1, int(env))
        return max(1, self.threads)


# ---------------------------------------------------------------------------
# Geometry


def _intersect(geometry: str, o: np.ndarray, d: np.ndarray):
    """Ray/shape intersection.  Returns (hit, t, point, normal)."""
    if geometry == SPHERE:
        # |o + t d| = 1 with o outside.
        b = np.sum(o * d, axis=-1)
        c = np.sum(o * o, axis=-1) - 1.0
        disc = b * b - c
        hit = disc > 0.0
        t = -b - np.sqrt(np.maximum(disc, 0.0))
        hit &= t > 1e-6
        p = o + t[..., None] * d
        n = p.copy()
        return hit, t, p, n
    # Slab: z = 0 square of half-extent SLAB_HALF.
    dz = d[..., 2]
    t = np.where(np.abs(dz) > 1e-12, -o[..., 2] / np.where(np.abs(dz) > 1e-12, dz, 1.0), -1.0)
    p = o + t[..., None] * d
    hit = (t > 1e-6) & (np.abs(p[..., 0]) <= SLAB_HALF) & (np.abs(p[..., 1]) <= SLAB_HALF)
    n = np.zeros_like(p)
    n[..., 2] = 1.0
    return hit, t, p, n


def _texture_alpha(scene: SceneSpec, point: np.ndarray, normal: np.ndarray) -> float | None:
    tex = scene.roughness_texture
    if tex is None:
        return None
    if scene.geometry == SPHERE:
        theta = np.arccos(np.clip(normal[2], -1.0, 1.0))
        phi = np.arctan2(normal[1], normal[0])
        u = (phi + np.pi) / (2.0 * np.pi)
        v = theta / np.pi
    else:
        u = (point[0] + SLAB_HALF) / (2.0 * SLAB_HALF)
        v = (point[1] + SLAB_HALF) / (2.0 * SLAB_HALF)
    rows, cols = tex.shape
    i = min(rows - 1, int(v * rows))
    j = min(cols - 1, int(u * cols))
    return float(tex[i, j])


# ---------------------------------------------------------------------------
# Shading


def _eval_rho_batch(wi, wo, mat, cfg: RunConfig, rs) -> np.ndarray:
    conv = cfg.conventions
    if cfg.estimator == "pt":
        return est.eval_pt_batch(wi, wo, mat, conv, rs)
    return est.eval_bdpt_batch(wi, wo, mat, conv, rs)


def _shade_pixel(scene: SceneSpec, cfg: RunConfig, o, d, rs: RandomStream) -> np.ndarray:
    """Radiance estimate for one pixel's spp rays (arrays (spp, 3))."""
    spp = d.shape[0]
    hit, t, p, n = _intersect(scene.geometry, o, d)
    out = np.zeros((spp, 3))
    if not np.any(hit):
        return out
    idx = np.flatnonzero(hit)

    for ray in idx:
        point, normal = p[ray], n[ray]
        mat = scene.material
        alpha = _texture_alpha(scene, point, normal)
        if alpha is not None:
            mat = mat.with_roughness(mat.roughness.with_alpha(alpha))
        frame = make_frame(normal)
        wo_local = to_local(*frame, -d[ray])
        out[ray] = _direct_light(scene, cfg, mat, frame, point, wo_local, rs)
    return out


def _direct_light(scene, cfg, mat, frame, point, wo_local, rs, allow_indirect=True) -> np.ndarray:
    total = np.zeros(3)
    ne = cfg.n_eval_samples
    for light in scene.lights:
        if light.kind in ("directional", "point"):
            if light.kind == "directional":
                wi_world = normalize(light.vector)
                radiance = light.radiance
            else:
                delta = light.vector - point
                dist2 = float(delta @ delta)
                wi_world = delta / np.sqrt(dist2)
                radiance = light.radiance / dist2
            wi_local = to_local(*frame, wi_world)
            if scene.geometry == SPHERE and wi_local[2] <= 0.0:
                continue  # convex self-occlusion
            if mat.is_conductor and wi_local[2] <= 0.0:
                continue
            rho = _eval_rho_batch(
                np.tile(wi_local, (ne, 1)), np.tile(wo_local, (ne, 1)), mat, cfg, rs
            ).mean(axis=0)
            total += radiance * rho * abs(wi_local[2])
        elif light.kind == "env":
            total += _env_light(scene, cfg, mat, wo_local, light.radiance, rs)
        else:
            raise ValueError(f"unknown light kind: {light.kind!r}")

    if scene.indirect and allow_indirect:
        total += _indirect_bounce(scene, cfg, mat, frame, point, wo_local, rs)
    return total


def _indirect_bounce(scene, cfg, mat, frame, point, wo_local, rs) -> np.ndarray:
    """One extra bounce via BSDF sampling.  The built-in shapes are
    convex, so continuation rays only matter for future geometry."""
    rec = est.sample(wo_local, mat, cfg.conventions, rs=rs)
    if rec is None:
        return np.zeros(3)
    d_world = to_world(*frame, rec.omega_o)
    hit, _, p2, n2 = _intersect(scene.geometry, point[None] + 1e-6 * d_world[None], d_world[None])
    if not hit[0]:
        return np.zeros(3)
    frame2 = make_frame(n2[0])
    wo2 = to_local(*frame2, -d_world)
    mat2 = scene.material
    alpha = _texture_alpha(scene, p2[0], n2[0])
    if alpha is not None:
        mat2 = mat2.with_roughness(mat2.roughness.with_alpha(alpha))
    return rec.weight * _direct_light(scene, cfg, mat2, frame2, p2[0], wo2, rs, allow_indirect=False)


def _env_light(scene, cfg, mat, wo_local, radiance, rs) -> np.ndarray:
    """Constant environment via one-sample MIS between cosine light
    sampling and BSDF sampling through the density proxy."""
    conv = cfg.conventions
    both_sides = (not mat.is_conductor) and scene.geometry == SLAB

    # Light sampling: cosine-distributed incident direction.
    u1, u2 = rs.uniform(2)
    ct = np.sqrt(u1)
    st = np.sqrt(max(0.0, 1.0 - ct * ct))
    phi = 2.0 * np.pi * u2
    wi = np.array([st * np.cos(phi), st * np.sin(phi), ct])
    p_light_density = ct / np.pi
    if both_sides:
        if rs.uniform() < 0.5:
            wi = wi * np.array([1.0, 1.0, -1.0])
        p_light_density = ct / (2.0 * np.pi)

    rho = _eval_rho_batch(wi[None], wo_local[None], mat, cfg, rs)[0]
    p_b = est.pdf_proxy(wo_local, wi, mat, conv)
    w_l = p_light_density / (p_light_density + p_b)
    light_side = radiance * rho * abs(wi[2]) / p_light_density * w_l

    # BSDF sampling: walk the lobe of the outgoing direction (the stored
    # kernel is symmetric for conductors; dielectric transport reuses the
    # same walk convention).
    rec = est.sample(wo_local, mat, conv, rs=rs)
    bsdf_side = np.zeros(3)
    if rec is not None:
        wi_s = rec.omega_o
        visible = wi_s[2] > 0.0 if scene.geometry == SPHERE else True
        if mat.is_conductor and wi_s[2] <= 0.0:
            visible = False
        if visible:
            p_l = abs(wi_s[2]) / np.pi if not both_sides else abs(wi_s[2]) / (2.0 * np.pi)
            p_b2 = est.pdf_proxy(wo_local, wi_s, mat, conv)
            w_b = p_b2 / (p_l + p_b2) if (p_l + p_b2) > 0 else 0.0
            bsdf_side = radiance * rec.weight * w_b
    return light_side + bsdf_side


# ---------------------------------------------------------------------------
# Entry points


def render(scene: SceneSpec, cfg: RunConfig) -> ImageBuffer:
    """Render a scene deterministically: same seed, same image, any
    thread count.  Rows are the parallel work unit; every pixel draws
    from its own (seed, pixel index) stream."""
    width, height = scene.resolution
    img = np.zeros((height, width, 3), dtype=np.float64)
    base = RandomStream(cfg.seed)

    def run_row(y: int):
        row = np.zeros((width, 3))
        for x in range(width):
            prs = base.split(y * width + x)
            jit = prs.uniform((cfg.spp, 2))
            o, d = scene.camera.pixel_rays(x, y, width, height, jit)
            vals = _shade_pixel(scene, cfg, o, d, prs)
            row[x] = vals.mean(axis=0)
        return y, row

    n_threads = cfg.effective_threads()
    if n_threads == 1:
        for y in range(height):
            _, row = run_row(y)
            img[y] = row
    else:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            for y, row in pool.map(run_row, range(height)):
                img[y] = row

    img = np.maximum(img, 0.0)
    return ImageBuffer(img.astype(np.float32))


def lobe_tabulate(
    omega_i: np.ndarray,
    mat: MaterialSpec,
    conv: EvalConventions = EvalConventions(),
    n_theta: int = 32,
    n_phi: int = 16,
    n_samples: int = 512,
    rs: RandomStream | None = None,
):
    """Tabulate the scattered lobe on a (theta_o, phi_o) grid.

    Returns (csv_text, totals) where totals holds the reflected and
    transmitted energies.  Columns: theta_deg, phi_deg, then RGB triples
    for 1-bounce, 2-bounce, 3-plus-bounce and total.  The grid covers
    the full sphere; energies integrate rho * |cos| with the cell solid
    angles.
    """
    rs = rs or RandomStream(0)
    wi = np.asarray(omega_i, dtype=np.float64)
    thetas = (np.arange(n_theta) + 0.5) * (np.pi / n_theta)
    phis = (np.arange(n_phi) + 0.5) * (2.0 * np.pi / n_phi)
    rows = []
    e_r = 0.0
    e_t = 0.0
    for th in thetas:
        for ph in phis:
            wo = np.array([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)])
            vals = est.eval_pt_batch(
                np.tile(wi, (n_samples, 1)),
                np.tile(wo, (n_samples, 1)),
                mat,
                conv,
                rs,
                bounce_resolved=True,
            )
            per_bounce = vals.mean(axis=0)  # (max_bounces, 3)
            b1 = per_bounce[0]
            b2 = per_bounce[1] if per_bounce.shape[0] > 1 else np.zeros(3)
            b3p = per_bounce[2:].sum(axis=0) if per_bounce.shape[0] > 2 else np.zeros(3)
            tot = per_bounce.sum(axis=0)
            rows.append((np.degrees(th), np.degrees(ph), b1, b2, b3p, tot))
            cell = np.sin(th) * (np.pi / n_theta) * (2.0 * np.pi / n_phi)
            energy = float(tot[0]) * abs(np.cos(th)) * cell
            if np.cos(th) > 0:
                e_r += energy
            else:
                e_t += energy

    lines = [
        "theta_deg,phi_deg,b1_r,b1_g,b1_b,b2_r,b2_g,b2_b,b3p_r,b3p_g,b3p_b,total_r,total_g,total_b"
    ]
    for th, ph, b1, b2, b3p, tot in rows:
        vals = ",".join(f"{v:.8g}" for v in (*b1, *b2, *b3p, *tot))
        lines.append(f"{th:.3f},{ph:.3f},{vals}")
    lines.append(f"# E_r = {e_r:.6f}")
    lines.append(f"# E_t = {e_t:.6f}")
    return "\n".join(lines) + "\n", {"E_r": e_r, "E_t": e_t}
