"""Direction-space light paths and their contribution/density factors.

A path is an ordered sequence of unit flow directions d_0..d_k; the
bounce vertices between consecutive directions carry no position.  The
first direction is the negated incident query direction, the last is
the outgoing query direction.  Dielectric vertices carry a branch tag
(reflect or refract); the side of the interface each segment travels on
follows from the tags, and everything below the interface is evaluated
in the mirrored frame.

The path value factors into per-vertex terms (Fresnel x NDF x Jacobian)
and per-segment terms (exit probability x entry masking).  Two vertex
Jacobian conventions are supported:

* ``consistent`` (default): macro-cosine denominators, with one
  |z-cosine| measure factor folded in per interior direction.  This is
  the convention under which the visible-normal random walk cancels to
  pure Fresnel products and the furnace closes.
* ``literal``: half-vector-cosine denominators and a plain solid-angle
  measure, kept for side-by-side comparison.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import microfacet as mf
from .fresnel import fresnel_conductor, fresnel_dielectric
from .geometry import dot, flip_z
from .materials import MaterialSpec

MODE_LITERAL = "literal"
MODE_CONSISTENT = "consistent"

REFLECT = "reflect"
REFRACT = "refract"

_EPS_NORM = 1e-12
_EPS_DEN = 1e-14


@dataclass(frozen=True)
class EvalConventions:
    """Evaluation knobs shared by path values and estimators."""

    vertex_mode: str = MODE_CONSISTENT
    max_bounces: int = 10

    def __post_init__(self):
        if self.vertex_mode not in (MODE_LITERAL, MODE_CONSISTENT):
            raise ValueError(f"unknown vertex mode: {self.vertex_mode!r}")
        if self.max_bounces < 1:
            raise ValueError("max_bounces must be >= 1")


@dataclass
class LightPath:
    """Flow directions d_0..d_k plus per-vertex branch tags.

    ``dirs`` has shape (k+1, 3) with k >= 1; ``tags`` has one entry per
    vertex (length k), all ``reflect`` for conductors.
    """

    dirs: np.ndarray
    tags: tuple[str, ...] = ()

    def __post_init__(self):
        self.dirs = np.asarray(self.dirs, dtype=np.float64)
        if self.dirs.ndim != 2 or self.dirs.shape[1] != 3 or self.dirs.shape[0] < 2:
            raise ValueError("a path needs at least two directions of shape (k+1, 3)")
        norms = np.linalg.norm(self.dirs, axis=-1)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            raise ValueError("path directions must be unit length")
        if not self.tags:
            self.tags = (REFLECT,) * (self.dirs.shape[0] - 1)
        if len(self.tags) != self.dirs.shape[0] - 1:
            raise ValueError("need one branch tag per vertex")
        for t in self.tags:
            if t not in (REFLECT, REFRACT):
                raise ValueError(f"unknown branch tag: {t!r}")
        # The half vector between -d_i and d_{i+1} degenerates when the
        # flow continues straight through a reflect vertex.
        gap = np.linalg.norm(self.dirs[1:] - self.dirs[:-1], axis=-1)
        for i, t in enumerate(self.tags):
            if t == REFLECT and gap[i] < 1e-9:
                raise ValueError("reflect vertex with equal in/out flow has no half vector")

    @property
    def k(self) -> int:
        """Number of bounces (vertices)."""
        return self.dirs.shape[0] - 1

    @property
    def omega_i(self) -> np.ndarray:
        return -self.dirs[0]

    @property
    def omega_o(self) -> np.ndarray:
        return self.dirs[-1]


def reverse(path: LightPath) -> LightPath:
    """Swap query roles: (-d_k, ..., -d_0) with vertex tags reversed."""
    return LightPath(-path.dirs[::-1].copy(), tuple(reversed(path.tags)))


def derive_sides(d0_z, tags_refract: np.ndarray) -> np.ndarray:
    """Interface side of each segment: +1 above, -1 below.

    ``tags_refract``: bool array (..., k).  The first segment's side is
    the side the incident light arrives from; each refract vertex flips
    it.
    """
    tags_refract = np.asarray(tags_refract, bool)
    n = tags_refract.shape[:-1]
    k = tags_refract.shape[-1]
    sides = np.empty(n + (k + 1,), dtype=np.float64)
    sides[..., 0] = np.where(np.asarray(d0_z) < 0.0, 1.0, -1.0)
    flips = np.where(tags_refract, -1.0, 1.0)
    sides[..., 1:] = sides[..., :1] * np.cumprod(flips, axis=-1)
    return sides


class _PathFactors:
    """All per-vertex and per-segment quantities for a batch of paths.

    Shapes: dirs (n, k+1, 3); tags (n, k) bool, True = refract.  All
    paths in a batch share the same length; invalid rows simply produce
    zero factors.
    """

    def __init__(
        self,
        dirs: np.ndarray,
        tags: np.ndarray,
        mat: MaterialSpec,
        conv: EvalConventions,
        sides0=None,
    ):
        dirs = np.asarray(dirs, dtype=np.float64)
        tags = np.asarray(tags, dtype=bool)
        n, kp1, _ = dirs.shape
        k = kp1 - 1
        self.n, self.k = n, k
        self.dirs, self.tags = dirs, tags
        self.mat, self.conv = mat, conv
        prof = mat.roughness

        if sides0 is None:
            self.sides = derive_sides(dirs[:, 0, 2], tags)
        else:
            # Mid-walk evaluation: the first segment's side is walker state,
            # not derivable from the direction sign.
            flips = np.where(tags, -1.0, 1.0)
            self.sides = np.empty((n, k + 1))
            self.sides[:, 0] = sides0
            self.sides[:, 1:] = self.sides[:, :1] * np.cumprod(flips, axis=-1)

        # Per-vertex facet normals in world coordinates, oriented into the
        # upper hemisphere of the entry-side frame.
        self.h_world = np.zeros((n, k, 3))
        self.valid = np.ones((n, k), dtype=bool)
        self.cos_wh = np.zeros((n, k))  # (-d_i)·h in entry frame
        self.cos_bh = np.zeros((n, k))  # d_{i+1}·h in entry frame
        self.D = np.zeros((n, k))
        self.F = np.zeros((n, k, 3))
        self.vertex = np.zeros((n, k, 3))
        self.dd = np.zeros((n, k))  # refraction half-vector denominator
        self.eta_in = np.ones((n, k))
        self.eta_out = np.ones((n, k))

        for i in range(k):
            self._vertex_factors(i)

        self._segment_factors()

    # -- vertices ----------------------------------------------------------

    def _vertex_factors(self, i: int):
        mat, prof = self.mat, self.mat.roughness
        s = self.sides[:, i]
        a = flip_z(self.dirs[:, i], s)
        b = flip_z(self.dirs[:, i + 1], s)
        w = -a
        refr = self.tags[:, i]

        if mat.is_conductor:
            eta_in = np.ones(self.n)
            eta_out = np.ones(self.n)
        else:
            eta = mat.eta
            eta_in = np.where(s > 0.0, 1.0, eta)
            eta_out = np.where(refr, np.where(s > 0.0, eta, 1.0), eta_in)
        self.eta_in[:, i] = eta_in
        self.eta_out[:, i] = eta_out

        hu = np.where(refr[:, None], -(eta_in[:, None] * w + eta_out[:, None] * b), w + b)
        norm = np.linalg.norm(hu, axis=-1)
        ok = norm > _EPS_NORM
        h = np.where(ok[:, None], hu / np.maximum(norm, _EPS_NORM)[:, None], 0.0)
        # Face the entry-frame upper hemisphere.
        h = np.where(h[:, 2:3] < 0.0, -h, h)

        cos_wh = dot(w, h)
        cos_bh = dot(b, h)
        D = mf.ndf_D(h, prof)

        if mat.is_conductor:
            if mat.fresnel_one:
                F = np.ones((self.n, 3))
            else:
                F = fresnel_conductor(np.clip(cos_wh, 0.0, 1.0), mat.conductor_ior)
        else:
            c_signed = np.where(s > 0.0, cos_wh, -cos_wh)
            F = fresnel_dielectric(c_signed, mat.dielectric_ior)[:, None] * np.ones(3)

        az = np.abs(self.dirs[:, i, 2])
        bz = np.abs(self.dirs[:, i + 1, 2])
        literal = self.conv.vertex_mode == MODE_LITERAL

        v = np.zeros((self.n, 3))
        refl = ~refr & ok
        if np.any(refl):
            if literal:
                den = 4.0 * np.abs(cos_wh) * np.abs(cos_bh)
            else:
                den = 4.0 * az * bz
            val = F * (D / np.maximum(den, _EPS_DEN))[:, None]
            v[refl] = val[refl]

        refr_ok = refr & ok & (cos_wh > 0.0) & (cos_bh < 0.0)
        if np.any(refr_ok):
            dd = eta_in * cos_wh + eta_out * cos_bh
            self.dd[:, i] = dd
            jac_num = eta_out**2 * np.abs(cos_bh)
            dd2 = np.maximum(dd * dd, _EPS_DEN)
            if literal:
                val = (1.0 - F) * (D * eta_out**2 / dd2)[:, None]
            else:
                val = (1.0 - F) * (D * np.abs(cos_wh) * jac_num / (dd2 * np.maximum(az * bz, _EPS_DEN)))[:, None]
            v[refr_ok] = val[refr_ok]

        self.h_world[:, i] = flip_z(h, s)
        self.valid[:, i] = ok & ((~refr) | ((cos_wh > 0.0) & (cos_bh < 0.0)))
        self.cos_wh[:, i] = cos_wh
        self.cos_bh[:, i] = cos_bh
        self.D[:, i] = D
        self.F[:, i] = F
        self.vertex[:, i] = np.maximum(v, 0.0)

    # -- segments ----------------------------------------------------------

    def facet_seen(self, vertex: int, side) -> np.ndarray:
        """Facet normal of a vertex as seen from a given interface side."""
        same = side == self.sides[:, vertex]
        return np.where(same[:, None], self.h_world[:, vertex], -self.h_world[:, vertex])

    def _segment_factors(self):
        n, k = self.n, self.k
        prof = self.mat.roughness
        self.e = np.ones((n, k + 1))
        self.p = np.ones((n, k + 1))

        for i in range(k + 1):
            s = self.sides[:, i]
            d = self.dirs[:, i]
            df = flip_z(d, s)
            away = df[:, 2] > 0.0

            if i > 0:
                m_prev = self.facet_seen(i - 1, s)
                local = (dot(d, m_prev) > 0.0).astype(float)
                g1d = mf.g1_dist(df, prof)
                if i < k:
                    # Escape-candidate directions may fail to leave; rays
                    # moving toward the surface always hit it again.
                    self.e[:, i] = np.where(away, 1.0 - local * g1d, 1.0)
                else:
                    self.e[:, i] = np.where(away, local * g1d, 0.0)

            if i < k:
                m_here = self.facet_seen(i, s)
                local = (dot(-d, m_here) > 0.0).astype(float)
                g1d = mf.g1_dist(flip_z(-d, s), prof)
                self.p[:, i] = local * g1d

    # -- assembly ----------------------------------------------------------

    def segment(self) -> np.ndarray:
        return self.e * self.p

    def measure_weight(self) -> np.ndarray:
        """Interior |z| cosines folded in under the consistent convention."""
        if self.conv.vertex_mode == MODE_LITERAL or self.k < 2:
            return np.ones(self.n)
        return np.prod(np.abs(self.dirs[:, 1:-1, 2]), axis=1)

    def contribution(self) -> np.ndarray:
        scalar = np.prod(self.segment(), axis=1) * self.measure_weight()
        scalar = scalar * np.all(self.valid, axis=1)
        rgb = np.prod(self.vertex, axis=1)
        out = scalar[:, None] * rgb
        out[~np.isfinite(out).all(axis=1)] = 0.0
        return out


def path_factors(dirs, tags, mat: MaterialSpec, conv: EvalConventions, sides0=None) -> _PathFactors:
    return _PathFactors(np.asarray(dirs), np.asarray(tags), mat, conv, sides0=sides0)


def _single(path: LightPath):
    dirs = path.dirs[None]
    tags = np.array([[t == REFRACT for t in path.tags]])
    return dirs, tags


# ---------------------------------------------------------------------------
# Spec-facing operations


def path_contribution(path: LightPath, mat: MaterialSpec, conv: EvalConventions = EvalConventions()) -> np.ndarray:
    """Full path value: product of segment terms, vertex terms and, in
    consistent mode, interior measure cosines.  Finite and >= 0."""
    dirs, tags = _single(path)
    return path_factors(dirs, tags, mat, conv).contribution()[0]


def vertex_term(
    d_in: np.ndarray,
    d_out: np.ndarray,
    mat: MaterialSpec,
    conv: EvalConventions = EvalConventions(),
    branch: str | None = None,
) -> np.ndarray:
    """Per-bounce Fresnel x NDF x Jacobian factor (no occlusion).

    The arrival side follows from d_in.  ``branch`` defaults to reflect
    for conductors; for dielectrics it is inferred from whether d_out
    leaves on the arrival side.
    """
    d_in = np.asarray(d_in, float)
    d_out = np.asarray(d_out, float)
    if branch is None:
        if mat.is_conductor:
            branch = REFLECT
        else:
            side = 1.0 if d_in[2] < 0.0 else -1.0
            branch = REFLECT if flip_z(d_out, side)[2] > 0.0 else REFRACT
    dirs = np.stack([d_in, d_out])[None]
    tags = np.array([[branch == REFRACT]])
    return path_factors(dirs, tags, mat, conv).vertex[0, 0]


def exit_probability(path: LightPath, i: int, mat: MaterialSpec, conv: EvalConventions = EvalConventions()) -> float:
    """Exit factor e_i of segment i; 1 for i = 0."""
    dirs, tags = _single(path)
    return float(path_factors(dirs, tags, mat, conv).e[0, i])


def entry_masking(path: LightPath, i: int, mat: MaterialSpec, conv: EvalConventions = EvalConventions()) -> float:
    """Entry masking p_i of segment i; 1 for i = k."""
    dirs, tags = _single(path)
    return float(path_factors(dirs, tags, mat, conv).p[0, i])


def segment_term(path: LightPath, i: int, mat: MaterialSpec, conv: EvalConventions = EvalConventions()) -> float:
    """s_i = e_i * p_i; occlusion factors never double-count a direction."""
    dirs, tags = _single(path)
    pf = path_factors(dirs, tags, mat, conv)
    return float(pf.e[0, i] * pf.p[0, i])


# ---------------------------------------------------------------------------
# Forward sampling density of a path


def step_density(dirs, tags, sides, i, mat: MaterialSpec):
    """Density (per solid angle of d_{i+1}) of one walk step, split into
    (vndf-pushforward density, discrete branch probability).

    Works on batches; ``i`` indexes the vertex.  The reverse-walk density
    of the same edge is obtained by calling this with the directions
    negated and swapped and the side of the far segment.
    """
    dirs = np.asarray(dirs, float)
    tags = np.asarray(tags, bool)
    prof = mat.roughness
    s = sides[:, i]
    a = flip_z(dirs[:, i], s)
    b = flip_z(dirs[:, i + 1], s)
    w = -a
    refr = tags[:, i]

    if mat.is_conductor:
        eta_in = np.ones(len(a))
        eta_out = np.ones(len(a))
    else:
        eta = mat.eta
        eta_in = np.where(s > 0.0, 1.0, eta)
        eta_out = np.where(refr, np.where(s > 0.0, eta, 1.0), eta_in)

    hu = np.where(refr[:, None], -(eta_in[:, None] * w + eta_out[:, None] * b), w + b)
    norm = np.linalg.norm(hu, axis=-1)
    ok = norm > _EPS_NORM
    h = np.where(ok[:, None], hu / np.maximum(norm, _EPS_NORM)[:, None], 0.0)
    h = np.where(h[:, 2:3] < 0.0, -h, h)

    cos_wh = dot(w, h)
    cos_bh = dot(b, h)
    pdf_m = mf.pdf_vndf(w, h, prof)

    dens = np.zeros(len(a))
    refl = ~refr
    dens[refl] = (pdf_m / np.maximum(4.0 * np.abs(cos_bh), _EPS_DEN))[refl]
    if np.any(refr):
        dd = eta_in * cos_wh + eta_out * cos_bh
        jac = eta_out**2 * np.abs(cos_bh) / np.maximum(dd * dd, _EPS_DEN)
        dens[refr] = (pdf_m * jac)[refr]
    dens = np.where(ok, dens, 0.0)

    if mat.is_conductor:
        branch = np.ones(len(a))
    else:
        c_signed = np.where(s > 0.0, cos_wh, -cos_wh)
        Fd = fresnel_dielectric(c_signed, mat.dielectric_ior)
        branch = np.where(refr, 1.0 - Fd, Fd)
    return dens, branch


def continue_probability(pf: _PathFactors, i: int) -> np.ndarray:
    """Probability that the walk keeps going after producing d_{i}.

    Equals the interior exit factor e_i: rays headed back to the surface
    always continue, escape candidates continue with 1 - G1.
    """
    s = pf.sides[:, i]
    d = pf.dirs[:, i]
    df = flip_z(d, s)
    away = df[:, 2] > 0.0
    m_prev = pf.facet_seen(i - 1, s)
    local = (dot(d, m_prev) > 0.0).astype(float)
    g1d = mf.g1_dist(df, pf.mat.roughness)
    return np.where(away, 1.0 - local * g1d, 1.0)


def path_pdf_forward(path: LightPath, mat: MaterialSpec, conv: EvalConventions = EvalConventions()) -> float:
    """Forward-walk density of the interior directions d_1..d_{k-1}.

    Product over sampled directions of the VNDF pushforward density,
    the discrete branch probability and the continue probability of
    every stochastic decision the walk takes; 1 for length-2 paths.
    """
    dirs, tags = _single(path)
    pf = path_factors(dirs, tags, mat, conv)
    total = 1.0
    for j in range(path.k - 1):
        dens, branch = step_density(dirs, tags, pf.sides, j, mat)
        cont = continue_probability(pf, j + 1)
        total *= float(dens[0] * branch[0] * cont[0])
    return total


# ---------------------------------------------------------------------------
# Debug dump


def path_debug_csv(path: LightPath, mat: MaterialSpec, conv: EvalConventions = EvalConventions()) -> str:
    """Per-factor breakdown of a path as CSV (for the compare tooling)."""
    dirs, tags = _single(path)
    pf = path_factors(dirs, tags, mat, conv)
    lines = ["row,index,x,y,z,side,tag,e,p,v_r,v_g,v_b"]
    for i in range(path.k + 1):
        d = path.dirs[i]
        lines.append(
            f"dir,{i},{d[0]:.9g},{d[1]:.9g},{d[2]:.9g},{int(pf.sides[0, i])},,"
            f"{pf.e[0, i]:.9g},{pf.p[0, i]:.9g},,,"
        )
        if i < path.k:
            v = pf.vertex[0, i]
            lines.append(
                f"vertex,{i},{pf.h_world[0, i, 0]:.9g},{pf.h_world[0, i, 1]:.9g},"
                f"{pf.h_world[0, i, 2]:.9g},,{path.tags[i]},,,{v[0]:.9g},{v[1]:.9g},{v[2]:.9g}"
            )
    f = pf.contribution()[0]
    lines.append(f"total,,,,,,,,,{f[0]:.9g},{f[1]:.9g},{f[2]:.9g}")
    return "\n".join(lines) + "\n"
