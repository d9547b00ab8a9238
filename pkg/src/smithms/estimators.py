"""Monte Carlo estimators over direction-space paths.

All estimators ride on the same visible-normal random walk: sample a
facet from the VNDF of the reversed flow, pick reflection or refraction
with the Fresnel value as probability, and after an escape-candidate
bounce leave the surface with probability G1.  Under the ``consistent``
vertex convention every geometric factor cancels against the sampling
density, so a walk's throughput is the product of its Fresnel factors
(exactly 1 for dielectrics).

`eval_pt` adds a next-event connection to the query outgoing direction
at every bounce; `eval_bdpt` additionally traces a reverse walk from
the outgoing direction and combines every prefix/suffix split with
balance-heuristic multiple importance sampling.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import microfacet as mf
from . import paths as ps
from .fresnel import fresnel_conductor, fresnel_dielectric
from .geometry import dot, flip_z, reflect, refract_batch
from .materials import MaterialSpec
from .microfacet import pdf_vndf, sample_vndf_batch
from .paths import EvalConventions, MODE_LITERAL
from .rng import RandomStream

_EPS = 1e-14


@dataclass
class BsdfQuery:
    """One evaluation request; directions may lie in either hemisphere."""

    omega_i: np.ndarray
    omega_o: np.ndarray
    mat: MaterialSpec
    conv: EvalConventions = field(default_factory=EvalConventions)
    n_samples: int = 1

    def __post_init__(self):
        self.omega_i = np.asarray(self.omega_i, dtype=np.float64)
        self.omega_o = np.asarray(self.omega_o, dtype=np.float64)
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")


@dataclass
class SampleRecord:
    """Result of importance-sampling an outgoing direction."""

    omega_o: np.ndarray
    weight: np.ndarray
    bounce_count: int
    side: str  # "reflected" or "transmitted"


@dataclass
class Diagnostics:
    """Counters for guarded failure modes, reportable by the CLI."""

    nonfinite_dropped: int = 0
    failed_walks: int = 0
    total_walks: int = 0

    def merge(self, other: "Diagnostics"):
        self.nonfinite_dropped += other.nonfinite_dropped
        self.failed_walks += other.failed_walks
        self.total_walks += other.total_walks

    def report(self) -> str:
        lines = [
            "diagnostics:",
            f"  total_walks        = {self.total_walks}",
            f"  failed_walks       = {self.failed_walks}",
            f"  nonfinite_dropped  = {self.nonfinite_dropped}",
        ]
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# The shared walk step


def _branch_and_bounce(d, side, m_frame, mat, rs, n):
    """Choose reflect/refract at a batch of vertices and bounce the flow.

    d, side: incoming flow and its interface side; m_frame: facet normal
    in the entry frame.  Returns (d_next, side_next, refracted, F_rgb)
    where F_rgb is the Fresnel value of the branch actually present in
    the vertex term numerator (F for reflect, used by conductor weights).
    """
    d_f = flip_z(d, side)
    cos_wm = dot(-d_f, m_frame)  # > 0 by VNDF construction

    if mat.is_conductor:
        if mat.fresnel_one:
            F = np.ones((n, 3))
        else:
            F = fresnel_conductor(np.clip(cos_wm, 0.0, 1.0), mat.conductor_ior)
        d_next_f = reflect(d_f, m_frame)
        return flip_z(d_next_f, side), side.copy(), np.zeros(n, bool), F

    eta = mat.eta
    c_signed = np.where(side > 0.0, cos_wm, -cos_wm)
    Fd = fresnel_dielectric(c_signed, mat.dielectric_ior)
    refr = rs.uniform(n) >= Fd
    eta_in = np.where(side > 0.0, 1.0, eta)
    eta_out = np.where(side > 0.0, eta, 1.0)

    d_refl = reflect(d_f, m_frame)
    d_refr, tir = refract_batch(d_f, m_frame, eta_in / eta_out)
    # Fresnel is exactly 1 under TIR, so the refract branch is unreachable
    # there; keep the row well-defined anyway.
    refr = refr & ~tir
    d_next_f = np.where(refr[:, None], d_refr, d_refl)
    side_next = np.where(refr, -side, side)
    F = np.where(refr, 1.0 - Fd, Fd)[:, None] * np.ones(3)
    return flip_z(d_next_f, side), side_next, refr, F


def _literal_ratio(d, side, m_frame, d_next, refracted, mat):
    """Extra throughput factor of the literal vertex convention.

    Relative to the consistent convention the literal vertex term swaps
    macro cosines for half-vector cosines and drops the interior measure
    cosine, leaving a geometric residue per continued bounce.
    """
    d_f = flip_z(d, side)
    cos_wm = dot(-d_f, m_frame)
    az = np.abs(d[..., 2])
    d_next_f = flip_z(d_next, side)  # old frame
    cos_bm = np.abs(dot(d_next_f, m_frame))
    denom = np.where(refracted, cos_wm * cos_bm, cos_wm * cos_wm)
    return az / np.maximum(denom, _EPS)


# ---------------------------------------------------------------------------
# Path-traced evaluation with next-event estimation


def eval_pt_batch(
    omega_i: np.ndarray,
    omega_o: np.ndarray,
    mat: MaterialSpec,
    conv: EvalConventions,
    rs: RandomStream,
    bounce_resolved: bool = False,
    diag: Diagnostics | None = None,
) -> np.ndarray:
    """One-sample PT estimates for a batch of (omega_i, omega_o) queries.

    Returns (n, 3), or (n, max_bounces, 3) split by path vertex count
    when ``bounce_resolved``.
    """
    wi = np.atleast_2d(np.asarray(omega_i, dtype=np.float64))
    wo = np.atleast_2d(np.asarray(omega_o, dtype=np.float64))
    wi, wo = np.broadcast_arrays(wi, wo)
    wi = np.ascontiguousarray(wi)
    wo = np.ascontiguousarray(wo)
    n = wi.shape[0]
    literal = conv.vertex_mode == MODE_LITERAL

    d = -wi.copy()
    side = np.where(wi[:, 2] > 0.0, 1.0, -1.0)
    W = np.ones((n, 3))
    out = np.zeros((n, conv.max_bounces, 3)) if bounce_resolved else np.zeros((n, 3))
    idx = np.arange(n)

    for bounce in range(conv.max_bounces):
        if idx.size == 0:
            break
        d_a, side_a, W_a = d[idx], side[idx], W[idx]
        wo_a = wo[idx]

        # Next-event connection: finish the path with the query direction.
        exit_side = np.where(wo_a[:, 2] > 0.0, 1.0, -1.0)
        tag_refr = exit_side != side_a
        if mat.is_conductor:
            usable = ~tag_refr
        else:
            usable = np.ones(idx.size, bool)
        if np.any(usable):
            dirs2 = np.stack([d_a, wo_a], axis=1)
            pf = ps.path_factors(dirs2, tag_refr[:, None], mat, conv, sides0=side_a)
            nee = pf.contribution() * W_a
            nee[~usable] = 0.0
            bad = ~np.isfinite(nee).all(axis=1)
            if np.any(bad):
                nee[bad] = 0.0
                if diag is not None:
                    diag.nonfinite_dropped += int(bad.sum())
            if bounce_resolved:
                out[idx, bounce] += nee
            else:
                out[idx] += nee

        if bounce == conv.max_bounces - 1:
            break

        # Extend the walk.
        w_query = flip_z(-d_a, side_a)
        m_frame, _ = sample_vndf_batch(w_query, mat.roughness, rs)
        d_next, side_next, refracted, F = _branch_and_bounce(d_a, side_a, m_frame, mat, rs, idx.size)
        ratio = F if mat.is_conductor else np.ones((idx.size, 3))
        if literal:
            ratio = ratio * _literal_ratio(d_a, side_a, m_frame, d_next, refracted, mat)[:, None]
        W_new = W_a * ratio

        # Escape candidates leave with probability G1.
        away = d_next[:, 2] * side_next > 0.0
        g1_leave = np.where(
            away, mf.g1_dist(flip_z(d_next, side_next), mat.roughness), 0.0
        )
        stay = ~away | (rs.uniform(idx.size) >= g1_leave)

        keep = stay
        d[idx[keep]] = d_next[keep]
        side[idx[keep]] = side_next[keep]
        W[idx[keep]] = W_new[keep]
        idx = idx[keep]

    return out


def eval_pt(
    omega_i,
    omega_o,
    mat: MaterialSpec,
    conv: EvalConventions = EvalConventions(),
    rs: RandomStream | None = None,
    n_samples: int = 1,
    diag: Diagnostics | None = None,
) -> np.ndarray:
    """Unbiased PT estimate of the BSDF for a single query."""
    rs = rs or RandomStream(0)
    wi = np.tile(np.asarray(omega_i, float), (n_samples, 1))
    wo = np.tile(np.asarray(omega_o, float), (n_samples, 1))
    vals = eval_pt_batch(wi, wo, mat, conv, rs, diag=diag)
    return vals.mean(axis=0)


def eval_pt_query(q: BsdfQuery, rs: RandomStream) -> np.ndarray:
    return eval_pt(q.omega_i, q.omega_o, q.mat, q.conv, rs, q.n_samples)


# ---------------------------------------------------------------------------
# Importance sampling


def sample_batch(
    omega_i: np.ndarray,
    mat: MaterialSpec,
    conv: EvalConventions,
    rs: RandomStream,
    diag: Diagnostics | None = None,
):
    """Walk a batch of incident directions to exit directions.

    Returns (exited, omega_o, weight, bounces, transmitted).  Weights
    follow the consistent-convention cancellation: per-bounce Fresnel
    products for conductors, exactly (1, 1, 1) for dielectrics.  Walks
    that hit the bounce cap without leaving are flagged failed.
    """
    wi = np.atleast_2d(np.asarray(omega_i, dtype=np.float64))
    n = wi.shape[0]
    d = -wi.copy()
    side0 = np.where(wi[:, 2] > 0.0, 1.0, -1.0)
    side = side0.copy()
    W = np.ones((n, 3))
    wo = np.zeros((n, 3))
    bounces = np.zeros(n, dtype=int)
    exited = np.zeros(n, bool)
    idx = np.arange(n)

    for bounce in range(conv.max_bounces):
        if idx.size == 0:
            break
        d_a, side_a = d[idx], side[idx]
        w_query = flip_z(-d_a, side_a)
        m_frame, _ = sample_vndf_batch(w_query, mat.roughness, rs)
        d_next, side_next, refracted, F = _branch_and_bounce(d_a, side_a, m_frame, mat, rs, idx.size)
        if mat.is_conductor:
            W[idx] = W[idx] * F

        away = d_next[:, 2] * side_next > 0.0
        g1_leave = np.where(
            away, mf.g1_dist(flip_z(d_next, side_next), mat.roughness), 0.0
        )
        leave = away & (rs.uniform(idx.size) < g1_leave)

        out_rows = idx[leave]
        wo[out_rows] = d_next[leave]
        bounces[out_rows] = bounce + 1
        exited[out_rows] = True

        keep = ~leave
        d[idx[keep]] = d_next[keep]
        side[idx[keep]] = side_next[keep]
        idx = idx[keep]

    if diag is not None:
        diag.total_walks += n
        diag.failed_walks += int(n - exited.sum())
    transmitted = exited & (np.where(wo[:, 2] > 0.0, 1.0, -1.0) != side0)
    return exited, wo, W, bounces, transmitted


def sample(
    omega_i,
    mat: MaterialSpec,
    conv: EvalConventions = EvalConventions(),
    rs: RandomStream | None = None,
    diag: Diagnostics | None = None,
) -> SampleRecord | None:
    """Sample one outgoing direction; None when the walk fails to exit."""
    rs = rs or RandomStream(0)
    exited, wo, W, bounces, transmitted = sample_batch(
        np.asarray(omega_i, float)[None, :], mat, conv, rs, diag=diag
    )
    if not exited[0]:
        return None
    return SampleRecord(
        omega_o=wo[0],
        weight=W[0],
        bounce_count=int(bounces[0]),
        side="transmitted" if transmitted[0] else "reflected",
    )


# ---------------------------------------------------------------------------
# Single-bounce closed form


def eval_single_bounce(omega_i, omega_o, mat: MaterialSpec, conv: EvalConventions = EvalConventions()) -> np.ndarray:
    """Height-uncorrelated separable-Smith single-bounce BSDF.

    Deterministic closed form, vectorized over omega_o; equals the
    length-2 path restriction by construction and anchors the sampling
    proxy and the lobe tool.
    """
    wi = np.asarray(omega_i, dtype=np.float64)
    wo = np.atleast_2d(np.asarray(omega_o, dtype=np.float64))
    prof = mat.roughness
    s = 1.0 if wi[2] > 0.0 else -1.0
    wif = flip_z(wi, s)
    wof = flip_z(wo, np.full(wo.shape[0], s))
    out = np.zeros((wo.shape[0], 3))

    ci = max(abs(float(wi[2])), _EPS)
    co = np.maximum(np.abs(wo[:, 2]), _EPS)

    refl = wof[:, 2] > 0.0
    if np.any(refl):
        h = wif + wof[refl]
        nrm = np.linalg.norm(h, axis=-1, keepdims=True)
        ok = nrm[:, 0] > 1e-12
        h = h / np.maximum(nrm, 1e-300)
        cwh = dot(wif, h)
        if mat.is_conductor and mat.fresnel_one:
            F = np.ones((h.shape[0], 3))
        elif mat.is_conductor:
            F = fresnel_conductor(np.clip(cwh, 0.0, 1.0), mat.conductor_ior)
        else:
            F = fresnel_dielectric(np.where(s > 0, cwh, -cwh), mat.dielectric_ior)[:, None] * np.ones(3)
        D = mf.ndf_D(h, prof)
        g1i = mf.g1(wif, h, prof)
        g1o = mf.g1(wof[refl], h, prof)
        val = F * (ok * D * g1i * g1o / (4.0 * ci * co[refl]))[:, None]
        out[refl] = val

    if not mat.is_conductor:
        trans = ~refl
        if np.any(trans):
            eta = mat.eta
            eta_in = 1.0 if s > 0 else eta
            eta_out = eta if s > 0 else 1.0
            b = wof[trans]
            hu = -(eta_in * wif + eta_out * b)
            nrm = np.linalg.norm(hu, axis=-1, keepdims=True)
            ok = nrm[:, 0] > 1e-12
            h = hu / np.maximum(nrm, 1e-300)
            h = np.where(h[:, 2:3] < 0.0, -h, h)
            cwh = dot(wif, h)
            cbh = dot(b, h)
            valid = ok & (cwh > 0.0) & (cbh < 0.0)
            Fd = fresnel_dielectric(np.where(s > 0, cwh, -cwh), mat.dielectric_ior)
            D = mf.ndf_D(h, prof)
            g1i = mf.g1(wif, h, prof)
            # Exit masking on the far side sees the flipped facet.
            bf = flip_z(b, np.full(b.shape[0], -1.0))
            g1o = mf.g1(bf, flip_z(-h, np.full(b.shape[0], -1.0)), prof)
            dd = eta_in * cwh + eta_out * cbh
            jac = eta_out**2 * np.abs(cbh) / np.maximum(dd * dd, _EPS)
            val = ((1.0 - Fd) * D * np.abs(cwh) * jac * g1i * g1o / (ci * co[trans]))[:, None] * np.ones(3)
            out[trans] = np.where(valid[:, None], val, 0.0)

    if np.asarray(omega_o).ndim == 1:
        return out[0]
    return out


# ---------------------------------------------------------------------------
# Sampling density proxy for host-renderer MIS


def pdf_proxy(
    omega_i,
    omega_o,
    mat: MaterialSpec,
    conv: EvalConventions = EvalConventions(),
    single_weight: float = 0.5,
) -> np.ndarray:
    """Mixture of the single-scatter sampling density and a cosine lobe.

    The multi-bounce exit density has no closed form, so hosts get a
    strictly positive stand-in: lambda * pdf_single + (1 - lambda) *
    cosine, normalized over the material's full exit domain.
    """
    lam = float(single_weight)
    if not 0.0 < lam < 1.0:
        raise ValueError("single_weight must be in (0, 1)")
    wi = np.asarray(omega_i, dtype=np.float64)
    wo = np.atleast_2d(np.asarray(omega_o, dtype=np.float64))
    prof = mat.roughness
    s = 1.0 if wi[2] > 0.0 else -1.0
    wif = flip_z(wi, s)
    wof = flip_z(wo, np.full(wo.shape[0], s))
    single = np.zeros(wo.shape[0])

    refl = wof[:, 2] > 0.0
    if np.any(refl):
        h = wif + wof[refl]
        nrm = np.linalg.norm(h, axis=-1, keepdims=True)
        h = h / np.maximum(nrm, 1e-300)
        cwh = dot(wif, h)
        cbh = dot(wof[refl], h)
        dens = pdf_vndf(wif, h, prof) / np.maximum(4.0 * np.abs(cbh), _EPS)
        if mat.is_conductor:
            br = 1.0
        else:
            br = fresnel_dielectric(np.where(s > 0, cwh, -cwh), mat.dielectric_ior)
        single[refl] = np.where(nrm[:, 0] > 1e-12, dens * br, 0.0)

    if not mat.is_conductor:
        trans = ~refl
        if np.any(trans):
            eta = mat.eta
            eta_in = 1.0 if s > 0 else eta
            eta_out = eta if s > 0 else 1.0
            b = wof[trans]
            hu = -(eta_in * wif + eta_out * b)
            nrm = np.linalg.norm(hu, axis=-1, keepdims=True)
            h = hu / np.maximum(nrm, 1e-300)
            h = np.where(h[:, 2:3] < 0.0, -h, h)
            cwh = dot(wif, h)
            cbh = dot(b, h)
            valid = (nrm[:, 0] > 1e-12) & (cwh > 0.0) & (cbh < 0.0)
            Fd = fresnel_dielectric(np.where(s > 0, cwh, -cwh), mat.dielectric_ior)
            dd = eta_in * cwh + eta_out * cbh
            jac = eta_out**2 * np.abs(cbh) / np.maximum(dd * dd, _EPS)
            dens = pdf_vndf(wif, h, prof) * jac * (1.0 - Fd)
            single[trans] = np.where(valid, dens, 0.0)

    if mat.is_conductor:
        # Conductors only ever exit on the arrival side.
        diffuse = np.where(wof[:, 2] > 0.0, np.abs(wo[:, 2]) / np.pi, 0.0)
    else:
        diffuse = np.abs(wo[:, 2]) / (2.0 * np.pi)

    out = lam * single + (1.0 - lam) * diffuse
    if np.asarray(omega_o).ndim == 1:
        return float(out[0])
    return out


# ---------------------------------------------------------------------------
# Bidirectional evaluation


def _trace_subpath(start_flow, start_side, mat, conv, rs):
    """Generate one walk's directions for bidirectional reuse.

    Returns (dirs (n, L+1, 3), tags (n, L) bool, usable (n,)) where
    ``usable`` counts how many leading directions may serve as a prefix:
    1 + the number of sampled directions that survived their continue
    test (a prefix needs a live vertex after its last direction).
    """
    n = start_flow.shape[0]
    L = conv.max_bounces
    dirs = np.zeros((n, L + 1, 3))
    tags = np.zeros((n, L), bool)
    dirs[:, 0] = start_flow
    usable = np.ones(n, dtype=int)
    d = start_flow.copy()
    side = start_side.copy()
    idx = np.arange(n)

    for step in range(L):
        if idx.size == 0:
            break
        d_a, side_a = d[idx], side[idx]
        w_query = flip_z(-d_a, side_a)
        m_frame, _ = sample_vndf_batch(w_query, mat.roughness, rs)
        d_next, side_next, refracted, _ = _branch_and_bounce(d_a, side_a, m_frame, mat, rs, idx.size)
        dirs[idx, step + 1] = d_next
        tags[idx, step] = refracted

        away = d_next[:, 2] * side_next > 0.0
        g1_leave = np.where(
            away, mf.g1_dist(flip_z(d_next, side_next), mat.roughness), 0.0
        )
        stay = ~away | (rs.uniform(idx.size) >= g1_leave)
        usable[idx[stay]] = step + 2

        d[idx[stay]] = d_next[stay]
        side[idx[stay]] = side_next[stay]
        idx = idx[stay]
    return dirs, tags, usable


def _strategy_pdfs(dirs, tags, mat, conv):
    """Forward/reverse per-edge sampling factors for every split of a path.

    dirs: (n, i, 3).  Returns (fwd (n, i-1), rev (n, i-1)) where fwd[j]
    is the density x branch x continue factor of forward-sampling
    d_{j+1}, and rev[j] of reverse-sampling -d_j; empty products are
    handled by the caller via cumulative products.
    """
    n, i, _ = dirs.shape
    sides = ps.derive_sides(dirs[:, 0, 2], tags)
    pf = ps.path_factors(dirs, tags, mat, conv)
    fwd = np.ones((n, i - 1))
    rev = np.ones((n, i - 1))
    for j in range(i - 1):
        dens, branch = ps.step_density(dirs, tags, sides, j, mat)
        cont = ps.continue_probability(pf, j + 1) if j + 1 <= i - 2 else np.ones(n)
        fwd[:, j] = dens * branch * cont

        # Reverse traversal of the same vertex: flows negated and swapped,
        # evaluated on the far segment's side.
        rdirs = np.stack([-dirs[:, j + 1], -dirs[:, j]], axis=1)
        rtags = tags[:, j : j + 1]
        rsides = np.stack([sides[:, j + 1], sides[:, j]], axis=1)
        rdens, rbranch = ps.step_density(rdirs, rtags, rsides, 0, mat)
        if j >= 1:
            # The reverse walk must survive past -d_j to reach the next
            # vertex; the continue test reuses the same facet.
            rpf = ps.path_factors(rdirs, rtags, mat, conv, sides0=sides[:, j + 1])
            rcont = ps.continue_probability(rpf, 1)
        else:
            rcont = np.ones(n)
        rev[:, j] = rdens * rbranch * rcont
    return fwd, rev


def eval_bdpt_batch(
    omega_i: np.ndarray,
    omega_o: np.ndarray,
    mat: MaterialSpec,
    conv: EvalConventions,
    rs: RandomStream,
    diag: Diagnostics | None = None,
) -> np.ndarray:
    """One-sample BDPT estimates for a batch of queries.

    Camera and light subpaths are traced with the standard walk; every
    (prefix, suffix) split of every path length is evaluated and
    weighted with the balance heuristic over all splits of that length.
    """
    wi = np.atleast_2d(np.asarray(omega_i, dtype=np.float64))
    wo = np.atleast_2d(np.asarray(omega_o, dtype=np.float64))
    wi, wo = np.broadcast_arrays(wi, wo)
    wi = np.ascontiguousarray(wi)
    wo = np.ascontiguousarray(wo)
    n = wi.shape[0]

    cam_dirs, cam_tags, cam_usable = _trace_subpath(
        -wi, np.where(wi[:, 2] > 0.0, 1.0, -1.0), mat, conv, rs
    )
    light_dirs, light_tags, light_usable = _trace_subpath(
        -wo, np.where(wo[:, 2] > 0.0, 1.0, -1.0), mat, conv, rs
    )

    out = np.zeros((n, 3))
    max_len = conv.max_bounces + 1
    cam_sides = ps.derive_sides(cam_dirs[:, 0, 2], cam_tags)
    light_sides = ps.derive_sides(light_dirs[:, 0, 2], light_tags)

    for length in range(2, max_len + 1):
        for s in range(1, length):
            t = length - s
            rows = np.flatnonzero((cam_usable >= s) & (light_usable >= t))
            if rows.size == 0:
                continue
            m = rows.size
            dirs = np.concatenate(
                [cam_dirs[rows, :s], -light_dirs[rows, t - 1 :: -1]], axis=1
            )
            tags = np.zeros((m, length - 1), bool)
            if s >= 2:
                tags[:, : s - 1] = cam_tags[rows, : s - 1]
            if t >= 2:
                for j in range(s, length - 1):
                    tags[:, j] = light_tags[rows, length - 2 - j]
            # Junction branch follows from the sides the two walks ended on.
            tags[:, s - 1] = cam_sides[rows, s - 1] != light_sides[rows, t - 1]

            f = ps.path_factors(dirs, tags, mat, conv).contribution()
            fwd, rev = _strategy_pdfs(dirs, tags, mat, conv)
            # pdf of split s' for this path: prod(fwd[:, :s'-1]) * prod(rev[:, s':])
            fcp = np.concatenate([np.ones((m, 1)), np.cumprod(fwd, axis=1)], axis=1)
            rcp = np.concatenate([np.cumprod(rev[:, ::-1], axis=1)[:, ::-1], np.ones((m, 1))], axis=1)
            pdf_all = fcp[:, :-1] * rcp[:, 1:]  # shape (m, length-1), index s'-1
            pdf_real = pdf_all[:, s - 1]
            denom = pdf_all.sum(axis=1)
            w = np.where(denom > 0.0, pdf_real / np.maximum(denom, _EPS), 0.0)
            contrib = f * np.where(pdf_real > 0.0, w / np.maximum(pdf_real, _EPS), 0.0)[:, None]
            bad = ~np.isfinite(contrib).all(axis=1)
            if np.any(bad):
                contrib[bad] = 0.0
                if diag is not None:
                    diag.nonfinite_dropped += int(bad.sum())
            out[rows] += contrib
    return out


def eval_bdpt(
    omega_i,
    omega_o,
    mat: MaterialSpec,
    conv: EvalConventions = EvalConventions(),
    rs: RandomStream | None = None,
    n_samples: int = 1,
    diag: Diagnostics | None = None,
) -> np.ndarray:
    """Unbiased BDPT estimate of the BSDF for a single query."""
    rs = rs or RandomStream(0)
    wi = np.tile(np.asarray(omega_i, float), (n_samples, 1))
    wo = np.tile(np.asarray(omega_o, float), (n_samples, 1))
    vals = eval_bdpt_batch(wi, wo, mat, conv, rs, diag=diag)
    return vals.mean(axis=0)


def eval_bdpt_query(q: BsdfQuery, rs: RandomStream) -> np.ndarray:
    return eval_bdpt(q.omega_i, q.omega_o, q.mat, q.conv, rs, q.n_samples)
