"""Independent brute-force referees for the analytic and Monte Carlo code.

Everything here stays algorithmically disjoint from what it checks:
Lambda comes from projected-area quadrature rather than the closed
forms, low-bounce scattering from deterministic spherical quadrature
rather than the estimators, and distributional agreement from Pearson
statistics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import stats

from . import estimators as est
from . import microfacet as mf
from . import paths as ps
from .materials import MaterialSpec
from .paths import EvalConventions
from .rng import RandomStream

MIDPOINT = "midpoint"
GAUSS_LEGENDRE = "gauss-legendre"


@dataclass(frozen=True)
class QuadratureGrid:
    """Spherical product rule: nodes in cos(theta) x uniform phi.

    ``rule`` picks midpoint or Gauss-Legendre placement along cos(theta).
    Node weights sum to the solid angle of the domain.
    """

    n_theta: int = 64
    n_phi: int = 128
    rule: str = GAUSS_LEGENDRE

    def __post_init__(self):
        if self.rule not in (MIDPOINT, GAUSS_LEGENDRE):
            raise ValueError(f"unknown quadrature rule: {self.rule!r}")

    def nodes(self, hemisphere: str = "full"):
        """Direction nodes and weights over the sphere or a hemisphere."""
        lo, hi = {"full": (-1.0, 1.0), "upper": (0.0, 1.0), "lower": (-1.0, 0.0)}[hemisphere]
        if self.rule == GAUSS_LEGENDRE:
            x, wx = leggauss(self.n_theta)
            ct = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
            wct = 0.5 * (hi - lo) * wx
        else:
            edges = np.linspace(lo, hi, self.n_theta + 1)
            ct = 0.5 * (edges[:-1] + edges[1:])
            wct = np.full(self.n_theta, (hi - lo) / self.n_theta)
        phi = (np.arange(self.n_phi) + 0.5) * (2.0 * np.pi / self.n_phi)
        wphi = 2.0 * np.pi / self.n_phi
        CT, PH = np.meshgrid(ct, phi, indexing="ij")
        ST = np.sqrt(np.maximum(0.0, 1.0 - CT**2))
        dirs = np.stack([ST * np.cos(PH), ST * np.sin(PH), CT], axis=-1).reshape(-1, 3)
        w = (wct[:, None] * wphi * np.ones_like(PH)).reshape(-1)
        return dirs, w


def lambda_numeric(w: np.ndarray, p: mf.RoughnessProfile, grid: QuadratureGrid | None = None) -> float:
    """Smith Lambda from the projected-area normalization, by quadrature.

    Integrates <w·m> D(m) over the upper hemisphere and inverts the
    visible-fraction identity; requires an upward w.  Never calls the
    closed-form smith_lambda.
    """
    w = np.asarray(w, dtype=np.float64)
    if w[2] <= 0.0:
        raise ValueError("lambda_numeric is defined for upward directions")
    grid = grid or QuadratureGrid(n_theta=96, n_phi=192)
    m, wt = grid.nodes("upper")
    a_plus = float(np.sum(np.maximum(m @ w, 0.0) * mf.ndf_D(m, p) * wt))
    return a_plus / w[2] - 1.0


def rho2_quadrature(
    omega_i: np.ndarray,
    omega_o: np.ndarray,
    mat: MaterialSpec,
    conv: EvalConventions = EvalConventions(),
    grid: QuadratureGrid | None = None,
) -> np.ndarray:
    """Deterministic 1- and 2-bounce scattering value.

    The exact length-2 term plus spherical quadrature over the single
    interior direction of length-3 paths, summed over the interior
    branch choices for dielectrics.  Anchors the estimators without
    calling them.
    """
    wi = np.asarray(omega_i, dtype=np.float64)
    wo = np.asarray(omega_o, dtype=np.float64)
    grid = grid or QuadratureGrid(n_theta=96, n_phi=192)

    tag_sets = [(False,), (True,)] if not mat.is_conductor else [(False,)]
    total = np.zeros(3)

    # Exact single-bounce term.
    exit_side = 1.0 if wo[2] > 0.0 else -1.0
    side0 = 1.0 if wi[2] > 0.0 else -1.0
    for (t0,) in tag_sets:
        want_refr = exit_side != side0
        if t0 != want_refr:
            continue
        dirs = np.stack([-wi, wo])[None]
        total += ps.path_factors(dirs, np.array([[t0]]), mat, conv).contribution()[0]

    # Two-bounce slice: integrate the interior direction hemisphere by
    # hemisphere (the integrand has a kink at the horizon).
    interior_tags = [(False,), (True,)] if not mat.is_conductor else [(False,)]
    for hemi in ("upper", "lower"):
        d1, wt = grid.nodes(hemi)
        n = d1.shape[0]
        dirs = np.empty((n, 3, 3))
        dirs[:, 0] = -wi
        dirs[:, 1] = d1
        dirs[:, 2] = wo
        for (t0,) in interior_tags:
            side1 = side0 * (-1.0 if t0 else 1.0)
            t1 = exit_side != side1
            if mat.is_conductor and t1:
                continue
            tags = np.tile(np.array([[t0, t1]]), (n, 1))
            f = ps.path_factors(dirs, tags, mat, conv).contribution()
            total += np.sum(f * wt[:, None], axis=0)
    return total


def furnace_albedo(
    omega_i: np.ndarray,
    mat: MaterialSpec,
    conv: EvalConventions = EvalConventions(),
    n: int = 4_000_000,
    rs: RandomStream | None = None,
    bounce_resolved: bool = False,
):
    """Directional albedo under uniform unit illumination, two ways.

    Evaluation route: cosine-stratified outgoing directions with one PT
    sample each.  Sampler route: exit frequency of the importance
    sampler (weights are 1 in furnace configurations).  Returns a dict
    with both numbers and their gap.
    """
    rs = rs or RandomStream(0)
    wi = np.asarray(omega_i, dtype=np.float64)
    both_sides = not mat.is_conductor

    # Cosine-distributed outgoing directions, stratified in the unit square.
    k = int(np.sqrt(n))
    u1 = (np.arange(n) % k + rs.uniform(n)) / k
    u2 = (np.arange(n) // k % k + rs.uniform(n)) / k
    ct = np.sqrt(np.clip(u1, 0.0, 1.0))
    st = np.sqrt(np.maximum(0.0, 1.0 - ct * ct))
    phi = 2.0 * np.pi * u2
    wo = np.stack([st * np.cos(phi), st * np.sin(phi), ct], axis=-1)
    if both_sides:
        flip = rs.uniform(n) < 0.5
        wo[flip, 2] = -wo[flip, 2]
        pdf = np.abs(wo[:, 2]) / (2.0 * np.pi)
    else:
        pdf = np.abs(wo[:, 2]) / np.pi

    wi_b = np.tile(wi, (n, 1))
    if bounce_resolved:
        vals = est.eval_pt_batch(wi_b, wo, mat, conv, rs, bounce_resolved=True)
        per_bounce = (vals[..., 0] * (np.abs(wo[:, 2]) / pdf)[:, None]).mean(axis=0)
        eval_albedo = float(per_bounce.sum())
    else:
        vals = est.eval_pt_batch(wi_b, wo, mat, conv, rs)
        per_bounce = None
        eval_albedo = float((vals[:, 0] * np.abs(wo[:, 2]) / pdf).mean())

    # Sampler route: unit-weight exits.
    m = min(n, 1_000_000)
    exited, _, W, _, _ = est.sample_batch(np.tile(wi, (m, 1)), mat, conv, rs)
    sampler_albedo = float((exited * W[:, 0]).mean())

    out = {
        "eval": eval_albedo,
        "sampler": sampler_albedo,
        "gap": abs(eval_albedo - sampler_albedo),
    }
    if per_bounce is not None:
        out["per_bounce"] = per_bounce
    return out


def reciprocity_sweep(
    mat: MaterialSpec,
    conv: EvalConventions = EvalConventions(),
    n_grid: int = 8,
    n_samples: int = 100_000,
    rs: RandomStream | None = None,
    estimator: str = "pt",
):
    """Swapped-argument agreement of the estimator on a direction grid.

    Returns a record per pair with both estimates, the pooled standard
    error, and a 3-sigma violation flag.  Conductors only; the stored
    kernel is symmetric for them.
    """
    if not mat.is_conductor:
        raise ValueError("reciprocity sweep applies to conductors")
    rs = rs or RandomStream(0)
    thetas = (np.arange(n_grid) + 0.5) * (0.5 * np.pi / n_grid)
    phis = (np.arange(n_grid) + 0.5) * (2.0 * np.pi / n_grid)
    dirs = []
    for t in thetas[: max(2, n_grid // 2)]:
        for f in phis[:2]:
            dirs.append([np.sin(t) * np.cos(f), np.sin(t) * np.sin(f), np.cos(t)])
    dirs = np.asarray(dirs)

    eval_batch = est.eval_pt_batch if estimator == "pt" else est.eval_bdpt_batch
    rows = []
    for a in range(len(dirs)):
        for b in range(a + 1, len(dirs)):
            wi, wo = dirs[a], dirs[b]
            v1 = eval_batch(np.tile(wi, (n_samples, 1)), np.tile(wo, (n_samples, 1)), mat, conv, rs)[:, 0]
            v2 = eval_batch(np.tile(wo, (n_samples, 1)), np.tile(wi, (n_samples, 1)), mat, conv, rs)[:, 0]
            m1, m2 = v1.mean(), v2.mean()
            se = np.sqrt(v1.var(ddof=1) / n_samples + v2.var(ddof=1) / n_samples)
            rows.append(
                {
                    "wi": wi,
                    "wo": wo,
                    "forward": m1,
                    "swapped": m2,
                    "se": se,
                    "violation": bool(abs(m1 - m2) > 3.0 * se) if se > 0 else False,
                }
            )
    return rows


def chi_square(observed: np.ndarray, expected: np.ndarray):
    """Pearson goodness-of-fit statistic and p-value.

    Requires every expected count to be at least 5; merge bins first
    (see merge_small_bins) when they are not.
    """
    observed = np.asarray(observed, dtype=np.float64).ravel()
    expected = np.asarray(expected, dtype=np.float64).ravel()
    if observed.shape != expected.shape:
        raise ValueError("observed and expected must have equal shape")
    if np.any(expected < 5.0):
        raise ValueError("expected counts below 5; merge bins before testing")
    statistic = float(np.sum((observed - expected) ** 2 / expected))
    dof = observed.size - 1
    if dof < 1:
        return statistic, 1.0
    return statistic, float(stats.chi2.sf(statistic, dof))


def merge_small_bins(observed: np.ndarray, expected: np.ndarray, min_expected: float = 5.0):
    """Pool all low-expectation bins into one so chi_square applies."""
    observed = np.asarray(observed, dtype=np.float64).ravel()
    expected = np.asarray(expected, dtype=np.float64).ravel()
    keep = expected >= min_expected
    if np.all(keep):
        return observed, expected
    obs = np.concatenate([observed[keep], [observed[~keep].sum()]])
    exp = np.concatenate([expected[keep], [expected[~keep].sum()]])
    if exp[-1] < min_expected:
        if len(exp) == 1:
            raise ValueError("not enough samples to form a single valid bin")
        obs[-2] += obs[-1]
        exp[-2] += exp[-1]
        obs, exp = obs[:-1], exp[:-1]
    return obs, exp
