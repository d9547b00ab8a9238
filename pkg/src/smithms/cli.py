"""Command-line front end: rendering, validation suites, image tools."""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import estimators as est
from . import microfacet as mf
from . import oracles
from .image import mse as image_mse
from .image import read_pfm, write_pfm
from .materials import conductor, dielectric
from .paths import EvalConventions
from .render import RunConfig, lobe_tabulate, render
from .rng import RandomStream
from .scene import load_scene


def _dir_from_theta(theta_deg: float, phi_deg: float = 0.0) -> np.ndarray:
    t, p = np.deg2rad(theta_deg), np.deg2rad(phi_deg)
    return np.array([np.sin(t) * np.cos(p), np.sin(t) * np.sin(p), np.cos(t)])


def _add_run_flags(sp):
    sp.add_argument("--spp", type=int, default=4)
    sp.add_argument("--estimator", choices=["pt", "bdpt"], default="bdpt")
    sp.add_argument("--vertex-mode", choices=["literal", "consistent"], default="consistent")
    sp.add_argument("--max-bounces", type=int, default=10)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--threads", type=int, default=1)
    sp.add_argument("--out", type=str, default="out.pfm")


def _material_flags(sp):
    sp.add_argument("--ndf", choices=["ggx", "beckmann"], default="ggx")
    sp.add_argument("--alpha", type=float, default=1.0)
    sp.add_argument("--alpha-y", type=float, default=None)
    sp.add_argument("--material", choices=["conductor", "dielectric"], default="conductor")
    sp.add_argument("--eta", type=float, default=1.5, help="dielectric relative IOR")


def _make_material(args, fresnel_one=True):
    prof = mf.RoughnessProfile(args.ndf, args.alpha, args.alpha_y or args.alpha)
    if args.material == "conductor":
        return conductor(prof, fresnel_one=fresnel_one)
    return dielectric(prof, args.eta)


def cmd_render(args) -> int:
    scene = load_scene(args.scene)
    cfg = RunConfig(
        spp=args.spp,
        max_bounces=args.max_bounces,
        estimator=args.estimator,
        vertex_mode=args.vertex_mode,
        seed=args.seed,
        threads=args.threads,
    )
    img = render(scene, cfg)
    write_pfm(img, args.out)
    print(f"wrote {args.out} ({img.width}x{img.height}, {cfg.spp} spp, {cfg.estimator})")
    return 0


def cmd_furnace(args) -> int:
    conv = EvalConventions(vertex_mode=args.vertex_mode, max_bounces=args.max_bounces)
    mat = _make_material(args)
    failures = 0
    print("family,alpha,theta_deg,eval_albedo,sampler_albedo,gap")
    for theta in args.theta:
        wi = _dir_from_theta(theta)
        r = oracles.furnace_albedo(wi, mat, conv, n=args.samples, rs=RandomStream(args.seed))
        ok = abs(r["eval"] - 1.0) <= args.tolerance
        failures += 0 if ok else 1
        print(
            f"{args.ndf},{args.alpha},{theta},{r['eval']:.5f},{r['sampler']:.5f},{r['gap']:.5f}"
            + ("" if ok else "  FAIL")
        )
    if failures:
        print(f"{failures} configuration(s) outside ±{args.tolerance}", file=sys.stderr)
        return 1
    return 0


def cmd_lobe(args) -> int:
    conv = EvalConventions(vertex_mode=args.vertex_mode, max_bounces=args.max_bounces)
    mat = _make_material(args, fresnel_one=not args.real_fresnel)
    wi = _dir_from_theta(args.theta_i)
    csv_text, totals = lobe_tabulate(
        wi, mat, conv, n_theta=args.n_theta, n_phi=args.n_phi,
        n_samples=args.samples, rs=RandomStream(args.seed),
    )
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(csv_text)
    print(f"wrote {args.out}; E_r = {totals['E_r']:.5f}, E_t = {totals['E_t']:.5f}")
    return 0


def cmd_vndf_test(args) -> int:
    failures = 0
    print("family,alpha_x,alpha_y,theta_deg,p_value,pdf_norm_err")
    for family in ("ggx", "beckmann"):
        prof = mf.RoughnessProfile(family, args.alpha, args.alpha_y or args.alpha)
        for theta in args.theta:
            w = _dir_from_theta(theta, 25.0)
            p_value = _vndf_chi_square(w, prof, args.samples, args.seed)
            norm_err = _vndf_norm_error(w, prof)
            ok = p_value > 0.01 and norm_err < 1e-3
            failures += 0 if ok else 1
            print(
                f"{family},{prof.alpha_x},{prof.alpha_y},{theta},{p_value:.4f},{norm_err:.2e}"
                + ("" if ok else "  FAIL")
            )
    return 1 if failures else 0


def _vndf_chi_square(w, prof, n, seed, n_ct=24, n_ph=24) -> float:
    rs = RandomStream(seed)
    m, _ = mf.sample_vndf_batch(np.tile(w, (n, 1)), prof, rs)
    obs, _, _ = np.histogram2d(
        m[:, 2], np.arctan2(m[:, 1], m[:, 0]),
        bins=[n_ct, n_ph], range=[[0, 1], [-np.pi, np.pi]],
    )
    exp = _vndf_expected_counts(w, prof, n, n_ct, n_ph)
    o, e = oracles.merge_small_bins(obs.ravel(), exp.ravel())
    _, p = oracles.chi_square(o, e)
    return p


def _vndf_expected_counts(w, prof, n, n_ct, n_ph, nodes=24):
    from numpy.polynomial.legendre import leggauss

    xg, wg = leggauss(nodes)
    ct_edges = np.linspace(0.0, 1.0, n_ct + 1)
    ph_edges = np.linspace(-np.pi, np.pi, n_ph + 1)
    out = np.zeros((n_ct, n_ph))
    for i in range(n_ct):
        c0, c1 = ct_edges[i], ct_edges[i + 1]
        cts = 0.5 * (c0 + c1) + 0.5 * (c1 - c0) * xg
        wc = 0.5 * (c1 - c0) * wg
        for j in range(n_ph):
            p0, p1 = ph_edges[j], ph_edges[j + 1]
            phs = 0.5 * (p0 + p1) + 0.5 * (p1 - p0) * xg
            wp = 0.5 * (p1 - p0) * wg
            CT, PH = np.meshgrid(cts, phs, indexing="ij")
            ST = np.sqrt(np.maximum(0.0, 1.0 - CT**2))
            mm = np.stack([ST * np.cos(PH), ST * np.sin(PH), CT], axis=-1)
            pd = mf.pdf_vndf(w[None, None, :], mm, prof)
            out[i, j] = np.sum(pd * wc[:, None] * wp[None, :])
    return out * n


def _vndf_norm_error(w, prof) -> float:
    grid = oracles.QuadratureGrid(n_theta=256, n_phi=256)
    m, wt = grid.nodes("upper")
    return abs(float(np.sum(mf.pdf_vndf(w[None], m, prof) * wt)) - 1.0)


def cmd_reciprocity(args) -> int:
    conv = EvalConventions(vertex_mode=args.vertex_mode, max_bounces=args.max_bounces)
    mat = _make_material(args)
    rows = oracles.reciprocity_sweep(
        mat, conv, n_grid=args.grid, n_samples=args.samples, rs=RandomStream(args.seed)
    )
    n_viol = sum(r["violation"] for r in rows)
    print("pair,forward,swapped,se,violation")
    for i, r in enumerate(rows):
        print(f"{i},{r['forward']:.6f},{r['swapped']:.6f},{r['se']:.6f},{int(r['violation'])}")
    rate = n_viol / max(1, len(rows))
    print(f"# violations: {n_viol}/{len(rows)} ({100 * rate:.2f}%)")
    return 0 if rate <= 0.01 else 1


def cmd_mse(args) -> int:
    a = read_pfm(args.image_a)
    b = read_pfm(args.image_b)
    print(f"{image_mse(a, b):.10g}")
    return 0


def cmd_compare_modes(args) -> int:
    """Furnace albedo side by side for the two vertex conventions."""
    mat = _make_material(args)
    print("mode,theta_deg,eval_albedo,sampler_albedo")
    worst = {}
    for mode in ("consistent", "literal"):
        conv = EvalConventions(vertex_mode=mode, max_bounces=args.max_bounces)
        for theta in args.theta:
            wi = _dir_from_theta(theta)
            r = oracles.furnace_albedo(wi, mat, conv, n=args.samples, rs=RandomStream(args.seed))
            worst[mode] = max(worst.get(mode, 0.0), abs(r["eval"] - 1.0))
            print(f"{mode},{theta},{r['eval']:.5f},{r['sampler']:.5f}")
    print(
        f"# max |albedo-1|: consistent = {worst['consistent']:.4f}, "
        f"literal = {worst['literal']:.4f}"
    )
    return 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="smithms",
        description="Multiple-bounce Smith microfacet BSDF toolset",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("render", help="render a scene file to PFM")
    sp.add_argument("--scene", required=True)
    _add_run_flags(sp)
    sp.set_defaults(fn=cmd_render)

    sp = sub.add_parser("furnace", help="directional-albedo conservation check")
    _material_flags(sp)
    sp.add_argument("--theta", type=float, nargs="+", default=[0.0, 30.0, 60.0, 85.0])
    sp.add_argument("--samples", type=int, default=4_000_000)
    sp.add_argument("--tolerance", type=float, default=0.01)
    sp.add_argument("--vertex-mode", choices=["literal", "consistent"], default="consistent")
    sp.add_argument("--max-bounces", type=int, default=10)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(fn=cmd_furnace)

    sp = sub.add_parser("lobe", help="tabulate scattered lobes by bounce count")
    _material_flags(sp)
    sp.add_argument("--theta-i", type=float, default=0.0)
    sp.add_argument("--n-theta", type=int, default=32)
    sp.add_argument("--n-phi", type=int, default=16)
    sp.add_argument("--samples", type=int, default=512)
    sp.add_argument("--real-fresnel", action="store_true")
    sp.add_argument("--vertex-mode", choices=["literal", "consistent"], default="consistent")
    sp.add_argument("--max-bounces", type=int, default=10)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", type=str, default="lobe.csv")
    sp.set_defaults(fn=cmd_lobe)

    sp = sub.add_parser("vndf-test", help="visible-normal sampler chi-square suite")
    sp.add_argument("--alpha", type=float, default=1.0)
    sp.add_argument("--alpha-y", type=float, default=None)
    sp.add_argument("--theta", type=float, nargs="+", default=[0.0, 30.0, 60.0, 85.0])
    sp.add_argument("--samples", type=int, default=200_000)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(fn=cmd_vndf_test)

    sp = sub.add_parser("reciprocity", help="swapped-argument estimator sweep")
    _material_flags(sp)
    sp.add_argument("--grid", type=int, default=8)
    sp.add_argument("--samples", type=int, default=20_000)
    sp.add_argument("--vertex-mode", choices=["literal", "consistent"], default="consistent")
    sp.add_argument("--max-bounces", type=int, default=10)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(fn=cmd_reciprocity)

    sp = sub.add_parser("mse", help="mean squared error between two PFMs")
    sp.add_argument("image_a")
    sp.add_argument("image_b")
    sp.set_defaults(fn=cmd_mse)

    sp = sub.add_parser("compare-modes", help="vertex-convention comparison report")
    _material_flags(sp)
    sp.add_argument("--theta", type=float, nargs="+", default=[0.0, 30.0, 60.0])
    sp.add_argument("--samples", type=int, default=400_000)
    sp.add_argument("--max-bounces", type=int, default=10)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(fn=cmd_compare_modes)

    args = ap.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    raise SystemExit(main())
