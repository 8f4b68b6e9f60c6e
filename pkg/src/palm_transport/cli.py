"""Command-line interface: ``palm-transport {solve,verify,voronoi,couple,example,version}``.

Exit codes: 0 success, 1 verification failure, 2 bad spec or arguments,
3 no convergence under ``--strict``.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from importlib import metadata
from pathlib import Path

import numpy as np

from .density import ConstrainedDensity
from .geometry import Geometry, GeometryError
from .measures import MeasureSpecError, _factor_dim, make_measure
from .solver import COUNTING_CAP, NotConvergedError, SolveOptions, solve
from . import coupling, golden, plotting, transport, voronoi

EXIT_OK, EXIT_FAIL, EXIT_SPEC, EXIT_NOT_CONVERGED = 0, 1, 2, 3

log = logging.getLogger("palm_transport")


class SpecError(ValueError):
    pass


def _dimension_hint(spec: dict):
    for key in ("phi", "psi"):
        m = spec.get(key) or {}
        try:
            if m.get("type") == "product":
                return sum(_factor_dim(fac) for fac in m.get("factors", []))
            return _factor_dim(m)
        except MeasureSpecError:
            continue
    return None


def load_spec(path) -> dict:
    try:
        with open(path) as fh:
            spec = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise SpecError(f"cannot read spec {path}: {exc}") from exc
    for key in ("geometry", "phi", "psi"):
        if key not in spec:
            raise SpecError(f"spec is missing the {key!r} section")
    return spec


def build_instance(spec: dict):
    """Geometry and both measures from a spec dict."""
    try:
        geom = Geometry.from_dict(spec["geometry"], _dimension_hint(spec))
        phi = make_measure(spec["phi"], geom) if "phi" in spec else None
        psi = make_measure(spec["psi"], geom)
    except (GeometryError, MeasureSpecError, KeyError, TypeError, ValueError) as exc:
        raise SpecError(f"invalid instance: {exc}") from exc
    return geom, phi, psi


def _solver_options(spec: dict, args) -> SolveOptions:
    conf = dict(spec.get("solver") or {})
    if getattr(args, "tol", None) is not None:
        conf["convergence_tol"] = args.tol
    if getattr(args, "max_stages", None) is not None:
        conf["max_stages"] = args.max_stages
    if getattr(args, "constraint", None):
        conf["constraint_mode"] = args.constraint
    try:
        return SolveOptions.from_dict(conf)
    except (TypeError, ValueError) as exc:
        raise SpecError(f"invalid solver options: {exc}") from exc


def _out_dir(spec: dict, args) -> Path:
    out = getattr(args, "out", None) or (spec.get("output") or {}).get("dir") or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _want_plot(spec: dict, args) -> bool:
    return bool(getattr(args, "plot", False) or (spec.get("output") or {}).get("plot"))


def _dump(obj, path: Path):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.bool_,)):
        return bool(o)
    raise TypeError(f"not serializable: {type(o)}")


def _finite(x: float):
    return x if math.isfinite(x) else str(x)


# ------------------------------------------------------------------ commands

def cmd_solve(args) -> int:
    spec = load_spec(args.spec)
    geom, phi, psi = build_instance(spec)
    opts = _solver_options(spec, args)
    center = bool(args.center_optimal or (spec.get("solver") or {}).get("center_optimal"))
    try:
        res = solve(phi, psi, opts, center_optimal=center, strict=args.strict)
    except NotConvergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    out = _out_dir(spec, args)
    header = {
        "convergence_tol": opts.convergence_tol, "mass_eps": opts.mass_eps,
        "constraint_mode": opts.constraint_mode, "role_swap": center,
        "shell_tol": geom.shell_tolerance(phi.positions, psi.positions),
        "phi": {k: v for k, v in phi.provenance.items() if not k.startswith("_")},
        "psi": {k: v for k, v in psi.provenance.items() if not k.startswith("_")},
    }
    header = json.loads(json.dumps(header, default=_json_default))
    (out / "density.csv").write_text(res.density.to_csv(header=header))
    summary = res.summary()
    summary["expansions"] = res.expansions
    _dump(summary, out / "summary.json")
    if _want_plot(spec, args) and geom.dimension <= 2:
        (out / "territories.svg").write_text(plotting.density_svg(res.density))
    print(f"stages={res.stages_run} residual={res.residual:.3g} converged={res.converged} -> {out}")
    return EXIT_OK


def _read_density(path, phi, psi, opts: SolveOptions) -> ConstrainedDensity:
    try:
        text = Path(path).read_text()
        cap = 1.0 / psi.weights if opts.constraint_mode == COUNTING_CAP else None
        return ConstrainedDensity.from_csv(text, phi, psi, cap=cap)
    except (OSError, ValueError) as exc:
        raise SpecError(f"cannot read density {path}: {exc}") from exc


def cmd_verify(args) -> int:
    spec = load_spec(args.spec)
    geom, phi, psi = build_instance(spec)
    opts = _solver_options(spec, args)
    f = _read_density(args.density, phi, psi, opts)
    tol = args.tol if args.tol is not None else 1e-6
    constrained = transport.validate_constrained(f)
    balance = transport.check_balanced(f, tol)
    stability = transport.check_stable(f)
    fubini = transport.check_mass_transport(f)
    if args.require_balanced == "auto":
        need_balance = geom.is_torus and abs(phi.total_mass - psi.total_mass) <= tol * max(1.0, psi.total_mass)
    else:
        need_balance = args.require_balanced == "yes"
    checks = {
        "constrained": constrained.ok,
        "stable": stability.stable,
        "mass_transport": fubini["ok"],
        "sated_or_exhausted": stability.sated_or_exhausted(),
    }
    if need_balance:
        checks["balanced"] = balance.balanced
    report = {
        "passed": all(checks.values()), "checks": checks,
        "constrained": constrained.to_dict(), "balance": balance.to_dict(),
        "balance_required": need_balance, "stability": stability.to_dict(max_pairs=100),
        "mass_transport": fubini, "territories": transport.territory_report(f),
    }
    out = _out_dir(spec, args)
    _dump(report, out / "verify.json")
    if not stability.stable:
        (out / "unstable_pairs.csv").write_text(stability.pairs_csv())
    for name, ok in checks.items():
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    for v in constrained.violations[:10]:
        print(f"  violation: {v}")
    return EXIT_OK if report["passed"] else EXIT_FAIL


def cmd_voronoi(args) -> int:
    spec = load_spec(args.spec)
    geom, _, psi = build_instance(spec)
    try:
        centers = range(len(psi)) if args.centers is None else args.centers
        diags = [voronoi.territory_diagnostics(psi, j, rays=args.rays).to_dict() for j in centers]
    except transport.PreconditionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SPEC
    for d in diags:
        d["max_extent"] = _finite(d["max_extent"])
    out = _out_dir(spec, args)
    _dump({"centers": diags, "all_star_shaped": all(d["star_shaped"] for d in diags),
           "all_bounded": all(d["bounded"] for d in diags)}, out / "voronoi.json")
    if _want_plot(spec, args) and geom.dimension == 2:
        cells = [voronoi.VoronoiCell.build(psi, j, args.rays) for j in centers]
        (out / "voronoi.svg").write_text(plotting.territories_svg(psi, cells))
    n_star = sum(d["star_shaped"] for d in diags)
    n_bounded = sum(d["bounded"] for d in diags)
    print(f"{len(diags)} territories: {n_star} star-shaped, {n_bounded} bounded -> {out}")
    return EXIT_OK


def cmd_couple(args) -> int:
    spec = load_spec(args.spec)
    try:
        geom = Geometry.from_dict(spec["geometry"], _dimension_hint(spec))
    except (GeometryError, KeyError) as exc:
        raise SpecError(str(exc)) from exc
    if not geom.is_torus:
        raise SpecError("coupling experiments run on a torus")
    psi_spec = dict(spec["psi"])
    phi_spec = spec.get("phi") or {}
    resolution = phi_spec.get("resolution", 100)
    opts = _solver_options(spec, args)
    seed = args.seed if args.seed is not None else int(psi_spec.get("seed", 0))
    radii = args.radii or [1.0]
    try:
        stats = coupling.slivnyak_experiment(
            period=list(geom.period), resolution=resolution, samples=args.samples, radii=radii, seed=seed,
            dimension=geom.dimension, opts=opts, psi_spec=psi_spec)
    except (transport.PreconditionError, MeasureSpecError) as exc:
        raise SpecError(str(exc)) from exc
    result = stats.to_dict()
    if psi_spec.get("type") == "poisson":
        lam = float(psi_spec.get("intensity", 1.0))
        d = geom.dimension
        unit_ball = math.pi ** (d / 2) / math.gamma(d / 2 + 1)
        target = lam * unit_ball * np.asarray(radii) ** d
        ref = coupling.poisson_palm_direct(lam, list(geom.period), max(args.samples, 2000), radii,
                                           seed=seed + 1_000_003, dimension=d)
        result["poisson_target"] = target.tolist()
        result["direct_simulation"] = {"mean": ref.mean.tolist(), "stderr": ref.stderr.tolist()}
        result["within_3se"] = (np.abs(stats.mean - target) <= 3 * stats.stderr).tolist()
    out = _out_dir(spec, args)
    _dump(result, out / "palm.json")
    (out / "palm.csv").write_text(stats.to_csv())
    for r, m, s in zip(stats.radii, stats.mean, stats.stderr):
        print(f"r={r:g}: mean count {m:.4f} +/- {s:.4f}")
    print(f"samples={stats.samples} dropped={stats.dropped} origin atom present in {stats.origin_hits}")
    return EXIT_OK


def cmd_example(args) -> int:
    kwargs = {"resolution": args.resolution}
    if args.name == "interval":
        kwargs["alpha"] = args.alpha
    try:
        res = golden.run_example(args.name, **kwargs)
    except KeyError as exc:
        print(f"error: {exc.args[0]}", file=sys.stderr)
        return EXIT_SPEC
    print(res.line())
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _dump({"name": res.name, "passed": res.passed, "message": res.message, "metrics": res.metrics},
              out / f"{res.name}.json")
    return EXIT_OK if res.passed else EXIT_FAIL


def cmd_version(args) -> int:
    try:
        print(metadata.version("palm-transport"))
    except metadata.PackageNotFoundError:
        print("unknown")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="palm-transport", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--tol", type=float, help="convergence tolerance of the stage residual")
        sp.add_argument("--max-stages", type=int, help="cap on computed stage sweeps")
        sp.add_argument("--constraint", choices=["density", "counting"], help="f <= 1 or f <= 1/w per center")
        sp.add_argument("--out", help="output directory (default: spec output.dir or .)")
        sp.add_argument("--plot", action="store_true", help="also write an SVG picture")

    sp = sub.add_parser("solve", help="solve an instance and write the density")
    sp.add_argument("spec", help="instance JSON")
    common(sp)
    sp.add_argument("--strict", action="store_true", help="exit 3 when the stages do not converge")
    sp.add_argument("--center-optimal", action="store_true", help="let centers propose")
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("verify", help="check a density file against its instance")
    sp.add_argument("spec", help="instance JSON")
    sp.add_argument("density", help="density CSV written by solve")
    common(sp)
    sp.add_argument("--require-balanced", choices=["auto", "yes", "no"], default="auto",
                    help="auto: only on a torus with equal total masses")
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("voronoi", help="territory diagnostics of the center measure")
    sp.add_argument("spec", help="instance JSON")
    common(sp)
    sp.add_argument("--rays", type=int, help="ray directions per territory")
    sp.add_argument("--centers", type=int, nargs="*", help="center indices (default: all)")
    sp.set_defaults(func=cmd_voronoi)

    sp = sub.add_parser("couple", help="extra-head sampling and Palm statistics")
    sp.add_argument("spec", help="instance JSON")
    common(sp)
    sp.add_argument("--samples", type=int, default=100)
    sp.add_argument("--radii", type=float, nargs="+", help="ball radii around the origin")
    sp.add_argument("--seed", type=int, help="first sample seed")
    sp.set_defaults(func=cmd_couple)

    sp = sub.add_parser("example", help="run a closed-form reference instance")
    sp.add_argument("name", choices=sorted(golden.EXAMPLES))
    sp.add_argument("--alpha", type=float, default=2.0, help="interval length (interval only)")
    sp.add_argument("--resolution", type=int)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_example)

    sp = sub.add_parser("version")
    sp.set_defaults(func=cmd_version)
    return p


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except SpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SPEC


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
