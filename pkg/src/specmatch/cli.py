"""Command-line frontend: reproducible precompute/train/match/evaluate runs.

Subcommands
-----------
precompute   build hash-keyed caches (spectra, descriptors, geodesic samples)
train        optimize the basis gains and feature transform, write artifacts
match        compute a correspondence between two meshes (+ report)
refine       re-run alternating spectral refinement on an existing map
eval         score a correspondence file against ground truth
export-plots write CSV/PNG bundles for profiles, losses and PCK curves
synth        generate a synthetic pair with exact ground truth

Exit codes: 0 success, 1 configuration/input error, 2 numerical failure.
Reports that write delimited output also render the matching figure next
to it.
"""

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import plots
from .basis import shared_filter_pair
from .bench import (
    NoisyPermutation,
    NonIsometricScale,
    Permutation,
    geodesic_error,
    make_synthetic_pair,
)
from .descriptors import apply_transform
from .errors import (
    InputError,
    NonFiniteLossError,
    NumericalError,
    PipelineError,
    SpecmatchError,
)
from .fmap import fmap_project, fmap_solve, save_fmap
from .generate import icosphere
from .learn import inhibition_profile, train
from .mesh import load_mesh, save_off
from .pointwise import g_zoomout, load_hard_map, nn_map, recover_map, save_hard_map
from .project import (
    ProjectConfig,
    dump_config,
    load_bundle,
    load_config,
    load_trained_filter,
    load_trained_transform,
    precompute_mesh,
    read_loss_csv,
    save_train_artifacts,
)

import time


def _timed(timings, name, fn):
    start = time.perf_counter()
    out = fn()
    timings[name] = time.perf_counter() - start
    return out


def cmd_precompute(config, force=False, export_features=False):
    """Cache operators, spectra, descriptors and geodesic samples per mesh.

    Idempotent: caches are keyed by mesh content hash and untouched when
    they already exist. Per-mesh failures are all reported before the
    command fails.
    """
    failures = []
    for name in config.meshes:
        try:
            paths, fresh = precompute_mesh(config, name, force=force)
            status = "built" if fresh else "cached"
            print(f"precompute {name}: {status}")
            if export_features:
                bundle = load_bundle(config, name)
                out = config.out_dir
                out.mkdir(parents=True, exist_ok=True)
                dest = out / f"{Path(name).stem}.features.csv"
                np.savetxt(dest, bundle.features.values, delimiter=",")
                print(f"precompute {name}: features -> {dest}")
        except SpecmatchError as exc:
            failures.append((name, exc))
            print(f"precompute {name}: ERROR {exc}", file=sys.stderr)
    if failures:
        raise InputError(
            f"{len(failures)} mesh(es) failed: "
            + ", ".join(name for name, _ in failures)
        )
    return 0


def cmd_train(config):
    """Optimize gains and transform on the configured pairs; write
    filter.json, transform.json and loss_history.csv (+ figure)."""
    if not config.train.pairs:
        raise InputError("no training pairs configured ([train] pairs = ...)")
    bundles = {}
    for x_name, y_name in config.train.pairs:
        for name in (x_name, y_name):
            if name not in bundles:
                bundles[name] = load_bundle(config, name)
    pairs = [(bundles[x], bundles[y]) for x, y in config.train.pairs]
    train_cfg = dataclasses.replace(
        config.train, train_filter=(config.variant == "learned")
    )
    state = train(pairs, train_cfg)
    out = save_train_artifacts(config, state)
    plots.plot_loss_history(state.loss_history, out / "loss_history.png")
    print(f"train: {state.iteration} iterations, artifacts in {out}")
    return 0


def cmd_match(config, shape_x, shape_y, refine=None):
    """Match shape_y onto shape_x: correspondence file plus JSON report.

    Two-stage inference: nearest neighbors in the (transformed) feature
    space give the initial map, the configured route turns it into a
    functional map, and nearest neighbors in the aligned basis embeddings
    recover the final map; refinement is appended when enabled. If a
    ground-truth file ``<y>__<x>.gt.txt`` sits next to the meshes, the
    report includes geodesic-error metrics plus PCK CSV/figure.
    """
    refine = config.refine if refine is None else refine
    timings = {}
    bundle_x = _timed(timings, "load_x", lambda: load_bundle(config, shape_x))
    bundle_y = _timed(timings, "load_y", lambda: load_bundle(config, shape_y))

    filt, filter_trained = load_trained_filter(config, bundle_x.spectrum.k)
    transform, transform_trained = load_trained_transform(
        config, bundle_x.features.d
    )
    if config.variant == "fixed":
        from .basis import InhibitionFilter

        filt = InhibitionFilter.identity(bundle_x.spectrum.k)
    basis_x, basis_y = shared_filter_pair(
        bundle_x.spectrum, bundle_y.spectrum, filt
    )

    def initial():
        fx = apply_transform(bundle_x.features, transform)
        fy = apply_transform(bundle_y.features, transform)
        return fx, fy, nn_map(fy.values, fx.values)

    fx, fy, pi0 = _timed(timings, "initial_map", initial)

    def compute_fmap():
        if config.route == "projection":
            return fmap_project(pi0, basis_x, basis_y,
                                direction=f"{shape_x}->{shape_y}")
        return fmap_solve(
            fx, fy, basis_x, basis_y,
            bundle_x.spectrum.eigenvalues, bundle_y.spectrum.eigenvalues,
            lam_reg=config.lam_reg, direction=f"{shape_x}->{shape_y}",
        )

    cmap = _timed(timings, "fmap", compute_fmap)
    pi = _timed(timings, "recover", lambda: recover_map(cmap, basis_x, basis_y))
    trace = None
    if refine:
        def run_refine():
            return g_zoomout(
                pi, basis_x, basis_y,
                config.refine_k_init, config.refine_k_end, config.refine_step,
                return_trace=True,
            )

        pi, trace = _timed(timings, "refine", run_refine)

    out = config.out_dir
    out.mkdir(parents=True, exist_ok=True)
    stem_x, stem_y = Path(shape_x).stem, Path(shape_y).stem
    pair_tag = f"{stem_y}__{stem_x}"
    map_path = out / f"{pair_tag}.map"
    save_hard_map(pi, map_path, one_based=config.one_based)
    save_fmap(cmap, out / f"{pair_tag}.fmap")

    report = {
        "pair": {"x": shape_x, "y": shape_y},
        "variant": config.variant,
        "route": config.route,
        "k": config.k,
        "alpha": config.alpha,
        "refine": bool(refine),
        "one_based": config.one_based,
        "trained_filter": filter_trained,
        "trained_transform": transform_trained,
        "timings": timings,
    }
    if trace is not None:
        report["refine_energy_trace"] = [float(e) for e in trace]

    gt_path = config.workspace_path / f"{pair_tag}.gt.txt"
    if gt_path.exists():
        gt = load_hard_map(gt_path, bundle_x.mesh.vertex_count)
        ev = geodesic_error(pi, gt, bundle_x.mesh)
        report["mean_error"] = ev.mean_error
        report["pck"] = [[t, v] for t, v in ev.pck]
        _write_pck(out, pair_tag, ev)

    report_path = out / f"{pair_tag}.report.json"
    report_path.write_text(json.dumps(report, indent=2))
    print(f"match: wrote {map_path} and {report_path}")
    return 0


def _write_pck(out, tag, report):
    pck_path = out / f"{tag}.pck.csv"
    with open(pck_path, "w") as fh:
        fh.write("threshold,fraction\n")
        for t, v in report.pck:
            fh.write(f"{t!r},{v!r}\n")
    plots.plot_pck(report.pck, out / f"{tag}.pck.png")
    err_path = out / f"{tag}.errors.csv"
    with open(err_path, "w") as fh:
        fh.write("vertex,error\n")
        for i, e in enumerate(report.errors):
            fh.write(f"{i},{float(e)!r}\n")
    plots.plot_error_histogram(report.errors, out / f"{tag}.errors.png")


def cmd_refine(config, shape_x, shape_y, map_file):
    """Alternating spectral refinement of an existing correspondence file."""
    bundle_x = load_bundle(config, shape_x)
    bundle_y = load_bundle(config, shape_y)
    filt, _ = load_trained_filter(config, bundle_x.spectrum.k)
    basis_x, basis_y = shared_filter_pair(
        bundle_x.spectrum, bundle_y.spectrum, filt
    )
    pi = load_hard_map(map_file, bundle_x.mesh.vertex_count,
                       one_based=config.one_based)
    if pi.source_size != bundle_y.mesh.vertex_count:
        raise InputError(
            f"{map_file}: {pi.source_size} rows, {shape_y} has "
            f"{bundle_y.mesh.vertex_count} vertices"
        )
    refined = g_zoomout(
        pi, basis_x, basis_y,
        config.refine_k_init, config.refine_k_end, config.refine_step,
    )
    out_path = Path(map_file).with_suffix(".refined.map")
    save_hard_map(refined, out_path, one_based=config.one_based)
    print(f"refine: wrote {out_path}")
    return 0


def cmd_eval(config, shape_x, map_file, gt_file, tag=None):
    """Score a correspondence file against a ground-truth file."""
    bundle_x = load_bundle(config, shape_x)
    n = bundle_x.mesh.vertex_count
    pred = load_hard_map(map_file, n, one_based=config.one_based)
    gt = load_hard_map(gt_file, n, one_based=config.one_based)
    report = geodesic_error(pred, gt, bundle_x.mesh)
    out = config.out_dir
    out.mkdir(parents=True, exist_ok=True)
    tag = tag or Path(map_file).stem
    (out / f"{tag}.eval.json").write_text(report.to_json())
    _write_pck(out, tag, report)
    print(f"eval: mean error {report.mean_error:.6f}, report in {out}")
    return 0


def cmd_export_plots(config):
    """Export the CSV bundle (inhibition profile, loss history, PCK) with a
    rendered figure next to each CSV; missing artifacts are listed."""
    out = config.out_dir
    out.mkdir(parents=True, exist_ok=True)
    missing = []

    filt, trained = load_trained_filter(config, config.k)
    profile = [(i, float(g)) for i, g in enumerate(filt.gains)]
    prof_path = out / "inhibition_profile.csv"
    with open(prof_path, "w") as fh:
        fh.write("index,gain\n")
        for i, g in profile:
            fh.write(f"{i},{g!r}\n")
    plots.plot_inhibition_profile(profile, out / "inhibition_profile.png")
    print(f"export-plots: {prof_path}" + ("" if trained else " (untrained: all ones)"))

    loss_path = out / "loss_history.csv"
    if loss_path.exists():
        losses = read_loss_csv(loss_path)
        plots.plot_loss_history(losses, out / "loss_history.png")
        print(f"export-plots: {loss_path}")
    else:
        missing.append(str(loss_path))

    reports = sorted(out.glob("*.report.json"))
    found_pck = False
    for report_path in reports:
        data = json.loads(report_path.read_text())
        if "pck" in data:
            tag = report_path.name.replace(".report.json", "")
            pck = [(float(t), float(v)) for t, v in data["pck"]]
            pck_path = out / f"{tag}.pck.csv"
            with open(pck_path, "w") as fh:
                fh.write("threshold,fraction\n")
                for t, v in pck:
                    fh.write(f"{t!r},{v!r}\n")
            plots.plot_pck(pck, out / f"{tag}.pck.png")
            print(f"export-plots: {pck_path}")
            found_pck = True
    if not found_pck:
        missing.append(str(out / "*.pck.csv (no evaluated reports)"))

    if missing:
        print("export-plots: missing artifacts:", ", ".join(missing))
    return 0


def cmd_synth(config, base, kind, seed, out_name, noise=0.01,
              factors=(1.0, 1.0, 2.0), subdivisions=2):
    """Write a synthetic pair (two OFF meshes + exact ground truth)."""
    ws = config.workspace_path
    ws.mkdir(parents=True, exist_ok=True)
    if base == "icosphere":
        base_mesh = icosphere(subdivisions)
        base_name = f"{out_name}_base"
    else:
        base_mesh = load_mesh(config.workspace_path / base)
        base_name = Path(base).stem
    if kind == "permutation":
        deform = Permutation()
    elif kind == "noisy-permutation":
        deform = NoisyPermutation(noise)
    elif kind == "non-isometric-scale":
        deform = NonIsometricScale(tuple(factors))
    else:
        raise InputError(f"unknown deformation kind {kind!r}")
    pair = make_synthetic_pair(base_mesh, deform, seed=seed)
    x_path = ws / f"{base_name}.off"
    y_path = ws / f"{out_name}_copy.off"
    save_off(pair.shape_x, x_path)
    save_off(pair.shape_y, y_path)
    gt_path = ws / f"{out_name}_copy__{base_name}.gt.txt"
    save_hard_map(pair.ground_truth, gt_path, one_based=config.one_based)
    print(f"synth: wrote {x_path}, {y_path}, {gt_path}")
    return 0


# -- argument parsing ----------------------------------------------------


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="specmatch",
        description="Shape correspondence with gain-adapted spectral bases.",
    )
    parser.add_argument("--config", default=None, help="TOML/JSON config file")
    parser.add_argument("--dump-config", action="store_true",
                        help="print the effective configuration and exit")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the training seed")
    parser.add_argument("--variant", choices=("fixed", "learned"), default=None)
    parser.add_argument("--route", choices=("solver", "projection"), default=None)
    parser.add_argument("--one-based", action="store_true", default=None,
                        help="write/read correspondence files 1-based")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("precompute", help="build caches for every mesh")
    p.add_argument("--force", action="store_true")
    p.add_argument("--export-features", action="store_true",
                   help="also dump descriptor CSVs for debugging")

    sub.add_parser("train", help="optimize gains and feature transform")

    p = sub.add_parser("match", help="match shape_y onto shape_x")
    p.add_argument("shape_x")
    p.add_argument("shape_y")
    p.add_argument("--refine", action="store_true", default=None)

    p = sub.add_parser("refine", help="refine an existing correspondence")
    p.add_argument("shape_x")
    p.add_argument("shape_y")
    p.add_argument("map_file")

    p = sub.add_parser("eval", help="score a correspondence against truth")
    p.add_argument("shape_x")
    p.add_argument("map_file")
    p.add_argument("gt_file")
    p.add_argument("--tag", default=None)

    sub.add_parser("export-plots", help="CSV/PNG bundle of artifacts")

    p = sub.add_parser("synth", help="generate a synthetic ground-truth pair")
    p.add_argument("--base", default="icosphere",
                   help="'icosphere' or a mesh file in the workspace")
    p.add_argument("--kind", default="noisy-permutation",
                   choices=("permutation", "noisy-permutation",
                            "non-isometric-scale"))
    p.add_argument("--noise", type=float, default=0.01)
    p.add_argument("--factors", type=float, nargs=3, default=(1.0, 1.0, 2.0))
    p.add_argument("--subdivisions", type=int, default=2)
    p.add_argument("--out-name", default="synth")
    p.add_argument("--synth-seed", type=int, default=0)
    return parser


def _effective_config(args):
    if args.config:
        config = load_config(args.config)
    else:
        config = ProjectConfig()
    updates = {}
    if args.variant is not None:
        updates["variant"] = args.variant
    if args.route is not None:
        updates["route"] = args.route
    if args.one_based is not None:
        updates["one_based"] = args.one_based
    if args.seed is not None:
        updates["train"] = dataclasses.replace(config.train, seed=args.seed)
    if updates:
        config = dataclasses.replace(config, **updates)
    return config


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        config = _effective_config(args)
        if args.dump_config:
            print(dump_config(config), end="")
            return 0
        if args.command is None:
            parser.print_help()
            return 1
        if args.command == "precompute":
            return cmd_precompute(config, force=args.force,
                                  export_features=args.export_features)
        if args.command == "train":
            return cmd_train(config)
        if args.command == "match":
            return cmd_match(config, args.shape_x, args.shape_y,
                             refine=args.refine)
        if args.command == "refine":
            return cmd_refine(config, args.shape_x, args.shape_y, args.map_file)
        if args.command == "eval":
            return cmd_eval(config, args.shape_x, args.map_file, args.gt_file,
                            tag=args.tag)
        if args.command == "export-plots":
            return cmd_export_plots(config)
        if args.command == "synth":
            return cmd_synth(
                config, args.base, args.kind, args.synth_seed, args.out_name,
                noise=args.noise, factors=args.factors,
                subdivisions=args.subdivisions,
            )
        parser.error(f"unknown command {args.command!r}")
    except NonFiniteLossError as exc:
        where = f" at iteration {exc.iteration}" if exc.iteration is not None else ""
        print(f"error: non-finite loss{where}: {exc}", file=sys.stderr)
        return 2
    except PipelineError as exc:
        code = 2 if isinstance(exc.original, NumericalError) else 1
        print(f"error: {exc}", file=sys.stderr)
        return code
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SpecmatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
