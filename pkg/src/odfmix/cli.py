"""Command-line interface.

Subcommands: fit, pt-fit, ppd, kde, simulate, table, export, report.  Each
run reads a JSON config (plus flag overrides), writes its outputs and a
manifest into the output directory, and exits 0 on success.  Error classes
map to distinct exit codes: 2 configuration and usage, 3 data ingestion, 4
range and table problems, 5 internal contract violations.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import bingham, io, kde, mixture, predict, quat, rjmcmc, synthetic, tempering

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_RANGE = 4
EXIT_CONTRACT = 5


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--seed", type=int, help="random seed (mandatory, here or in config)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--iters", type=int, help="sampler iterations")
    p.add_argument("--burnin", type=int, help="burn-in iterations")
    p.add_argument("--mmax", type=int, help="maximum component count")
    p.add_argument("--temps", help="comma-separated temperature ladder")
    p.add_argument("--force-uniform", action="store_true", default=None,
                   help="pin the last mixture component to the uniform density")
    p.add_argument("--swap-rule", choices=["corrected", "literal"],
                   help="state-swap acceptance rule (default corrected)")
    p.add_argument("--weights-normalization", choices=["cumulative", "literal"],
                   help="rescaling used in the weight proposal (default cumulative)")
    p.add_argument("--dimension-rule", choices=["corrected", "literal"],
                   help="dimension-move acceptance rule (default corrected)")
    p.add_argument("--data", help="orientation data file")
    p.add_argument("--data-format", choices=["quaternion-csv", "euler-csv"])
    p.add_argument("--table", help="normalizer table file")


def _overrides(args) -> dict:
    ov = {
        "seed": args.seed,
        "out": args.out,
        "data": args.data,
        "data_format": getattr(args, "data_format", None),
        "table": args.table,
        "forced_uniform": args.force_uniform,
        "swap_rule": args.swap_rule,
        "weights_normalization": args.weights_normalization,
        "dimension_rule": args.dimension_rule,
        "sampler.iters": args.iters,
        "sampler.burn_in": args.burnin,
        "hyperparams.m_max": args.mmax,
    }
    if args.temps:
        ov["ladder"] = [float(t) for t in args.temps.split(",")]
    return ov


def _build_run(cfg: io.RunConfig):
    qc = quat.symmetry_group(cfg["crystal_symmetry"])
    qs = quat.symmetry_group(cfg["specimen_symmetry"])
    data = io.ingest(cfg["data"], cfg["data_format"], qc=qc, qs=qs)
    table = bingham.NormalizerTable.load(cfg["table"])
    hp = cfg["hyperparams"]
    h = mixture.Hyperparams(mu=hp["mu"], beta=hp["beta"], nu=hp["nu"], m_max=hp["m_max"])
    sp = cfg["sampler"]
    sampler = rjmcmc.SamplerConfig(
        n_iters=sp["iters"],
        burn_in=sp["burn_in"],
        b=sp["b"],
        c=sp["c"],
        d=sp["d"],
        seed=cfg["seed"],
        adapt=sp["adapt"],
        thin=sp["thin"],
        forced_uniform=cfg["forced_uniform"],
        weights_normalization=cfg["weights_normalization"],
        dimension_rule=cfg["dimension_rule"],
    )
    return data, table, h, sampler, qc, qs


def cmd_fit(args) -> int:
    cfg = io.load_config(args.config, _overrides(args))
    data, table, h, sampler, _, _ = _build_run(cfg)
    trace = rjmcmc.run(data, h, sampler, table)
    os.makedirs(cfg["out"], exist_ok=True)
    trace_path = os.path.join(cfg["out"], "trace.ndjson")
    io.save_trace(trace, trace_path)
    diag_path = os.path.join(cfg["out"], "diagnostics.json")
    _write_diagnostics(diag_path, trace)
    io.write_manifest(cfg["out"], cfg, "fit", [trace_path, diag_path])
    print(f"saved {len(trace)} states to {trace_path}")
    return 0


def cmd_pt_fit(args) -> int:
    cfg = io.load_config(args.config, _overrides(args))
    data, table, h, sampler, _, _ = _build_run(cfg)
    ladder = tempering.TemperatureLadder(temps=tuple(cfg["ladder"]))
    trace = tempering.run_pt(data, h, sampler, ladder, table, swap_rule=cfg["swap_rule"])
    os.makedirs(cfg["out"], exist_ok=True)
    trace_path = os.path.join(cfg["out"], "trace.ndjson")
    io.save_trace(trace, trace_path)
    swap_path = os.path.join(cfg["out"], "swap_stats.json")
    with open(swap_path, "w") as fh:
        json.dump(trace.swap_stats, fh, sort_keys=True, indent=2)
        fh.write("\n")
    diag_path = os.path.join(cfg["out"], "diagnostics.json")
    _write_diagnostics(diag_path, trace)
    io.write_manifest(cfg["out"], cfg, "pt-fit", [trace_path, swap_path, diag_path])
    print(f"saved {len(trace)} states to {trace_path}")
    return 0


def _write_diagnostics(path, trace) -> None:
    dim = [a for a in trace.accept_dim if a is not None]
    within = [a for a in trace.accept_within if a is not None]
    diag = {
        "n_saved": len(trace),
        "dim_attempts": len(dim),
        "dim_acceptance": (sum(dim) / len(dim)) if dim else None,
        "within_attempts": len(within),
        "within_acceptance": (sum(within) / len(within)) if within else None,
        "adaptation": [[it, b, c, d] for it, b, c, d in trace.adaptation],
        "final_proposals": list(trace.final_proposals) if trace.final_proposals else None,
    }
    with open(path, "w") as fh:
        json.dump(diag, fh, sort_keys=True, indent=2)
        fh.write("\n")


def cmd_ppd(args) -> int:
    cfg = io.load_config(args.config, _overrides(args), require_files=())
    if not args.trace:
        raise io.ConfigError(["--trace is required for ppd"])
    trace = io.load_trace(args.trace)
    if not trace.states:
        raise io.ConfigError([f"trace {args.trace} holds no states"])
    rng = np.random.default_rng(cfg["seed"])
    draws = predict.ppd_sample(trace, args.n_new, rng)
    os.makedirs(cfg["out"], exist_ok=True)
    out_path = os.path.join(cfg["out"], "ppd_draws.csv")
    io.export_quaternion_csv(out_path, draws)
    io.write_manifest(cfg["out"], cfg, "ppd", [out_path])
    print(f"wrote {draws.shape[0]} predictive draws to {out_path}")
    return 0


def cmd_kde(args) -> int:
    cfg = io.load_config(args.config, _overrides(args), require_files=("data",))
    qc = quat.symmetry_group(cfg["crystal_symmetry"])
    qs = quat.symmetry_group(cfg["specimen_symmetry"])
    data = io.ingest(cfg["data"], cfg["data_format"], qc=qc, qs=qs)
    if args.kappa is not None:
        spec = kde.KernelSpec.from_kappa(args.kappa)
    else:
        spec = kde.select_bandwidth(data)
    evaluator = kde.kde_estimate(data, spec)
    os.makedirs(cfg["out"], exist_ok=True)
    grid_spec = io.GridSpec(kind="euler-grid", resolution=args.resolution)
    out_path = os.path.join(cfg["out"], "kde_grid.csv")
    io.export_grid(evaluator, grid_spec, qc, qs, out_path)
    info_path = os.path.join(cfg["out"], "kde_info.json")
    with open(info_path, "w") as fh:
        json.dump({"kappa": spec.kappa, "n": data.n}, fh, sort_keys=True)
        fh.write("\n")
    io.write_manifest(cfg["out"], cfg, "kde", [out_path, info_path])
    print(f"kde with kappa={spec.kappa} exported to {out_path}")
    return 0


def cmd_simulate(args) -> int:
    cfg = io.load_config(args.config, _overrides(args), require_files=())
    rng = np.random.default_rng(cfg["seed"])
    os.makedirs(cfg["out"], exist_ok=True)
    if args.target == "santafe":
        data = synthetic.santafe_generate(args.n, rng)
    else:
        raise io.ConfigError([f"unknown simulation target '{args.target}'"])
    data_path = os.path.join(cfg["out"], f"{args.target}_orientations.csv")
    io.export_quaternion_csv(data_path, data.quats)
    truth_path = os.path.join(cfg["out"], f"{args.target}_truth.json")
    with open(truth_path, "w") as fh:
        json.dump(data.provenance, fh, sort_keys=True, indent=2)
        fh.write("\n")
    io.write_manifest(cfg["out"], cfg, "simulate", [data_path, truth_path])
    print(f"wrote {data.n} orientations to {data_path}")
    return 0


def cmd_table(args) -> int:
    if args.action == "build":
        table = bingham.build_table(
            lam_max=args.lam_max, nodes_per_axis=args.nodes, budget=args.budget, seed=args.table_seed
        )
        table.save(args.path)
        print(
            f"table {args.path}: lam_max={table.lam_max} nodes={table.nodes} "
            f"stderr_max={table.stderr_max:.2e}"
        )
        return 0
    table = bingham.NormalizerTable.load(args.path)
    problems = table.check()
    zero = table.values[0, 0, 0]
    print(f"table {args.path}: lam_max={table.lam_max} nodes={table.nodes} F(0)={zero!r}")
    if problems:
        for p in problems:
            print(f"PROBLEM: {p}")
        return EXIT_RANGE
    print("table check passed")
    return 0


def cmd_export(args) -> int:
    cfg = io.load_config(args.config, _overrides(args), require_files=())
    qc = quat.symmetry_group(cfg["crystal_symmetry"])
    qs = quat.symmetry_group(cfg["specimen_symmetry"])
    os.makedirs(cfg["out"], exist_ok=True)
    spec = io.GridSpec(
        kind=args.kind,
        resolution=args.resolution,
        pole_directions=tuple(
            tuple(float(x) for x in p.split(",")) for p in args.pole
        )
        if args.pole
        else io.GridSpec().pole_directions,
    )
    outputs = []
    if args.kind == "euler-grid":
        if args.trace:
            trace = io.load_trace(args.trace)
            if cfg["table"] is None or not os.path.exists(cfg["table"]):
                raise io.ConfigError(["a table file is required to export from a trace"])
            table = bingham.NormalizerTable.load(cfg["table"])
            state = predict.map_estimate(trace)
            evaluator = mixture.density_evaluator(state, qc, qs, table)
        elif args.draws:
            draws = io.ingest(args.draws, "quaternion-csv", qc=qc, qs=qs)
            spec_k = (
                kde.KernelSpec.from_kappa(args.kappa)
                if args.kappa is not None
                else kde.select_bandwidth(draws)
            )
            evaluator = kde.kde_estimate(draws, spec_k)
        else:
            raise io.ConfigError(["euler-grid export needs --trace or --draws"])
        out_path = os.path.join(cfg["out"], "odf_grid.csv")
        io.export_grid(evaluator, spec, qc, qs, out_path)
        outputs.append(out_path)
    else:
        if not args.draws:
            raise io.ConfigError(["pole-figure export needs --draws (orientation samples)"])
        samples = io.ingest(args.draws, "quaternion-csv", qc=qc, qs=qs)
        out_paths = [
            os.path.join(cfg["out"], f"pole_figure_{i}.csv")
            for i in range(len(spec.pole_directions))
        ]
        io.export_grid(samples.quats, spec, qc, qs, out_paths)
        outputs.extend(out_paths)
    io.write_manifest(cfg["out"], cfg, "export", outputs)
    print("exported: " + ", ".join(outputs))
    return 0


def cmd_report(args) -> int:
    cfg = io.load_config(args.config, _overrides(args), require_files=())
    if not args.trace:
        raise io.ConfigError(["--trace is required for report"])
    trace = io.load_trace(args.trace)
    if not trace.states:
        raise io.ConfigError([f"trace {args.trace} holds no states"])
    os.makedirs(cfg["out"], exist_ok=True)

    ms = np.array([s.m for s in trace.states])
    counts = np.bincount(ms)
    p_m = {int(m): float(c / len(ms)) for m, c in enumerate(counts) if m >= 1 and c > 0}
    mode_m = max(p_m, key=lambda m: p_m[m])

    e_alpha = {}
    e_alpha_by_conc = {}
    for m in sorted(p_m):
        sel = [s for s in trace.states if s.m == m]
        e_alpha[m] = np.mean([s.weights for s in sel], axis=0).tolist()
        order = [np.argsort([-c.lam[0] for c in s.components], kind="stable") for s in sel]
        e_alpha_by_conc[m] = np.mean(
            [s.weights[o] for s, o in zip(sel, order)], axis=0
        ).tolist()

    best = predict.map_estimate(trace)
    report = {
        "n_samples": len(trace),
        "p_m": {str(k): v for k, v in sorted(p_m.items())},
        "mode_m": int(mode_m),
        "e_alpha_given_m": {str(k): v for k, v in sorted(e_alpha.items())},
        "e_alpha_by_concentration_given_m": {str(k): v for k, v in sorted(e_alpha_by_conc.items())},
        "map": {
            "M": best.m,
            "alpha": best.weights.tolist(),
            "lambda": [c.lam.tolist() for c in best.components],
            "v1": [c.frame[:, 0].tolist() for c in best.components],
            "log_posterior": float(np.max(trace.log_posteriors)),
        },
    }
    report_path = os.path.join(cfg["out"], "report.json")
    with open(report_path, "w") as fh:
        json.dump(report, fh, sort_keys=True, indent=2)
        fh.write("\n")

    hist_path = os.path.join(cfg["out"], "histograms.csv")
    with open(hist_path, "w") as fh:
        fh.write("parameter,component,bin_left,bin_right,count\n")
        for m in sorted(p_m):
            sel = [s for s in trace.states if s.m == m]
            for slot in range(m):
                for name, vals in (
                    ("alpha", [s.weights[slot] for s in sel]),
                    ("lambda1", [s.components[slot].lam[0] for s in sel]),
                    ("lambda2", [s.components[slot].lam[1] for s in sel]),
                    ("lambda3", [s.components[slot].lam[2] for s in sel]),
                ):
                    hist, edges = np.histogram(vals, bins=30)
                    for h_val, lo, hi in zip(hist, edges[:-1], edges[1:]):
                        fh.write(f"{name}_M{m},{slot + 1},{lo:.6g},{hi:.6g},{int(h_val)}\n")

    io.write_manifest(cfg["out"], cfg, "report", [report_path, hist_path])
    print(f"P(M=m|data): {report['p_m']}  mode: {mode_m}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="odfmix",
        description="Bayesian orientation-distribution inference with symmetric Bingham mixtures",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="single-chain reversible-jump fit")
    _add_common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("pt-fit", help="parallel-tempered fit")
    _add_common(p)
    p.set_defaults(func=cmd_pt_fit)

    p = sub.add_parser("ppd", help="posterior predictive draws from a saved trace")
    _add_common(p)
    p.add_argument("--trace", help="trace file from fit or pt-fit")
    p.add_argument("--n-new", type=int, default=10000, help="number of predictive draws")
    p.set_defaults(func=cmd_ppd)

    p = sub.add_parser("kde", help="kernel density baseline on raw orientations")
    _add_common(p)
    p.add_argument("--kappa", type=float, help="fixed kernel concentration (default: cross-validated)")
    p.add_argument("--resolution", type=float, default=5.0, help="grid resolution in degrees")
    p.set_defaults(func=cmd_kde)

    p = sub.add_parser("simulate", help="generate synthetic orientation data")
    _add_common(p)
    p.add_argument("--target", default="santafe", help="generator name")
    p.add_argument("--n", type=int, default=10000, help="sample count")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("table", help="build or check a normalizer table")
    p.add_argument("action", choices=["build", "check"])
    p.add_argument("path", help="table file")
    p.add_argument("--lam-max", type=float, default=50.0)
    p.add_argument("--nodes", type=int, default=32)
    p.add_argument("--budget", type=int, default=32768)
    p.add_argument("--table-seed", type=int, default=0)
    p.set_defaults(func=cmd_table)

    p = sub.add_parser("export", help="evaluate a density on a grid or pole figures")
    _add_common(p)
    p.add_argument("--trace", help="trace file; exports the MAP mixture density")
    p.add_argument("--draws", help="quaternion CSV; exports its kernel density")
    p.add_argument("--kind", choices=["euler-grid", "pole-figure"], default="euler-grid")
    p.add_argument("--resolution", type=float, default=5.0)
    p.add_argument("--kappa", type=float, help="fixed kernel concentration for --draws")
    p.add_argument("--pole", action="append", help="pole direction 'x,y,z' (repeatable)")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("report", help="posterior summaries from a saved trace")
    _add_common(p)
    p.add_argument("--trace", help="trace file from fit or pt-fit")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except io.ConfigError as e:
        print(str(e), file=sys.stderr)
        return EXIT_CONFIG
    except (io.IngestError, quat.GroupError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except bingham.RangeError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RANGE
    except (ValueError, FloatingPointError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONTRACT


if __name__ == "__main__":
    sys.exit(main())
