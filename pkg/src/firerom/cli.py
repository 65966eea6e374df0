"""Command line interface (``firerom``)."""

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import snapio
from .errors import (DimensionError, FireRomError, FormatError, InvalidInputError,
                     UndefinedErrorMetric)
from .harness import (fom_trajectory, generate_training_data, load_config, load_or_build,
                      pareto_compare, run_rom, sweep, write_csv, initial_state, build_offline)
from .metrics import relative_l2_error
from .model import file_digest, load_model
from .pipeline import snapshot_times

log = logging.getLogger("firerom")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2


def _parser():
    p = argparse.ArgumentParser(prog="firerom", description="Shifted POD / sDEIM reduced models for a 1D wildfire model")
    p.add_argument("--config", type=Path, help="YAML experiment configuration")
    p.add_argument("--preset", choices=("desk", "paper"), default="desk")
    p.add_argument("--case", choices=("separated_waves", "gaussian"))
    p.add_argument("--out-dir", type=Path)
    p.add_argument("--seed", type=int, help="seed for synthetic test data only")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("fom-run", help="full-order simulation")
    s.add_argument("--beta", type=float)
    s.add_argument("--tf", type=float)
    s.add_argument("--out", type=Path, required=True, help="SMOR file with one state per column")

    sub.add_parser("gen-data", help="training snapshots for the configured training betas")

    s = sub.add_parser("offline", help="offline phase")
    s.add_argument("--offline-out", type=Path, required=True)

    s = sub.add_parser("rom-run", help="online run of a stored model")
    s.add_argument("--model", type=Path, required=True)
    s.add_argument("--beta", type=float, required=True)
    s.add_argument("--tf", type=float, required=True)
    s.add_argument("--out", type=Path, required=True)
    s.add_argument("--reference", type=Path, help="SMOR file of FOM states on the same output times")

    s = sub.add_parser("sweep", help="beta sweep against FOM references")
    s.add_argument("--model", type=Path, help="stored model (built and saved here if missing)")
    s.add_argument("--out", type=Path)

    s = sub.add_parser("compare", help="sPOD-sDEIM versus POD-DEIM accuracy and timing")
    s.add_argument("--beta", type=float)
    s.add_argument("--spod", type=int, nargs="+", default=[1, 2, 3], help="modes per variable and frame")
    s.add_argument("--pod", type=int, nargs="+", default=[60, 80, 100, 120], help="total POD modes")
    s.add_argument("--out", type=Path)
    return p


def _config(args):
    return load_config(args.config, preset=args.preset, case=args.case,
                       out_dir=str(args.out_dir) if args.out_dir else None, seed=args.seed)


def _cmd_fom_run(cfg, args):
    beta = cfg.fire.beta if args.beta is None else args.beta
    snap = fom_trajectory(cfg, beta, args.tf)
    snapio.write_matrix(args.out, snap.states)
    print(f"fom-run beta={beta:g} columns={snap.times.size} wall={snap.wall_time_s:.3f}s -> {args.out}")


def _cmd_gen_data(cfg, args):
    man = generate_training_data(cfg)
    for e in man["entries"]:
        print(f"beta={e['beta']:g} status={e['status']} states={e['states']} nonlin={e['nonlin']}")
    return EXIT_OK if all(e["status"] == "ok" for e in man["entries"]) else EXIT_NUMERIC


def _cmd_offline(cfg, args):
    model, info = build_offline(cfg, out=args.offline_out)
    rows = [{"beta": b, "offline_err_temp": e[0], "offline_err_smf": e[1]}
            for b, e in zip(model.meta["train_betas"], info.offline_errors)]
    write_csv(args.offline_out.with_suffix(".offline_errors.csv"), rows)
    print(f"offline: r={model.r} q={model.q} samples={model.table.n_samples} -> {args.offline_out} "
          f"(sha256 {file_digest(args.offline_out)[:16]})")


def _cmd_rom_run(cfg, args):
    model = load_model(args.model)
    times = snapshot_times(args.tf, cfg.snapshot_dt)
    states, wall, extras = run_rom(cfg, model, args.beta, times, initial_state(cfg))
    n_x = model.grid.n_x
    rows = []
    ref = None
    if args.reference is not None:
        ref = snapio.read_matrix(args.reference)
        if ref.shape != states.shape:
            raise DimensionError(f"reference has shape {ref.shape}, ROM output {states.shape}")
    for j, t in enumerate(times):
        row = {"time": float(t)}
        if ref is not None:
            for name, sl in (("err_temp", slice(0, n_x)), ("err_smf", slice(n_x, None))):
                den = np.linalg.norm(ref[sl, j])
                row[name] = float(np.linalg.norm(ref[sl, j] - states[sl, j]) / den) if den > 0 else float("nan")
        for i in range(model.q):
            row[f"p{i + 1}"] = float(extras["paths"][i, j])
        rows.append(row)
    write_csv(args.out, rows)
    msg = f"rom-run beta={args.beta:g} wall={wall:.4f}s"
    if ref is not None:
        et = relative_l2_error(ref[:n_x], states[:n_x], times)
        es = relative_l2_error(ref[n_x:], states[n_x:], times)
        msg += f" err_temp={et:.6e} err_smf={es:.6e}"
    print(msg)


def _cmd_sweep(cfg, args):
    model = load_or_build(cfg, args.model)
    out = args.out or cfg.out_path / f"sweep_{cfg.case}.csv"
    results, summary = sweep(cfg, model, csv_path=out)
    print(json.dumps(summary, indent=2))
    return EXIT_OK if summary["n_failed"] == 0 else EXIT_NUMERIC


def _cmd_compare(cfg, args):
    beta = cfg.fire.beta if args.beta is None else args.beta
    out = args.out or cfg.out_path / f"compare_{cfg.case}.csv"
    rows = pareto_compare(cfg, args.spod, args.pod, beta, csv_path=out)
    for r in rows:
        print(f"{r['method']:>10} {r['label']:>6} dof={r['dof']:3d} err_temp={r['err_temp']:.3e} "
              f"wall={r['wall_rom_s']:.4f}s")


COMMANDS = {"fom-run": _cmd_fom_run, "gen-data": _cmd_gen_data, "offline": _cmd_offline,
            "rom-run": _cmd_rom_run, "sweep": _cmd_sweep, "compare": _cmd_compare}


def main(argv=None):
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        code = COMMANDS[args.command](cfg, args)
    except (InvalidInputError, DimensionError, FormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FireRomError, UndefinedErrorMetric, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK if code is None else code


if __name__ == "__main__":
    sys.exit(main())
