"""Command-line entry point.

Every command accepts ``--config FILE`` (flat JSON); explicit flags win over
file values. The effective configuration is written as ``config.json`` next
to each command's outputs. Exit codes: 0 success, 1 usage error, 2 runtime
or numerical error.

Trajectory files use the SGFD layout. ``reconstruct`` writes its output as
an SGFD file whose frames are the predicted triplets laid end to end, so a
file with ``3 * P`` frames holds ``P`` samples.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from sgflow import io
from sgflow.denoiser import fit_spectral_gains
from sgflow.diffusion import VpSchedule, schedule_from_label
from sgflow.errors import FormatError, InvalidArgumentError, NumericalError
from sgflow.metrics import REPORT_COLUMNS, SUBBAND_COLUMNS, format_float
from sgflow.pipeline import evaluate_triplets, mean_metrics, reconstruct_batch, sampler_config
from sgflow.residual import VorticityResidual, triplets_from_frames
from sgflow.solver import (
    downsample_trajectory,
    downsample_uniform,
    get_preset,
    PRESETS,
    simulate_trajectory,
    upsample_nearest,
)

log = logging.getLogger("sgflow")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2

SWEEP_COLUMNS = ("policy", "l2", "residual_metric")
DEFAULT_SWEEP = ("Start2End2", "Start4Space1", "End4Space1", "Start4Space2", "End4Space2", "Uniform4")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_help(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _add_common(p):
    p.add_argument("--config", type=Path, help="flat JSON file of option defaults")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--verbose", "-v", action="store_true")


def _add_preset(p):
    p.add_argument("--preset", choices=sorted(PRESETS), default="kolmogorov")
    p.add_argument("--Re", type=float, help="override the preset Reynolds number")
    p.add_argument("--T", type=float, help="override the preset trajectory length")


def _add_sampler(p):
    p.add_argument("--steps", "-K", dest="K", type=int, default=128)
    p.add_argument("--t-guide", type=float, default=0.4)
    p.add_argument("--M", type=int, default=10)
    p.add_argument("--eta", type=float, default=0.05)
    p.add_argument("--stride", type=int, default=1, help="use every stride-th triplet")
    p.add_argument("--limit", type=int, help="maximum number of triplets")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sgflow", description="Physics-guided diffusion super-resolution of 2D flows.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="simulate high-fidelity trajectories from a preset")
    _add_common(p)
    _add_preset(p)
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--gen-factor", type=int, default=4, help="simulate at n*gen_factor, then subsample")
    p.add_argument("--trajectories", type=int)

    p = sub.add_parser("degrade", help="make low-fidelity partners for high-fidelity trajectories")
    _add_common(p)
    _add_preset(p)
    p.add_argument("inputs", nargs="+", type=Path)
    p.add_argument("--factor", type=int, default=4)
    p.add_argument("--pipeline", choices=("solver", "downsample"), default="solver")

    p = sub.add_parser("train", help="fit the spectral-gain denoiser")
    _add_common(p)
    p.add_argument("inputs", nargs="+", type=Path)
    p.add_argument("--no-iw", action="store_true", help="disable importance weighting")
    p.add_argument("--alpha", type=float, default=1.25)
    p.add_argument("--beta", type=float, default=6.0)
    p.add_argument("--theta", type=float, default=0.8)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--time-bins", type=int, default=32)
    p.add_argument("--radial-bins", type=int, default=16)
    p.add_argument("--beta-min", type=float, default=0.1)
    p.add_argument("--beta-max", type=float, default=20.0)

    p = sub.add_parser("reconstruct", help="super-resolve a low-fidelity trajectory")
    _add_common(p)
    _add_preset(p)
    p.add_argument("--low", type=Path, required=True)
    p.add_argument("--model", type=Path)
    p.add_argument("--n", type=int, help="target resolution (default: model grid)")
    p.add_argument("--method", choices=("sgdiff", "upsample"), default="sgdiff")
    p.add_argument("--no-corrector", action="store_true")
    p.add_argument("--policy", default="Start2End2", help="correction policy label, e.g. End4Space1")
    _add_sampler(p)

    p = sub.add_parser("evaluate", help="score predictions against a high-fidelity trajectory")
    _add_common(p)
    _add_preset(p)
    p.add_argument("--pred", type=Path, required=True)
    p.add_argument("--truth", type=Path, required=True)
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--limit", type=int)

    p = sub.add_parser("schedule-sweep", help="compare correction policies")
    _add_common(p)
    _add_preset(p)
    p.add_argument("--low", type=Path, required=True)
    p.add_argument("--truth", type=Path, required=True)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--policies", nargs="+", default=list(DEFAULT_SWEEP))
    _add_sampler(p)
    return parser


def _solver_config(args, n=None):
    cfg = get_preset(args.preset).config
    over = {k: getattr(args, k) for k in ("Re", "T") if getattr(args, k, None) is not None}
    if n is not None:
        over["n"] = n
    return cfg.replace(**over)


def _effective(args) -> dict:
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items() if k not in ("config", "verbose")}


def _finish(args, extra=None) -> None:
    cfg = _effective(args)
    if extra:
        cfg.update(extra)
    io.write_json(args.out / "config.json", cfg)


def _select(triplets, stride, limit):
    if stride < 1:
        raise InvalidArgumentError(f"stride must be at least 1, got {stride}")
    sel = np.arange(0, len(triplets), stride)
    if limit is not None:
        sel = sel[:limit]
    return sel


def cmd_generate(args) -> None:
    preset = get_preset(args.preset)
    count = args.trajectories or preset.trajectories
    cfg = _solver_config(args, n=args.n * args.gen_factor)
    paths = []
    for i in range(count):
        seed = args.seed + i
        omega0 = preset.init(cfg.grid(), cfg, seed)
        fine = simulate_trajectory(omega0, cfg, seed)
        traj = downsample_trajectory(fine, args.gen_factor) if args.gen_factor > 1 else fine
        path = args.out / f"traj_{i:03d}.sgfd"
        io.write_sgfd(path, traj)
        paths.append(path.name)
        log.info("wrote %s", path)
    _finish(args, {"files": paths})


def cmd_degrade(args) -> None:
    names = []
    for path in args.inputs:
        frames, meta = io.read_frames(path)
        cfg = _solver_config(args, n=frames.shape[-1]).replace(
            Re=meta["Re"], dt_record=meta["dt_record"], Lx=meta["Lx"], Ly=meta["Ly"],
            T=(len(frames) - 1) * meta["dt_record"],
        )
        if args.pipeline == "solver":
            low = simulate_trajectory(downsample_uniform(frames[0], args.factor), cfg, args.seed).array()
        else:
            low = downsample_uniform(frames, args.factor)
        out = args.out / f"low_{path.stem}.sgfd"
        io.write_frames(out, low, meta["dt_record"], meta["Lx"], meta["Ly"], meta["Re"])
        names.append(out.name)
    _finish(args, {"files": names})


def cmd_train(args) -> None:
    stacks, Lx, Ly = [], None, None
    for path in args.inputs:
        frames, meta = io.read_frames(path)
        stacks.append(frames)
        Lx, Ly = meta["Lx"], meta["Ly"]
    schedule = VpSchedule(args.beta_min, args.beta_max)
    model = fit_spectral_gains(
        np.concatenate(stacks), schedule, args.alpha, args.beta, args.theta,
        epochs=args.epochs, lr=args.lr, seed=args.seed, use_importance_weights=not args.no_iw,
        time_bins=args.time_bins, radial_bins=args.radial_bins, Lx=Lx, Ly=Ly,
    )
    io.write_sgfm(args.out / "model.sgfm", model, schedule)
    io.write_csv(args.out / "loss.csv", ("epoch", "loss"), [(i, format_float(v)) for i, v in enumerate(model.history)])
    _finish(args, {"final_loss": model.history[-1] if model.history else None})


def _low_triplets(args, n_target):
    frames, meta = io.read_frames(args.low)
    if n_target % frames.shape[-1]:
        raise InvalidArgumentError(f"target n={n_target} is not a multiple of the input n={frames.shape[-1]}")
    trip = triplets_from_frames(frames)
    sel = _select(trip, args.stride, args.limit)
    factor = n_target // frames.shape[-1]
    return upsample_nearest(trip[sel], factor), meta, sel


def _residual_op(args, n, meta):
    cfg = _solver_config(args, n=n).replace(Re=meta["Re"], dt_record=meta["dt_record"], Lx=meta["Lx"], Ly=meta["Ly"])
    return VorticityResidual(cfg.grid(), cfg)


def cmd_reconstruct(args) -> None:
    model = schedule = None
    if args.method == "sgdiff":
        if args.model is None:
            raise UsageError("reconstruct: --model is required with --method sgdiff")
        model, schedule = io.read_sgfm(args.model)
        n = model.grid.n
    else:
        if args.n is None and args.model is None:
            raise UsageError("reconstruct: --n or --model is required with --method upsample")
        n = args.n or io.read_sgfm(args.model)[0].grid.n
    low, meta, sel = _low_triplets(args, n)
    if args.method == "upsample":
        pred = low
    else:
        op = None if args.no_corrector else _residual_op(args, n, meta)
        cfg = sampler_config(args.policy, K=args.K, t_guide=args.t_guide, M=args.M, eta=args.eta,
                             seed=args.seed, use_corrector=not args.no_corrector)
        pred = reconstruct_batch(low, model, op, cfg, schedule)
    io.write_frames(args.out / "pred.sgfd", pred.reshape(-1, n, n), meta["dt_record"], meta["Lx"], meta["Ly"], meta["Re"])
    _finish(args, {"samples": [int(i) for i in sel]})


def _pred_triplets(pred_frames, truth_trip, sel):
    if len(pred_frames) == len(truth_trip) + 2:
        return triplets_from_frames(pred_frames)[sel]
    if len(pred_frames) == 3 * len(sel):
        return pred_frames.reshape(len(sel), 3, *pred_frames.shape[-2:])
    raise InvalidArgumentError(
        f"prediction has {len(pred_frames)} frames; expected a full trajectory "
        f"({len(truth_trip) + 2}) or {len(sel)} triplets ({3 * len(sel)} frames)"
    )


def _reports_to_csv(args, reports):
    io.write_csv(args.out / "report.csv", REPORT_COLUMNS, [r.row() for r in reports])
    io.write_csv(args.out / "subbands.csv", SUBBAND_COLUMNS, [r.subband_row() for r in reports])


def cmd_evaluate(args) -> None:
    truth_frames, meta = io.read_frames(args.truth)
    pred_frames, _ = io.read_frames(args.pred)
    if pred_frames.shape[-2:] != truth_frames.shape[-2:]:
        raise InvalidArgumentError(f"grid mismatch: pred {pred_frames.shape[-2:]} vs truth {truth_frames.shape[-2:]}")
    truth_trip = triplets_from_frames(truth_frames)
    sel = _select(truth_trip, args.stride, args.limit)
    pred = _pred_triplets(pred_frames, truth_trip, sel)
    op = _residual_op(args, truth_frames.shape[-1], meta)
    cfg = _effective(args)
    reports = evaluate_triplets(pred, truth_trip[sel], op, io.config_hash(cfg), ids=sel)
    _reports_to_csv(args, reports)
    _finish(args, {"mean": mean_metrics(reports)})


def cmd_schedule_sweep(args) -> None:
    model, schedule = io.read_sgfm(args.model)
    n = model.grid.n
    low, meta, sel = _low_triplets(args, n)
    truth_frames, _ = io.read_frames(args.truth)
    truth = triplets_from_frames(truth_frames)[sel]
    op = _residual_op(args, n, meta)
    for label in args.policies:
        schedule_from_label(label, args.K)  # validate before any work
    rows = []
    for label in args.policies:
        cfg = sampler_config(label, K=args.K, t_guide=args.t_guide, M=args.M, eta=args.eta,
                             seed=args.seed, use_corrector=True)
        pred = reconstruct_batch(low, model, op, cfg, schedule)
        m = mean_metrics(evaluate_triplets(pred, truth, op))
        rows.append((label, format_float(m["l2"]), format_float(m["residual_metric"])))
        log.info("%s l2=%.4g residual=%.4g", label, m["l2"], m["residual_metric"])
    io.write_csv(args.out / "sweep.csv", SWEEP_COLUMNS, rows)
    _finish(args)


COMMANDS = {
    "generate": cmd_generate,
    "degrade": cmd_degrade,
    "train": cmd_train,
    "reconstruct": cmd_reconstruct,
    "evaluate": cmd_evaluate,
    "schedule-sweep": cmd_schedule_sweep,
}


def _apply_config_file(parser, argv):
    """Re-parse with defaults taken from ``--config``; explicit flags still win."""
    args = parser.parse_args(argv)
    if args.config is None:
        return args
    try:
        values = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config file {args.config}: {exc}") from None
    if not isinstance(values, dict):
        raise UsageError(f"config file {args.config} must hold a JSON object")
    sub = parser._subparsers._group_actions[0].choices[args.command]
    types = {a.dest: a.type for a in sub._actions}
    unknown = sorted(set(values) - set(types))
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(unknown)}")
    sub.set_defaults(**{k: Path(v) if types[k] is Path and v is not None else v for k, v in values.items()})
    return parser.parse_args(argv)


def run_command(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = _apply_config_file(parser, argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](args)
    except UsageError as exc:
        parser._subparsers._group_actions[0].choices[args.command].print_usage(sys.stderr)
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (InvalidArgumentError, FormatError, NumericalError, OSError) as exc:
        print(f"sgflow {args.command}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
