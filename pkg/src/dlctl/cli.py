"""Command-line entry point: ``dlctl gen-data | train | recon | eval | selfcheck``.

Exit codes: 0 success, 2 usage error, 3 numerical failure, 4 I/O or format error.
"""

import argparse
import configparser
import logging
import re
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from .admm import reconstruct
from .baselines import CsConfig, cs_reconstruct, grid_search_lambda
from .formats import (
    FormatError,
    SliceRecord,
    atomic_write_bytes,
    load_model,
    read_array,
    read_dataset,
    save_model,
    write_array,
    write_dataset,
)
from .metrics import MetricsRecord, format_metrics_tsv, nmse, ssim
from .mri import EncodingOperator, make_coils, make_phantom, make_random_mask, make_uniform_mask
from .mri import simulate_kspace
from .training import TrainConfig, TrainExample, train

log = logging.getLogger("dlctl")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

METHODS = ("dlctl", "cs", "zerofill")


class UsageError(ValueError):
    pass


# --- run configuration ---------------------------------------------------------

_TRAIN_KEYS = {
    "epochs": int,
    "learning_rate": float,
    "batch_size": int,
    "epsilon": float,
    "seed": int,
    "T": int,
    "cg_iters": int,
    "specs": lambda v: tuple(s.strip() for s in v.split(",") if s.strip()),
}
_CS_KEYS = {
    "cs_lambda": float,
    "cs_rho": float,
    "cs_eta": float,
    "cs_admm_iters": int,
    "cs_cg_iters": int,
    "cs_levels": int,
    "cs_lambda_grid": lambda v: [float(s) for s in v.split(",") if s.strip()],
    "cs_grid_slices": int,
}
_DATA_KEYS = {
    "height": int,
    "width": int,
    "coils": int,
    "slices": int,
    "r": int,
    "acs": int,
    "mask": str,
    "holdout": int,
    "noise": float,
    "data": str,
    "out": str,
}
RUN_CONFIG_KEYS = {**_TRAIN_KEYS, **_CS_KEYS, **_DATA_KEYS}


def parse_run_config(text):
    """Parse ``key = value`` lines (``#`` comments) into typed values; unknown keys are errors."""
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#",),
                                       inline_comment_prefixes=("#",), delimiters=("=",))
    parser.optionxform = str
    try:
        parser.read_string("[run]\n" + text)
    except configparser.Error as exc:
        raise UsageError(f"malformed config: {exc}") from exc
    out = {}
    for key, raw in parser["run"].items():
        if key not in RUN_CONFIG_KEYS:
            raise UsageError(f"unknown config key {key!r}")
        try:
            out[key] = RUN_CONFIG_KEYS[key](raw.strip())
        except ValueError as exc:
            raise UsageError(f"bad value for {key!r}: {raw!r}") from exc
    return out


def load_run_config(path):
    if path is None:
        return {}
    return parse_run_config(Path(path).read_text(encoding="utf-8"))


def train_config_from(run):
    kwargs = {k: v for k, v in run.items() if k in _TRAIN_KEYS}
    try:
        return TrainConfig(**kwargs)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def cs_config_from(run):
    names = {f.name for f in fields(CsConfig)}
    kwargs = {}
    for key, value in run.items():
        if key.startswith("cs_") and key[3:] in names:
            kwargs[key[3:]] = value
    if "cs_lambda" in run:
        kwargs["lam"] = run["cs_lambda"]
    try:
        return CsConfig(**kwargs)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


# --- subcommands ---------------------------------------------------------------


def cmd_gen_data(args):
    h, w = args.height, args.width
    if min(h, w) < 16:
        raise UsageError("height and width must be at least 16")
    if args.coils < 1 or args.slices < 1 or args.r < 1:
        raise UsageError("coils, slices and r must be positive")
    if not 0 <= args.acs <= w:
        raise UsageError("acs must lie in [0, width]")
    if not 0 <= args.holdout <= args.slices:
        raise UsageError("holdout must lie in [0, slices]")
    if args.slices_per_subject < 1:
        raise UsageError("slices-per-subject must be positive")
    coils = make_coils(h, w, args.coils)
    children = np.random.SeedSequence(args.seed).spawn(args.slices)
    records, masks = [], {}
    for k in range(args.slices):
        subject = f"subject_{k // args.slices_per_subject:03d}"
        if subject not in masks:
            if args.mask == "uniform":
                masks[subject] = make_uniform_mask(w, args.r, args.acs)
            else:
                sub_seed = int(np.random.SeedSequence([args.seed, len(masks)]).generate_state(1)[0])
                masks[subject] = make_random_mask(w, args.r, args.acs, sub_seed)
        phantom_seed, noise_seed = (int(s) for s in children[k].generate_state(2))
        x = make_phantom(h, w, phantom_seed)
        op = EncodingOperator(coils, masks[subject])
        y = simulate_kspace(x, op, args.noise, noise_seed)
        split = "test" if k >= args.slices - args.holdout else "train"
        records.append(SliceRecord(k, subject, split, x, coils, y, masks[subject]))
    write_dataset(args.out, records)
    print(f"wrote {len(records)} slices to {args.out}")
    return EXIT_OK


def _training_records(root):
    recs = read_dataset(root, split="train")
    return recs if recs else read_dataset(root)


def cmd_train(args):
    run = load_run_config(args.config)
    config = train_config_from(run)
    data = args.data or run.get("data")
    out = args.out or run.get("out")
    if not data or not out:
        raise UsageError("train needs --data and --out (or data/out config keys)")
    out = Path(out)
    records = _training_records(data)
    if not records:
        raise UsageError(f"no slices found under {data}")
    dataset = [TrainExample(r.y, r.op, r.x_ref) for r in records]
    out.mkdir(parents=True, exist_ok=True)
    model, history = train(dataset, config, checkpoint_dir=out)
    save_model(model, out / "model.dlcm")
    lines = ["epoch\tloss\ttight_frame"]
    lines += [f"{h['epoch']}\t{h['loss']:.10e}\t{h['tight_frame']:.10e}" for h in history]
    atomic_write_bytes(out / "losses.tsv", ("\n".join(lines) + "\n").encode())
    print(f"trained {config.epochs} epochs on {len(dataset)} slices; model at {out / 'model.dlcm'}")
    return EXIT_OK


def _tuned_cs_config(run, data):
    config = cs_config_from(run)
    grid = run.get("cs_lambda_grid")
    if not grid:
        return config
    val = _training_records(data)[: run.get("cs_grid_slices")]
    lam, scores = grid_search_lambda([(r.y, r.op, r.x_ref) for r in val], grid, config)
    log.info("cs lambda grid %s -> mean nmse %s; chose %g", grid, scores, lam)
    return CsConfig(**{**config.__dict__, "lam": lam})


def cmd_recon(args):
    method = args.method
    if method == "dlctl" and args.model is None:
        raise UsageError("--method dlctl needs --model")
    if method != "dlctl" and args.model is not None:
        raise UsageError("--model is only used with --method dlctl")
    if method != "cs" and args.cs is not None:
        raise UsageError("--cs is only used with --method cs")
    records = read_dataset(args.data, split=args.split)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if method == "dlctl":
        model = load_model(args.model)
        solve = lambda r: reconstruct(r.y, r.op, model)
    elif method == "cs":
        config = _tuned_cs_config(load_run_config(args.cs or None), args.data)
        atomic_write_bytes(out / "cs_lambda.txt", f"{config.lam!r}\n".encode())
        solve = lambda r: cs_reconstruct(r.y, r.op, config)
    else:
        solve = lambda r: r.op.adjoint(r.y)
    for r in records:
        x = solve(r)
        if not np.all(np.isfinite(x)):
            raise FloatingPointError(f"non-finite reconstruction for slice {r.slice_id}")
        write_array(out / f"slice_{r.slice_id}.{method}.dlct", x)
    print(f"reconstructed {len(records)} slices with {method} into {out}")
    return EXIT_OK


_RECON_NAME = re.compile(r"slice_(\d+)\.([A-Za-z0-9_-]+)\.dlct$")


def cmd_eval(args):
    refs = {r.slice_id: r.x_ref for r in read_dataset(args.data, split=args.split)}
    records = []
    for path in sorted(Path(args.recon_dir).iterdir()):
        m = _RECON_NAME.match(path.name)
        if not m or int(m.group(1)) not in refs:
            continue
        k, method = int(m.group(1)), m.group(2)
        x_hat, x_ref = read_array(path), refs[k]
        if x_hat.shape != x_ref.shape:
            raise FormatError(f"{path.name} has shape {x_hat.shape}, expected {x_ref.shape}")
        records.append(MetricsRecord(k, method, nmse(x_hat, x_ref), ssim(np.abs(x_hat), np.abs(x_ref))))
    if not records:
        raise UsageError(f"no reconstructions for the selected slices in {args.recon_dir}")
    atomic_write_bytes(Path(args.out), format_metrics_tsv(records).encode())
    print(f"wrote metrics for {len(records)} reconstructions to {args.out}")
    return EXIT_OK


def cmd_selfcheck(args):
    from .checks import run_all

    results = run_all()
    for r in results:
        print(r.line())
    ok = all(r.passed for r in results)
    print(f"{sum(r.passed for r in results)}/{len(results)} checks passed")
    return EXIT_OK if ok else EXIT_NUMERIC


# --- argument parsing ------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="dlctl", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="write a synthetic multi-coil dataset")
    g.add_argument("--height", type=int, required=True)
    g.add_argument("--width", type=int, required=True)
    g.add_argument("--coils", type=int, required=True)
    g.add_argument("--slices", type=int, required=True)
    g.add_argument("--r", type=int, required=True, help="acceleration rate")
    g.add_argument("--acs", type=int, required=True, help="number of central columns kept")
    g.add_argument("--mask", choices=("uniform", "random"), default="uniform")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--holdout", type=int, default=0, help="last N slices form the test split")
    g.add_argument("--slices-per-subject", type=int, default=10)
    g.add_argument("--noise", type=float, default=0.0, help="k-space noise std")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train the unrolled model")
    t.add_argument("--config")
    t.add_argument("--data")
    t.add_argument("--out")
    t.set_defaults(func=cmd_train)

    r = sub.add_parser("recon", help="reconstruct every slice of a dataset")
    src = r.add_mutually_exclusive_group()
    src.add_argument("--model", help="checkpoint for --method dlctl")
    src.add_argument("--cs", nargs="?", const="", metavar="CONFIG",
                     help="use the wavelet baseline, optionally configured by a run config")
    r.add_argument("--data", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--method", choices=METHODS)
    r.add_argument("--split", help="only slices of this split")
    r.set_defaults(func=cmd_recon)

    e = sub.add_parser("eval", help="NMSE/SSIM table with percentile summary")
    e.add_argument("--data", required=True)
    e.add_argument("--recon-dir", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--split", help="only slices of this split")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("selfcheck", help="adjoint, CG, bank geometry and gradient checks")
    s.set_defaults(func=cmd_selfcheck)
    return p


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command == "recon" and args.method is None:
        args.method = "dlctl" if args.model else "cs" if args.cs is not None else "zerofill"
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"dlctl: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FloatingPointError as exc:
        print(f"dlctl: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FormatError, OSError) as exc:
        print(f"dlctl: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"dlctl: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
