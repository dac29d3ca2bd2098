"""``zsldict`` command line: synth, train, predict, transduce, sweep-delta, cv.

Exit codes: 0 success, 2 input or validation error, 3 dimension mismatch,
4 missing requirement (truth labels), 5 solver failure.  Errors are printed
to stderr as one JSON object.  ``ZSLDICT_LOG`` sets the log level.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import shutil
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io
from .core_types import Hyperparams, ShapeError, SolverError, UnseenDataset, l2_normalize_columns
from .evaluation import PAPER_GRID, full_grid_search, per_class_top1, staged_grid_search, cv_grid_search
from .inference import embed_instances, score_all
from .jedm import train_jedm
from .synth import SynthSpec, generate_synthetic
from .tstd import DEFAULT_SCHEDULE, run_tstd, validate_schedule

CONFIG_FORMAT = "zsldict-run/1"

EXIT_INPUT, EXIT_SHAPE, EXIT_MISSING, EXIT_SOLVER = 2, 3, 4, 5


class MissingRequirement(Exception):
    pass


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_INPUT, **extra):
        super().__init__(message)
        self.code = code
        self.extra = extra


# ---------------------------------------------------------------- parsing

def parse_schedule(text: str) -> tuple:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"schedule must be comma-separated numbers: {text!r}")
    try:
        return validate_schedule(values)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def parse_floats(text: str) -> tuple:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers: {text!r}")


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--out", required=True, type=Path, help="output directory")
    p.add_argument("--force", action="store_true", help="replace an existing output directory")
    p.add_argument("--seed", type=int, default=42)


def _add_hyper(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="JSON file of hyperparameters; flags override it")
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--mu", type=float)
    p.add_argument("--latent-dim", type=int)
    p.add_argument("--tol", type=float, help="relative objective tolerance of the outer loop")
    p.add_argument("--max-iters", type=int, help="outer iteration cap")
    p.add_argument("--normalize", action="store_true", help="scale every instance to unit l2 norm")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="zsldict", description="Zero-shot learning with joint embedding dictionaries")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a seeded synthetic seen/unseen pair")
    _add_common(p)
    for name in ("M", "N", "m-per-class", "n-per-class", "p", "q", "d"):
        p.add_argument(f"--{name}", type=int)
    p.add_argument("--noise", type=float, help="noise sigma, absolute")
    p.add_argument("--noise-frac", type=float, help="noise sigma as a fraction of prototype spacing")
    p.add_argument("--shift", type=float, help="unseen shift, absolute")
    p.add_argument("--shift-frac", type=float, help="unseen shift as a multiple of prototype spacing")
    p.add_argument("--prototype-radius", type=float)
    p.add_argument("--prototype-offset", type=float)

    p = sub.add_parser("train", help="train a JEDM model on a seen manifest")
    p.add_argument("manifest", type=Path)
    _add_common(p)
    _add_hyper(p)

    for name, helptext in (("predict", "inductive zero-shot prediction"),
                           ("transduce", "self-training on an unseen batch")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("model", type=Path)
        p.add_argument("manifest", type=Path)
        _add_common(p)
        p.add_argument("--normalize", action="store_true")
        if name == "transduce":
            p.add_argument("--lambda", dest="lam", type=float)
            p.add_argument("--mu", type=float)
            p.add_argument("--schedule", type=parse_schedule, default=DEFAULT_SCHEDULE)

    p = sub.add_parser("sweep-delta", help="final accuracy for each prefix of a schedule")
    p.add_argument("model", type=Path)
    p.add_argument("manifest", type=Path)
    _add_common(p)
    p.add_argument("--normalize", action="store_true")
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--mu", type=float)
    p.add_argument("--schedule", type=parse_schedule, default=DEFAULT_SCHEDULE)

    p = sub.add_parser("cv", help="class-wise cross-validated grid search")
    p.add_argument("manifest", type=Path)
    _add_common(p)
    _add_hyper(p)
    p.add_argument("--grid", type=parse_floats, default=PAPER_GRID, help="values tried for alpha and beta")
    p.add_argument("--lam-mu-grid", type=parse_floats, help="values tried for lambda and mu (default: --grid)")
    p.add_argument("--mode", choices=("staged", "full", "inductive"), default="staged")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--holdout-frac", type=float, default=0.2)
    p.add_argument("--schedule", type=parse_schedule, default=DEFAULT_SCHEDULE)
    p.add_argument("--threads", type=int, default=1)
    return parser


# ---------------------------------------------------------------- helpers

def prepare_out(path: Path, force: bool) -> Path:
    if path.exists():
        if not force:
            raise CliError(f"output directory {path} exists; pass --force to replace it", key="out")
        if path.is_dir():
            shutil.rmtree(path)
        else:
            path.unlink()
    path.mkdir(parents=True)
    return path


def resolve_hyper(args, base: Hyperparams | None = None) -> Hyperparams:
    values = base.to_dict() if base is not None else {}
    if getattr(args, "config", None) is not None:
        try:
            loaded = json.loads(args.config.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(f"cannot read config {args.config}: {exc}", key="config")
        if not isinstance(loaded, dict):
            raise CliError("config must be a JSON object", key="config")
        values.update(loaded)
    flags = {"alpha": "alpha", "beta": "beta", "lam": "lambda", "mu": "mu",
             "latent_dim": "latent_dim", "tol": "outer_tol", "max_iters": "max_outer_iters"}
    for attr, key in flags.items():
        value = getattr(args, attr, None)
        if value is not None:
            values[key] = value
    return Hyperparams.from_dict(values)


def write_config(out: Path, command: str, args, **sections) -> None:
    config = {"format": CONFIG_FORMAT, "command": command, "seed": args.seed}
    for key in ("manifest", "model"):
        if getattr(args, key, None) is not None:
            config[key] = str(getattr(args, key))
    if hasattr(args, "normalize"):
        config["normalize"] = bool(args.normalize)
    config.update(sections)
    (out / "config.json").write_text(json.dumps(config, indent=2) + "\n", encoding="utf-8")


def _maybe_normalize(args, ut: UnseenDataset) -> UnseenDataset:
    if args.normalize:
        return replace(ut, X=l2_normalize_columns(ut.X))
    return ut


def _check_dims(model, ut: UnseenDataset):
    if ut.X.shape[0] != model.p:
        raise ShapeError(f"unseen features have p={ut.X.shape[0]}, model expects p={model.p}", "p")
    if ut.A.shape[0] != model.q:
        raise ShapeError(f"unseen embeddings have q={ut.A.shape[0]}, model expects q={model.q}", "q")


def write_predictions(path: Path, predictions, names) -> None:
    path.write_text("".join(f"{names[c]}\n" for c in predictions), encoding="utf-8")


def write_report(out: Path, predictions, ut: UnseenDataset):
    if ut.truth_labels is None:
        return None
    report = per_class_top1(predictions, ut.truth_labels, ut.A.shape[1])
    (out / "report.json").write_text(report.to_json(ut.class_names), encoding="utf-8")
    (out / "report.txt").write_text(report.to_text(ut.class_names), encoding="utf-8")
    io.write_dmat(out / "confusion.dmat", report.confusion)
    return report


# ---------------------------------------------------------------- commands

def cmd_synth(args) -> int:
    fields = {"M": args.M, "N": args.N, "m_per_class": args.m_per_class,
              "n_per_class": args.n_per_class, "p": args.p, "q": args.q, "d": args.d,
              "prototype_radius": args.prototype_radius, "prototype_offset": args.prototype_offset}
    spec = SynthSpec(seed=args.seed, **{k: v for k, v in fields.items() if v is not None})
    if args.noise_frac is not None or args.shift_frac is not None:
        # the spacing depends only on the prototypes, which ignore noise and shift
        spacing = generate_synthetic(spec)[2].spacing
        if args.noise_frac is not None:
            spec = replace(spec, noise_sigma=args.noise_frac * spacing)
        if args.shift_frac is not None:
            spec = replace(spec, shift_magnitude=args.shift_frac * spacing)
    if args.noise is not None:
        spec = replace(spec, noise_sigma=args.noise)
    if args.shift is not None:
        spec = replace(spec, shift_magnitude=args.shift)
    seen, unseen, truth = generate_synthetic(spec)
    out = prepare_out(args.out, args.force)
    io.write_dataset(out, seen.X, seen.A, seen.class_names, seen.labels, stem="seen")
    io.write_dataset(out, unseen.X, unseen.A, unseen.class_names, truth.unseen_labels, stem="unseen")
    write_config(out, "synth", args, synth=spec.to_dict(), prototype_spacing=truth.spacing)
    print(out / "seen.json")
    print(out / "unseen.json")
    return 0


def cmd_train(args) -> int:
    h = resolve_hyper(args)
    ds = io.load_seen(args.manifest)
    if args.normalize:
        ds = replace(ds, X=l2_normalize_columns(ds.X))
    out = prepare_out(args.out, args.force)
    model = train_jedm(ds, h, seed=args.seed)
    io.save_model(model, out)
    resolved = replace(h, latent_dim=model.d)
    write_config(out, "train", args, hyperparams=resolved.to_dict())
    print(f"trained d={model.d} in {len(model.objective_trace)} iterations, "
          f"objective {model.objective_trace[-1]:.6g}")
    return 0


def cmd_predict(args) -> int:
    model = io.load_model(args.model)
    ut = _maybe_normalize(args, io.load_unseen(args.manifest))
    _check_dims(model, ut)
    out = prepare_out(args.out, args.force)
    table = score_all(model.D, model.V, ut.X, ut.A)
    write_predictions(out / "predictions.txt", table.predictions, ut.class_names)
    io.write_dmat(out / "scores.dmat", table.scores)
    io.write_dmat(out / "embeddings.dmat", embed_instances(model.D, ut.X))
    write_config(out, "predict", args)
    report = write_report(out, table.predictions, ut)
    if report is not None:
        print(f"mean per-class accuracy {report.mean_per_class_accuracy:.4f}")
    return 0


def _transduce_hyper(args, model) -> Hyperparams:
    h = model.hyper
    if args.lam is not None:
        h = replace(h, lam=args.lam)
    if args.mu is not None:
        h = replace(h, mu=args.mu)
    return h


def cmd_transduce(args) -> int:
    model = io.load_model(args.model)
    ut = _maybe_normalize(args, io.load_unseen(args.manifest))
    _check_dims(model, ut)
    h = _transduce_hyper(args, model)
    final, states = run_tstd(model, ut, h, args.schedule)
    out = prepare_out(args.out, args.force)
    for st in states:
        rd = out / f"round_{st.round}"
        rd.mkdir()
        write_predictions(rd / "predictions.txt", st.predictions, ut.class_names)
        sel = st.selected
        (rd / "selected.txt").write_text(
            "".join(f"{i}\t{ut.class_names[c]}\t{s!r}\n"
                    for i, c, s in zip(sel.instance_indices.tolist(), sel.assigned_labels.tolist(),
                                       sel.scores.tolist())),
            encoding="utf-8")
        io.write_dmat(rd / "D_t.dmat", st.D_t)
    write_predictions(out / "predictions.txt", final, ut.class_names)
    io.write_dmat(out / "D_t.dmat", states[-1].D_t)
    write_config(out, "transduce", args, schedule=list(args.schedule), hyperparams=h.to_dict())
    report = write_report(out, final, ut)
    if report is not None:
        print(f"mean per-class accuracy {report.mean_per_class_accuracy:.4f}")
    return 0


def cmd_sweep_delta(args) -> int:
    model = io.load_model(args.model)
    ut = _maybe_normalize(args, io.load_unseen(args.manifest))
    if ut.truth_labels is None:
        raise MissingRequirement("sweep-delta needs truth labels in the unseen manifest")
    _check_dims(model, ut)
    h = _transduce_hyper(args, model)
    rows = []
    for k in range(1, len(args.schedule) + 1):
        schedule = args.schedule[:k]
        preds, _ = run_tstd(model, ut, h, schedule)
        acc = per_class_top1(preds, ut.truth_labels, ut.A.shape[1]).mean_per_class_accuracy
        rows.append((schedule[-1], ",".join(repr(s) for s in schedule), acc))
    out = prepare_out(args.out, args.force)
    with open(out / "sweep.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["delta", "schedule", "accuracy"])
        for delta, sched, acc in rows:
            writer.writerow([repr(delta), sched, repr(acc)])
    write_config(out, "sweep-delta", args, schedule=list(args.schedule), hyperparams=h.to_dict())
    for delta, _, acc in rows:
        print(f"delta={delta:g} accuracy={acc:.4f}")
    return 0


def cmd_cv(args) -> int:
    base = resolve_hyper(args)
    ds = io.load_seen(args.manifest)
    if args.normalize:
        ds = replace(ds, X=l2_normalize_columns(ds.X))
    if args.threads < 1:
        raise CliError("--threads must be >= 1", key="threads")
    lam_mu = args.lam_mu_grid
    common = dict(folds=args.folds, holdout_frac=args.holdout_frac, seed=args.seed)
    if args.mode == "staged":
        best, table = staged_grid_search(ds, base, args.grid, lam_mu, schedule=args.schedule,
                                         threads=args.threads, **common)
    elif args.mode == "full":
        best, table = full_grid_search(ds, base, args.grid, lam_mu, schedule=args.schedule,
                                       threads=args.threads, **common)
    else:
        from .evaluation import product_grid
        best, table = cv_grid_search(ds, product_grid(base, args.grid, args.grid), threads=args.threads, **common)
    out = prepare_out(args.out, args.force)
    best_row = next(r for r in table if r["hyper"] == best)
    (out / "best.json").write_text(json.dumps(
        {"hyperparams": best.to_dict(), "cv_score": best_row["mean"]}, indent=2) + "\n", encoding="utf-8")
    with open(out / "cv_table.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["alpha", "beta", "lambda", "mu", "transductive", "mean"]
                        + [f"fold{k}" for k in range(args.folds)])
        for r in table:
            writer.writerow([repr(v) for v in r["hyper"].grid_key()] + [int(r["transductive"]), repr(r["mean"])]
                            + [repr(s) for s in r["folds"]])
    write_config(out, "cv", args, mode=args.mode, grid=list(args.grid),
                 lam_mu_grid=list(lam_mu if lam_mu is not None else args.grid),
                 folds=args.folds, holdout_frac=args.holdout_frac,
                 schedule=list(args.schedule), base_hyperparams=base.to_dict())
    print(json.dumps(best.to_dict()))
    return 0


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "predict": cmd_predict,
            "transduce": cmd_transduce, "sweep-delta": cmd_sweep_delta, "cv": cmd_cv}


def _fail(code: int, kind: str, message: str, **extra) -> int:
    payload = {"error": kind, "exit_code": code, "message": message}
    payload.update({k: v for k, v in extra.items() if v})
    print(json.dumps(payload), file=sys.stderr)
    return code


def main(argv=None) -> int:
    level = os.environ.get("ZSLDICT_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except CliError as exc:
        return _fail(exc.code, "input", str(exc), **exc.extra)
    except ShapeError as exc:
        return _fail(EXIT_SHAPE, "dimension", str(exc), axis=exc.axis)
    except io.ManifestError as exc:
        return _fail(EXIT_INPUT, "input", str(exc), key=exc.key)
    except MissingRequirement as exc:
        return _fail(EXIT_MISSING, "missing", str(exc))
    except SolverError as exc:
        return _fail(EXIT_SOLVER, "solver", str(exc))
    except (ValueError, OSError) as exc:
        return _fail(EXIT_INPUT, "input", str(exc))


if __name__ == "__main__":
    sys.exit(main())
