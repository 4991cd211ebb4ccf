"""``gaitkit`` command line.

Verbs: synth, preprocess, train-cnn, enroll, authenticate, eval.  Exit codes:
0 success, 2 validation or format error, 3 insufficient data, 4 solver did
not converge.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .auth import authenticate_cycles, check_cnn, enroll, load_profile, save_profile
from .cnn import load_cnn, save_cnn
from .errors import GaitkitError, InsufficientDataError, UsageError
from .evaluation import PROTOCOLS, drop_gyro, run_protocol, train_cnn, write_csv
from .ingest import load_recording, save_recording
from .normalize import load_dataset, save_dataset
from .pipeline import PipelineConfig, apply_overrides, dumps_config, parse_config, preprocess_recording
from .synth import generate_subject, generate_walk, random_rotation

log = logging.getLogger("gaitkit")


# -- helpers ----------------------------------------------------------------------------

def _config(args) -> PipelineConfig:
    cfg = PipelineConfig()
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            cfg = parse_config(fh.read(), cfg)
    overrides = {}
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects key=value, got {item!r}")
        overrides[key.strip()] = value.strip()
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.no_gyro:
        overrides["use_gyro"] = False
    if args.jobs is not None:
        overrides["jobs"] = args.jobs
    return apply_overrides(cfg, overrides)


def _check_out(path, force):
    if os.path.exists(path) and not force:
        raise UsageError(f"{path} exists; pass --force to overwrite")


def _preprocess_one(job):
    path, cfg = job
    return path, preprocess_recording(load_recording(path), cfg)


def _preprocess_many(paths, cfg):
    jobs = [(p, cfg) for p in sorted(paths)]
    if cfg.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(cfg.jobs) as ex:
            return list(ex.map(_preprocess_one, jobs))   # map keeps input order
    return [_preprocess_one(j) for j in jobs]


# -- verbs ------------------------------------------------------------------------------

def cmd_synth(args, cfg):
    if not os.path.isdir(args.out):
        raise UsageError(f"output directory {args.out} does not exist")
    rows = []
    for seed in args.seeds:
        prof = generate_subject(seed)
        for w in range(args.walks):
            rng = np.random.default_rng([cfg.seed, seed, w])
            rot = np.eye(3) if args.no_rotation else random_rotation(rng)
            rec, gt = generate_walk(prof, args.duration, rotation=rot, session_seed=cfg.seed * 1000 + w,
                                    session_id=f"w{w}", noise_std=args.noise)
            path = os.path.join(args.out, f"{prof.subject_id}_w{w}.rec")
            _check_out(path, args.force)
            save_recording(rec, path)
            rows.append((path, prof.subject_id, len(gt.cycle_start_times)))
            if args.truth:
                tpath = os.path.join(args.out, f"{prof.subject_id}_w{w}.truth.csv")
                _check_out(tpath, args.force)
                with open(tpath, "w", newline="", encoding="utf-8") as fh:
                    wr = csv.writer(fh, lineterminator="\n")
                    wr.writerow(["cycle_start_s"])
                    wr.writerows([[f"{t:.6f}"] for t in gt.cycle_start_times])
    for path, subject, n in rows:
        print(f"{path}\tsubject={subject}\tcycles={n}")
    return 0


def cmd_preprocess(args, cfg):
    _check_out(args.out, args.force)
    results = _preprocess_many(args.recordings, cfg)
    cycles = []
    for path, res in results:
        cycles.extend(res.cycles)
        status = res.error or "ok"
        print(f"{path}\tsubject={res.subject}\tsession={res.session}\tcycles={len(res.cycles)}\t"
              f"dropped={len(res.dropped)}\t{status}")
        for s, e, why in res.dropped:
            print(f"  dropped [{s}, {e}): {why}")
        if args.phi_csv is not None and res.phi is not None:
            base = os.path.join(args.phi_csv, os.path.splitext(os.path.basename(path))[0])
            _write_phi(base, res, cfg, args.force)
    if not cycles:
        raise InsufficientDataError("no usable walking cycles in any recording")
    n_rows = 8 if cfg.use_gyro else 4
    save_dataset(cycles, args.out, n_rows, cfg.n)
    print(f"wrote {len(cycles)} cycles ({n_rows} x {cfg.n}) to {args.out}")
    return 0


def _write_phi(base, res, cfg, force):
    _check_out(base + ".phi.csv", force)
    with open(base + ".phi.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "time_s", "phi", "boundary"])
        marks = set(res.minima)
        for i, v in enumerate(res.phi):
            w.writerow([i, f"{i / cfg.rate_hz:.6f}", "" if np.isnan(v) else f"{v:.6g}", int(i in marks)])


def cmd_train_cnn(args, cfg):
    _check_out(args.out, args.force)
    cycles = load_dataset(args.dataset)
    if cycles and not cfg.use_gyro and cycles[0].rows.shape[0] == 8:
        cycles = drop_gyro(cycles)

    def progress(epoch, tl, vl):
        log.info("epoch %d  train %.5f  val %.5f", epoch, tl, vl)

    model, acc, conf = train_cnn(cycles, cfg, on_epoch=progress)
    save_cnn(model, args.out)
    print(f"test accuracy {acc:.4f} over {int(conf.sum())} cycles, {model.meta['epochs']} epochs "
          f"(best {model.meta['best_epoch']})")
    if args.report:
        _check_out(args.report, args.force)
        with open(args.report, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["true", "predicted", "count"])
            for i, a in enumerate(model.class_names):
                for j, b in enumerate(model.class_names):
                    w.writerow([a, b, int(conf[i, j])])
    return 0


def _select(cycles, subject):
    if subject is None:
        return cycles
    out = [c for c in cycles if str(c.subject) == subject]
    if not out:
        raise InsufficientDataError(f"no cycles labelled {subject!r}")
    return out


def cmd_enroll(args, cfg):
    _check_out(args.out, args.force)
    cnn = load_cnn(args.cnn)
    target = _select(load_dataset(args.target), args.subject)
    subjects = {str(c.subject) for c in target}
    if len(subjects) > 1:
        raise UsageError(f"target dataset holds several subjects {sorted(subjects)}; pick one with --subject")
    bank = [c for c in load_dataset(args.bank) if str(c.subject) not in subjects]
    profile = enroll(target, cnn, bank, cfg)
    save_profile(profile, args.out)
    print(f"enrolled {profile.subject}: {profile.osvm.n_sv} support vectors, {profile.p1.family} score models, "
          f"A={profile.sprt.A:.4f} B={profile.sprt.B:.4f}")
    return 0


def cmd_authenticate(args, cfg):
    profile = load_profile(args.profile)
    cnn = load_cnn(args.cnn)
    check_cnn(cnn, profile)
    rec = load_recording(args.recording)
    res = preprocess_recording(rec, profile.pipeline_config(cfg))
    if res.error or not res.cycles:
        raise InsufficientDataError(f"{args.recording}: {res.error or 'no usable walking cycles'}")
    result, scores = authenticate_cycles(res.cycles, cnn, profile)
    print(f"decision {result.decision}")
    print(f"cycles_used {result.n_used}")
    print(f"forced {str(result.forced).lower()}")
    print("lambda " + " ".join(f"{v:.4f}" for v in result.trace))
    if args.trace:
        _check_out(args.trace, args.force)
        with open(args.trace, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["cycle", "score", "lambda"])
            for i, lam in enumerate(result.trace):
                w.writerow([i + 1, f"{scores[i]:.9g}", f"{lam:.9g}"])
    return 0


def cmd_eval(args, cfg):
    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, f"{args.protocol}.csv")
    png_path = os.path.join(args.out, f"{args.protocol}.png")
    _check_out(csv_path, args.force)
    cycles = load_dataset(args.dataset)
    cnn = load_cnn(args.cnn) if args.cnn else None
    rows = run_protocol(args.protocol, cycles, cfg, cnn)
    write_csv(rows, csv_path)
    if not args.no_figure:
        from .plotting import plot_protocol
        plot_protocol(args.protocol, rows, png_path)
    for r in rows:
        print("  ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}" for k, v in r.items()))
    print(f"wrote {csv_path}" + ("" if args.no_figure else f" and {png_path}"))
    return 0


def cmd_config(args, cfg):
    sys.stdout.write(dumps_config(cfg))
    return 0


# -- parser -----------------------------------------------------------------------------

def build_parser():
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", help="flat key=value configuration file")
    shared.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one configuration key")
    shared.add_argument("--seed", type=int, help="random seed (default from config, 0)")
    shared.add_argument("--force", action="store_true", help="overwrite existing output files")
    shared.add_argument("--no-gyro", action="store_true", help="accelerometer-only cycle matrices (4 rows)")
    shared.add_argument("--jobs", type=int, help="worker processes for per-recording work")
    shared.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="gaitkit", description="Gait-based user authentication toolkit.")
    p.add_argument("--version", action="version", version=f"gaitkit {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[shared], help="write deterministic synthetic walks")
    s.add_argument("--seeds", type=int, nargs="+", required=True, help="subject seeds")
    s.add_argument("--duration", type=float, default=60.0, help="seconds per walk")
    s.add_argument("--walks", type=int, default=1, help="walks per subject")
    s.add_argument("--noise", type=float, default=None, help="accelerometer noise std (m/s^2)")
    s.add_argument("--no-rotation", action="store_true", help="keep the phone aligned with the body")
    s.add_argument("--truth", action="store_true", help="also write ground-truth cycle starts as CSV")
    s.add_argument("--out", required=True, help="existing output directory")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("preprocess", parents=[shared], help="recordings -> cycle dataset")
    s.add_argument("recordings", nargs="+")
    s.add_argument("--out", required=True, help="cycle dataset file to write")
    s.add_argument("--phi-csv", metavar="DIR", help="also dump the match metric and boundaries per recording")
    s.set_defaults(func=cmd_preprocess)

    s = sub.add_parser("train-cnn", parents=[shared], help="train the feature network")
    s.add_argument("dataset")
    s.add_argument("--out", required=True, help="model file to write")
    s.add_argument("--report", help="CSV confusion matrix on the test split")
    s.set_defaults(func=cmd_train_cnn)

    s = sub.add_parser("enroll", parents=[shared], help="build an authentication profile")
    s.add_argument("target", help="cycle dataset with the target's cycles")
    s.add_argument("--cnn", required=True)
    s.add_argument("--bank", required=True, help="cycle dataset of other people (impostor score bank)")
    s.add_argument("--subject", help="target label to select from the dataset")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_enroll)

    s = sub.add_parser("authenticate", parents=[shared], help="sequential test on one recording")
    s.add_argument("recording")
    s.add_argument("--profile", required=True)
    s.add_argument("--cnn", required=True)
    s.add_argument("--trace", help="CSV of per-cycle scores and the running statistic")
    s.set_defaults(func=cmd_authenticate)

    s = sub.add_parser("eval", parents=[shared], help="run an evaluation protocol")
    s.add_argument("dataset")
    s.add_argument("--protocol", required=True, choices=sorted(PROTOCOLS))
    s.add_argument("--cnn", help="trained network (one-class and sequential protocols)")
    s.add_argument("--out", required=True, help="output directory for CSV and figure")
    s.add_argument("--no-figure", action="store_true")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("config", parents=[shared], help="print the effective configuration")
    s.set_defaults(func=cmd_config)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        return args.func(args, cfg)
    except GaitkitError as exc:
        print(f"gaitkit: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        where = f" {exc.filename}" if exc.filename else ""
        print(f"gaitkit: error:{where}: {exc.strerror or exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
