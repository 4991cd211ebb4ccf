"""Desk-scale evaluation protocols.

Every protocol returns a list of flat dict rows (one CSV table) and is
deterministic for a given ``cfg.seed``.
"""

from __future__ import annotations

import csv
import logging

import numpy as np

from .cnn import CnnArchitecture, TrainConfig, accuracy, extract_features, predict, split_dataset, train
from .errors import InsufficientDataError, ParameterError
from .normalize import CycleMatrix
from .osvm import decide, score, train_osvm
from .pca import apply as pca_apply, fit_pca
from .pipeline import PipelineConfig
from .sprt import SprtConfig, fit_score_models, log_ratio, run_sprt_batch

log = logging.getLogger(__name__)

GAMMA_GRID = (0.05, 0.1, 0.2, 0.3, 0.5, 0.75, 1.0)
NU_GRID = (0.01, 0.02, 0.05, 0.1, 0.15, 0.2)


def drop_gyro(cycles):
    """Accelerometer-only view of 8-row cycle matrices (rows a_xi .. a_mag)."""
    return [CycleMatrix(c.rows[:4], c.subject, c.session) for c in cycles]


def train_config(cfg: PipelineConfig) -> TrainConfig:
    return TrainConfig(cfg.learning_rate, cfg.batch_size, cfg.max_epochs, cfg.patience, cfg.seed)


def train_cnn(cycles, cfg: PipelineConfig, n_train=None, features=None, on_epoch=None):
    """Split, train and test one network; returns ``(model, test_accuracy, confusion)``."""
    n_train = cfg.n_train if n_train is None else n_train
    tr, va, te, names = split_dataset(cycles, n_train, cfg.n_test, cfg.val_fraction, cfg.seed)
    arch = CnnArchitecture(tr.x.shape[1], tr.x.shape[2], cfg.q1, cfg.q2, features or cfg.features, len(names))
    model = train(tr, va, arch, train_config(cfg), names, on_epoch)
    pred = predict(model, te.x)
    conf = np.zeros((len(names), len(names)), dtype=int)
    np.add.at(conf, (te.labels, pred), 1)
    return model, accuracy(model, te), conf


def protocol_nc_sweep(cycles, cfg, values=(5, 10, 20, 40)):
    rows = []
    for v in values:
        model, acc, _ = train_cnn(cycles, cfg, n_train=v)
        rows.append({"n_c": v, "accuracy": acc, "epochs": int(model.meta["epochs"])})
        log.info("N_c=%d accuracy %.4f", v, acc)
    return rows


def protocol_features(cycles, cfg, values=(10, 20, 40, 60)):
    rows = []
    for v in values:
        model, acc, _ = train_cnn(cycles, cfg, features=v)
        rows.append({"features": v, "accuracy": acc, "epochs": int(model.meta["epochs"])})
    return rows


def protocol_gyro(cycles, cfg):
    if cycles and cycles[0].rows.shape[0] != 8:
        raise ParameterError("the gyroscope ablation needs an 8-row dataset")
    rows = []
    for label, data in (("with_gyro", cycles), ("accel_only", drop_gyro(cycles))):
        model, acc, _ = train_cnn(data, cfg)
        rows.append({"input": label, "rows": data[0].rows.shape[0], "accuracy": acc,
                     "epochs": int(model.meta["epochs"])})
    return rows


# -- one-class protocols --------------------------------------------------------------

def features_by_subject(cycles, cnn):
    out = {}
    for c in cycles:
        out.setdefault(str(c.subject), []).append(c)
    return {s: extract_features(v, cnn) for s, v in sorted(out.items())}


def _target_splits(feats, cfg, max_targets=5, n_enroll=None):
    """Per target: (enrollment features, held-out target features, impostor features)."""
    subjects = sorted(feats)
    if len(subjects) < 2:
        raise InsufficientDataError("one-class evaluation needs at least 2 subjects")
    rng = np.random.default_rng([cfg.seed, 5])
    for t in subjects[:max_targets]:
        f = feats[t][rng.permutation(len(feats[t]))]
        k = len(f) // 2 if n_enroll is None else min(n_enroll, len(f) - 10)
        others = np.concatenate([feats[s] for s in subjects if s != t])
        yield t, f[:k], f[k:], others


def f_measure(pred_pos, pred_neg) -> float:
    tp = int(np.sum(pred_pos == 1))
    fn = len(pred_pos) - tp
    fp = int(np.sum(pred_neg == 1))
    return 2 * tp / (2 * tp + fp + fn) if tp else 0.0


def _osvm_f(enr, pos, neg, cfg, gamma, nu, s=None, mode=None, rng=None):
    pca = fit_pca(enr, s or cfg.pca_components, mode or cfg.pca_mode)
    model = train_osvm(pca_apply(pca, enr), nu, gamma)
    # balance the classes so F-measure is not dominated by the impostor pool
    if rng is not None and len(neg) > len(pos):
        neg = neg[rng.choice(len(neg), len(pos), replace=False)]
    return f_measure(decide(model, pca_apply(pca, pos)), decide(model, pca_apply(pca, neg)))


def protocol_osvm_grid(cycles, cnn, cfg, gammas=GAMMA_GRID, nus=NU_GRID, max_targets=5):
    feats = features_by_subject(cycles, cnn)
    splits = list(_target_splits(feats, cfg, max_targets))
    rows = []
    for g in gammas:
        for nu in nus:
            fs = [_osvm_f(e, p, n, cfg, g, nu, rng=np.random.default_rng([cfg.seed, i]))
                  for i, (_, e, p, n) in enumerate(splits)]
            rows.append({"gamma": g, "nu": nu, "f_measure": float(np.mean(fs))})
    return rows


def protocol_pca_sweep(cycles, cnn, cfg, values=(2, 5, 10, 15, 20, 30, 40), max_targets=5):
    feats = features_by_subject(cycles, cnn)
    splits = list(_target_splits(feats, cfg, max_targets))
    rows = []
    for mode in ("lowest", "highest"):
        for s in values:
            if s > cnn.arch.features:
                continue
            fs = [_osvm_f(e, p, n, cfg, cfg.gamma_rbf, cfg.nu, s, mode, np.random.default_rng([cfg.seed, i]))
                  for i, (_, e, p, n) in enumerate(splits)]
            rows.append({"mode": mode, "S": s, "f_measure": float(np.mean(fs))})
    return rows


def protocol_enroll_size(cycles, cnn, cfg, values=(50, 100, 200, 400, 1000), max_targets=5):
    feats = features_by_subject(cycles, cnn)
    rows = []
    for n in values:
        fs = []
        for i, (_, e, p, neg) in enumerate(_target_splits(feats, cfg, max_targets, n_enroll=n)):
            if len(e) < n:
                continue   # not enough cycles for this enrollment size
            fs.append(_osvm_f(e, p, neg, cfg, cfg.gamma_rbf, cfg.nu, rng=np.random.default_rng([cfg.seed, i])))
        if fs:
            rows.append({"enroll_cycles": n, "f_measure": float(np.mean(fs)), "targets": len(fs)})
    return rows


def protocol_sprt(cycles, cnn, cfg, error_levels=(0.1, 0.05, 0.01, 0.001), n_trials=2000, max_targets=5):
    """Sequential-test error rates and decision delay on bootstrapped score streams.

    For each target, half of the other subjects form the score bank (p0) and
    the rest act as unseen impostors.
    """
    feats = features_by_subject(cycles, cnn)
    subjects = sorted(feats)
    if len(subjects) < 3:
        raise InsufficientDataError("the sequential-test protocol needs at least 3 subjects")
    rng = np.random.default_rng([cfg.seed, 6])
    acc = {lvl: [] for lvl in error_levels}
    for t in subjects[:max_targets]:
        others = [s for s in subjects if s != t]
        bank, unseen = others[::2], others[1::2]
        f = feats[t][rng.permutation(len(feats[t]))]
        k = len(f) // 2
        n_hold = max(30, int(np.ceil(cfg.score_holdout * k)))
        enr, hold, test_pos = f[:k - n_hold], f[k - n_hold:k], f[k:]
        pca = fit_pca(enr, cfg.pca_components, cfg.pca_mode)
        model = train_osvm(pca_apply(pca, enr), cfg.nu, cfg.gamma_rbf)

        def sc(x, model=model, pca=pca):
            return score(model, pca_apply(pca, x))

        p1, p0 = fit_score_models(sc(hold), sc(np.concatenate([feats[s] for s in bank])), cfg.score_family)
        pos_scores = sc(test_pos)
        neg_scores = sc(np.concatenate([feats[s] for s in unseen]))
        for lvl in error_levels:
            scfg = SprtConfig(lvl, lvl, cfg.max_cycles)
            streams_pos = rng.choice(pos_scores, (n_trials, cfg.max_cycles))
            streams_neg = rng.choice(neg_scores, (n_trials, cfg.max_cycles))
            acc_pos, n_pos = run_sprt_batch(log_ratio(streams_pos, p0, p1), scfg)
            acc_neg, n_neg = run_sprt_batch(log_ratio(streams_neg, p0, p1), scfg)
            acc[lvl].append((1 - acc_pos.mean(), acc_neg.mean(), np.concatenate([n_pos, n_neg])))
    rows = []
    for lvl in error_levels:
        ns = np.concatenate([a[2] for a in acc[lvl]])
        rows.append({"alpha_beta": lvl, "false_negative": float(np.mean([a[0] for a in acc[lvl]])),
                     "false_positive": float(np.mean([a[1] for a in acc[lvl]])),
                     "mean_cycles": float(ns.mean()), "median_cycles": float(np.median(ns)),
                     "within_5": float(np.mean(ns <= 5))})
    return rows


PROTOCOLS = {
    "nc-sweep": (protocol_nc_sweep, False),
    "features": (protocol_features, False),
    "gyro": (protocol_gyro, False),
    "osvm-grid": (protocol_osvm_grid, True),
    "pca-sweep": (protocol_pca_sweep, True),
    "enroll-size": (protocol_enroll_size, True),
    "sprt": (protocol_sprt, True),
}


def run_protocol(name, cycles, cfg: PipelineConfig, cnn=None):
    try:
        fn, needs_cnn = PROTOCOLS[name]
    except KeyError:
        raise ParameterError(f"unknown protocol {name!r}; choose from {', '.join(PROTOCOLS)}") from None
    if needs_cnn:
        if cnn is None:
            raise ParameterError(f"protocol {name!r} needs a trained CNN (--cnn)")
        return fn(cycles, cnn, cfg)
    return fn(cycles, cfg)


def write_csv(rows, path):
    if not rows:
        raise InsufficientDataError("nothing to write: the protocol produced no rows")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (f"{v:.6g}" if isinstance(v, float) else v) for k, v in r.items()})
