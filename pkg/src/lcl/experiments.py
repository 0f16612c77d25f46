"""Experiment harness: single trials per encoding, top-k metrics,
aggregation over seeds, and the rank-based significance test."""

from __future__ import annotations

import csv
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import curriculum, model
from .data import subsample

ENCODINGS = ("SL", "LS", "LCL", "KD", "DML")


class ExperimentError(ValueError):
    """Invalid experiment configuration or inputs."""


@dataclass(frozen=True)
class ExperimentConfig:
    """One cell of the experiment grid (seeds enumerate paired trials)."""

    encoding: str
    dr: float = 1.0
    seeds: tuple = (0, 1, 2, 3)
    epsilon: float | None = None  # LCL only
    alpha: float | None = None  # LS only
    kd_temperature: float | None = None  # KD only
    epochs: int = 30
    batch_size: int = 16
    lr: float = 0.1
    lr_decay: float = 1.0
    lam: float = 1e-4
    architecture: str = "linear"
    hidden: int = 64
    similarity_source: str = "embedding"

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(self.seeds))
        if self.encoding not in ENCODINGS:
            raise ExperimentError(f"unknown encoding {self.encoding!r}")
        if (self.epsilon is not None) != (self.encoding == "LCL"):
            raise ExperimentError("epsilon is required exactly for LCL")
        if self.encoding == "LCL" and not 0.0 < self.epsilon < 1.0:
            raise ExperimentError("epsilon must lie in (0, 1)")
        if self.alpha is not None and self.encoding != "LS":
            raise ExperimentError("alpha applies to LS only")
        if self.kd_temperature is not None and self.encoding != "KD":
            raise ExperimentError("kd_temperature applies to KD only")
        if not 0.0 < self.dr <= 1.0:
            raise ExperimentError("dr must lie in (0, 1]")
        if self.epochs < 1:
            raise ExperimentError("epochs must be >= 1")
        if not self.seeds:
            raise ExperimentError("at least one seed is required")

    @property
    def effective_alpha(self):
        return 0.1 if self.alpha is None else self.alpha

    @property
    def effective_temperature(self):
        return 1.0 if self.kd_temperature is None else self.kd_temperature

    @property
    def method_label(self):
        """Encoding plus its own hyperparameter, independent of DR/seed."""
        if self.encoding == "LCL":
            return f"LCL(eps={self.epsilon:g})"
        if self.encoding == "LS":
            return f"LS(alpha={self.effective_alpha:g})"
        if self.encoding == "KD":
            return f"KD(T={self.effective_temperature:g})"
        return self.encoding

    @property
    def config_id(self):
        parts = [self.method_label.replace("(", "-").replace(")", "").replace("=", ""),
                 f"dr{self.dr:g}", self.architecture,
                 f"e{self.epochs}", f"b{self.batch_size}", f"lr{self.lr:g}"]
        return "_".join(parts)


@dataclass(frozen=True)
class TrialResult:
    """Metrics of one (config, seed) run."""

    config_id: str
    method_label: str
    encoding: str
    epsilon: float | None
    alpha: float | None
    dr: float
    seed: int
    top1: float
    top5: float
    final_loss: float
    loss_history: tuple
    epochs: int
    wall_ms: float
    final_params: model.ClassifierParams | None = field(default=None, compare=False)
    companion: "TrialResult | None" = None

    def __post_init__(self):
        if not 0.0 <= self.top1 <= self.top5 <= 1.0:
            raise ExperimentError("need 0 <= top1 <= top5 <= 1")


def topk_accuracy(pred_probs, labels, k):
    """Fraction of examples whose true label is among the k most probable
    classes; ties broken toward the lower class index."""
    probs = np.asarray(pred_probs, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if probs.ndim != 2 or probs.shape[0] == 0:
        raise ExperimentError("need a nonempty batch of prediction vectors")
    if not 1 <= k <= probs.shape[1]:
        raise ExperimentError(f"k={k} out of range for C={probs.shape[1]}")
    # stable sort on negated probs puts the lower index first among ties
    order = np.argsort(-probs, axis=1, kind="stable")[:, :k]
    hits = (order == labels[:, None]).any(axis=1)
    return float(np.mean(hits))


def _rng_streams(seed):
    """Named deterministic RNG streams; the same seed yields the same
    subsample/init/shuffle randomness for every encoding (paired trials)."""
    return {
        "init": np.random.default_rng([int(seed), 1]),
        "init2": np.random.default_rng([int(seed), 2]),
        "shuffle": np.random.default_rng([int(seed), 3]),
        "shuffle2": np.random.default_rng([int(seed), 4]),
    }


def _init_model(config, dim, num_classes, rng):
    arch = config.architecture
    if arch == "linear":
        params = model.init_params("linear", dim, num_classes, seed=0)
    else:
        params = model.init_params("mlp1", dim, num_classes,
                                   hidden=config.hidden, seed=0)
    # re-draw with the trial's stream so pairing is controlled by the seed
    def glorot(shape):
        limit = np.sqrt(6.0 / (shape[0] + shape[1]))
        return rng.uniform(-limit, limit, size=shape)

    if arch == "linear":
        return replace(params, W_out=glorot(params.W_out.shape))
    return replace(params, W1=glorot(params.W1.shape),
                   W_out=glorot(params.W_out.shape))


def _train(config, params, train, targets_for_epoch, shuffle_rng):
    """Generic epoch/batch SGD loop. targets_for_epoch(epoch, labels) returns
    the (n, C) target rows for a batch."""
    xs, ys = train.features, train.labels
    n = xs.shape[0]
    history = []
    for epoch in range(config.epochs):
        lr = config.lr * config.lr_decay ** epoch
        order = shuffle_rng.permutation(n)
        epoch_losses = []
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            xb, yb = xs[idx], ys[idx]
            tb = targets_for_epoch(epoch, yb)
            preds = model.forward(params, xb)
            ce = -np.sum(tb * np.log(np.maximum(preds, model.PROB_FLOOR)), axis=1)
            epoch_losses.append(float(np.mean(ce)) + config.lam * model.regularizer(params))
            grads = model.gradient_from_arrays(params, xb, tb, config.lam)
            params = model.sgd_step(params, grads, lr)
        history.append(float(np.mean(epoch_losses)))
    return params, history


def _train_dml(config, p1, p2, train, shuffle_rng):
    """Joint SGD on both mutual-learning models; one-hot own targets plus a
    mimicry error signal toward the other model's prediction."""
    xs, ys = train.features, train.labels
    n = xs.shape[0]
    eye = np.eye(train.num_classes)
    hist1, hist2 = [], []
    for epoch in range(config.epochs):
        lr = config.lr * config.lr_decay ** epoch
        order = shuffle_rng.permutation(n)
        losses1, losses2 = [], []
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            xb, yb = xs[idx], ys[idx]
            tb = eye[yb]
            pred1 = model.forward(p1, xb)
            pred2 = model.forward(p2, xb)
            ce1 = -np.sum(tb * np.log(np.maximum(pred1, model.PROB_FLOOR)), axis=1)
            ce2 = -np.sum(tb * np.log(np.maximum(pred2, model.PROB_FLOOR)), axis=1)
            kl21 = np.array([model.kl_divergence(q, p) for q, p in zip(pred2, pred1)])
            kl12 = np.array([model.kl_divergence(p, q) for p, q in zip(pred1, pred2)])
            losses1.append(float(np.mean(ce1 + kl21)) + config.lam * model.regularizer(p1))
            losses2.append(float(np.mean(ce2 + kl12)) + config.lam * model.regularizer(p2))
            g1 = model.gradient_from_arrays(p1, xb, tb, config.lam,
                                            extra_logit_error=pred1 - pred2)
            g2 = model.gradient_from_arrays(p2, xb, tb, config.lam,
                                            extra_logit_error=pred2 - pred1)
            p1 = model.sgd_step(p1, g1, lr)
            p2 = model.sgd_step(p2, g2, lr)
        hist1.append(float(np.mean(losses1)))
        hist2.append(float(np.mean(losses2)))
    return p1, p2, hist1, hist2


def _evaluate(params, test):
    preds = model.forward(params, test.features)
    k5 = min(5, test.num_classes)
    return (topk_accuracy(preds, test.labels, 1),
            topk_accuracy(preds, test.labels, k5))


def run_trial(config, seed, train, test, sim=None, debug_verify=False):
    """One deterministic training run for the config's encoding.

    The seed controls subsampling, initialization, and batch shuffling
    identically across encodings, so method comparisons are paired.
    """
    if config.encoding == "LCL" and sim is None:
        raise ExperimentError("LCL requires a similarity matrix")
    if train.dim != test.dim or train.num_classes != test.num_classes:
        raise ExperimentError("train/test dimension or class-count mismatch")
    if sim is not None and sim.num_classes != train.num_classes:
        raise ExperimentError("similarity class count does not match the data")
    t_start = time.perf_counter()
    streams = _rng_streams(seed)
    if config.dr < 1.0:
        train = subsample(train, config.dr, seed)
    c = train.num_classes
    params = _init_model(config, train.dim, c, streams["init"])
    companion = None

    if config.encoding in ("SL", "LS", "LCL"):
        if config.encoding == "SL":
            rows = np.eye(c)
            targets = lambda epoch, yb: rows[yb]
        elif config.encoding == "LS":
            rows = np.stack([curriculum.label_smoothing(i, c, config.effective_alpha).probs
                             for i in range(c)])
            targets = lambda epoch, yb: rows[yb]
        else:
            schedule0 = curriculum.init_targets(sim, config.epsilon)
            if debug_verify:
                report = curriculum.verify_curriculum(schedule0, config.epochs)
                if not report.passed:
                    raise ExperimentError("curriculum axioms violated:\n" + report.summary())
            state = {"schedule": schedule0}

            def targets(epoch, yb):
                state["schedule"] = curriculum.advance_to(state["schedule"], epoch)
                return state["schedule"].targets[yb]

        params, history = _train(config, params, train, targets, streams["shuffle"])
    elif config.encoding == "KD":
        # teacher is a full-budget SL run under the same seed streams
        rows = np.eye(c)
        teacher, _ = _train(config, params, train,
                            lambda epoch, yb: rows[yb], streams["shuffle"])
        temp = config.effective_temperature
        soft = model._softmax(model.logits(teacher, train.features) / temp)
        student = _init_model(config, train.dim, c, streams["init2"])
        params, history = _train_kd(config, student, train, soft, streams["shuffle2"])
    else:  # DML
        p2 = _init_model(config, train.dim, c, streams["init2"])
        params, p2, history, hist2 = _train_dml(config, params, p2, train,
                                                streams["shuffle"])
        top1_2, top5_2 = _evaluate(p2, test)
        companion = TrialResult(
            config_id=config.config_id + "_m2", method_label="DML2",
            encoding="DML", epsilon=None, alpha=None, dr=config.dr, seed=seed,
            top1=top1_2, top5=top5_2, final_loss=hist2[-1],
            loss_history=tuple(hist2), epochs=config.epochs, wall_ms=0.0,
            final_params=p2)

    top1, top5 = _evaluate(params, test)
    wall_ms = (time.perf_counter() - t_start) * 1000.0
    label = "DML1" if config.encoding == "DML" else config.method_label
    return TrialResult(
        config_id=config.config_id, method_label=label,
        encoding=config.encoding, epsilon=config.epsilon,
        alpha=config.alpha if config.encoding == "LS" else None,
        dr=config.dr, seed=seed, top1=top1, top5=top5,
        final_loss=history[-1], loss_history=tuple(history),
        epochs=config.epochs, wall_ms=wall_ms,
        final_params=params, companion=companion)


def _train_kd(config, params, train, soft_targets, shuffle_rng):
    """Student SGD against fixed per-example teacher soft targets."""
    xs = train.features
    n = xs.shape[0]
    history = []
    for epoch in range(config.epochs):
        lr = config.lr * config.lr_decay ** epoch
        order = shuffle_rng.permutation(n)
        epoch_losses = []
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            xb, tb = xs[idx], soft_targets[idx]
            preds = model.forward(params, xb)
            ce = -np.sum(tb * np.log(np.maximum(preds, model.PROB_FLOOR)), axis=1)
            epoch_losses.append(float(np.mean(ce)) + config.lam * model.regularizer(params))
            grads = model.gradient_from_arrays(params, xb, tb, config.lam)
            params = model.sgd_step(params, grads, lr)
        history.append(float(np.mean(epoch_losses)))
    return params, history


@dataclass(frozen=True)
class AggregateRow:
    config_id: str
    method_label: str
    encoding: str
    epsilon: float | None
    alpha: float | None
    dr: float
    n_trials: int
    top1_mean: float
    top1_std: float
    top5_mean: float
    top5_std: float


def aggregate(results):
    """Per-config mean and standard deviation (divisor n) of top1/top5."""
    groups = {}
    for r in results:
        groups.setdefault(r.config_id, []).append(r)
    rows = []
    for config_id in sorted(groups):
        rs = groups[config_id]
        top1 = np.array([r.top1 for r in rs])
        top5 = np.array([r.top5 for r in rs])
        rows.append(AggregateRow(
            config_id=config_id, method_label=rs[0].method_label,
            encoding=rs[0].encoding, epsilon=rs[0].epsilon, alpha=rs[0].alpha,
            dr=rs[0].dr, n_trials=len(rs),
            top1_mean=float(top1.mean()), top1_std=float(top1.std(ddof=0)),
            top5_mean=float(top5.mean()), top5_std=float(top5.std(ddof=0))))
    return rows


def _average_ranks(scores):
    """Ranks within one row: 1 = highest score, ties get the average rank."""
    scores = np.asarray(scores, dtype=float)
    neg = -scores
    sorter = np.argsort(neg, kind="stable")
    ranks = np.empty(len(scores))
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and neg[sorter[j + 1]] == neg[sorter[i]]:
            j += 1
        avg = (i + j) / 2.0 + 1.0
        ranks[sorter[i:j + 1]] = avg
        i = j + 1
    return ranks


@dataclass(frozen=True)
class RankTestResult:
    methods: tuple  # sorted by average rank, best first
    avg_ranks: tuple  # aligned with methods
    chi2_f: float
    f_f: float | None  # None when the F correction is degenerate
    n_settings: int

    def report(self):
        lines = [f"rank comparison over {self.n_settings} settings, "
                 f"{len(self.methods)} methods (rank 1 = best):"]
        for m, r in zip(self.methods, self.avg_ranks):
            lines.append(f"  {m:<24s} avg rank {r:.4f}")
        lines.append(f"  Friedman chi2_F = {self.chi2_f:.6f}")
        if self.f_f is None:
            lines.append("  F_F undefined: N(k-1) equals chi2_F (degenerate)")
        else:
            lines.append(f"  Iman-Davenport F_F = {self.f_f:.6f}")
        return "\n".join(lines)


def friedman_iman_davenport(score_table, method_names=None):
    """Friedman average ranks with the Iman-Davenport F correction.

    score_table is N settings x k methods of scores (higher = better).
    """
    table = np.asarray(score_table, dtype=float)
    if table.ndim != 2:
        raise ExperimentError("score table must be 2-D")
    n, k = table.shape
    if n < 2 or k < 2:
        raise ExperimentError("need at least 2 settings and 2 methods")
    if not np.all(np.isfinite(table)):
        raise ExperimentError("score table has missing entries")
    ranks = np.vstack([_average_ranks(row) for row in table])
    avg = ranks.mean(axis=0)
    chi2 = 12.0 * n / (k * (k + 1)) * (np.sum(avg ** 2) - k * (k + 1) ** 2 / 4.0)
    denom = n * (k - 1) - chi2
    f_f = None if denom == 0.0 else (n - 1) * chi2 / denom
    if method_names is None:
        method_names = [f"method{i}" for i in range(k)]
    order = np.argsort(avg, kind="stable")
    return RankTestResult(
        methods=tuple(method_names[i] for i in order),
        avg_ranks=tuple(float(avg[i]) for i in order),
        chi2_f=float(chi2), f_f=None if f_f is None else float(f_f),
        n_settings=n)


def _flatten(results):
    out = []
    for r in results:
        out.append(r)
        if r.companion is not None:
            out.append(r.companion)
    return out


RAW_HEADER = ["config_id", "encoding", "epsilon", "alpha", "dr", "seed",
              "top1", "top5", "final_loss", "epochs", "wall_ms"]
AGG_HEADER = ["config_id", "encoding", "epsilon", "alpha", "dr", "n_trials",
              "top1_mean", "top1_std", "top5_mean", "top5_std"]


def write_raw_csv(results, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RAW_HEADER)
        for r in sorted(results, key=lambda r: (r.config_id, r.seed)):
            w.writerow([r.config_id, r.encoding,
                        "" if r.epsilon is None else repr(r.epsilon),
                        "" if r.alpha is None else repr(r.alpha),
                        repr(r.dr), r.seed, repr(r.top1), repr(r.top5),
                        repr(r.final_loss), r.epochs, f"{r.wall_ms:.1f}"])


def write_aggregate_csv(rows, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        w = csv.writer(fh, lineterminator="\n")
        # std uses divisor n (population convention)
        w.writerow(AGG_HEADER)
        for r in rows:
            w.writerow([r.config_id, r.encoding,
                        "" if r.epsilon is None else repr(r.epsilon),
                        "" if r.alpha is None else repr(r.alpha),
                        repr(r.dr), r.n_trials,
                        repr(r.top1_mean), repr(r.top1_std),
                        repr(r.top5_mean), repr(r.top5_std)])


def rank_test_from_results(results, metric="top1"):
    """Build the methods x settings score table from trial results: methods
    are encoding+hyperparameter labels, settings are (dr, seed) pairs.
    Returns None when the table is incomplete or too small."""
    methods = sorted({r.method_label for r in results})
    settings = sorted({(r.dr, r.seed) for r in results})
    if len(methods) < 2 or len(settings) < 2:
        return None
    table = np.full((len(settings), len(methods)), np.nan)
    for r in results:
        i = settings.index((r.dr, r.seed))
        j = methods.index(r.method_label)
        table[i, j] = getattr(r, metric)
    if not np.all(np.isfinite(table)):
        return None
    return friedman_iman_davenport(table, methods)


def _run_one(args):
    config, seed, train, test, sim, debug = args
    return run_trial(config, seed, train, test, sim, debug_verify=debug)


def run_suite(configs, train, test, sim=None, out_dir=".", jobs=1,
              debug_verify=False):
    """Run every (config, seed) trial, write raw and aggregate CSVs plus the
    rank report, and return (results, aggregate rows, rank test or None).

    A failing trial is recorded in errors.log and the suite continues.
    """
    os.makedirs(out_dir, exist_ok=True)
    tasks = [(cfg, seed, train, test, sim, debug_verify)
             for cfg in configs for seed in cfg.seeds]
    results, errors = [], []
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_run_one, task) for task in tasks]
            for task, fut in zip(tasks, futures):
                try:
                    results.append(fut.result())
                except Exception as exc:
                    errors.append(f"{task[0].config_id} seed={task[1]}: {exc}")
    else:
        for task in tasks:
            try:
                results.append(_run_one(task))
            except Exception as exc:  # keep the suite going
                errors.append(f"{task[0].config_id} seed={task[1]}: {exc}")
    flat = _flatten(results)
    write_raw_csv(flat, os.path.join(out_dir, "raw_results.csv"))
    agg = aggregate(flat)
    write_aggregate_csv(agg, os.path.join(out_dir, "aggregate.csv"))
    rank = rank_test_from_results(flat)
    with open(os.path.join(out_dir, "rank_report.txt"), "w", encoding="utf-8") as fh:
        if rank is None:
            fh.write("rank test skipped: need >= 2 methods and >= 2 settings "
                     "with a complete score table\n")
        else:
            fh.write(rank.report() + "\n")
    if errors:
        with open(os.path.join(out_dir, "errors.log"), "w", encoding="utf-8") as fh:
            fh.write("\n".join(errors) + "\n")
    return flat, agg, rank
