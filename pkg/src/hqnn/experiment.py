"""Training/validation/test protocol and result serialization."""
import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .circuit import BACKENDS, QuantumModel
from .data import load_mnist, make_splits, preprocess, stratified_subsample
from .nn import (AdamState, BaselineModel, accuracy, adam_step, argmax_predict,
                 balanced_accuracy, cce_loss, confusion_matrix, one_hot)

log = logging.getLogger(__name__)

MODELS = ("quantum", "classical")
DEFAULT_SEEDS = (1, 2, 3, 4, 5)
EVAL_CHUNK = 4096


class DivergenceError(RuntimeError):
    pass


class ComparisonError(ValueError):
    pass


@dataclass
class RunConfig:
    model: str = "quantum"
    backend: str = "analytic"
    epochs: int = 10
    batch_size: int = 32
    lr: float = 1e-3
    seeds: tuple = DEFAULT_SEEDS
    data_dir: str = "data/mnist"
    subset_fraction: float = 1.0
    threads: int = 1
    out: str = "runs/out"

    def __post_init__(self):
        self.seeds = tuple(int(s) for s in self.seeds)
        if self.model not in MODELS:
            raise ValueError(f"model must be one of {MODELS}")
        if self.backend not in BACKENDS:
            raise ValueError(f"backend must be one of {BACKENDS}")
        # epochs == 0 is the untrained dry run
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1 or self.threads < 1:
            raise ValueError("batch_size and threads must be >= 1")
        if not self.seeds:
            raise ValueError("at least one seed is required")
        if not 0 < self.subset_fraction <= 1:
            raise ValueError("subset_fraction must be in (0, 1]")

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class EpochMetrics:
    epoch: int
    cce_train: float
    cce_val: float
    acc_train: float
    acc_val: float


@dataclass
class SeedResult:
    seed: int
    epochs: list
    test_acc: float
    test_ba: float
    confusion: np.ndarray
    n_train: int
    n_val: int
    n_test: int
    train_seconds: float = 0.0
    batch_losses: list = field(default_factory=list, repr=False)


@dataclass
class RunReport:
    config: dict
    n_params: int
    seeds: list

    @property
    def mean_test_acc(self):
        return float(np.mean([s.test_acc for s in self.seeds]))

    @property
    def mean_test_ba(self):
        return float(np.mean([s.test_ba for s in self.seeds]))

    def mean_curve(self, key):
        """Per-epoch mean of an EpochMetrics field across seeds."""
        return np.mean([[getattr(e, key) for e in s.epochs] for s in self.seeds], axis=0)


def build_model(config, rng):
    if config.model == "quantum":
        return QuantumModel.init(rng, backend=config.backend, threads=config.threads)
    return BaselineModel.init(rng)


def count_params(model_kind):
    rng = np.random.default_rng(0)
    return build_model(RunConfig(model=model_kind), rng).n_params


def evaluate(model, records):
    """Full pass with frozen parameters: ``(cce, acc, predicted labels)``."""
    probs = np.concatenate([model.forward(records.chunks[i:i + EVAL_CHUNK])
                            for i in range(0, len(records), EVAL_CHUNK)])
    preds = argmax_predict(probs)
    return cce_loss(probs, one_hot(records.labels)), accuracy(preds, records.labels), preds


def load_data(data_dir):
    train_images, train_digits, test_images, test_digits = load_mnist(data_dir)
    return preprocess(train_images, train_digits), preprocess(test_images, test_digits)


def prepare_splits(tune, test, seed, fraction):
    ss = np.random.SeedSequence(seed)
    train, val, test = make_splits(tune, test, seed)
    if fraction < 1:
        rngs = [np.random.default_rng(s) for s in ss.spawn(3)]
        train, val, test = (stratified_subsample(r, fraction, g)
                            for r, g in zip((train, val, test), rngs))
    return train, val, test


def run_seed(config, tune, test_set, seed):
    train, val, test = prepare_splits(tune, test_set, seed, config.subset_fraction)
    init_rng, shuffle_rng = (np.random.default_rng(s)
                             for s in np.random.SeedSequence([seed, 1]).spawn(2))
    model = build_model(config, init_rng)
    state = AdamState(lr=config.lr)
    history, batch_losses = [], []
    t0 = time.perf_counter()
    for epoch in range(1, config.epochs + 1):
        perm = shuffle_rng.permutation(len(train))
        for b, start in enumerate(range(0, len(train), config.batch_size)):
            idx = perm[start:start + config.batch_size]
            loss, grads, _ = model.loss_and_grads(train.chunks[idx], train.labels[idx])
            if not math.isfinite(loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch}, batch {b}")
            batch_losses.append(loss)
            adam_step(model.params, grads, state)
        cce_l, acc_l, _ = evaluate(model, train)
        cce_v, acc_v, _ = evaluate(model, val)
        history.append(EpochMetrics(epoch, cce_l, cce_v, acc_l, acc_v))
        log.info("seed %d epoch %d: cce %.4f/%.4f acc %.4f/%.4f",
                 seed, epoch, cce_l, cce_v, acc_l, acc_v)
    _, acc_t, preds = evaluate(model, test)
    return SeedResult(
        seed=seed, epochs=history, test_acc=acc_t,
        test_ba=balanced_accuracy(preds, test.labels),
        confusion=confusion_matrix(test.labels, preds),
        n_train=len(train), n_val=len(val), n_test=len(test),
        train_seconds=time.perf_counter() - t0, batch_losses=batch_losses)


def run_training(config, data=None):
    """Run every seed of ``config``; ``data`` may carry preloaded (tune, test)."""
    tune, test = data if data is not None else load_data(config.data_dir)
    n_params = count_params(config.model)
    results = []
    for seed in config.seeds:
        results.append(run_seed(config, tune, test, seed))
        log.info("seed %d: test acc %.4f ba %.4f", seed, results[-1].test_acc,
                 results[-1].test_ba)
    resolved = asdict(config)
    resolved["seeds"] = list(config.seeds)
    resolved["n_params"] = n_params
    resolved["resplit_per_seed"] = True
    return RunReport(config=resolved, n_params=n_params, seeds=results)


# --- serialization ------------------------------------------------------------

def _f(x):
    return f"{x:.6f}"


def _r(x):
    return round(float(x), 6)


def report_to_dict(report):
    return {
        "config": report.config,
        "n_params": report.n_params,
        "seeds": [{
            "seed": s.seed,
            "n_train": s.n_train, "n_val": s.n_val, "n_test": s.n_test,
            "test_acc": _r(s.test_acc), "test_ba": _r(s.test_ba),
            "epochs": [{k: (v if k == "epoch" else _r(v)) for k, v in asdict(e).items()}
                       for e in s.epochs],
            "confusion": s.confusion.tolist(),
        } for s in report.seeds],
        "average": {"test_acc": _r(report.mean_test_acc), "test_ba": _r(report.mean_test_ba)},
    }


def report_from_dict(d):
    seeds = [SeedResult(
        seed=s["seed"], epochs=[EpochMetrics(**e) for e in s["epochs"]],
        test_acc=s["test_acc"], test_ba=s["test_ba"],
        confusion=np.array(s["confusion"], dtype=np.int64),
        n_train=s["n_train"], n_val=s["n_val"], n_test=s["n_test"]) for s in d["seeds"]]
    return RunReport(config=d["config"], n_params=d["n_params"], seeds=seeds)


def load_report(run_dir):
    return report_from_dict(json.loads((Path(run_dir) / "report.json").read_text()))


def emit_report(report, out_dir, figures=True):
    """Write CSV/JSON results (and figures) into ``out_dir``; returns paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    path = out / "epochs.csv"
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["seed", "epoch", "cce_train", "cce_val", "acc_train", "acc_val"])
        for s in report.seeds:
            for e in s.epochs:
                w.writerow([s.seed, e.epoch, _f(e.cce_train), _f(e.cce_val),
                            _f(e.acc_train), _f(e.acc_val)])
    written.append(path)

    path = out / "table1.csv"
    model = report.config["model"]
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["measure", "model"] + [f"k={i + 1}" for i in range(len(report.seeds))]
                   + ["average"])
        w.writerow(["ACC_t", model] + [_f(s.test_acc) for s in report.seeds]
                   + [_f(report.mean_test_acc)])
        w.writerow(["BA_t", model] + [_f(s.test_ba) for s in report.seeds]
                   + [_f(report.mean_test_ba)])
    written.append(path)

    for s in report.seeds:
        path = out / f"confusion_seed{s.seed}.csv"
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["true\\pred"] + [str(c) for c in range(1, 11)])
            for c, row in enumerate(s.confusion, start=1):
                w.writerow([c] + [int(v) for v in row])
        written.append(path)

    path = out / "report.json"
    path.write_text(json.dumps(report_to_dict(report), indent=2) + "\n")
    written.append(path)

    # wall-clock numbers vary run to run; kept apart from the reproducible files
    path = out / "timings.json"
    path.write_text(json.dumps({str(s.seed): round(s.train_seconds, 3)
                                for s in report.seeds}, indent=2) + "\n")
    written.append(path)

    if figures and any(s.epochs for s in report.seeds):
        from .plotting import plot_curves
        written += plot_curves({model: report}, out)
    return written


@dataclass
class Comparison:
    seeds: list
    acc_a: list
    acc_b: list
    ba_a: list
    ba_b: list
    curves: dict

    @property
    def acc_delta(self):
        return [a - b for a, b in zip(self.acc_a, self.acc_b)]

    @property
    def ba_delta(self):
        return [a - b for a, b in zip(self.ba_a, self.ba_b)]

    @property
    def mean_acc_delta(self):
        return float(np.mean(self.acc_a) - np.mean(self.acc_b))

    @property
    def mean_ba_delta(self):
        return float(np.mean(self.ba_a) - np.mean(self.ba_b))


CURVE_KEYS = ("cce_train", "cce_val", "acc_train", "acc_val")


def compare_runs(report_a, report_b):
    """Deltas ``a - b`` of test ACC/BA per seed and mean, plus mean curves."""
    seeds_a = [s.seed for s in report_a.seeds]
    seeds_b = [s.seed for s in report_b.seeds]
    if seeds_a != seeds_b:
        raise ComparisonError(f"seed lists differ: {seeds_a} vs {seeds_b}")
    if report_a.config["epochs"] != report_b.config["epochs"]:
        raise ComparisonError("epoch counts differ")
    curves = {}
    for tag, rep in (("a", report_a), ("b", report_b)):
        if rep.config["epochs"]:
            for key in CURVE_KEYS:
                curves[f"{tag}.{key}"] = rep.mean_curve(key).tolist()
    return Comparison(
        seeds=seeds_a,
        acc_a=[s.test_acc for s in report_a.seeds], acc_b=[s.test_acc for s in report_b.seeds],
        ba_a=[s.test_ba for s in report_a.seeds], ba_b=[s.test_ba for s in report_b.seeds],
        curves=curves)


def emit_comparison(comp, report_a, report_b, out_dir, figures=True):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    name_a, name_b = report_a.config["model"], report_b.config["model"]
    if name_a == name_b:
        name_a, name_b = f"{name_a}_a", f"{name_b}_b"
    written = []

    path = out / "comparison.csv"
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["seed", f"acc_{name_a}", f"acc_{name_b}", "acc_delta",
                    f"ba_{name_a}", f"ba_{name_b}", "ba_delta"])
        rows = zip(comp.seeds, comp.acc_a, comp.acc_b, comp.acc_delta,
                   comp.ba_a, comp.ba_b, comp.ba_delta)
        for seed, *vals in rows:
            w.writerow([seed] + [_f(v) for v in vals])
        w.writerow(["mean", _f(np.mean(comp.acc_a)), _f(np.mean(comp.acc_b)),
                    _f(comp.mean_acc_delta), _f(np.mean(comp.ba_a)), _f(np.mean(comp.ba_b)),
                    _f(comp.mean_ba_delta)])
    written.append(path)

    if comp.curves:
        path = out / "mean_curves.csv"
        n = len(next(iter(comp.curves.values())))
        keys = list(comp.curves)
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            names = {"a": name_a, "b": name_b}
            w.writerow(["epoch"] + [f"{names[k[0]]}.{k[2:]}" for k in keys])
            for i in range(n):
                w.writerow([i + 1] + [_f(comp.curves[k][i]) for k in keys])
        written.append(path)
        if figures:
            from .plotting import plot_curves
            written += plot_curves({name_a: report_a, name_b: report_b}, out)
    return written
