"""Training orchestration: source-domain runs with the centroid-contrast
objective, and target-domain pseudo-label fine-tuning.

One source epoch: advance the smoothing coefficient, then for every batch
run forward, blend the losses, backpropagate, take the SGD step at the
scheduled rate, and finally fold the batch's (pre-step) normalized features
into the centroid bank. With alpha = 0 the contrast/centroid machinery is
never touched, so such a run is bit-for-bit a plain cross-entropy run.

Fine-tuning adapts a trained model to unlabeled target data: pseudo-labels
are the argmax of the model's logits computed once up front, then one epoch
of cross-entropy-only training at a constant 1e-6 rate, bank untouched.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .centroids import CentroidBank, batch_class_means, ema_update, init_bank, update_smoothing
from .data import Dataset, make_batches
from .errors import DegenerateVectorError, TrainingError, UndefinedMetricError
from .losses import combined_loss_and_grads, softmax
from .metrics import EvalResult, accuracy, auc_macro_ovr, quadratic_weighted_kappa
from .model import ModelParams, OptimState, backward, forward, init_params, lr_at, sgd_step

# sub-stream tags hung off the one user seed
_STREAM_INIT = 101
_STREAM_SHUFFLE = 202

_CONFIG_KEYS = (
    "alpha",
    "tau",
    "m0",
    "epochs",
    "batch_size",
    "base_lr",
    "warmup_epochs",
    "seed",
    "hidden_dims",
    "feature_dim",
    "shuffle",
)


@dataclass
class TrainConfig:
    """Hyperparameters; defaults are the source-training recipe."""

    alpha: float = 1.0
    tau: float = 1.0
    m0: float = 0.999
    epochs: int = 50
    batch_size: int = 32
    base_lr: float = 1e-3
    warmup_epochs: int = 1
    seed: int = 0
    hidden_dims: tuple[int, ...] = (64, 64)
    feature_dim: int = 32
    shuffle: bool = True

    def validate(self) -> None:
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if self.tau <= 0:
            raise ValueError(f"tau must be > 0, got {self.tau}")
        if not 0.0 <= self.m0 < 1.0:
            raise ValueError(f"m0 must lie in [0, 1), got {self.m0}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.base_lr < 0:
            raise ValueError(f"base_lr must be >= 0, got {self.base_lr}")
        if self.warmup_epochs < 0:
            raise ValueError(f"warmup_epochs must be >= 0, got {self.warmup_epochs}")
        if self.feature_dim < 1:
            raise ValueError(f"feature_dim must be >= 1, got {self.feature_dim}")
        if any(h < 1 for h in self.hidden_dims):
            raise ValueError(f"hidden dims must be positive, got {self.hidden_dims}")

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "tau": self.tau,
            "m0": self.m0,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "base_lr": self.base_lr,
            "warmup_epochs": self.warmup_epochs,
            "seed": self.seed,
            "hidden_dims": list(self.hidden_dims),
            "feature_dim": self.feature_dim,
            "shuffle": self.shuffle,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        unknown = set(data) - set(_CONFIG_KEYS)
        if unknown:
            raise ValueError(f"unknown config key(s): {sorted(unknown)}")
        kwargs = dict(data)
        if "hidden_dims" in kwargs:
            kwargs["hidden_dims"] = tuple(int(h) for h in kwargs["hidden_dims"])
        config = cls(**kwargs)
        config.validate()
        return config


def finetune_config(**overrides) -> TrainConfig:
    """Fine-tuning defaults: alpha 0, lr 1e-6, one epoch, no warm-up."""
    base = TrainConfig(alpha=0.0, base_lr=1e-6, epochs=1, warmup_epochs=0)
    return replace(base, **overrides) if overrides else base


@dataclass
class EpochRecord:
    epoch: int
    m: float
    lr: float
    ce: float
    cont: float
    total: float
    ema_samples: int
    val_accuracy: float = math.nan
    val_kappa: float = math.nan


@dataclass
class RunReport:
    """Everything a run produced, minus the heavyweight arrays themselves."""

    config: TrainConfig
    history: list[EpochRecord] = field(default_factory=list)
    eval_results: list[EvalResult] = field(default_factory=list)
    artifacts: dict[str, str] = field(default_factory=dict)

    @property
    def seed(self) -> int:
        return self.config.seed


def predict_logits(params: ModelParams, ds: Dataset) -> np.ndarray:
    if ds.input_dim != params.input_dim:
        raise ValueError(
            f"dataset dim {ds.input_dim} does not match model input {params.input_dim}"
        )
    _, _, logits, _ = forward(params, ds.features)
    return logits


def pseudo_label(params: ModelParams, ds: Dataset) -> np.ndarray:
    """Argmax of the head's softmax per sample; ties go to the lowest index."""
    return np.argmax(predict_logits(params, ds), axis=1)


def evaluate_model(params: ModelParams, ds: Dataset) -> list[EvalResult]:
    """Accuracy, quadratic weighted kappa, and macro one-vs-rest AUC on a dataset.

    Metrics that are undefined for the dataset at hand come back as NaN
    rather than failing the whole evaluation.
    """
    logits = predict_logits(params, ds)
    preds = np.argmax(logits, axis=1)
    probs = softmax(logits)
    results = [EvalResult("accuracy", accuracy(ds.labels, preds), ds.domain)]
    try:
        kappa = quadratic_weighted_kappa(ds.labels, preds, ds.num_classes)
    except UndefinedMetricError:
        kappa = math.nan
    results.append(EvalResult("quadratic_weighted_kappa", kappa, ds.domain))
    try:
        macro, per_class = auc_macro_ovr(probs, ds.labels)
        results.append(EvalResult("auc_macro_ovr", macro, ds.domain, tuple(per_class)))
    except UndefinedMetricError:
        results.append(EvalResult("auc_macro_ovr", math.nan, ds.domain))
    return results


def _quick_val_metrics(params: ModelParams, ds: Dataset) -> tuple[float, float]:
    preds = np.argmax(predict_logits(params, ds), axis=1)
    acc = accuracy(ds.labels, preds)
    try:
        kappa = quadratic_weighted_kappa(ds.labels, preds, ds.num_classes)
    except UndefinedMetricError:
        kappa = math.nan
    return acc, kappa


def train(
    train_ds: Dataset,
    val_ds: Dataset | None,
    config: TrainConfig,
    epoch_callback=None,
) -> tuple[ModelParams, CentroidBank, RunReport]:
    """Source-domain training run; deterministic under config.seed.

    Returns the final model, the centroid bank (untouched when alpha = 0),
    and a report with one record per epoch. ``epoch_callback(epoch, params,
    bank, record)`` runs after each epoch when given.
    """
    config.validate()
    if val_ds is not None and val_ds.input_dim != train_ds.input_dim:
        raise ValueError("train and val datasets disagree on input dimension")
    num_classes = train_ds.num_classes
    if num_classes < 2:
        raise ValueError(f"training needs >= 2 classes, got {num_classes}")

    params = init_params(
        train_ds.input_dim,
        config.hidden_dims,
        config.feature_dim,
        num_classes,
        np.random.default_rng([config.seed, _STREAM_INIT]),
    )
    bank = init_bank(num_classes, config.feature_dim, config.m0)
    n = len(train_ds)
    steps_per_epoch = math.ceil(n / config.batch_size)
    opt = OptimState(config.base_lr, config.warmup_epochs, config.epochs, steps_per_epoch)
    report = RunReport(config=config)

    for epoch in range(config.epochs):
        m = update_smoothing(bank, epoch, config.epochs)
        batches = make_batches(
            train_ds, config.batch_size, seed=[config.seed, _STREAM_SHUFFLE, epoch],
            shuffle=config.shuffle,
        )
        ce_sum = 0.0
        cont_sum = 0.0
        ema_samples = 0
        lr = 0.0
        for batch in batches:
            x = train_ds.features[batch]
            y = train_ds.labels[batch]
            try:
                _, fhat, logits, cache = forward(params, x)
            except DegenerateVectorError as exc:
                raise TrainingError(
                    f"degenerate features at epoch {epoch}, step {opt.step}: {exc}"
                ) from exc
            if not np.isfinite(logits).all():
                raise TrainingError(
                    f"non-finite logits at epoch {epoch}, step {opt.step}; "
                    "training has diverged"
                )
            breakdown, d_feat, d_logits = combined_loss_and_grads(
                fhat, logits, y, bank, config.alpha, config.tau
            )
            if not math.isfinite(breakdown.total):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, step {opt.step}: {breakdown}"
                )
            grads = backward(params, cache, d_feat, d_logits)
            lr = lr_at(opt, opt.step)
            opt.step += 1
            sgd_step(params, grads, lr)
            if config.alpha > 0:
                # the EMA sees the same features the loss saw (pre-step)
                means, mask = batch_class_means(fhat, y, num_classes)
                ema_update(bank, means, mask)
                ema_samples += len(batch)
            ce_sum += breakdown.ce * len(batch)
            cont_sum += breakdown.cont * len(batch)
        record = EpochRecord(
            epoch=epoch,
            m=m,
            lr=lr,
            ce=ce_sum / n,
            cont=cont_sum / n,
            total=ce_sum / n + config.alpha * cont_sum / n,
            ema_samples=ema_samples,
        )
        if val_ds is not None:
            record.val_accuracy, record.val_kappa = _quick_val_metrics(params, val_ds)
        report.history.append(record)
        if epoch_callback is not None:
            epoch_callback(epoch, params, bank, record)

    if val_ds is not None and config.epochs > 0:
        report.eval_results = evaluate_model(params, val_ds)
    return params, bank, report


def finetune(
    params: ModelParams,
    bank: CentroidBank,
    target_ds: Dataset,
    config: TrainConfig | None = None,
    epoch_callback=None,
) -> tuple[ModelParams, RunReport]:
    """Adapt a trained model to unlabeled target data via pseudo-labels.

    Labels are assigned once before training (argmax of the current model's
    logits); the dataset's own labels are ignored. Training runs at the
    constant configured rate with no schedule, and the bank is never updated.
    """
    if config is None:
        config = finetune_config()
    config.validate()
    labels = pseudo_label(params, target_ds)
    ds = Dataset(target_ds.features, labels, target_ds.domain, target_ds.num_classes)
    report = RunReport(config=config)
    n = len(ds)
    step = 0
    for epoch in range(config.epochs):
        batches = make_batches(
            ds, config.batch_size, seed=[config.seed, _STREAM_SHUFFLE, epoch],
            shuffle=config.shuffle,
        )
        ce_sum = 0.0
        cont_sum = 0.0
        for batch in batches:
            x = ds.features[batch]
            y = ds.labels[batch]
            try:
                _, fhat, logits, cache = forward(params, x)
            except DegenerateVectorError as exc:
                raise TrainingError(
                    f"degenerate features at epoch {epoch}, step {step}: {exc}"
                ) from exc
            if not np.isfinite(logits).all():
                raise TrainingError(
                    f"non-finite logits at epoch {epoch}, step {step}; training has diverged"
                )
            breakdown, d_feat, d_logits = combined_loss_and_grads(
                fhat, logits, y, bank, config.alpha, config.tau
            )
            if not math.isfinite(breakdown.total):
                raise TrainingError(f"non-finite loss at epoch {epoch}, step {step}")
            grads = backward(params, cache, d_feat, d_logits)
            sgd_step(params, grads, config.base_lr)
            step += 1
            ce_sum += breakdown.ce * len(batch)
            cont_sum += breakdown.cont * len(batch)
        record = EpochRecord(
            epoch=epoch,
            m=bank.m,
            lr=config.base_lr,
            ce=ce_sum / n,
            cont=cont_sum / n,
            total=ce_sum / n + config.alpha * cont_sum / n,
            ema_samples=0,
        )
        report.history.append(record)
        if epoch_callback is not None:
            epoch_callback(epoch, params, bank, record)
    return params, report


def write_history_csv(report: RunReport, path) -> None:
    lines = ["epoch,m,lr,ce,cont,total,ema_samples,val_accuracy,val_kappa"]
    for r in report.history:
        lines.append(
            f"{r.epoch},{r.m:.17g},{r.lr:.17g},{r.ce:.17g},{r.cont:.17g},"
            f"{r.total:.17g},{r.ema_samples},{r.val_accuracy:.17g},{r.val_kappa:.17g}"
        )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def render_report(report: RunReport) -> str:
    """Deterministic human-readable run summary."""
    cfg = report.config
    out = [
        "centroid-contrast run report",
        "============================",
        f"seed: {cfg.seed}",
        f"alpha: {cfg.alpha:g}  tau: {cfg.tau:g}  m0: {cfg.m0:g}",
        f"epochs: {cfg.epochs}  batch_size: {cfg.batch_size}  base_lr: {cfg.base_lr:g}"
        f"  warmup_epochs: {cfg.warmup_epochs}",
        f"model: hidden={list(cfg.hidden_dims)} feature_dim={cfg.feature_dim}",
        "",
    ]
    if report.history:
        last = report.history[-1]
        out.append(f"epochs run: {len(report.history)}")
        out.append(
            f"final epoch: ce={last.ce:.6g} cont={last.cont:.6g} total={last.total:.6g} "
            f"m={last.m:.6g}"
        )
        if not math.isnan(last.val_accuracy):
            out.append(
                f"final val: accuracy={last.val_accuracy:.6g} kappa={last.val_kappa:.6g}"
            )
    else:
        out.append("epochs run: 0")
    if report.eval_results:
        out.append("")
        out.append("evaluation:")
        for res in report.eval_results:
            tag = f" [{res.domain}]" if res.domain else ""
            out.append(f"  {res.name}{tag}: {res.value:.6g}")
            if res.per_class is not None:
                cells = " ".join(f"{v:.6g}" for v in res.per_class)
                out.append(f"    per-class: {cells}")
    if report.artifacts:
        out.append("")
        out.append("artifacts:")
        for name in sorted(report.artifacts):
            out.append(f"  {name}: {report.artifacts[name]}")
    return "\n".join(out) + "\n"
