"""The full training loop: adversarial game, centroid regularizers, schedules.

Each iteration runs one discriminator minimization followed by one main
minimization of L_C1 + L_C2 + L_G + alpha * (L_CC + L_CS); the discriminator
is frozen during the main step. Pseudo-labels are screened against the
previous iteration's centroid banks, consumed by this iteration's centroid
update, and then discarded.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable

import numpy as np

from . import centroids as cent
from . import losses
from .datasets import SOURCE, LabeledDataset
from .networks import Mlp, MlpSpec, Params, branch_outputs
from .pseudo_label import (
    PseudoLabelBatch,
    ThresholdState,
    kmeans_assign,
    select_high_confidence,
)
from .tensor import Tensor, vstack

CHECKPOINT_FORMAT = "dcp-checkpoint-v1"

# Desk-scale architecture: smallest shapes where the adversarial game and the
# centroid geometry are observable on 2-D synthetic data.
FEATURE_DIM = 64
DISC_HIDDEN = 32

NETWORK_NAMES = ("adv_extractor", "adv_head", "clu_extractor", "clu_head", "discriminator")


class NumericsError(RuntimeError):
    """A loss became non-finite at some iteration."""

    def __init__(self, iteration: int, message: str):
        super().__init__(f"iteration {iteration}: {message}")
        self.iteration = iteration


class UnlabeledDatasetError(ValueError):
    """Evaluation was asked to score samples with unknown labels."""


class CheckpointVersionError(ValueError):
    """The checkpoint file carries an unsupported format tag."""


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters; defaults follow the digit-scale settings."""

    alpha: float = 0.1
    lr: float = 0.01
    momentum: float = 0.5
    batch_size: int = 36
    iterations: int = 1500
    ema_momentum: float = 0.7
    adv_seed: int = 0
    clu_seed: int = 1
    disc_seed: int = 2
    data_seed: int = 3
    kmeans_max_iters: int = 20
    use_pseudo_labels: bool = True
    eval_every: int = 50

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError(f"alpha must be nonnegative, got {self.alpha}")
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.batch_size < 2:
            raise ValueError(f"batch_size must be at least 2, got {self.batch_size}")
        if self.iterations < 0:
            raise ValueError(f"iterations must be nonnegative, got {self.iterations}")
        if not 0.0 <= self.ema_momentum < 1.0:
            raise ValueError(f"ema_momentum must be in [0, 1), got {self.ema_momentum}")
        if self.kmeans_max_iters < 1:
            raise ValueError(f"kmeans_max_iters must be at least 1, got {self.kmeans_max_iters}")
        if self.eval_every < 1:
            raise ValueError(f"eval_every must be at least 1, got {self.eval_every}")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


METRICS_FIELDS = (
    "T",
    "l_d",
    "l_g",
    "l_c1",
    "l_c2",
    "l_cc",
    "l_cs",
    "tau_adv",
    "tau_clu",
    "n_selected",
    "pseudo_precision",
    "source_acc",
    "target_acc",
)


@dataclass
class MetricsRecord:
    T: int
    l_d: float
    l_g: float
    l_c1: float
    l_c2: float
    l_cc: float | None
    l_cs: float | None
    tau_adv: float
    tau_clu: float
    n_selected: int
    pseudo_precision: float | None
    source_acc: float | None = None
    target_acc: float | None = None

    def csv_row(self) -> list[str]:
        row = []
        for name in METRICS_FIELDS:
            value = getattr(self, name)
            if value is None:
                row.append("")
            elif isinstance(value, (int, np.integer)):
                row.append(str(int(value)))
            else:
                row.append(repr(float(value)))
        return row


def write_metrics_csv(records: list[MetricsRecord], path) -> None:
    lines = [",".join(METRICS_FIELDS)]
    lines += [",".join(r.csv_row()) for r in records]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# -- optimizer ---------------------------------------------------------------


def sgd_momentum_step(
    values: np.ndarray,
    grad: np.ndarray,
    velocity: np.ndarray,
    lr: float,
    momentum: float,
) -> tuple[np.ndarray, np.ndarray]:
    """v <- momentum * v + grad; p <- p - lr * v."""
    if values.shape != grad.shape or values.shape != velocity.shape:
        raise ValueError(
            f"mismatched shapes: values {values.shape}, grad {grad.shape}, velocity {velocity.shape}"
        )
    new_velocity = momentum * velocity + grad
    return values - lr * new_velocity, new_velocity


def apply_sgd_update(
    params: list[Tensor], velocity: list[np.ndarray], lr: float, momentum: float
) -> None:
    """Step every parameter tensor in place and zero its gradient."""
    for i, p in enumerate(params):
        grad = p.grad if p.grad is not None else np.zeros(p.shape)
        new_values, velocity[i] = sgd_momentum_step(p.values, grad, velocity[i], lr, momentum)
        p.update_values(new_values)
        p.zero_grad()


# -- state -------------------------------------------------------------------


@dataclass
class TrainState:
    config: TrainConfig
    k: int
    d_in: int
    networks: dict[str, Mlp]
    velocity: dict[str, list[np.ndarray]]
    threshold: ThresholdState = field(default_factory=ThresholdState)
    bank_adv: cent.CentroidBank | None = None
    bank_clu: cent.CentroidBank | None = None

    @property
    def t(self) -> int:
        return self.threshold.iteration


def init_state(config: TrainConfig, k: int, d_in: int) -> TrainState:
    if k < 2:
        raise ValueError(f"need at least 2 classes, got {k}")
    specs = {
        "adv_extractor": MlpSpec((d_in, FEATURE_DIM, FEATURE_DIM)),
        "adv_head": MlpSpec((FEATURE_DIM, k)),
        "clu_extractor": MlpSpec((d_in, FEATURE_DIM, FEATURE_DIM)),
        "clu_head": MlpSpec((FEATURE_DIM, k)),
        "discriminator": MlpSpec((FEATURE_DIM, DISC_HIDDEN, 1), output_activation="sigmoid"),
    }
    seeds = {
        "adv_extractor": config.adv_seed,
        "adv_head": config.adv_seed + 1_000_003,
        "clu_extractor": config.clu_seed,
        "clu_head": config.clu_seed + 1_000_003,
        "discriminator": config.disc_seed,
    }
    networks = {name: Mlp.create(spec, seeds[name]) for name, spec in specs.items()}
    velocity = {
        name: [np.zeros(p.shape) for p in net.params.tensors()]
        for name, net in networks.items()
    }
    return TrainState(config=config, k=k, d_in=d_in, networks=networks, velocity=velocity)


@dataclass
class StepInfo:
    """Diagnostics of one iteration, for callbacks and tests."""

    selected: PseudoLabelBatch
    y_adv_target: np.ndarray
    y_clu_target: np.ndarray
    alignment_skipped: bool
    target_batch_true_labels: np.ndarray | None = None


def pseudo_precision(selected: PseudoLabelBatch, true_labels) -> float | None:
    """Fraction of selected samples whose pseudo-label is correct.

    ``true_labels`` covers the whole target batch, indexed by batch position.
    Absent (None), not zero, when nothing was selected.
    """
    if len(selected) == 0:
        return None
    true_labels = np.asarray(true_labels, dtype=np.int64).reshape(-1)
    return float((selected.labels == true_labels[selected.indices]).mean())


def _all_params(state: TrainState, names: tuple[str, ...]) -> list[Tensor]:
    out: list[Tensor] = []
    for name in names:
        out.extend(state.networks[name].params.tensors())
    return out


def _update_networks(state: TrainState, names: tuple[str, ...]) -> None:
    cfg = state.config
    for name in names:
        apply_sgd_update(
            state.networks[name].params.tensors(), state.velocity[name], cfg.lr, cfg.momentum
        )


def train_step(
    state: TrainState,
    source_batch: tuple[np.ndarray, np.ndarray],
    target_batch: np.ndarray,
    target_batch_true_labels: np.ndarray | None = None,
) -> tuple[MetricsRecord, StepInfo]:
    """One full iteration; mutates ``state`` and returns its metrics.

    ``target_batch_true_labels`` is an evaluation-only input used to measure
    pseudo-label precision; it never influences any update.
    """
    cfg = state.config
    k = state.k
    xs_values, ys = source_batch
    ys = np.asarray(ys, dtype=np.int64).reshape(-1)
    if xs_values.shape[0] == 0 or target_batch.shape[0] == 0:
        raise ValueError("batches must be nonempty")
    xs = Tensor(xs_values)
    xt = Tensor(target_batch)
    n_target = xt.rows

    adv_ext = state.networks["adv_extractor"]
    adv_head = state.networks["adv_head"]
    clu_ext = state.networks["clu_extractor"]
    clu_head = state.networks["clu_head"]
    disc = state.networks["discriminator"]

    # (a) forward both branches on both batches
    fs_adv = adv_ext(xs)
    ft_adv = adv_ext(xt)
    fs_clu = clu_ext(xs)
    ft_clu = clu_ext(xt)
    y_adv_target = adv_head(ft_adv).values.argmax(axis=1)

    # (b) k-means on the clustering branch's combined features, seeded from
    # per-class source means so cluster index k means class k
    init_centroids = np.zeros((k, fs_clu.cols))
    for cls in range(k):
        members = ys == cls
        if not members.any():
            raise ValueError(f"source batch is missing class {cls}; use stratified sampling")
        init_centroids[cls] = fs_clu.values[members].mean(axis=0)
    combined = np.vstack([fs_clu.values, ft_clu.values])
    y_cl, _ = kmeans_assign(combined, init_centroids, max_iters=cfg.kmeans_max_iters)
    y_clu_target = y_cl[xs.rows :]

    # (c) double-threshold screening against the previous iteration's banks
    if cfg.use_pseudo_labels and state.bank_adv is not None and state.bank_clu is not None:
        selected = select_high_confidence(
            ft_adv,
            ft_clu,
            y_adv_target,
            y_clu_target,
            state.bank_adv,
            state.bank_clu,
            state.threshold,
            k,
        )
    else:
        selected = PseudoLabelBatch.empty()

    # (d) per-branch centroids over source labels plus accepted pseudo-labels
    pseudo = np.full(n_target, -1, dtype=np.int64)
    pseudo[selected.indices] = selected.labels
    union_labels = np.concatenate([ys, pseudo])
    l_cc_tensor = l_cs_tensor = None
    alignment_skipped = False
    bank_adv_step = bank_clu_step = None
    try:
        fresh_adv = cent.compute_centroids(
            vstack([fs_adv, ft_adv]), union_labels, k, cfg.ema_momentum
        )
        fresh_clu = cent.compute_centroids(
            vstack([fs_clu, ft_clu]), union_labels, k, cfg.ema_momentum
        )
        bank_adv_step = (
            cent.update_centroids_ema(state.bank_adv, fresh_adv) if state.bank_adv else fresh_adv
        )
        bank_clu_step = (
            cent.update_centroids_ema(state.bank_clu, fresh_clu) if state.bank_clu else fresh_clu
        )
        m_cc_adv = cent.centroid_centroid_matrix(bank_adv_step)
        m_cc_clu = cent.centroid_centroid_matrix(bank_clu_step)
        m_cs_adv = cent.centroid_sample_matrix(bank_adv_step, ft_adv)
        m_cs_clu = cent.centroid_sample_matrix(bank_clu_step, ft_clu)
        l_cc_tensor = cent.loss_cc(m_cc_clu, m_cc_adv)
        l_cs_tensor = cent.loss_cs(m_cs_clu, m_cs_adv)
    except cent.DegenerateGeometryError:
        # collapsed feature geometry: skip only the alignment losses this step
        alignment_skipped = True

    # (e) discriminator update on detached features; only D moves
    d_source = disc(fs_adv.detached())
    d_target = disc(ft_adv.detached())
    l_d = losses.discriminator_loss(d_source, d_target)
    l_d.backward()
    _update_networks(state, ("discriminator",))

    # (f) main update: classifiers, generator, and alignment; D frozen
    l_c1 = losses.source_classification_loss(adv_head(fs_adv), ys)
    l_c2 = losses.source_classification_loss(clu_head(fs_clu), ys)
    l_g = losses.generator_loss(disc(ft_adv))
    total = l_c1 + l_c2 + l_g
    if not alignment_skipped and cfg.alpha > 0.0:
        total = total + (l_cc_tensor + l_cs_tensor) * cfg.alpha
    total.backward()
    _update_networks(state, ("adv_extractor", "adv_head", "clu_extractor", "clu_head"))
    for p in _all_params(state, NETWORK_NAMES):
        p.zero_grad()

    # (g) advance the iteration counter and persist detached banks
    record = MetricsRecord(
        T=state.t,
        l_d=l_d.item(),
        l_g=l_g.item(),
        l_c1=l_c1.item(),
        l_c2=l_c2.item(),
        l_cc=None if alignment_skipped else l_cc_tensor.item(),
        l_cs=None if alignment_skipped else l_cs_tensor.item(),
        tau_adv=state.threshold.tau_adv,
        tau_clu=state.threshold.tau_clu,
        n_selected=len(selected),
        pseudo_precision=(
            pseudo_precision(selected, target_batch_true_labels)
            if target_batch_true_labels is not None
            else None
        ),
    )
    for name in ("l_d", "l_g", "l_c1", "l_c2", "l_cc", "l_cs"):
        value = getattr(record, name)
        if value is not None and not np.isfinite(value):
            raise NumericsError(state.t, f"{name} is {value}")
    if bank_adv_step is not None:
        state.bank_adv = bank_adv_step.detached()
        state.bank_clu = bank_clu_step.detached()
    state.threshold = state.threshold.advanced()
    info = StepInfo(
        selected=selected,
        y_adv_target=y_adv_target,
        y_clu_target=y_clu_target,
        alignment_skipped=alignment_skipped,
        target_batch_true_labels=target_batch_true_labels,
    )
    return record, info


# -- epoch sampling -----------------------------------------------------------


class _ClassStratifiedSampler:
    """Cycles through per-class shuffled pools so every class is in every batch."""

    def __init__(self, labels: np.ndarray, k: int, batch_size: int, rng: np.random.Generator):
        self._rng = rng
        self._pools = [np.flatnonzero(labels == cls) for cls in range(k)]
        for cls, pool in enumerate(self._pools):
            if pool.size == 0:
                raise ValueError(f"source dataset has no samples of class {cls}")
        self._queues: list[list[int]] = [[] for _ in range(k)]
        base, extra = divmod(batch_size, k)
        self._per_class = [base + (1 if cls < extra else 0) for cls in range(k)]

    def next_batch(self) -> np.ndarray:
        chosen: list[int] = []
        for cls, want in enumerate(self._per_class):
            queue = self._queues[cls]
            while len(queue) < want:
                queue.extend(self._rng.permutation(self._pools[cls]).tolist())
            chosen.extend(queue[:want])
            del queue[:want]
        return np.array(chosen, dtype=np.int64)


class _CycleSampler:
    """Shuffled epochs over all indices, refilled when exhausted."""

    def __init__(self, n: int, batch_size: int, rng: np.random.Generator):
        self._rng = rng
        self._n = n
        self._batch_size = batch_size
        self._queue: list[int] = []

    def next_batch(self) -> np.ndarray:
        while len(self._queue) < self._batch_size:
            self._queue.extend(self._rng.permutation(self._n).tolist())
        chosen = self._queue[: self._batch_size]
        del self._queue[: self._batch_size]
        return np.array(chosen, dtype=np.int64)


# -- full runs ----------------------------------------------------------------


OnStep = Callable[[TrainState, MetricsRecord, StepInfo], None]


def train(
    config: TrainConfig,
    source: LabeledDataset,
    target: LabeledDataset,
    on_step: OnStep | None = None,
) -> tuple["Checkpoint", list[MetricsRecord]]:
    """Run the configured number of iterations and return checkpoint + metrics.

    The whole run is a pure function of (config, dataset contents): batches
    come from seeded per-epoch shuffles, target accuracy is measured through
    the evaluation-only label accessor, and records at the evaluation cadence
    carry source/target accuracy.
    """
    if source.domain_tag != SOURCE:
        raise ValueError("first dataset must be the labeled source domain")
    if source.d != target.d:
        raise ValueError(f"source dimension {source.d} != target dimension {target.d}")
    k = source.n_classes
    if config.batch_size < k:
        raise ValueError(
            f"batch_size {config.batch_size} cannot stratify over {k} classes"
        )
    state = init_state(config, k=k, d_in=source.d)
    rng = np.random.default_rng(config.data_seed)
    source_sampler = _ClassStratifiedSampler(source.y, k, config.batch_size, rng)
    target_sampler = _CycleSampler(target.n, config.batch_size, rng)
    target_eval_labels = target.eval_labels()

    records: list[MetricsRecord] = []
    for t in range(config.iterations):
        src_idx = source_sampler.next_batch()
        tgt_idx = target_sampler.next_batch()
        record, info = train_step(
            state,
            (source.X[src_idx], source.y[src_idx]),
            target.X[tgt_idx],
            target_batch_true_labels=target_eval_labels[tgt_idx],
        )
        if t % config.eval_every == 0 or t == config.iterations - 1:
            record.source_acc = _dataset_accuracy(state, source.X, source.y)
            record.target_acc = _dataset_accuracy(state, target.X, target_eval_labels)
        records.append(record)
        if on_step is not None:
            on_step(state, record, info)
    return Checkpoint.from_state(state), records


def _dataset_accuracy(state: TrainState, x: np.ndarray, y: np.ndarray) -> float:
    out = branch_outputs(state.networks["adv_extractor"], state.networks["adv_head"], Tensor(x))
    return float((out.predicted_labels == y).mean())


# -- evaluation ----------------------------------------------------------------


@dataclass
class EvalReport:
    accuracy: float
    per_class_accuracy: np.ndarray
    confusion: np.ndarray

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "per_class_accuracy": self.per_class_accuracy.tolist(),
            "confusion": self.confusion.tolist(),
        }


def evaluate(checkpoint: "Checkpoint", dataset: LabeledDataset) -> EvalReport:
    """Score the adversarial branch's argmax predictions against true labels."""
    labels = dataset.eval_labels()
    if (labels < 0).any():
        raise UnlabeledDatasetError("dataset has unknown labels; evaluation needs ground truth")
    out = branch_outputs(
        checkpoint.networks["adv_extractor"], checkpoint.networks["adv_head"], Tensor(dataset.X)
    )
    k = checkpoint.k
    confusion = np.zeros((k, k), dtype=np.int64)
    for true, pred in zip(labels, out.predicted_labels):
        confusion[true, pred] += 1
    row_totals = confusion.sum(axis=1)
    per_class = np.divide(
        np.diag(confusion),
        row_totals,
        out=np.zeros(k),
        where=row_totals > 0,
    )
    return EvalReport(
        accuracy=float((out.predicted_labels == labels).mean()),
        per_class_accuracy=per_class,
        confusion=confusion,
    )


# -- checkpointing --------------------------------------------------------------


@dataclass
class Checkpoint:
    """Everything needed to reproduce forward passes and resume bookkeeping."""

    config: TrainConfig
    t: int
    k: int
    d_in: int
    networks: dict[str, Mlp]
    velocity: dict[str, list[np.ndarray]]
    banks: dict[str, cent.CentroidBank | None]

    @classmethod
    def from_state(cls, state: TrainState) -> "Checkpoint":
        return cls(
            config=state.config,
            t=state.t,
            k=state.k,
            d_in=state.d_in,
            networks=state.networks,
            velocity=state.velocity,
            banks={"adv": state.bank_adv, "clu": state.bank_clu},
        )

    def save(self, path) -> None:
        def encode_net(net: Mlp) -> dict:
            return {
                "layer_widths": list(net.spec.layer_widths),
                "output_activation": net.spec.output_activation,
                "weights": [w.values.tolist() for w in net.params.weights],
                "biases": [b.values.tolist() for b in net.params.biases],
            }

        def encode_bank(bank: cent.CentroidBank | None):
            if bank is None:
                return None
            return {
                "centroids": bank.centroids.values.tolist(),
                "counts": bank.counts.tolist(),
                "ema_momentum": bank.ema_momentum,
            }

        payload = {
            "format": CHECKPOINT_FORMAT,
            "config": self.config.to_dict(),
            "t": self.t,
            "k": self.k,
            "d_in": self.d_in,
            "networks": {name: encode_net(net) for name, net in self.networks.items()},
            "velocity": {
                name: [v.tolist() for v in vel] for name, vel in self.velocity.items()
            },
            "banks": {name: encode_bank(bank) for name, bank in self.banks.items()},
        }
        Path(path).write_text(json.dumps(payload, indent=1), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Checkpoint":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        tag = payload.get("format")
        if tag != CHECKPOINT_FORMAT:
            raise CheckpointVersionError(
                f"unsupported checkpoint format {tag!r}; expected {CHECKPOINT_FORMAT!r}"
            )

        def decode_net(data: dict) -> Mlp:
            spec = MlpSpec(tuple(data["layer_widths"]), data["output_activation"])
            params = Params(
                weights=[Tensor(np.array(w), requires_grad=True) for w in data["weights"]],
                biases=[Tensor(np.array(b), requires_grad=True) for b in data["biases"]],
            )
            return Mlp(spec=spec, params=params)

        def decode_bank(data) -> cent.CentroidBank | None:
            if data is None:
                return None
            return cent.CentroidBank(
                centroids=Tensor(np.array(data["centroids"])),
                counts=np.array(data["counts"], dtype=np.int64),
                ema_momentum=data["ema_momentum"],
            )

        return cls(
            config=TrainConfig.from_dict(payload["config"]),
            t=payload["t"],
            k=payload["k"],
            d_in=payload["d_in"],
            networks={name: decode_net(data) for name, data in payload["networks"].items()},
            velocity={
                name: [np.array(v) for v in vel] for name, vel in payload["velocity"].items()
            },
            banks={name: decode_bank(data) for name, data in payload["banks"].items()},
        )
