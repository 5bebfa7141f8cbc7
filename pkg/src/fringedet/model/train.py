"""Training loop, inference, and checkpoints.

Checkpoint layout (``.npz``, format version 1):

* ``format_version``   scalar int
* ``config``           JSON text: model config, train config, epoch, dropout rng state
* ``params``           flat parameter vector, concatenated in ``parameter_names`` order
* ``param_names``      parameter names; ``param_shapes`` as JSON text
* ``buffer/<name>``    batch-norm running statistics (if any)
* ``opt/<key>``        Adam state (step count and moments)
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from fringedet.augment import AugmentConfig, stage2_batch
from fringedet.errors import ConfigError, IoError, TrainingDiverged
from fringedet.evaluate import dataset_ring_accuracy, mean_average_precision
from fringedet.gridcodec import GridSpec, batch_encode, decode
from fringedet.loss import LossWeights, loss_components, loss_gradient, total_loss
from fringedet.model.network import GridDetector, ModelConfig
from fringedet.model.optim import AdamW, OneCycle

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
HISTORY_HEADER = ["epoch", "train_loss", "val_loss", "val_ring_acc", "val_map", "lr"]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 8
    max_lr: float = 1e-3  # 4e-5 at full scale
    pct_start: float = 0.3
    div_factor: float = 25.0
    final_div: float = 1e4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    eval_every: int = 1
    eval_threshold: float = 0.5
    augment: bool = True
    seed: int = 0
    loss: LossWeights = field(default_factory=LossWeights)

    def __post_init__(self):
        if not self.max_lr >= 0:
            raise ConfigError("max_lr must be >= 0")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if isinstance(d.get("loss"), dict):
            d["loss"] = LossWeights(**d["loss"])
        return cls(**d)


@dataclass
class Frames:
    """In-memory frames (float arrays in [0, 1], original size) with annotations."""

    images: list
    annotations: list
    width: int
    height: int

    def __len__(self):
        return len(self.images)

    @classmethod
    def from_uint8(cls, images, annotations):
        imgs = [np.asarray(i, dtype=np.float64) / 255.0 for i in images]
        h, w = imgs[0].shape if imgs else (0, 0)
        return cls(imgs, [list(a) for a in annotations], w, h)


@dataclass
class History:
    rows: list = field(default_factory=list)
    components: list = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(HISTORY_HEADER)
        for r in self.rows:
            w.writerow([r["epoch"]] + [_fmt(r[k]) for k in HISTORY_HEADER[1:]])
        return buf.getvalue()

    def components_csv(self) -> str:
        if not self.components:
            return ""
        keys = list(self.components[0])
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(keys)
        for r in self.components:
            w.writerow([r["epoch"]] + [_fmt(r[k]) for k in keys[1:]])
        return buf.getvalue()


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "nan"
    return repr(float(v))


@dataclass
class TrainState:
    model: GridDetector
    optimizer: AdamW
    epoch: int = 0  # epochs completed
    history: History = field(default_factory=History)
    best_val: float = math.inf


def new_state(model: GridDetector, tcfg: TrainConfig) -> TrainState:
    opt = AdamW(dict(model.named_parameters()), tcfg.beta1, tcfg.beta2, tcfg.eps, model.cfg.weight_decay)
    return TrainState(model, opt)


def predict(model: GridDetector, images, batch_size: int = 64) -> np.ndarray:
    """Inference-mode forward pass over frames, ``(n, grid size)``."""
    out = []
    for i in range(0, len(images), batch_size):
        out.append(model.forward(model.prepare(images[i:i + batch_size]), training=False))
    if not out:
        return np.zeros((0, model.cfg.output_size))
    return np.concatenate(out).astype(np.float64)


def infer(model: GridDetector, images, spec: GridSpec, threshold: float = 0.5, mode: str = "normalized"):
    """Detections per frame: ``decode(forward(frame))`` with dropout disabled."""
    preds = predict(model, images)
    return [decode(p, spec, threshold, mode) for p in preds]


def evaluate_frames(model: GridDetector, frames: Frames, spec: GridSpec, threshold: float = 0.5,
                    weights: LossWeights = LossWeights()) -> dict:
    preds = predict(model, frames.images)
    truth = batch_encode(frames.annotations, spec)
    dets = [decode(p, spec, threshold) for p in preds]
    n_truth = sum(len(a) for a in frames.annotations)
    out = {"loss": total_loss(truth, preds, weights) if len(preds) else float("nan")}
    out["ring_acc"] = dataset_ring_accuracy(dets, frames.annotations) if n_truth else float("nan")
    out["map"] = mean_average_precision(dets, frames.annotations) if n_truth else float("nan")
    return out


def train(model: GridDetector, train_set: Frames, val_set: Optional[Frames], tcfg: TrainConfig,
          acfg: Optional[AugmentConfig] = None, spec: Optional[GridSpec] = None,
          state: Optional[TrainState] = None, checkpoint_path=None, progress=None) -> TrainState:
    """Run ``tcfg.epochs`` epochs (continuing from ``state`` when resuming).

    Stage-2 augmentation is redrawn at the start of each epoch. The
    learning rate follows a one-cycle schedule over all steps of the run
    (including steps already taken before a resume). When a validation
    set is given, the best-validation-loss model is written to
    ``checkpoint_path``; otherwise the last epoch is.
    """
    if spec is None:
        spec = model.grid_spec(train_set.width, train_set.height)
    if acfg is None:
        acfg = AugmentConfig.off()
    if state is None:
        state = new_state(model, tcfg)
    targets = batch_encode(train_set.annotations, spec)
    n = len(train_set)
    steps_per_epoch = max(1, math.ceil(n / tcfg.batch_size)) if n else 0
    total_epochs = state.epoch + tcfg.epochs
    schedule = OneCycle(tcfg.max_lr, max(1, steps_per_epoch * total_epochs), tcfg.pct_start,
                        tcfg.div_factor, tcfg.final_div)
    params = dict(model.named_parameters())
    w = tcfg.loss
    step = state.optimizer.t

    for _ in range(tcfg.epochs):
        epoch = state.epoch + 1
        order_rng = np.random.default_rng(np.random.SeedSequence(tcfg.seed, spawn_key=(3, epoch)))
        imgs = stage2_batch(train_set.images, acfg, epoch) if tcfg.augment else train_set.images
        x_all = model.prepare(imgs)
        order = order_rng.permutation(n)
        loss_sum, comp_sum, seen = 0.0, {}, 0
        lr = schedule(step)
        for s in range(steps_per_epoch):
            idx = np.sort(order[s * tcfg.batch_size:(s + 1) * tcfg.batch_size])
            if idx.size == 0:
                continue
            lr = schedule(step)
            pred = model.forward(x_all[idx], training=True).astype(np.float64)
            y = targets[idx]
            loss = total_loss(y, pred, w)
            if not math.isfinite(loss):
                _save_safely(state, checkpoint_path)
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}, step {step}", checkpoint_path)
            grads = model.backward(loss_gradient(y, pred, w))
            state.optimizer.step(params, grads, lr)
            step += 1
            loss_sum += loss * idx.size
            seen += idx.size
            for k, v in loss_components(y, pred, w).items():
                comp_sum[k] = comp_sum.get(k, 0.0) + v * idx.size
        state.epoch = epoch
        row = {"epoch": epoch, "train_loss": loss_sum / seen if seen else float("nan"), "lr": lr,
               "val_loss": float("nan"), "val_ring_acc": float("nan"), "val_map": float("nan")}
        if val_set is not None and len(val_set) and (epoch % tcfg.eval_every == 0 or _ == tcfg.epochs - 1):
            ev = evaluate_frames(model, val_set, spec, tcfg.eval_threshold, w)
            row.update(val_loss=ev["loss"], val_ring_acc=ev["ring_acc"], val_map=ev["map"])
        state.history.rows.append(row)
        state.history.components.append({"epoch": epoch, **{k: v / max(seen, 1) for k, v in comp_sum.items()}})
        if progress:
            progress(row)
        log.info("epoch %d  train %.5f  val %.5f  acc %.3f  mAP %.3f  lr %.2e", epoch, row["train_loss"],
                 row["val_loss"], row["val_ring_acc"], row["val_map"], lr)
        if checkpoint_path is not None:
            if val_set is not None and math.isfinite(row["val_loss"]):
                if row["val_loss"] < state.best_val:
                    state.best_val = row["val_loss"]
                    save_checkpoint(state, tcfg, Path(checkpoint_path).with_name("best.npz"))
            save_checkpoint(state, tcfg, checkpoint_path)
    return state


def _save_safely(state, path):
    if path is None:
        return
    try:
        if not Path(path).exists():
            save_checkpoint(state, None, path)
    except IoError:
        pass


def save_checkpoint(state: TrainState, tcfg: Optional[TrainConfig], path):
    model = state.model
    meta = {
        "model": model.cfg.to_dict(),
        "train": tcfg.to_dict() if tcfg is not None else None,
        "epoch": state.epoch,
        "best_val": state.best_val if math.isfinite(state.best_val) else None,
        "dropout_rng": model.dropout.rng.bit_generator.state,
        "param_shapes": [list(p.shape) for _, p in model.named_parameters()],
        "history": state.history.rows,
        "components": state.history.components,
    }
    arrays = {
        "format_version": np.array(CHECKPOINT_VERSION),
        "config": np.array(json.dumps(meta, sort_keys=True, default=_json_default)),
        "params": model.get_flat(),
        "param_names": np.array(model.parameter_names()),
    }
    for k, v in model.buffers().items():
        arrays[f"buffer/{k}"] = v
    for k, v in state.optimizer.state().items():
        arrays[f"opt/{k}"] = v
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(path.name + ".tmp")
        with open(tmp, "wb") as f:
            np.savez(f, **arrays)
        tmp.replace(path)
    except OSError as exc:
        raise IoError(f"cannot write checkpoint {path}: {exc}") from exc


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(type(o))


def load_checkpoint(path) -> tuple[TrainState, Optional[TrainConfig]]:
    try:
        data = np.load(path, allow_pickle=False)
    except OSError as exc:
        raise IoError(f"cannot read checkpoint {path}: {exc}") from exc
    version = int(data["format_version"])
    if version != CHECKPOINT_VERSION:
        raise IoError(f"unsupported checkpoint version {version}")
    meta = json.loads(str(data["config"]))
    mcfg = dict(meta["model"])
    for k in ("pre_channels", "stage_channels"):
        mcfg[k] = tuple(mcfg[k])
    model = GridDetector(ModelConfig.from_dict(mcfg))
    model.set_flat(data["params"])
    bufs = {k[len("buffer/"):]: data[k] for k in data.files if k.startswith("buffer/")}
    if bufs:
        model.set_buffers(bufs)
    model.dropout.rng.bit_generator.state = meta["dropout_rng"]
    tcfg = TrainConfig.from_dict(meta["train"]) if meta.get("train") else None
    state = new_state(model, tcfg or TrainConfig())
    opt = {k[len("opt/"):]: data[k] for k in data.files if k.startswith("opt/")}
    if opt:
        state.optimizer.load_state(opt)
    state.epoch = int(meta["epoch"])
    state.best_val = meta["best_val"] if meta.get("best_val") is not None else math.inf
    state.history = History(list(meta.get("history", [])), list(meta.get("components", [])))
    return state, tcfg
