"""Joint training loop: Adam with gradient clipping, a warm-up phase that
keeps the classifier-output copy path out of the loss, validation-plateau
learning-rate decay, early stopping, and binary checkpoints."""

import json
import math
import random
import struct
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import ContractError, ParseError, ValidationError

CHECKPOINT_MAGIC = b"MMKC"
CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    lr: float = 0.001
    lr_decay: float = 0.5
    max_grad_norm: float = 5.0
    gamma: float = 1.0            # weight on the sequence term of the loss
    warm_up_epochs: int = 2       # epochs trained with (a, b) = (1, 0)
    a_after_warm_up: float = 0.5
    b_after_warm_up: float = 0.5
    patience: int = 3             # epochs without val improvement before stopping
    seed: int = 0

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    def coefficients(self, epoch):
        """(a, b) for a 0-based epoch index."""
        if epoch < self.warm_up_epochs:
            return 1.0, 0.0
        return self.a_after_warm_up, self.b_after_warm_up


class Adam:
    """Adam with bias correction (beta1=0.9, beta2=0.999, eps=1e-8)."""

    def __init__(self, store, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
        self.store = store
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros_like(t.data) for name, t in store.items()}
        self.v = {name: np.zeros_like(t.data) for name, t in store.items()}

    def step(self):
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, param in self.store.items():
            if param.grad is None:
                continue
            g = param.grad
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            param.data -= (self.lr * update).astype(param.data.dtype)


def clip_gradients(store, max_norm):
    """Global L2 clipping; returns the pre-clip norm."""
    total = 0.0
    for param in store.values():
        if param.grad is not None:
            total += float(np.sum(param.grad.astype(np.float64) ** 2))
    norm = math.sqrt(total)
    if norm > max_norm and norm > 0:
        scale = max_norm / norm
        for param in store.values():
            if param.grad is not None:
                param.grad *= scale
    return norm


def batch_loss(model, batch, gamma, a, b):
    """Mean per-instance joint loss over a mini-batch (a Tensor)."""
    total = None
    for instance in batch:
        loss = model.instance_loss(instance, gamma, a, b)
        total = loss if total is None else ad.add(total, loss)
    return ad.smul(total, 1.0 / len(batch))


def dataset_loss(model, instances, gamma, a, b):
    """Mean loss without recording gradients (validation)."""
    total = 0.0
    for instance in instances:
        total += float(model.instance_loss(instance, gamma, a, b).data)
    return total / len(instances)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float
    a: float
    b: float

    def to_json(self):
        return {"epoch": self.epoch, "train_loss": self.train_loss,
                "val_loss": self.val_loss, "lr": self.lr,
                "a": self.a, "b": self.b}


@dataclass
class FitResult:
    history: list = field(default_factory=list)
    best_val_loss: float = math.inf
    best_epoch: int = -1
    stopped_early: bool = False


def fit(model, train_instances, val_instances, config: TrainConfig,
        log_path=None, checkpoint_path=None, progress=None):
    """Train in place; the best-validation parameters are written to
    checkpoint_path (if given) and restored into the model at the end."""
    if not train_instances:
        raise ValidationError("fit: empty training set")
    if not val_instances:
        raise ValidationError("fit: empty validation set")
    optimizer = Adam(model.store, lr=config.lr)
    order_rng = random.Random(config.seed)
    result = FitResult()
    best_params = None
    bad_epochs = 0
    log_file = open(log_path, "w") if log_path else None
    try:
        for epoch in range(config.epochs):
            a, b = config.coefficients(epoch)
            indices = list(range(len(train_instances)))
            order_rng.shuffle(indices)
            epoch_total = 0.0
            for start in range(0, len(indices), config.batch_size):
                batch = [train_instances[i]
                         for i in indices[start:start + config.batch_size]]
                model.store.zero_grads()
                with ad.Tape() as tape:
                    loss = batch_loss(model, batch, config.gamma, a, b)
                value = float(loss.data)
                if not math.isfinite(value):
                    raise ContractError(
                        f"non-finite training loss at epoch {epoch}")
                tape.backward(loss)
                clip_gradients(model.store, config.max_grad_norm)
                optimizer.step()
                epoch_total += value * len(batch)
            train_loss = epoch_total / len(indices)
            val_loss = dataset_loss(model, val_instances, config.gamma, a, b)
            record = EpochRecord(epoch=epoch, train_loss=train_loss,
                                 val_loss=val_loss, lr=optimizer.lr, a=a, b=b)
            result.history.append(record)
            if log_file:
                log_file.write(json.dumps(record.to_json()) + "\n")
                log_file.flush()
            if progress:
                progress(record)
            if val_loss < result.best_val_loss:
                result.best_val_loss = val_loss
                result.best_epoch = epoch
                best_params = {name: t.data.copy()
                               for name, t in model.store.items()}
                if checkpoint_path:
                    save_checkpoint(checkpoint_path, model)
                bad_epochs = 0
            else:
                bad_epochs += 1
                optimizer.lr *= config.lr_decay
                if bad_epochs > config.patience:
                    result.stopped_early = True
                    break
    finally:
        if log_file:
            log_file.close()
    if best_params is not None:
        for name, t in model.store.items():
            t.data = best_params[name]
    return result


# ---------------------------------------------------------------------------
# Checkpoints


def save_checkpoint(path, model):
    """Binary parameter dump bound to the vocabulary via content hashes."""
    gen_hash, cls_hash = model.vocab.hashes()
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", CHECKPOINT_VERSION))
        f.write(struct.pack("<QQ", gen_hash, cls_hash))
        names = model.store.names()
        f.write(struct.pack("<I", len(names)))
        for name in names:
            raw = name.encode("utf-8")
            data = model.store[name].data
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
            f.write(struct.pack("<I", data.ndim))
            f.write(struct.pack(f"<{data.ndim}I", *data.shape))
            f.write(np.ascontiguousarray(data, dtype="<f4").tobytes())


def load_checkpoint(path, model):
    """Load parameters in place; refuses on magic, version, vocabulary-hash,
    or parameter-layout mismatch."""
    gen_hash, cls_hash = model.vocab.hashes()
    with open(path, "rb") as f:
        blob = f.read()
    offset = 0

    def take(fmt):
        nonlocal offset
        size = struct.calcsize(fmt)
        if offset + size > len(blob):
            raise ParseError("checkpoint truncated")
        values = struct.unpack_from(fmt, blob, offset)
        offset += size
        return values

    if blob[:4] != CHECKPOINT_MAGIC:
        raise ParseError(f"bad checkpoint magic {blob[:4]!r}")
    offset = 4
    (version,) = take("<I")
    if version != CHECKPOINT_VERSION:
        raise ParseError(f"unsupported checkpoint version {version}")
    file_gen, file_cls = take("<QQ")
    if (file_gen, file_cls) != (gen_hash, cls_hash):
        raise ValidationError(
            "checkpoint was produced with a different vocabulary")
    (count,) = take("<I")
    names = model.store.names()
    if count != len(names):
        raise ValidationError(
            f"checkpoint has {count} parameters, model has {len(names)}")
    for name in names:
        (name_len,) = take("<I")
        raw = blob[offset:offset + name_len]
        offset += name_len
        if raw.decode("utf-8") != name:
            raise ValidationError(
                f"checkpoint parameter {raw.decode('utf-8')!r} does not match "
                f"expected {name!r}")
        (rank,) = take("<I")
        shape = take(f"<{rank}I")
        param = model.store[name]
        if shape != param.data.shape:
            raise ValidationError(
                f"checkpoint shape {shape} for {name!r} does not match "
                f"{param.data.shape}")
        n = int(np.prod(shape)) if shape else 1
        size = 4 * n
        if offset + size > len(blob):
            raise ParseError("checkpoint truncated")
        values = np.frombuffer(blob, dtype="<f4", count=n, offset=offset)
        offset += size
        param.data = values.reshape(shape).astype(param.data.dtype)
    if offset != len(blob):
        raise ParseError("trailing bytes after checkpoint payload")
