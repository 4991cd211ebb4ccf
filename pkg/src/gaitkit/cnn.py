"""Small convolutional network on cycle matrices, written directly in numpy.

Layers (R input rows, N samples)::

    CL1  q1 kernels 1x10, per row, linear           -> q1 x R x (N-9)
    CL2  q2 kernels 4x10 over all q1 maps, tanh     -> q2 x (R-3) x (N-18)
    pool max over (1, 2), stride 2 along time        -> q2 x (R-3) x P
    FL1  F tanh units (the feature vector f)
    FL2  K logits, softmax

CL1 is linear, so CL1 followed by CL2 is itself a single convolution with a
4 x 19 kernel.  The forward and backward passes use that composite kernel
(about 20x fewer operations) and map its gradient back onto the CL1/CL2
weights, so the parameters, and their gradients, are exactly those of the
two-layer network.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import textio
from .errors import FormatError, InsufficientDataError, ParameterError, ValidationError

log = logging.getLogger(__name__)

K1 = 10            # CL1 kernel length
K2_ROWS, K2_LEN = 4, 10
POOL = 2
LOG_EPS = 1e-12
PARAM_NAMES = ("W1", "b1", "W2", "b2", "W3", "b3", "W4", "b4")


@dataclass(frozen=True)
class CnnArchitecture:
    input_rows: int = 8
    n: int = 200
    q1: int = 20
    q2: int = 40
    features: int = 40
    classes: int = 2

    def __post_init__(self):
        for name in ("q1", "q2", "features", "classes"):
            if getattr(self, name) < 1:
                raise ParameterError(f"{name} must be >= 1")
        if self.input_rows < K2_ROWS:
            raise ParameterError(f"need at least {K2_ROWS} input rows, got {self.input_rows}")
        if self.pool_len < 1:
            raise ParameterError(f"n={self.n} too short for the convolution and pooling stack")

    @property
    def cl1_len(self) -> int:
        return self.n - K1 + 1

    @property
    def cl2_shape(self):
        return self.input_rows - K2_ROWS + 1, self.cl1_len - K2_LEN + 1

    @property
    def pool_len(self) -> int:
        return (self.n - K1 - K2_LEN + 2) // POOL

    @property
    def flat_len(self) -> int:
        return self.q2 * self.cl2_shape[0] * self.pool_len

    def shapes(self) -> dict:
        return {
            "W1": (self.q1, K1), "b1": (self.q1,),
            "W2": (self.q2, self.q1, K2_ROWS, K2_LEN), "b2": (self.q2,),
            "W3": (self.features, self.flat_len), "b3": (self.features,),
            "W4": (self.classes, self.features), "b4": (self.classes,),
        }


@dataclass(eq=False)
class CnnModel:
    arch: CnnArchitecture
    params: dict
    class_names: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        shapes = self.arch.shapes()
        if set(self.params) != set(shapes):
            raise ValidationError(f"model needs exactly the arrays {sorted(shapes)}")
        for k, shp in shapes.items():
            a = np.asarray(self.params[k], dtype=float)
            if a.shape != shp:
                raise ValidationError(f"{k} has shape {a.shape}, expected {shp}")
            if not np.all(np.isfinite(a)):
                raise ValidationError(f"{k} contains non-finite values")
            self.params[k] = a
        if not self.class_names:
            self.class_names = [str(i) for i in range(self.arch.classes)]
        if len(self.class_names) != self.arch.classes:
            raise ValidationError("one class name per output unit required")

    def __eq__(self, other):
        if not isinstance(other, CnnModel):
            return NotImplemented
        return (self.arch == other.arch and self.class_names == other.class_names and self.meta == other.meta
                and all(np.array_equal(self.params[k], other.params[k]) for k in PARAM_NAMES))


def glorot(rng, shape, fan_in, fan_out):
    s = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-s, s, shape)


def init_model(arch: CnnArchitecture, seed: int = 0, class_names=None) -> CnnModel:
    rng = np.random.default_rng(seed)
    p = {
        "W1": glorot(rng, (arch.q1, K1), K1, arch.q1 * K1),
        "W2": glorot(rng, (arch.q2, arch.q1, K2_ROWS, K2_LEN), arch.q1 * K2_ROWS * K2_LEN,
                     arch.q2 * K2_ROWS * K2_LEN),
        "W3": glorot(rng, (arch.features, arch.flat_len), arch.flat_len, arch.features),
        "W4": glorot(rng, (arch.classes, arch.features), arch.features, arch.classes),
    }
    for k, shp in arch.shapes().items():
        if k.startswith("b"):
            p[k] = np.zeros(shp)
    return CnnModel(arch, p, list(class_names or []))


# -- forward / backward -----------------------------------------------------------

def composite_kernel(W1, b1, W2, b2):
    """CL1 then CL2 as one ``q2 x 4 x 19`` kernel plus bias."""
    q2 = W2.shape[0]
    kern = np.zeros((q2, K2_ROWS, K1 + K2_LEN - 1))
    for k in range(K1):
        kern[:, :, k:k + K2_LEN] += np.einsum("ocrd,c->ord", W2, W1[:, k])
    bias = b2 + np.einsum("ocrd,c->o", W2, b1)
    return kern, bias


def _as_batch(x, arch):
    x = np.asarray(getattr(x, "rows", x), dtype=float)
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3 or x.shape[1:] != (arch.input_rows, arch.n):
        raise ValidationError(f"input shape {x.shape[-2:]} does not match the network ({arch.input_rows}, {arch.n})")
    return x


def _patches(x):
    # (B, R, N) -> (B, R-3, N-18, 4*19)
    w = sliding_window_view(x, (K2_ROWS, K1 + K2_LEN - 1), axis=(1, 2))
    b, r2, t2 = w.shape[:3]
    return w.reshape(b, r2, t2, -1)


def _forward(model: CnnModel, x, keep=False):
    p, arch = model.params, model.arch
    kern, bias = composite_kernel(p["W1"], p["b1"], p["W2"], p["b2"])
    patches = _patches(x)
    z2 = patches @ kern.reshape(len(kern), -1).T + bias        # (B, R2, T2, q2)
    a2 = np.tanh(z2)
    b, r2, t2, q2 = a2.shape
    pl = arch.pool_len
    pairs = a2[:, :, :pl * POOL].reshape(b, r2, pl, POOL, q2)
    pooled = pairs.max(axis=3)                                  # (B, R2, P, q2)
    flat = pooled.transpose(0, 3, 1, 2).reshape(b, -1)          # q2-major, like (q2, R2, P)
    f = np.tanh(flat @ p["W3"].T + p["b3"])
    logits = f @ p["W4"].T + p["b4"]
    y = softmax(logits)
    if not keep:
        return f, y
    return f, y, dict(patches=patches, a2=a2, pairs=pairs, flat=flat, kern=kern)


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def forward(x, model: CnnModel):
    """Feature vector ``f`` and class probabilities ``y`` for one matrix or a batch."""
    single = np.ndim(getattr(x, "rows", x)) == 2
    f, y = _forward(model, _as_batch(x, model.arch))
    return (f[0], y[0]) if single else (f, y)


def extract_features(x, model: CnnModel, batch: int = 256):
    """FL1 output only; accepts one matrix, a stack, or a list of CycleMatrix."""
    if isinstance(x, (list, tuple)):
        x = np.stack([np.asarray(getattr(c, "rows", c), dtype=float) for c in x]) if x else \
            np.zeros((0, model.arch.input_rows, model.arch.n))
    single = np.ndim(getattr(x, "rows", x)) == 2
    xb = _as_batch(x, model.arch)
    out = [_forward(model, xb[i:i + batch])[0] for i in range(0, len(xb), batch)]
    f = np.concatenate(out) if out else np.zeros((0, model.arch.features))
    return f[0] if single else f


def loss(y, t) -> float:
    """Categorical cross-entropy, summed over a batch; ``t`` one-hot or class indices."""
    y = np.atleast_2d(np.asarray(y, dtype=float))
    t = np.asarray(t)
    if t.ndim == 0 or (t.ndim == 1 and y.shape[0] == len(t) and t.dtype.kind in "iu"):
        idx = np.atleast_1d(t)
        hot = y[np.arange(len(idx)), idx]
        return float(-np.sum(np.log(np.maximum(hot, LOG_EPS))))
    t = np.atleast_2d(t.astype(float))
    return float(-np.sum(t * np.log(np.maximum(y, LOG_EPS))))


def gradients(model: CnnModel, x, labels):
    """Summed batch loss and its exact gradient for every parameter array."""
    p, arch = model.params, model.arch
    x = _as_batch(x, arch)
    labels = np.asarray(labels, dtype=int)
    f, y, c = _forward(model, x, keep=True)
    b = len(x)
    total = loss(y, labels)

    d_logits = y.copy()
    d_logits[np.arange(b), labels] -= 1.0
    g = {"W4": d_logits.T @ f, "b4": d_logits.sum(0)}
    dz3 = (d_logits @ p["W4"]) * (1.0 - f * f)
    g["W3"] = dz3.T @ c["flat"]
    g["b3"] = dz3.sum(0)
    d_flat = dz3 @ p["W3"]

    a2, pairs = c["a2"], c["pairs"]
    _, r2, pl, _, q2 = pairs.shape
    d_pooled = d_flat.reshape(b, q2, r2, pl).transpose(0, 2, 3, 1)
    # route through the max: first maximum of each pair wins ties
    first = pairs[:, :, :, 0, :] >= pairs[:, :, :, 1, :]
    d_a2 = np.zeros_like(a2)
    d_a2[:, :, 0:pl * POOL:POOL] = d_pooled * first
    d_a2[:, :, 1:pl * POOL:POOL] = d_pooled * ~first
    dz2 = d_a2 * (1.0 - a2 * a2)

    patches = c["patches"]
    d_kern = np.tensordot(dz2, patches, axes=([0, 1, 2], [0, 1, 2])).reshape(q2, K2_ROWS, K1 + K2_LEN - 1)
    d_bias = dz2.sum(axis=(0, 1, 2))

    W1, b1, W2 = p["W1"], p["b1"], p["W2"]
    dW2 = np.einsum("o,c->oc", d_bias, b1)[:, :, None, None] * np.ones((1, 1, K2_ROWS, K2_LEN))
    dW1 = np.zeros_like(W1)
    for k in range(K1):
        window = d_kern[:, :, k:k + K2_LEN]                       # (q2, 4, 10)
        dW2 += np.einsum("ord,c->ocrd", window, W1[:, k])
        dW1[:, k] = np.einsum("ord,ocrd->c", window, W2)
    g["W2"], g["W1"], g["b2"] = dW2, dW1, d_bias
    g["b1"] = np.einsum("o,ocrd->c", d_bias, W2)
    return total, g


# -- training -----------------------------------------------------------------------

@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    batch_size: int = 32
    max_epochs: int = 500
    patience: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.patience < 1 or self.batch_size < 1 or self.max_epochs < 1:
            raise ParameterError("patience, batch_size and max_epochs must be >= 1")
        if not self.learning_rate > 0:
            raise ParameterError("learning_rate must be positive")


@dataclass
class Split:
    x: np.ndarray
    labels: np.ndarray


def split_dataset(cycles, n_train: int, n_test: int, val_fraction: float = 0.2, seed: int = 0):
    """Per-class random split into train / validation / test stacks.

    Each class contributes ``n_train`` training, ``ceil(val_fraction * n_train)``
    validation and ``n_test`` test cycles.  Classes are the sorted subject labels.
    Returns ``(train, val, test, class_names)``.
    """
    by_class = {}
    for c in cycles:
        by_class.setdefault(str(c.subject), []).append(c)
    names = sorted(by_class)
    if len(names) < 2:
        raise InsufficientDataError("training needs at least 2 classes")
    n_val = int(np.ceil(val_fraction * n_train)) if val_fraction > 0 else 0
    need = n_train + n_val + n_test
    rng = np.random.default_rng([seed, 1])
    parts = {"train": ([], []), "val": ([], []), "test": ([], [])}
    for k, name in enumerate(names):
        items = by_class[name]
        if len(items) < need:
            raise InsufficientDataError(
                f"class {name!r} has {len(items)} cycles, needs {need} ({n_train} train + {n_val} validation + "
                f"{n_test} test)")
        order = rng.permutation(len(items))
        chunks = {"train": order[:n_train], "val": order[n_train:n_train + n_val],
                  "test": order[n_train + n_val:need]}
        for part, idx in chunks.items():
            parts[part][0].extend(items[i].rows for i in idx)
            parts[part][1].extend([k] * len(idx))
    out = []
    for part in ("train", "val", "test"):
        xs, ys = parts[part]
        x = np.stack(xs) if xs else np.zeros((0,) + cycles[0].rows.shape)
        out.append(Split(x, np.array(ys, dtype=int)))
    return out[0], out[1], out[2], names


def mean_loss(model, x, labels, batch: int = 256) -> float:
    if len(x) == 0:
        return float("nan")
    tot = sum(loss(_forward(model, x[i:i + batch])[1], labels[i:i + batch]) for i in range(0, len(x), batch))
    return tot / len(x)


def predict(model, x, batch: int = 256) -> np.ndarray:
    xb = _as_batch(x, model.arch)
    return np.concatenate([_forward(model, xb[i:i + batch])[1].argmax(1) for i in range(0, len(xb), batch)])


def accuracy(model, split: Split) -> float:
    return float(np.mean(predict(model, split.x) == split.labels)) if len(split.x) else float("nan")


def train(train_set: Split, val_set: Split, arch: CnnArchitecture, cfg: TrainConfig | None = None,
          class_names=None, on_epoch=None) -> CnnModel:
    """Mini-batch SGD with early stopping on the validation loss.

    Batches rotate through a fresh seeded permutation of the training set each
    epoch; each step moves by ``learning_rate`` times the batch-mean gradient.
    Training stops once the validation loss has not improved for ``patience``
    epochs and the weights from the best epoch are returned.
    """
    cfg = cfg or TrainConfig()
    x, labels = train_set.x, np.asarray(train_set.labels, dtype=int)
    if len(np.unique(labels)) < 2:
        raise InsufficientDataError("training needs at least 2 classes")
    if labels.max() >= arch.classes:
        raise ValidationError("label index exceeds the class count")
    model = init_model(arch, cfg.seed, class_names)
    rng = np.random.default_rng([cfg.seed, 2])
    has_val = len(val_set.x) > 0
    best, best_params, best_epoch, stale = np.inf, None, 0, 0
    history = []
    epoch = 0
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(x))
        train_loss = 0.0
        for s in range(0, len(x), cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            batch_loss, grads = gradients(model, x[idx], labels[idx])
            train_loss += batch_loss
            step = cfg.learning_rate / len(idx)
            for k in PARAM_NAMES:
                model.params[k] -= step * grads[k]
        train_loss /= len(x)
        val_loss = mean_loss(model, val_set.x, val_set.labels) if has_val else train_loss
        history.append((train_loss, val_loss))
        if on_epoch is not None:
            on_epoch(epoch, train_loss, val_loss)
        if not np.isfinite(train_loss):
            log.warning("training diverged at epoch %d", epoch)
            break
        if val_loss < best:
            best, best_epoch, stale = val_loss, epoch, 0
            best_params = {k: v.copy() for k, v in model.params.items()}
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    if best_params is not None:
        model.params = best_params
    # snap to the persisted precision so a reloaded model is the same model
    model.params = {k: textio.quantize(v) for k, v in model.params.items()}
    model.meta = {"seed": str(cfg.seed), "epochs": str(epoch), "best_epoch": str(best_epoch),
                  "best_val_loss": textio.fmt(best), "final_train_loss": textio.fmt(history[-1][0])}
    model.history = history
    return model


# -- persistence ---------------------------------------------------------------------

def dumps_cnn(model: CnnModel) -> str:
    a = model.arch
    c = textio.Container("cnn", {"rows": str(a.input_rows), "n": str(a.n)})
    c.records["arch"] = {"q1": str(a.q1), "q2": str(a.q2), "features": str(a.features), "classes": str(a.classes)}
    c.records["classes"] = {f"c{i}": name for i, name in enumerate(model.class_names)}
    if model.meta:
        c.records["meta"] = dict(model.meta)
    for k in PARAM_NAMES:
        c.arrays[k] = model.params[k]
    return textio.dumps(c)


def loads_cnn(text: str) -> CnnModel:
    c = textio.loads(text, "cnn")
    rec = c.record("arch")
    try:
        arch = CnnArchitecture(int(c.header["rows"]), int(c.header["n"]), int(rec["q1"]), int(rec["q2"]),
                               int(rec["features"]), int(rec["classes"]))
    except (KeyError, ValueError) as exc:
        raise FormatError(f"bad cnn architecture record: {exc}") from None
    except ParameterError as exc:
        raise FormatError(f"invalid cnn architecture: {exc}") from None
    names_rec = c.records.get("classes", {})
    names = [names_rec.get(f"c{i}") for i in range(arch.classes)]
    if any(n is None for n in names):
        raise FormatError("classes record must name every output class")
    shapes = arch.shapes()
    params = {k: c.array(k, shapes[k]) for k in PARAM_NAMES}
    try:
        return CnnModel(arch, params, names, dict(c.records.get("meta", {})))
    except ValidationError as exc:
        raise FormatError(f"invalid cnn model: {exc}") from None


def save_cnn(model, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_cnn(model))


def load_cnn(path) -> CnnModel:
    with open(path, encoding="utf-8") as fh:
        return loads_cnn(fh.read())
