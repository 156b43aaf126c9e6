"""The tappability network: two conv towers over element and screen pixels,
an embedded type feature, and a dense head ending in one sigmoid unit.

Training runs minibatch adaptive-gradient updates on sigmoid cross-entropy.
Screens repeat across the many elements of one screen, so the training loop
deduplicates them: the screen tower runs once per distinct screen per step
and per-example gradients are summed back onto the shared activations,
which is algebraically identical to the naive per-example pass. First-layer
convolution columns depend only on raw pixels and are precomputed once per
corpus.

Checkpoints are a single binary file: an 8-byte magic, a little-endian
uint32 header length, a canonical JSON header (format version, model
version, config, type vocabulary, embedding-table fingerprint, decision
threshold, array manifest), then the flat parameter arrays in manifest
order as little-endian float32. The header is readable without touching
the arrays.
"""

from __future__ import annotations

import hashlib
import json
import logging
import struct
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import nn
from .corpus import Corpus
from .features import EmbeddingTable, FeatureBundle, encode_element, resize_screen
from .nn import LayerParams, TrainingDiverged
from .rng import RngStream

log = logging.getLogger("tapkit.model")

CHECKPOINT_MAGIC = b"TAPKITCK"
CHECKPOINT_FORMAT_VERSION = 1


class CheckpointError(ValueError):
    """Checkpoint file is truncated, corrupt, or from an unknown version."""


@dataclass(frozen=True)
class ModelConfig:
    """Architecture and training hyperparameters.

    Defaults give the full-size network: three 8-filter 3x3 conv layers per
    tower, each followed by 2x2 max pooling, then two 100-wide dense layers
    with 40% dropout, trained with adaptive gradient steps at lr 0.01 and
    batch 64. ``element_hw``/``screen_hw`` exist so tests can run a
    miniature geometry; the feature encoder always produces the defaults.
    """

    conv_filters: int = 8
    conv_layers: int = 3
    fc_widths: tuple = (100, 100)
    dropout_rate: float = 0.4
    learning_rate: float = 0.01
    batch_size: int = 64
    steps: int = 2000
    type_vocab_size: int = 22
    type_embed_dim: int = 6
    semantic_dim: int = 50
    element_hw: tuple = (32, 32)
    screen_hw: tuple = (300, 168)
    holdout_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.dropout_rate < 1:
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        for name in ("conv_filters", "conv_layers", "batch_size", "steps",
                     "type_vocab_size", "type_embed_dim", "semantic_dim"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        object.__setattr__(self, "fc_widths", tuple(self.fc_widths))
        object.__setattr__(self, "element_hw", tuple(self.element_hw))
        object.__setattr__(self, "screen_hw", tuple(self.screen_hw))

    def tower_spatial(self, hw) -> tuple:
        h, w = hw
        for _ in range(self.conv_layers):
            h, w = h // 2, w // 2
        if h < 1 or w < 1:
            raise ValueError(f"input {hw} too small for {self.conv_layers} pooling stages")
        return h, w

    def flatten_sizes(self) -> tuple:
        eh, ew = self.tower_spatial(self.element_hw)
        sh, sw = self.tower_spatial(self.screen_hw)
        return eh * ew * self.conv_filters, sh * sw * self.conv_filters

    def concat_dim(self) -> int:
        elem_flat, screen_flat = self.flatten_sizes()
        return elem_flat + screen_flat + self.semantic_dim + 1 + self.type_embed_dim + 1 + 4


MINIATURE_CONFIG = ModelConfig(element_hw=(8, 8), screen_hw=(20, 12), fc_widths=(5, 5))


def _param_order(config: ModelConfig) -> list:
    names = [f"element_conv{i + 1}" for i in range(config.conv_layers)]
    names += [f"screen_conv{i + 1}" for i in range(config.conv_layers)]
    names.append("type_embedding")
    names += [f"fc{j + 1}" for j in range(len(config.fc_widths))]
    names.append("output")
    return names


class TappabilityModel:
    """Parameters plus forward/backward passes for the full network."""

    def __init__(self, config: ModelConfig, params: dict, type_vocab,
                 embedding_fingerprint: str | None = None, dtype=np.float32):
        self.config = config
        self.params = params
        self.type_vocab = tuple(type_vocab)
        self.embedding_fingerprint = embedding_fingerprint
        self.dtype = dtype

    @classmethod
    def build(cls, config: ModelConfig, type_vocab=None,
              embedding_fingerprint: str | None = None, dtype=np.float32) -> "TappabilityModel":
        """Initialize all layers from the config seed.

        Weights are zero-mean uniform with the fan-based bound, embeddings
        uniform(-0.05, 0.05), biases zero; two builds from the same config
        are bit-identical.
        """
        if type_vocab is None:
            from .features import default_type_vocab

            type_vocab = default_type_vocab()
        if len(type_vocab) != config.type_vocab_size:
            raise ValueError(
                f"type vocab has {len(type_vocab)} entries, config expects {config.type_vocab_size}"
            )
        rng = RngStream(config.seed)
        params: dict[str, LayerParams] = {}
        for prefix, hw in (("element", config.element_hw), ("screen", config.screen_hw)):
            cin = 3
            for i in range(config.conv_layers):
                name = f"{prefix}_conv{i + 1}"
                params[name] = nn.init_conv(cin, config.conv_filters, rng.child(f"init/{name}"), dtype)
                cin = config.conv_filters
        params["type_embedding"] = nn.init_embedding(
            config.type_vocab_size, config.type_embed_dim, rng.child("init/type_embedding"), dtype
        )
        d = config.concat_dim()
        for j, width in enumerate(config.fc_widths):
            name = f"fc{j + 1}"
            params[name] = nn.init_dense(d, width, rng.child(f"init/{name}"), dtype)
            d = width
        params["output"] = nn.init_dense(d, 1, rng.child("init/output"), dtype)
        return cls(config, params, type_vocab, embedding_fingerprint, dtype)

    def param_names(self) -> list:
        return _param_order(self.config)

    def parameter_count(self) -> int:
        total = 0
        for name in self.param_names():
            p = self.params[name]
            total += p.weights.size + (p.bias.size if p.bias is not None else 0)
        return total

    def version_digest(self) -> str:
        h = hashlib.sha256()
        h.update(_canonical_json(_config_to_json(self.config)).encode())
        for name in self.param_names():
            p = self.params[name]
            h.update(p.weights.astype("<f4").tobytes())
            if p.bias is not None:
                h.update(p.bias.astype("<f4").tobytes())
        return f"v{CHECKPOINT_FORMAT_VERSION}-{h.hexdigest()[:12]}"

    # -- forward ------------------------------------------------------------

    def _tower_forward(self, images: np.ndarray, prefix: str,
                       cols1: np.ndarray | None = None, keep_cache: bool = False):
        # relu(maxpool(z)) == maxpool(relu(z)) exactly (relu is monotone),
        # so pooling runs first and relu touches a quarter of the cells
        x = images
        caches = []
        for i in range(self.config.conv_layers):
            p = self.params[f"{prefix}_conv{i + 1}"]
            if i == 0 and cols1 is not None:
                pad, cols = None, cols1
            else:
                pad, cols = nn.pad3x3(x), None
            z = nn.conv_forward(x, p, pad=pad, cols=cols)
            pooled_z = nn.maxpool_forward(z)
            if keep_cache:
                caches.append((pad, cols, z, pooled_z))
            x = nn.relu(pooled_z)
        n = x.shape[0]
        return x.reshape(n, -1), caches

    def _tower_backward(self, dflat: np.ndarray, caches, prefix: str, grads: dict):
        cfg = self.config
        h, w = cfg.tower_spatial(getattr(cfg, f"{prefix}_hw"))
        dx = dflat.reshape(dflat.shape[0], h, w, cfg.conv_filters)
        for i in reversed(range(cfg.conv_layers)):
            pad, cols, z, pooled_z = caches[i]
            dpooled = nn.relu_backward(dx, pooled_z)
            dz = nn.maxpool_route(dpooled, z, pooled_z)
            name = f"{prefix}_conv{i + 1}"
            dx, dw, db = nn.conv_backward(
                dz, None, self.params[name], pad=pad, cols=cols, need_dx=i > 0
            )
            grads[f"{name}.weights"] = dw
            grads[f"{name}.bias"] = db
        return grads

    def _concat(self, elem_flat, screen_flat_rows, semantic, word_count, type_rows, clickable, bbox):
        return np.concatenate(
            [
                elem_flat,
                screen_flat_rows,
                semantic,
                word_count[:, None],
                type_rows,
                clickable[:, None],
                bbox,
            ],
            axis=1,
        )

    def _split_dconcat(self, dconcat: np.ndarray):
        cfg = self.config
        elem_flat, screen_flat = cfg.flatten_sizes()
        o1 = elem_flat
        o2 = o1 + screen_flat
        o3 = o2 + cfg.semantic_dim + 1
        o4 = o3 + cfg.type_embed_dim
        return dconcat[:, :o1], dconcat[:, o1:o2], dconcat[:, o3:o4]

    def _head_forward(self, concat: np.ndarray, mode: str, rng: RngStream | None, keep_cache: bool):
        cfg = self.config
        h = concat
        caches = []
        for j in range(len(cfg.fc_widths)):
            p = self.params[f"fc{j + 1}"]
            z = nn.dense_forward(h, p)
            a = nn.relu(z)
            if mode == "train":
                mask = nn.dropout_mask(a.shape, cfg.dropout_rate, rng.child(f"fc{j + 1}"), dtype=a.dtype)
                out = a * mask
            else:
                mask = None
                out = a
            if keep_cache:
                caches.append((h, z, a, mask))
            h = out
        logits = nn.dense_forward(h, self.params["output"])[:, 0]
        if keep_cache:
            caches.append((h,))
        return logits, caches

    def _head_backward(self, dlogits: np.ndarray, caches, grads: dict):
        cfg = self.config
        (h_last,) = caches[-1]
        dout = dlogits[:, None]
        dh, dw, db = nn.dense_backward(dout, h_last, self.params["output"])
        grads["output.weights"] = dw
        grads["output.bias"] = db
        for j in reversed(range(len(cfg.fc_widths))):
            h, z, a, mask = caches[j]
            if mask is not None:
                dh = dh * mask
            dz = nn.relu_backward(dh, z)
            name = f"fc{j + 1}"
            dh, dw, db = nn.dense_backward(dz, h, self.params[name])
            grads[f"{name}.weights"] = dw
            grads[f"{name}.bias"] = db
        return dh

    def forward(self, bundle: FeatureBundle, mode: str = "infer", rng: RngStream | None = None) -> float:
        """Probability that a user would perceive the element as tappable.

        Dropout is active only in ``train`` mode (which then needs an rng).
        """
        if mode not in ("train", "infer"):
            raise nn.ContractViolation(f"mode must be 'train' or 'infer', got {mode!r}")
        if mode == "train" and rng is None:
            raise nn.ContractViolation("train-mode forward needs an RngStream")
        ds = dataset_from_bundles([bundle])
        logits = self._logits(ds, np.array([0]), mode=mode, rng=rng)
        return float(nn.sigmoid(logits[0]))

    def _logits(self, ds: "EncodedDataset", indices: np.ndarray, mode: str = "infer",
                rng: RngStream | None = None, keep_cache: bool = False,
                screen_cols1: np.ndarray | None = None, element_cols1: np.ndarray | None = None):
        elem_flat, elem_caches = self._tower_forward(
            ds.element_images[indices], "element",
            cols1=element_cols1[indices] if element_cols1 is not None else None,
            keep_cache=keep_cache,
        )
        screen_flat, screen_caches = self._tower_forward(
            ds.screen_images, "screen", cols1=screen_cols1, keep_cache=keep_cache
        )
        sidx = ds.screen_index[indices]
        type_rows = self.params["type_embedding"].weights[ds.type_idx[indices]]
        concat = self._concat(
            elem_flat,
            screen_flat[sidx],
            ds.semantic[indices],
            ds.word_count[indices],
            type_rows,
            ds.clickable[indices],
            ds.bbox[indices],
        )
        logits, head_caches = self._head_forward(concat, mode, rng, keep_cache)
        if not keep_cache:
            return logits
        return logits, (elem_caches, screen_caches, head_caches, sidx, indices)


# ---------------------------------------------------------------------------
# encoded datasets
# ---------------------------------------------------------------------------


@dataclass
class EncodedDataset:
    """Feature arrays for a corpus, with screens deduplicated."""

    element_images: np.ndarray
    screen_images: np.ndarray
    screen_index: np.ndarray
    semantic: np.ndarray
    word_count: np.ndarray
    type_idx: np.ndarray
    clickable: np.ndarray
    bbox: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)

    def take(self, indices) -> "EncodedDataset":
        """Row subset (duplicates allowed); the screen stack is shared."""
        indices = np.asarray(indices)
        return EncodedDataset(
            element_images=self.element_images[indices],
            screen_images=self.screen_images,
            screen_index=self.screen_index[indices],
            semantic=self.semantic[indices],
            word_count=self.word_count[indices],
            type_idx=self.type_idx[indices],
            clickable=self.clickable[indices],
            bbox=self.bbox[indices],
            labels=self.labels[indices],
        )


def encode_corpus(corpus: Corpus, table: EmbeddingTable, type_vocab) -> EncodedDataset:
    """Encode every example; the letterboxed screen tensor is computed once
    per screen and shared."""
    screen_ids = sorted({ex.screen_id for ex in corpus.examples})
    screen_images = {}
    for sid in screen_ids:
        screen_images[sid] = resize_screen(corpus.screens[sid].pixels)
    sid_to_index = {sid: i for i, sid in enumerate(screen_ids)}

    bundles = []
    for ex in corpus.examples:
        screen = corpus.screens[ex.screen_id]
        element = screen.find(ex.element_id)
        bundles.append(
            encode_element(screen, element, table, type_vocab, screen_image=screen_images[ex.screen_id])
        )
    return EncodedDataset(
        element_images=np.stack([b.element_image for b in bundles]),
        screen_images=(
            np.stack([screen_images[sid] for sid in screen_ids])
            if screen_ids
            else np.zeros((0, 300, 168, 3), dtype=np.float32)
        ),
        screen_index=np.array([sid_to_index[ex.screen_id] for ex in corpus.examples], dtype=np.int64),
        semantic=np.stack([b.semantic for b in bundles]),
        word_count=np.array([b.word_count for b in bundles], dtype=np.float32),
        type_idx=np.array([b.type_idx for b in bundles], dtype=np.int64),
        clickable=np.array([b.clickable for b in bundles], dtype=np.float32),
        bbox=np.stack([b.bbox for b in bundles]),
        labels=np.array([ex.human_label for ex in corpus.examples], dtype=np.float32),
    )


def dataset_from_bundles(bundles, labels=None) -> EncodedDataset:
    """Pack already-encoded bundles; screens are deduplicated by identity of
    the shared screen-image arrays."""
    screen_key_to_index: dict[int, int] = {}
    screen_images = []
    screen_index = []
    for b in bundles:
        key = id(b.screen_image)
        if key not in screen_key_to_index:
            screen_key_to_index[key] = len(screen_images)
            screen_images.append(b.screen_image)
        screen_index.append(screen_key_to_index[key])
    return EncodedDataset(
        element_images=np.stack([b.element_image for b in bundles]),
        screen_images=np.stack(screen_images),
        screen_index=np.array(screen_index, dtype=np.int64),
        semantic=np.stack([b.semantic for b in bundles]),
        word_count=np.array([b.word_count for b in bundles], dtype=np.float32),
        type_idx=np.array([b.type_idx for b in bundles], dtype=np.int64),
        clickable=np.array([b.clickable for b in bundles], dtype=np.float32),
        bbox=np.stack([b.bbox for b in bundles]),
        labels=(
            np.asarray(labels, dtype=np.float32)
            if labels is not None
            else np.zeros(len(bundles), dtype=np.float32)
        ),
    )


# ---------------------------------------------------------------------------
# loss/gradients and training
# ---------------------------------------------------------------------------


def loss_and_gradients(model: TappabilityModel, ds: EncodedDataset, indices: np.ndarray,
                       mode: str = "infer", rng: RngStream | None = None,
                       screen_cols1: np.ndarray | None = None,
                       element_cols1: np.ndarray | None = None):
    """Mean loss over the indexed examples and gradients for every parameter.

    This is the exact computation used by a training step; gradient checking
    calls it with dropout off.
    """
    logits, caches = model._logits(
        ds, indices, mode=mode, rng=rng, keep_cache=True,
        screen_cols1=screen_cols1, element_cols1=element_cols1,
    )
    elem_caches, screen_caches, head_caches, sidx, idx = caches
    labels = ds.labels[idx]
    losses, dlogits = nn.sigmoid_xent_loss(logits, labels)
    loss = float(np.mean(losses))
    dlogits = (dlogits / len(idx)).astype(model.dtype)

    grads: dict[str, np.ndarray] = {}
    dconcat = model._head_backward(dlogits, head_caches, grads)
    delem_flat, dscreen_rows, dtype_rows = model._split_dconcat(dconcat)

    model._tower_backward(delem_flat, elem_caches, "element", grads)

    n_screens = ds.screen_images.shape[0]
    dscreen_flat = np.zeros((n_screens, dscreen_rows.shape[1]), dtype=model.dtype)
    np.add.at(dscreen_flat, sidx, dscreen_rows)
    model._tower_backward(dscreen_flat, screen_caches, "screen", grads)

    demb = np.zeros_like(model.params["type_embedding"].weights)
    np.add.at(demb, ds.type_idx[idx], dtype_rows)
    grads["type_embedding.weights"] = demb
    return loss, grads


def predict_probabilities(model: TappabilityModel, ds: EncodedDataset,
                          indices=None, chunk: int = 512) -> np.ndarray:
    """Inference probabilities for many examples; pure in the parameters."""
    if indices is None:
        indices = np.arange(len(ds))
    indices = np.asarray(indices)
    screen_flat, _ = model._tower_forward(ds.screen_images, "screen")
    probs = np.empty(len(indices), dtype=np.float64)
    for start in range(0, len(indices), chunk):
        part = indices[start : start + chunk]
        elem_flat, _ = model._tower_forward(ds.element_images[part], "element")
        type_rows = model.params["type_embedding"].weights[ds.type_idx[part]]
        concat = model._concat(
            elem_flat,
            screen_flat[ds.screen_index[part]],
            ds.semantic[part],
            ds.word_count[part],
            type_rows,
            ds.clickable[part],
            ds.bbox[part],
        )
        logits, _ = model._head_forward(concat, "infer", None, False)
        probs[start : start + len(part)] = nn.sigmoid(logits)
    return probs


@dataclass
class TrainResult:
    checkpoint: "ModelCheckpoint"
    step_losses: np.ndarray
    threshold_source: str


def train(model: TappabilityModel, corpus: Corpus, table: EmbeddingTable,
          config: ModelConfig | None = None, log_every: int = 100) -> TrainResult:
    """Run the configured number of minibatch steps and calibrate a decision
    threshold on a held-out split.

    Batches are consecutive chunks of a fresh seeded shuffle each epoch. A
    nonfinite loss aborts with the step index. When the held-out split is
    unusable for a precision-recall sweep (empty or single-class), the
    threshold falls back to the training split.
    """
    if len(corpus) == 0:
        raise ValueError("corpus is empty")
    ds = encode_corpus(corpus, table, model.type_vocab)
    if model.embedding_fingerprint is None:
        model.embedding_fingerprint = table.fingerprint
    return train_on_dataset(model, ds, config or model.config, log_every=log_every)


def train_on_dataset(model: TappabilityModel, ds: EncodedDataset, cfg: ModelConfig,
                     log_every: int = 100) -> TrainResult:
    from .evaluation import pr_curve, select_threshold

    rng = RngStream(cfg.seed)
    n = len(ds)
    n_holdout = int(round(n * cfg.holdout_fraction))
    if 0 < n_holdout < n:
        perm = rng.child("holdout-split").permutation(n)
        holdout_idx, train_idx = perm[:n_holdout], perm[n_holdout:]
    else:
        holdout_idx, train_idx = np.array([], dtype=int), np.arange(n)

    # raw pixels never change, so their window unfolds are built once and
    # the first conv layer of each tower becomes a single matmul per step
    screen_cols1 = nn.im2col3x3(ds.screen_images)
    element_cols1 = nn.im2col3x3(ds.element_images)

    losses = np.empty(cfg.steps, dtype=np.float64)
    order: list[int] = []
    epoch = 0
    for step in range(cfg.steps):
        if len(order) == 0:
            shuffled = rng.child(f"shuffle/{epoch}").permutation(len(train_idx))
            order = list(train_idx[shuffled])
            epoch += 1
        batch = np.array(order[: cfg.batch_size])
        del order[: cfg.batch_size]

        loss, grads = loss_and_gradients(
            model, ds, batch, mode="train", rng=rng.child(f"dropout/{step}"),
            screen_cols1=screen_cols1, element_cols1=element_cols1,
        )
        if not np.isfinite(loss):
            raise TrainingDiverged(f"nonfinite loss at step {step}")
        losses[step] = loss
        for name in model.param_names():
            p = model.params[name]
            nn.adagrad_step(
                p, grads[f"{name}.weights"], grads.get(f"{name}.bias"), lr=cfg.learning_rate
            )
        if log_every and (step % log_every == 0 or step == cfg.steps - 1):
            window = losses[max(0, step - log_every + 1) : step + 1]
            log.info("step %d: loss %.4f (running mean %.4f)", step, loss, window.mean())

    threshold_source = "holdout"
    calib_idx = holdout_idx
    if len(calib_idx) == 0 or len(set(ds.labels[calib_idx])) < 2:
        if cfg.holdout_fraction > 0:
            log.warning("held-out split unusable for calibration, falling back to training split")
        threshold_source = "train"
        calib_idx = train_idx
    scores = predict_probabilities(model, ds, calib_idx)
    curve = pr_curve(list(scores), list(ds.labels[calib_idx].astype(int)))
    threshold = select_threshold(curve)

    checkpoint = ModelCheckpoint(model=model, threshold=threshold,
                                 model_version=model.version_digest())
    return TrainResult(checkpoint=checkpoint, step_losses=losses, threshold_source=threshold_source)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


@dataclass
class ModelCheckpoint:
    model: TappabilityModel
    threshold: float
    model_version: str

    def predict(self, bundle: FeatureBundle) -> float:
        return self.model.forward(bundle, mode="infer")


def _canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _config_to_json(config: ModelConfig) -> dict:
    out = asdict(config)
    for key in ("fc_widths", "element_hw", "screen_hw"):
        out[key] = list(out[key])
    return out


def _config_from_json(obj: dict) -> ModelConfig:
    return ModelConfig(**obj)


def _array_manifest(model: TappabilityModel) -> list:
    entries = []
    for name in model.param_names():
        p = model.params[name]
        entries.append((f"{name}.weights", p.weights))
        if p.bias is not None:
            entries.append((f"{name}.bias", p.bias))
        entries.append((f"{name}.w_acc", p.w_acc))
        if p.b_acc is not None:
            entries.append((f"{name}.b_acc", p.b_acc))
    return entries


def save_checkpoint(checkpoint: ModelCheckpoint, path) -> None:
    model = checkpoint.model
    entries = _array_manifest(model)
    header = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "model_version": checkpoint.model_version,
        "config": _config_to_json(model.config),
        "type_vocab": list(model.type_vocab),
        "embedding_fingerprint": model.embedding_fingerprint,
        "threshold": checkpoint.threshold,
        "dtype": "<f4",
        "arrays": [{"name": name, "shape": list(arr.shape)} for name, arr in entries],
    }
    blob = _canonical_json(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for _, arr in entries:
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def _read_header_and_offset(path) -> tuple:
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file")
        raw_len = fh.read(4)
        if len(raw_len) < 4:
            raise CheckpointError(f"{path}: truncated header")
        (header_len,) = struct.unpack("<I", raw_len)
        blob = fh.read(header_len)
        if len(blob) < header_len:
            raise CheckpointError(f"{path}: truncated header")
        header = json.loads(blob.decode("utf-8"))
    version = header.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version!r}")
    return header, len(CHECKPOINT_MAGIC) + 4 + header_len


def read_checkpoint_header(path) -> dict:
    """Parse just the header; array payloads are never read."""
    return _read_header_and_offset(path)[0]


def load_checkpoint(path, embedding_table: EmbeddingTable | None = None) -> ModelCheckpoint:
    """Rebuild a model from disk; predictions match the saved model bit for
    bit. A provided embedding table is checked against the stored
    fingerprint and mismatches raise a warning (not an error)."""
    header, offset = _read_header_and_offset(path)
    config = _config_from_json(header["config"])
    model = TappabilityModel.build(
        config, type_vocab=header["type_vocab"],
        embedding_fingerprint=header["embedding_fingerprint"],
    )
    data = Path(path).read_bytes()
    entries = _array_manifest(model)
    manifest = header["arrays"]
    if [e["name"] for e in manifest] != [name for name, _ in entries]:
        raise CheckpointError(f"{path}: array manifest does not match the declared layout")
    cursor = offset
    for (name, arr), entry in zip(entries, manifest):
        shape = tuple(entry["shape"])
        if shape != arr.shape:
            raise CheckpointError(f"{path}: array {name} has shape {shape}, expected {arr.shape}")
        nbytes = int(np.prod(shape)) * 4
        chunk = data[cursor : cursor + nbytes]
        if len(chunk) < nbytes:
            raise CheckpointError(f"{path}: truncated while reading array {name}")
        arr[...] = np.frombuffer(chunk, dtype="<f4").reshape(shape)
        cursor += nbytes
    if embedding_table is not None and header["embedding_fingerprint"] is not None:
        if embedding_table.fingerprint != header["embedding_fingerprint"]:
            warnings.warn(
                "embedding table fingerprint does not match the one the model was trained with",
                stacklevel=2,
            )
    return ModelCheckpoint(
        model=model, threshold=float(header["threshold"]), model_version=header["model_version"]
    )
