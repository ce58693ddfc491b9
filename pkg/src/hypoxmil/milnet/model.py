"""Attention-pooled MIL classifier.

Per tile: a stack of (3x3 conv, ReLU, 2x2 maxpool) blocks followed by global
average pooling gives an instance feature ``h_i``. Attention pooling scores
each instance with ``w . tanh(V h_i)``, softmaxes the scores across the bag
and takes the weighted sum ``z``. The head is one dense ReLU layer and a
two-way softmax classifier; class 1 is hypoxic.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .. import ndnum as nd

HYPOXIC = 1
NORMOXIC = 0
CLASS_NAMES = {HYPOXIC: "hypoxic", NORMOXIC: "normoxic"}


@dataclass
class ModelConfig:
    backbone: list[int] = field(default_factory=lambda: [8, 16, 32])
    feature_dim: int = 32
    attention_hidden: int = 64
    head_hidden: int = 64
    n_classes: int = 2
    tile_size: int = 512
    in_channels: int = 3

    def __post_init__(self):
        self.backbone = [int(c) for c in self.backbone]
        self.validate()

    def validate(self) -> None:
        dims = [self.feature_dim, self.attention_hidden, self.head_hidden, self.tile_size, self.in_channels]
        if any(int(d) <= 0 for d in dims) or any(c <= 0 for c in self.backbone):
            raise ValueError(f"all model dimensions must be positive: {self}")
        if self.n_classes != 2:
            raise ValueError("only two-class output is supported")
        if self.backbone and self.backbone[-1] != self.feature_dim:
            raise ValueError(
                f"feature_dim ({self.feature_dim}) must equal the last backbone width ({self.backbone[-1]})"
            )
        if self.tile_size >> len(self.backbone) < 1:
            raise ValueError(f"tile_size {self.tile_size} too small for {len(self.backbone)} pooling blocks")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown ModelConfig keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class AttentionOutput:
    weights: np.ndarray  # one per instance, in input order
    pooled: np.ndarray  # D-dim bag feature
    probs: np.ndarray  # [normoxic, hypoxic]

    @property
    def score(self) -> float:
        return float(self.probs[HYPOXIC])


@dataclass
class Bag:
    sample_id: str
    instances: list  # tiles (H, W, 3) or D-dim embeddings
    label: Optional[int] = None
    keys: Optional[list] = None  # stable per-instance ids, e.g. tile_index


def param_shapes(cfg: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    shapes = []
    c_in = cfg.in_channels
    for i, c in enumerate(cfg.backbone):
        shapes.append((f"conv{i}.kernel", (c, c_in, 3, 3)))
        shapes.append((f"conv{i}.bias", (c,)))
        c_in = c
    d, a, h = cfg.feature_dim, cfg.attention_hidden, cfg.head_hidden
    shapes += [
        ("attn.V", (d, a)),
        ("attn.w", (a, 1)),
        ("head.W1", (d, h)),
        ("head.b1", (h,)),
        ("head.W2", (h, cfg.n_classes)),
        ("head.b2", (cfg.n_classes,)),
    ]
    return shapes


def init_params(cfg: ModelConfig, rng: np.random.Generator, dtype=np.float32) -> nd.ParamStore:
    """He-style uniform fan-in init; biases start at zero."""
    store = nd.ParamStore()
    for name, shape in param_shapes(cfg):
        if len(shape) == 1:
            store.add(name, np.zeros(shape, dtype=dtype))
            continue
        fan_in = int(np.prod(shape[1:])) if len(shape) == 4 else shape[0]
        bound = np.sqrt(6.0 / fan_in)
        store.add(name, rng.uniform(-bound, bound, size=shape).astype(dtype))
    return store


def tiles_to_input(tiles: Sequence[np.ndarray], dtype=np.float32) -> np.ndarray:
    """Stack (H, W, 3) tiles into the channel-major batch ``[3, N, H, W]``.

    uint8 tiles are scaled to [0, 1]; float tiles are taken as already scaled.
    """
    arr = np.stack([np.asarray(t) for t in tiles])
    if arr.ndim != 4:
        raise nd.ShapeError(f"tiles must be (H, W, C) arrays, got batch shape {arr.shape}")
    if arr.dtype == np.uint8:
        arr = arr.astype(dtype) / np.dtype(dtype).type(255)
    return np.ascontiguousarray(arr.astype(dtype, copy=False).transpose(3, 0, 1, 2))


def canonical_order(instances: Sequence[np.ndarray], keys: Optional[Sequence] = None) -> np.ndarray:
    """Permutation putting instances in an order independent of input order."""
    if keys is not None:
        if len(keys) != len(instances):
            raise ValueError("keys and instances differ in length")
        return np.array(sorted(range(len(keys)), key=lambda i: (keys[i], np.asarray(instances[i]).tobytes())))
    blobs = [np.ascontiguousarray(x).tobytes() for x in instances]
    return np.array(sorted(range(len(blobs)), key=blobs.__getitem__), dtype=int)


class MilModel:
    def __init__(self, config: ModelConfig, params: nd.ParamStore):
        self.config = config
        self.params = params
        expected = [n for n, _ in param_shapes(config)]
        have = params.names()
        if have != expected:
            raise ValueError(f"parameter names {have} do not match config {expected}")
        for name, shape in param_shapes(config):
            if params[name].shape != shape:
                raise nd.ShapeError(f"{name}: expected {shape}, got {params[name].shape}")

    @classmethod
    def create(cls, config: ModelConfig, seed: int = 0, dtype=np.float32) -> "MilModel":
        return cls(config, init_params(config, np.random.default_rng(seed), dtype))

    @property
    def dtype(self):
        return next(iter(self.params.values())).dtype

    def astype(self, dtype) -> "MilModel":
        return MilModel(self.config, self.params.astype(dtype))

    # graph builders; each returns ndnum tensors so training can backprop

    def backbone(self, x: nd.Tensor, keep: Optional[list] = None) -> nd.Tensor:
        """[3, N, S, S] tiles -> [N, D] features. ``keep`` collects the
        post-ReLU activation of each block (before pooling)."""
        h = x
        p = self.params
        for i in range(len(self.config.backbone)):
            h = nd.relu(nd.conv2d(h, p[f"conv{i}.kernel"], p[f"conv{i}.bias"]))
            if keep is not None:
                keep.append(h)
            h = nd.maxpool2(h)
        return nd.transpose(nd.global_avg_pool(h))

    def features_from_activation(self, act: nd.Tensor, block: int) -> nd.Tensor:
        """Resume the backbone from the post-ReLU activation of ``block``."""
        h = nd.maxpool2(act)
        p = self.params
        for i in range(block + 1, len(self.config.backbone)):
            h = nd.maxpool2(nd.relu(nd.conv2d(h, p[f"conv{i}.kernel"], p[f"conv{i}.bias"])))
        return nd.transpose(nd.global_avg_pool(h))

    def attention_pool(self, h: nd.Tensor) -> tuple[nd.Tensor, nd.Tensor]:
        n = h.shape[0]
        p = self.params
        e = nd.reshape(nd.matmul(nd.tanh_act(nd.matmul(h, p["attn.V"])), p["attn.w"]), (n,))
        a = nd.softmax(e)
        z = nd.reshape(nd.matmul(nd.reshape(a, (1, n)), h), (h.shape[1],))
        return a, z

    def head_logits(self, z: nd.Tensor) -> nd.Tensor:
        p = self.params
        d = z.shape[0]
        r = nd.relu(nd.add(nd.matmul(nd.reshape(z, (1, d)), p["head.W1"]), p["head.b1"]))
        logits = nd.add(nd.matmul(r, p["head.W2"]), p["head.b2"])
        return nd.reshape(logits, (self.config.n_classes,))

    def graph_from_features(self, h: nd.Tensor):
        a, z = self.attention_pool(h)
        logits = self.head_logits(z)
        return a, z, logits, nd.softmax(logits)

    def graph(self, x: np.ndarray):
        """Full forward graph for a prepared ``[3, N, S, S]`` batch."""
        xt = nd.Tensor(x, requires_grad=False)
        return self.graph_from_features(self.backbone(xt))

    def loss(self, x: np.ndarray, label: int) -> nd.Tensor:
        _, _, _, probs = self.graph(x)
        return nd.cross_entropy(probs, int(label))


def _check_bag(instances) -> None:
    if len(instances) == 0:
        raise ValueError("bag must contain at least one instance")
    shape = np.shape(instances[0])
    for x in instances:
        if np.shape(x) != shape:
            raise nd.ShapeError(f"bag instances must share one shape; got {shape} and {np.shape(x)}")


def _unpermute(weights: np.ndarray, order: np.ndarray) -> np.ndarray:
    out = np.empty_like(weights)
    out[order] = weights
    return out


def forward_bag(model: MilModel, bag, keys: Optional[Sequence] = None) -> AttentionOutput:
    """Score a bag of (H, W, 3) tiles; accepts a :class:`Bag` or a tile list."""
    instances = bag.instances if isinstance(bag, Bag) else list(bag)
    keys = bag.keys if isinstance(bag, Bag) and keys is None else keys
    _check_bag(instances)
    if np.shape(instances[0])[-1] != model.config.in_channels:
        raise nd.ShapeError(f"tile shape {np.shape(instances[0])} incompatible with model")
    order = canonical_order(instances, keys)
    x = tiles_to_input([instances[i] for i in order], model.dtype)
    a, z, _, probs = model.graph(x)
    return AttentionOutput(_unpermute(a.data, order), z.data.copy(), probs.data.copy())


def forward_bag_embeddings(model: MilModel, embeddings, keys: Optional[Sequence] = None) -> AttentionOutput:
    """Attention pooling and head applied to precomputed D-dim features."""
    instances = embeddings.instances if isinstance(embeddings, Bag) else list(embeddings)
    _check_bag(instances)
    width = np.shape(instances[0])
    if width != (model.config.feature_dim,):
        raise nd.ShapeError(f"embedding shape {width} != ({model.config.feature_dim},)")
    order = canonical_order([np.asarray(e, dtype=model.dtype) for e in instances], keys)
    h = nd.Tensor(np.stack([np.asarray(instances[i], dtype=model.dtype) for i in order]), requires_grad=False)
    a, z, _, probs = model.graph_from_features(h)
    return AttentionOutput(_unpermute(a.data, order), z.data.copy(), probs.data.copy())
