"""Message-passing model with a soft orthogonality correction.

Each layer computes ``sigma(prop(Z) - beta * Zn (Zn^T Z))`` where
``Z = dropout(H) W``, ``Zn`` is the column-L2-normalized ``Z`` and ``prop``
is a pluggable propagation backbone (one-hop normalized adjacency, or a
truncated personalized-propagation polynomial). The correction is realized
as two skinny products, so the n x n outer product is never materialized and
``beta = 0`` reduces the layer to the plain backbone exactly.

A shared bias-free prototype head maps the final embedding to row-stochastic
class/cluster predictions.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import numerics as nm
from .errors import ContractError, IngestionError, ParameterError, ShapeError
from .graph import Graph
from .rng import RngState
from .sparse import CsrMatrix

BACKBONES = ("gcn", "appnp")


@dataclass(frozen=True)
class SognConfig:
    backbone: str = "gcn"
    layers: int = 2
    hidden_dim: int = 64
    beta: float = 0.005
    dropout: float = 0.5
    appnp_alpha: float = 0.1
    appnp_hops: int = 10
    input_transform: str | None = None  # linear | mlp | None -> by depth

    def __post_init__(self):
        if self.backbone not in BACKBONES:
            raise ParameterError(f"unknown backbone {self.backbone!r}")
        if self.layers < 1:
            raise ParameterError("need at least one layer")
        if self.hidden_dim < 2:
            raise ParameterError("hidden_dim must be at least 2")
        if self.beta < 0:
            raise ParameterError("beta must be non-negative")
        if not 0.0 <= self.dropout < 1.0:
            raise ParameterError("dropout must lie in [0, 1)")
        if not 0.0 < self.appnp_alpha <= 1.0:
            raise ParameterError("appnp_alpha must lie in (0, 1]")
        if self.input_transform not in (None, "linear", "mlp"):
            raise ParameterError(f"unknown input transform {self.input_transform!r}")

    def resolved_input_transform(self) -> str:
        if self.input_transform is not None:
            return self.input_transform
        return "linear" if self.layers <= 3 else "mlp"


class ModelParams:
    """Trainable weights: input transform, per-layer matrices, prototype head."""

    def __init__(self, input_weights, layer_weights, w_proto):
        self.input_weights = list(input_weights)  # [(w, b), ...]
        self.layer_weights = list(layer_weights)
        self.w_proto = w_proto

    def all_parameters(self) -> list[nm.Parameter]:
        out = []
        for w, b in self.input_weights:
            out += [w, b]
        out += self.layer_weights
        out.append(self.w_proto)
        return out

    def named_values(self) -> dict[str, np.ndarray]:
        return {p.name: p.value.copy() for p in self.all_parameters()}

    def load_values(self, named: dict[str, np.ndarray]) -> None:
        for p in self.all_parameters():
            if p.name not in named:
                raise ContractError(f"checkpoint missing parameter {p.name!r}")
            v = np.asarray(named[p.name], dtype=np.float64)
            if v.shape != p.value.shape:
                raise ShapeError(
                    f"checkpoint shape {v.shape} for {p.name!r}, expected {p.value.shape}")
            p.value = v.copy()

    def zero_grads(self) -> None:
        for p in self.all_parameters():
            p.zero_grad()


def glorot(shape, rng: RngState) -> np.ndarray:
    limit = np.sqrt(6.0 / (shape[0] + shape[1]))
    return rng.uniform(shape, -limit, limit)


def init_params(config: SognConfig, input_dim: int, class_count: int, rng: RngState) -> ModelParams:
    """Glorot-uniform weights and zero biases, deterministic given the seed."""
    d = config.hidden_dim
    input_weights = []
    dims = [input_dim, d] if config.resolved_input_transform() == "linear" else [input_dim, d, d]
    for i in range(len(dims) - 1):
        w = nm.Parameter(glorot((dims[i], dims[i + 1]), rng), name=f"input.w{i}")
        b = nm.Parameter(np.zeros((1, dims[i + 1])), name=f"input.b{i}")
        input_weights.append((w, b))
    layer_weights = [
        nm.Parameter(glorot((d, d), rng), name=f"layer{i}.w") for i in range(config.layers)
    ]
    w_proto = nm.Parameter(glorot((d, class_count), rng), name="proto.w")
    return ModelParams(input_weights, layer_weights, w_proto)


def backbone_propagate(
    a_tilde: CsrMatrix,
    z,
    backbone: str,
    appnp_alpha: float = 0.1,
    appnp_hops: int = 10,
):
    """Apply the propagation operator to z; linear and differentiable in z.

    ``gcn`` is a single normalized-adjacency hop. ``appnp`` runs the
    personalized-propagation recurrence x <- (1-a) A x + a z for the given
    hop count, whose hop coefficients sum to one.
    """
    if backbone == "gcn":
        return nm.sparse_dense_matmul(a_tilde, z)
    if backbone == "appnp":
        h = z
        for _ in range(appnp_hops):
            h = nm.add(nm.scale(nm.sparse_dense_matmul(a_tilde, h), 1.0 - appnp_alpha),
                       nm.scale(z, appnp_alpha))
        return h
    raise ParameterError(f"unknown backbone {backbone!r}")


def sogn_layer(
    h,
    w: nm.Parameter,
    a_tilde: CsrMatrix,
    beta: float,
    backbone: str,
    rng: RngState,
    training: bool,
    dropout: float = 0.0,
    activation: bool = True,
    appnp_alpha: float = 0.1,
    appnp_hops: int = 10,
):
    """One soft-orthogonal message-passing layer.

    The correction term is computed as Zn (Zn^T Z), two products of skinny
    matrices; cost per layer stays O(n d^2 + nnz d).
    """
    x = nm.dropout(h, dropout, rng, training)
    z = nm.matmul(x, w)
    out = backbone_propagate(a_tilde, z, backbone, appnp_alpha, appnp_hops)
    if beta != 0.0:
        zn = nm.column_l2_normalize(z)
        corr = nm.matmul(zn, nm.matmul(nm.transpose(zn), z))
        out = nm.sub(out, nm.scale(corr, beta))
    return nm.relu(out) if activation else out


_FEATURE_OP_CACHE: dict[int, tuple[np.ndarray, object]] = {}


def _feature_operator(features: np.ndarray):
    """Return the ndarray itself or a cached CSR view for very sparse inputs."""
    key = id(features)
    hit = _FEATURE_OP_CACHE.get(key)
    if hit is not None and hit[0] is features:
        return hit[1]
    density = np.count_nonzero(features) / max(features.size, 1)
    op = features
    if features.size > 100_000 and density < 0.25:
        op = CsrMatrix.from_dense(features)
    if len(_FEATURE_OP_CACHE) > 8:
        _FEATURE_OP_CACHE.clear()
    _FEATURE_OP_CACHE[key] = (features, op)
    return op


def input_transform(g: Graph, params: ModelParams, config: SognConfig):
    """Map raw attributes to the width of the hidden layers (with activation)."""
    x = _feature_operator(g.features)
    h = None
    for w, b in params.input_weights:
        if h is None:
            prod = (nm.sparse_dense_matmul(x, w) if isinstance(x, CsrMatrix)
                    else nm.matmul(x, w))
        else:
            prod = nm.matmul(h, w)
        h = nm.relu(nm.add_bias(prod, b))
    return h


def forward(
    g: Graph,
    a_tilde: CsrMatrix,
    params: ModelParams,
    config: SognConfig,
    rng: RngState,
    training: bool,
):
    """Full pass: input transform, layer stack, prototype head.

    Returns the final embedding H (no activation on the last layer, so the
    clustering geometry keeps the full space) and the row-stochastic
    predictions Y'. Evaluation mode disables dropout.
    """
    h = input_transform(g, params, config)
    n_layers = len(params.layer_weights)
    for i, w in enumerate(params.layer_weights):
        h = sogn_layer(
            h, w, a_tilde,
            beta=config.beta, backbone=config.backbone, rng=rng, training=training,
            dropout=config.dropout, activation=i < n_layers - 1,
            appnp_alpha=config.appnp_alpha, appnp_hops=config.appnp_hops,
        )
    logits = nm.matmul(h, params.w_proto)
    return h, nm.softmax_rows(logits)


def soc_penalty(h: np.ndarray) -> float:
    """||H^T H - I||_F^2; zero iff the columns are orthonormal."""
    h = np.asarray(h, dtype=np.float64)
    gram = h.T @ h
    gram[np.diag_indices_from(gram)] -= 1.0
    return float((gram * gram).sum())


# ---------------------------------------------------------------------------
# checkpoints

_MAGIC = b"NCGC"
_VERSION = 1


def save_checkpoint(path, named_values: dict[str, np.ndarray]) -> None:
    """Versioned binary checkpoint of named float64 matrices."""
    path = Path(path)
    with path.open("wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", _VERSION))
        f.write(struct.pack("<I", len(named_values)))
        for name, value in named_values.items():
            raw = name.encode("utf-8")
            v = np.ascontiguousarray(value, dtype="<f8")
            if v.ndim != 2:
                raise ShapeError(f"checkpoint value {name!r} must be 2-D")
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
            f.write(struct.pack("<QQ", v.shape[0], v.shape[1]))
            f.write(v.tobytes())


def load_checkpoint(path) -> dict[str, np.ndarray]:
    path = Path(path)
    data = path.read_bytes()
    if data[:4] != _MAGIC:
        raise IngestionError(f"{path}: bad magic bytes, not a checkpoint")
    pos = 4
    (version,) = struct.unpack_from("<I", data, pos)
    pos += 4
    if version != _VERSION:
        raise IngestionError(f"{path}: unsupported checkpoint version {version}")
    (count,) = struct.unpack_from("<I", data, pos)
    pos += 4
    out: dict[str, np.ndarray] = {}
    try:
        for _ in range(count):
            (name_len,) = struct.unpack_from("<I", data, pos)
            pos += 4
            name = data[pos:pos + name_len].decode("utf-8")
            pos += name_len
            rows, cols = struct.unpack_from("<QQ", data, pos)
            pos += 16
            nbytes = rows * cols * 8
            if pos + nbytes > len(data):
                raise IngestionError(f"{path}: truncated at byte offset {len(data)}")
            out[name] = np.frombuffer(data[pos:pos + nbytes], dtype="<f8").reshape(rows, cols).copy()
            pos += nbytes
    except struct.error as e:
        raise IngestionError(f"{path}: truncated checkpoint ({e})") from e
    return out
