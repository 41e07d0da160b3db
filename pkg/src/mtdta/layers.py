"""Model family: residual convolutional protein branch, convolutional or
graph (GCN / GIN) drug branch, shared dense trunk, per-task heads.

All parameters live in a flat name -> Tensor dict so optimizers and the
checkpoint format can treat the model as a named collection.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .smiles import ATOM_FEATURE_DIM

__all__ = [
    "ModelSpec",
    "Model",
    "NAMED_SPECS",
    "gcn_layer",
    "gin_layer",
    "residual_conv_block",
    "global_max_pool",
    "build_model",
    "build_singletask_baseline",
    "model_forward",
    "save_checkpoint",
    "load_checkpoint",
]

TASKS = ("kd", "ki", "ic50", "ec50", "active", "ph", "qed")
SIGMOID_TASKS = {"active", "qed"}  # both heads are bounded in (0, 1)


@dataclass
class ModelSpec:
    drug_branch: str = "cnn"             # cnn | gcn | gin
    drug_depth: int = 1
    protein_conv_blocks: int = 2
    embed_dim: int = 128
    hidden_dim: int = 256
    conv_channels: int = 64
    protein_kernel: int = 7
    drug_kernel: int = 5
    tasks: tuple = TASKS
    residual: bool = True
    gin_epsilon: float = 0.0

    def validate(self, multitask=True):
        if self.drug_branch not in ("cnn", "gcn", "gin"):
            raise ValueError(f"unknown drug branch {self.drug_branch!r}")
        if self.drug_depth < 1 or self.protein_conv_blocks < 1:
            raise ValueError("depths must be positive")
        if multitask and tuple(self.tasks) != TASKS:
            raise ValueError(f"multi-task spec requires the task order {TASKS}")
        if min(self.embed_dim, self.hidden_dim, self.conv_channels) < 1:
            raise ValueError("widths must be positive")


def _named_spec(branch, depth, **kw):
    return ModelSpec(drug_branch=branch, drug_depth=depth, **kw)


# Numerals in the names give the drug-branch depth.
NAMED_SPECS = {
    "resCNN1": _named_spec("cnn", 1),
    "resCNN1gcn4": _named_spec("gcn", 4),
    "resCNN1gin5": _named_spec("gin", 5),
}


def glorot(rng, fan_in, fan_out, shape=None):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_in, fan_out))


def _weighted_row_sum(feats, coeffs):
    """out[v] = sum_u coeffs[v, u] * feats[u], summed in a canonical
    (sorted) order per coordinate so node relabeling is bit-exact."""
    n, d = feats.data.shape
    out_data = np.zeros((n, d))
    for v in range(n):
        idx = np.nonzero(coeffs[v])[0]
        contrib = coeffs[v, idx, None] * feats.data[idx]
        out_data[v] = np.sort(contrib, axis=0).sum(axis=0)
    out = T.Tensor(out_data)
    if feats._tracked():
        out._parents = (feats,)
        out._backward = lambda g: (coeffs.T @ g,)
    return out


def gcn_layer(node_feats, edges, weights):
    """Graph convolution H' = ReLU(A_hat H W).

    A_hat is the symmetric-normalized adjacency with self-loops:
    D^-1/2 (A + I) D^-1/2.
    """
    n = node_feats.shape[0]
    if n == 0:
        raise T.ShapeError("gcn_layer on an empty graph")
    a_hat = _normalized_adjacency(n, edges)
    return _weighted_row_sum(node_feats @ weights, a_hat).relu()


def _normalized_adjacency(n, edges):
    a = np.eye(n)
    for i, j in edges:
        a[i, j] = 1.0
        a[j, i] = 1.0
    d = a.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(d)
    return a * inv_sqrt[:, None] * inv_sqrt[None, :]


def gin_layer(node_feats, edges, mlp, epsilon=0.0):
    """Graph isomorphism layer: h'_v = MLP((1+eps) h_v + sum of neighbors).

    ``mlp`` is a list of (W, b) pairs applied with ReLU between layers
    and a linear final layer.
    """
    n = node_feats.shape[0]
    s = (1.0 + epsilon) * np.eye(n)
    for i, j in edges:
        s[i, j] = 1.0
        s[j, i] = 1.0
    h = _weighted_row_sum(node_feats, s)
    for idx, (w, b) in enumerate(mlp):
        h = h @ w + b
        if idx < len(mlp) - 1:
            h = h.relu()
    return h


def residual_conv_block(x, kernels, bias, projection=None):
    """ReLU(conv_same(x) + bias) plus a skip path.

    The skip is the identity when channel counts match, otherwise the
    width-1 convolution ``projection``.
    """
    main = T.conv1d(x, kernels, bias=bias, padding="same").relu()
    if projection is None:
        skip = x
    else:
        skip = x @ projection
    return main + skip


def global_max_pool(feats, true_len=None):
    """Coordinate-wise max over the first ``true_len`` rows (all if None)."""
    n = feats.shape[0] if true_len is None else true_len
    if n == 0:
        raise T.ShapeError("global_max_pool over zero rows")
    if true_len is not None and true_len < feats.shape[0]:
        feats = feats.slice_rows(0, true_len)
    return feats.max(axis=0)


class Model:
    """A built model: spec, named parameters, vocab sizes."""

    def __init__(self, spec, params, drug_vocab_size, protein_vocab_size, seed):
        self.spec = spec
        self.params = params
        self.drug_vocab_size = drug_vocab_size
        self.protein_vocab_size = protein_vocab_size
        self.seed = seed

    @property
    def parameter_count(self):
        return sum(p.size for p in self.params.values())

    def forward(self, drug_enc, protein_enc):
        return model_forward(self, drug_enc, protein_enc)

    def forward_batch(self, batch):
        """Per-task prediction Tensors of length len(batch).

        ``batch`` is a list of (drug_enc, protein_enc) pairs; records are
        processed independently, so outputs never depend on batch mates.
        """
        per_record = [self.forward(d, p) for d, p in batch]
        return {task: T.concat([out[task].reshape(1) for out in per_record])
                for task in self.spec.tasks}


def build_model(spec, drug_vocab_size, protein_vocab_size, seed):
    """Initialize the full multi-task model; Glorot-uniform weights, zero
    biases, deterministic under ``seed``."""
    spec.validate(multitask=True)
    return _build(spec, drug_vocab_size, protein_vocab_size, seed, multitask=True)


def build_singletask_baseline(kind, drug_vocab_size, protein_vocab_size, seed,
                              **overrides):
    """GraphDTA-style single-task comparison model (one regression head)."""
    depths = {"gcn3": ("gcn", 3), "gin5": ("gin", 5)}
    if kind not in depths:
        raise ValueError(f"unknown baseline kind {kind!r}")
    branch, depth = depths[kind]
    spec = ModelSpec(drug_branch=branch, drug_depth=depth,
                     tasks=("affinity",), **overrides)
    spec.validate(multitask=False)
    return _build(spec, drug_vocab_size, protein_vocab_size, seed, multitask=False)


def _build(spec, drug_vocab_size, protein_vocab_size, seed, multitask):
    rng = np.random.default_rng(seed)
    params = {}

    def param(name, array):
        params[name] = T.Tensor(array, requires_grad=True)

    def zeros(name, shape):
        param(name, np.zeros(shape))

    e, c, h = spec.embed_dim, spec.conv_channels, spec.hidden_dim

    # protein branch: embedding + residual conv stack
    param("protein.embed", glorot(rng, protein_vocab_size, e,
                                  (protein_vocab_size, e)))
    ch = e
    for i in range(spec.protein_conv_blocks):
        k = spec.protein_kernel
        param(f"protein.conv{i}.w", glorot(rng, k * ch, c, (k, ch, c)))
        zeros(f"protein.conv{i}.b", (1, c))
        if ch != c:
            param(f"protein.conv{i}.proj", glorot(rng, ch, c))
        ch = c

    # drug branch
    if spec.drug_branch == "cnn":
        param("drug.embed", glorot(rng, drug_vocab_size, e, (drug_vocab_size, e)))
        ch = e
        for i in range(spec.drug_depth):
            k = spec.drug_kernel
            param(f"drug.conv{i}.w", glorot(rng, k * ch, c, (k, ch, c)))
            zeros(f"drug.conv{i}.b", (1, c))
            if ch != c:
                param(f"drug.conv{i}.proj", glorot(rng, ch, c))
            ch = c
        drug_out = c
    else:
        d_in = ATOM_FEATURE_DIM
        for i in range(spec.drug_depth):
            if spec.drug_branch == "gcn":
                param(f"drug.gcn{i}.w", glorot(rng, d_in, e))
            else:
                param(f"drug.gin{i}.w1", glorot(rng, d_in, e))
                zeros(f"drug.gin{i}.b1", (1, e))
                param(f"drug.gin{i}.w2", glorot(rng, e, e))
                zeros(f"drug.gin{i}.b2", (1, e))
            d_in = e
        drug_out = e

    # trunk: two dense layers over the concatenated branch readouts
    trunk_in = drug_out + c
    param("trunk.w1", glorot(rng, trunk_in, h))
    zeros("trunk.b1", (1, h))
    param("trunk.w2", glorot(rng, h, h))
    zeros("trunk.b2", (1, h))

    for task in spec.tasks:
        param(f"head.{task}.w", glorot(rng, h, 1))
        zeros(f"head.{task}.b", (1, 1))

    return Model(spec, params, drug_vocab_size, protein_vocab_size, seed)


def _conv_stack(model, prefix, x, blocks):
    p = model.params
    for i in range(blocks):
        proj = p.get(f"{prefix}.conv{i}.proj")
        x = residual_conv_block(x, p[f"{prefix}.conv{i}.w"],
                                p[f"{prefix}.conv{i}.b"], projection=proj)
    return x


def _drug_vector(model, drug_enc):
    spec, p = model.spec, model.params
    if spec.drug_branch == "cnn":
        idx = drug_enc.indices[:drug_enc.true_len]
        x = T.gather_rows(p["drug.embed"], idx)
        x = _conv_stack(model, "drug", x, spec.drug_depth)
        return global_max_pool(x)
    h = T.Tensor(drug_enc.atom_features)
    for i in range(spec.drug_depth):
        if spec.drug_branch == "gcn":
            h = gcn_layer(h, drug_enc.edges, p[f"drug.gcn{i}.w"])
        else:
            mlp = [(p[f"drug.gin{i}.w1"], p[f"drug.gin{i}.b1"]),
                   (p[f"drug.gin{i}.w2"], p[f"drug.gin{i}.b2"])]
            h = gin_layer(h, drug_enc.edges, mlp, epsilon=spec.gin_epsilon)
    return global_max_pool(h)


def model_forward(model, drug_enc, protein_enc):
    """Predictions for one record: dict task -> scalar Tensor.

    The active and qed heads pass through a sigmoid; all other heads are
    linear (p-scale affinities and pH are unbounded).
    """
    spec, p = model.spec, model.params

    idx = protein_enc.indices[:protein_enc.true_len]
    prot = T.gather_rows(p["protein.embed"], idx)
    prot = _conv_stack(model, "protein", prot, spec.protein_conv_blocks)
    prot_vec = global_max_pool(prot)

    drug_vec = _drug_vector(model, drug_enc)

    z = T.concat([drug_vec, prot_vec]).reshape(1, -1)
    z = (z @ p["trunk.w1"] + p["trunk.b1"]).relu()
    z = (z @ p["trunk.w2"] + p["trunk.b2"]).relu()

    out = {}
    for task in spec.tasks:
        y = (z @ p[f"head.{task}.w"] + p[f"head.{task}.b"]).reshape(())
        if task in SIGMOID_TASKS:
            y = y.sigmoid()
        out[task] = y
    return out


# -- checkpoint format ------------------------------------------------
# Header: magic, u32 manifest length, JSON manifest.
# Then per parameter: u16 name length, name utf-8, u8 ndim, u32 extents,
# row-major little-endian float64 values.

_MAGIC = b"MTDTA1\n"


def save_checkpoint(path, model, extra=None):
    manifest = {
        "spec": {k: list(v) if isinstance(v, tuple) else v
                 for k, v in vars(model.spec).items()},
        "seed": model.seed,
        "task_order": list(model.spec.tasks),
        "drug_vocab_size": model.drug_vocab_size,
        "protein_vocab_size": model.protein_vocab_size,
        "extra": extra or {},
    }
    blob = json.dumps(manifest, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for name in sorted(model.params):
            data = model.params[name].data
            enc = name.encode("utf-8")
            fh.write(struct.pack("<H", len(enc)))
            fh.write(enc)
            fh.write(struct.pack("<B", data.ndim))
            fh.write(struct.pack(f"<{data.ndim}I", *data.shape))
            fh.write(np.ascontiguousarray(data, dtype="<f8").tobytes())


def load_checkpoint(path):
    with open(path, "rb") as fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        (mlen,) = struct.unpack("<I", fh.read(4))
        manifest = json.loads(fh.read(mlen).decode("utf-8"))
        params = {}
        while True:
            head = fh.read(2)
            if not head:
                break
            (nlen,) = struct.unpack("<H", head)
            name = fh.read(nlen).decode("utf-8")
            (ndim,) = struct.unpack("<B", fh.read(1))
            shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
            count = int(np.prod(shape)) if ndim else 1
            data = np.frombuffer(fh.read(8 * count), dtype="<f8").reshape(shape)
            params[name] = T.Tensor(data.copy(), requires_grad=True)
    spec_kw = dict(manifest["spec"])
    spec_kw["tasks"] = tuple(spec_kw["tasks"])
    spec = ModelSpec(**spec_kw)
    model = Model(spec, params, manifest["drug_vocab_size"],
                  manifest["protein_vocab_size"], manifest["seed"])
    return model, manifest.get("extra", {})
