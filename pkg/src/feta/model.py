"""Spectral-filtered transformer encoder, its ablations, training and checkpoints.

Parameters live in a flat ``dict`` of named tensors.  Graphs of equal size
are stacked into batches and processed on a single tape.
"""

from __future__ import annotations

import base64
import json
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import tensor as T
from .attention import (
    AttentionConfig,
    build_pe_kernel,
    gat_attention,
    kernel_pe_attention,
    laplacian_pe_features,
    random_signs,
    scaled_dot_attention,
)
from .coeff import CoeffGNNParams, coefficients_from_attention, init_coeff_params, orthogonality_penalty
from .errors import ConfigError, DimensionError, DomainError, NumericalAbort
from .filters import apply_filter, arma_apply
from .optim import Adam, PlateauSchedule
from .spectral import Graph, eigendecompose_many, normalized_laplacian

FILTER_KINDS = ("chebyshev", "static-chebyshev", "arma", "none")
ATTENTION_KINDS = ("scaled-dot", "gat", "kernel-pe")
TASKS = ("node-class", "graph-class", "graph-regress")
CHECKPOINT_FORMAT = "feta-ckpt/1"
ARMA_POLE_BOUND = 0.95


@dataclass
class FetaConfig:
    in_dim: int = 1
    n_classes: int = 2
    layers: int = 3
    hidden: int = 64
    heads: int = 4
    order: int = 8
    filter: str = "chebyshev"
    attention: str = "scaled-dot"
    tie_query_key: bool = True
    pe_mode: str = "none"
    pe_k: int = 8
    pe_beta: float = 1.0
    pe_gamma: float = 0.5
    pe_p: int = 3
    lambda_reg: float = 1e-2
    task: str = "node-class"
    coeff_layers: int = 2
    coeff_hidden: int = 32
    arma_branches: int = 0
    arma_iterations: int = 15
    lambda_max: str = "exact"

    def __post_init__(self):
        if self.filter not in FILTER_KINDS:
            raise ConfigError(f"filter must be one of {FILTER_KINDS}, got {self.filter!r}")
        if self.attention not in ATTENTION_KINDS:
            raise ConfigError(f"attention must be one of {ATTENTION_KINDS}, got {self.attention!r}")
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.heads < 1 or self.hidden % self.heads:
            raise ConfigError(f"hidden={self.hidden} must be a positive multiple of heads={self.heads}")
        if self.order < 0 or self.layers < 1:
            raise ConfigError("order must be >= 0 and layers >= 1")
        if self.attention == "kernel-pe" and self.pe_mode not in ("kernel_diffusion", "kernel_random_walk"):
            raise ConfigError("kernel-pe attention needs pe_mode kernel_diffusion or kernel_random_walk")
        if self.pe_mode not in ("none", "lap_static", "kernel_diffusion", "kernel_random_walk"):
            raise ConfigError(f"unknown pe_mode {self.pe_mode!r}")
        if self.lambda_max not in ("exact", "fixed"):
            raise ConfigError("lambda_max must be 'exact' or 'fixed'")

    @property
    def head_dim(self) -> int:
        return self.hidden // self.heads

    @property
    def branches(self) -> int:
        return self.arma_branches or max(self.order, 1)

    @property
    def out_dim(self) -> int:
        return 1 if self.task == "graph-regress" else self.n_classes

    def attention_config(self) -> AttentionConfig:
        return AttentionConfig(
            heads=self.heads, d_in=self.hidden, d_out=self.head_dim, tie_query_key=self.tie_query_key
        )

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class TrainSettings:
    lr: float = 1e-3
    max_epochs: int = 200
    batch_size: int = 32
    plateau_patience: int = 5
    stop_patience: int = 15
    lr_factor: float = 0.5
    min_lr: float = 1e-6


# ---------------------------------------------------------------------------
# parameters


def init_params(cfg: FetaConfig, rng) -> dict:
    """Fresh parameters in a deterministic creation order."""
    d, dh, h, m = cfg.hidden, cfg.head_dim, cfg.heads, cfg.order + 1
    P = {}

    def dense(name, fan_in, fan_out):
        P[name + ".W"] = T.parameter(rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_in, fan_out)))
        P[name + ".b"] = T.parameter(np.zeros(fan_out))

    dense("embed", cfg.in_dim, d)
    if cfg.pe_mode == "lap_static":
        P["pe.proj"] = T.parameter(rng.normal(0.0, 1.0 / np.sqrt(max(cfg.pe_k, 1)), size=(cfg.pe_k, d)))
    for l in range(cfg.layers):
        pre = f"l{l}."
        for k in range(h):
            if cfg.attention == "gat":
                P[f"{pre}att.W{k}"] = T.parameter(rng.normal(0.0, 1.0 / np.sqrt(d), size=(d, dh)))
                P[f"{pre}att.a_src{k}"] = T.parameter(rng.normal(0.0, 1.0 / np.sqrt(dh), size=(dh, 1)))
                P[f"{pre}att.a_dst{k}"] = T.parameter(rng.normal(0.0, 1.0 / np.sqrt(dh), size=(dh, 1)))
            else:
                P[f"{pre}att.W_Q{k}"] = T.parameter(rng.normal(0.0, 1.0 / np.sqrt(d), size=(d, dh)))
                if not cfg.tie_query_key:
                    P[f"{pre}att.W_K{k}"] = T.parameter(rng.normal(0.0, 1.0 / np.sqrt(d), size=(d, dh)))
                P[f"{pre}att.W_V{k}"] = T.parameter(rng.normal(0.0, 1.0 / np.sqrt(d), size=(d, dh)))
        if cfg.filter == "static-chebyshev":
            for k in range(h):
                e0 = np.zeros(m)
                e0[0] = 1.0
                P[f"{pre}alpha{k}"] = T.parameter(e0)
        dense(pre + "out", d, d)
        fuse_in = d if cfg.filter == "none" else 2 * d
        dense(pre + "fuse1", fuse_in, d)
        dense(pre + "fuse2", d, d)
        P[pre + "ln.g"] = T.parameter(np.ones(d))
        P[pre + "ln.b"] = T.parameter(np.zeros(d))
    if cfg.filter in ("chebyshev", "arma"):
        out_dim = 2 * cfg.branches if cfg.filter == "arma" else None
        cp = init_coeff_params(cfg.order, rng, cfg.coeff_layers, cfg.coeff_hidden, out_dim=out_dim)
        P.update(cp.as_dict())
    dense("head", d, cfg.out_dim)
    return P


# ---------------------------------------------------------------------------
# batching


@dataclass
class GraphBatch:
    X: np.ndarray
    Lt: np.ndarray
    adj: np.ndarray
    labels: np.ndarray
    mask: np.ndarray
    index: np.ndarray
    kernel: np.ndarray | None = None
    eigvecs: np.ndarray | None = None

    @property
    def size(self) -> int:
        return self.X.shape[0]


@dataclass
class PreparedSplit:
    """Per-size stacks of everything a forward pass needs, computed once."""

    buckets: dict = field(default_factory=dict)
    count: int = 0

    def batches(self, batch_size: int, rng=None):
        sizes = sorted(self.buckets)
        chunks = []
        for n in sizes:
            b = self.buckets[n]
            order = np.arange(len(b["index"]))
            if rng is not None:
                order = rng.permutation(order)
            for s in range(0, len(order), batch_size):
                chunks.append((n, order[s : s + batch_size]))
        if rng is not None:
            chunks = [chunks[i] for i in rng.permutation(len(chunks))]
        for n, sel in chunks:
            b = self.buckets[n]
            yield GraphBatch(
                X=b["X"][sel],
                Lt=b["Lt"][sel],
                adj=b["adj"][sel],
                labels=b["labels"][sel],
                mask=b["mask"][sel],
                index=b["index"][sel],
                kernel=None if b["kernel"] is None else b["kernel"][sel],
                eigvecs=None if b["eigvecs"] is None else b["eigvecs"][sel],
            )


def prepare_split(cfg: FetaConfig, graphs) -> PreparedSplit:
    """Stack graphs by size and precompute rescaled Laplacians and encodings."""
    groups = {}
    for i, g in enumerate(graphs):
        groups.setdefault(g.n, []).append(i)
    out = PreparedSplit(count=len(graphs))
    for n, idx in sorted(groups.items()):
        gs = [graphs[i] for i in idx]
        adj = np.stack([g.adjacency() for g in gs])
        L = normalized_laplacian(adj)
        need_basis = cfg.lambda_max == "exact" or cfg.pe_mode in ("lap_static", "kernel_diffusion")
        bases = eigendecompose_many(L) if need_basis else None
        if cfg.lambda_max == "exact":
            lam_max = np.array([max(b.lambda_max, 1e-12) for b in bases])
        else:
            lam_max = np.full(len(gs), 2.0)
        Lt = 2.0 * L / lam_max[:, None, None] - np.eye(n)
        kernel = None
        if cfg.pe_mode == "kernel_diffusion":
            kernel = np.stack([(b.U * np.exp(-cfg.pe_beta * b.lam)) @ b.U.T for b in bases])
            kernel = np.maximum(kernel, 0.0)
        elif cfg.pe_mode == "kernel_random_walk":
            kernel = np.stack([build_pe_kernel(l, "kernel_random_walk", {"gamma": cfg.pe_gamma, "p": cfg.pe_p}) for l in L])
            kernel = np.maximum(kernel, 0.0)
        eigvecs = np.stack([b.U for b in bases]) if cfg.pe_mode == "lap_static" else None
        # unlabelled graphs get placeholder targets and supervise nothing
        if cfg.task == "node-class":
            labels = np.stack([np.zeros(n, np.int64) if g.labels is None else np.asarray(g.labels, dtype=np.int64)
                               for g in gs])
            mask = np.stack([np.zeros(n, bool) if g.labels is None
                             else np.ones(n, bool) if g.mask is None else np.asarray(g.mask, bool) for g in gs])
        else:
            labels = np.array([0.0 if g.labels is None else np.asarray(g.labels).reshape(-1)[0] for g in gs])
            mask = np.stack([np.full(n, g.labels is not None) for g in gs])
        out.buckets[n] = {
            "X": np.stack([g.X for g in gs]),
            "Lt": Lt,
            "adj": adj,
            "labels": labels,
            "mask": mask,
            "index": np.asarray(idx),
            "kernel": kernel,
            "eigvecs": eigvecs,
        }
    return out


def as_batch(cfg: FetaConfig, g: Graph) -> GraphBatch:
    return next(prepare_split(cfg, [g]).batches(1))


# ---------------------------------------------------------------------------
# forward


def _attention_params(cfg, params, l):
    pre = f"l{l}.att."
    names = ("W", "a_src", "a_dst") if cfg.attention == "gat" else ("W_Q", "W_K", "W_V")
    return {n: [params[f"{pre}{n}{k}"] for k in range(cfg.heads)] for n in names if f"{pre}{n}0" in params}


def _attend(cfg, params, l, batch, X):
    acfg = cfg.attention_config()
    ap = _attention_params(cfg, params, l)
    if cfg.attention == "gat":
        return gat_attention(acfg, batch.adj, X, ap)
    if cfg.attention == "kernel-pe":
        return kernel_pe_attention(acfg, X, batch.kernel, ap)
    return scaled_dot_attention(acfg, X, ap)


def _linear(params, name, X):
    return T.matmul(X, params[name + ".W"]) + params[name + ".b"]


def feta_layer_forward(cfg: FetaConfig, params, batch, X, layer: int = 0, alpha_override=None):
    """One encoder layer; returns ``(output, alphas)``.

    ``alphas`` has shape ``(B, K + 1, h)`` for the dynamic filter, ``(K + 1, h)``
    for the static filter, ``(B, 2S, h)`` for ARMA, and is ``None`` for the
    plain transformer layer.  ``alpha_override`` replaces every head's
    coefficients (broadcastable to ``(B, K + 1)``).
    """
    if isinstance(batch, Graph):
        batch = as_batch(cfg, batch)
    X = T.as_tensor(X)
    if X.shape[-1] != cfg.hidden:
        raise DimensionError(f"layer input width {X.shape[-1]} != hidden {cfg.hidden}")
    single = X.ndim == batch.Lt.ndim - 1
    if single:
        X = T.reshape(X, (1,) + X.shape)
    amap, outs = _attend(cfg, params, layer, batch, X)
    pre = f"l{layer}."
    Xp = _linear(params, pre + "out", T.concat(outs, axis=-1))
    alphas = None
    if cfg.filter == "none":
        fused_in = Xp
    else:
        dynamic = cfg.filter in ("chebyshev", "arma") and alpha_override is None
        coeff = CoeffGNNParams.from_dict(params) if dynamic else None
        H, cols = [], []
        for k in range(cfg.heads):
            if alpha_override is not None:
                a = T.as_tensor(alpha_override)
            elif cfg.filter == "static-chebyshev":
                a = params[f"{pre}alpha{k}"]
            else:
                a = coefficients_from_attention(coeff, amap.heads[k])
            if cfg.filter == "arma" and alpha_override is None:
                S = cfg.branches
                gains = T.getitem(a, (Ellipsis, slice(0, S)))
                poles = T.tanh(T.getitem(a, (Ellipsis, slice(S, 2 * S)))) * ARMA_POLE_BOUND
                H.append(arma_apply((poles, gains), batch.Lt, outs[k], cfg.arma_iterations))
            else:
                H.append(apply_filter(a, batch.Lt, outs[k]))
            cols.append(T.reshape(a, a.shape + (1,)))
        alphas = T.concat(cols, axis=-1)
        fused_in = T.concat([Xp, T.concat(H, axis=-1)], axis=-1)
    f = _linear(params, pre + "fuse2", T.relu(_linear(params, pre + "fuse1", fused_in)))
    out = T.layer_norm(X + f) * params[pre + "ln.g"] + params[pre + "ln.b"]
    if single:
        out = T.reshape(out, out.shape[1:])
    return out, alphas


def feta_static_forward(cfg: FetaConfig, params, batch, X, layer: int = 0):
    """Layer with per-head learnable coefficients shared across graphs."""
    if cfg.filter != "static-chebyshev":
        cfg = _with(cfg, filter="static-chebyshev")
    return feta_layer_forward(cfg, params, batch, X, layer)


def _with(cfg, **changes):
    d = asdict(cfg)
    d.update(changes)
    return FetaConfig(**d)


def forward(cfg: FetaConfig, params, batch, signs=None):
    """Full model; returns ``(logits, [alphas per layer])``.

    Node tasks give logits ``(B, n, out)``, graph tasks ``(B, out)``.
    ``signs`` flips Laplacian eigenvectors for the static positional encoding.
    """
    if isinstance(batch, Graph):
        batch = as_batch(cfg, batch)
    H = _linear(params, "embed", T.Tensor(batch.X))
    if cfg.pe_mode == "lap_static":
        if cfg.pe_k <= batch.X.shape[1]:
            H = laplacian_pe_features(batch.eigvecs, H, cfg.pe_k, params["pe.proj"], signs)
        else:
            H = _pe_padded(cfg, params, batch, H, signs)
    all_alphas = []
    for l in range(cfg.layers):
        H, a = feta_layer_forward(cfg, params, batch, H, l)
        all_alphas.append(a)
    if cfg.task != "node-class":
        H = T.mean(H, axis=-2)
    return _linear(params, "head", H), all_alphas


def _pe_padded(cfg, params, batch, H, signs):
    # graphs with fewer than k + 1 nodes: zero-pad the eigenvector block
    U = batch.eigvecs
    vecs = U[..., :, 1 : cfg.pe_k + 1]
    pad = np.zeros(vecs.shape[:-1] + (cfg.pe_k - vecs.shape[-1],))
    vecs = np.concatenate([vecs, pad], axis=-1)
    if signs is not None:
        vecs = vecs * signs
    return H + T.matmul(vecs, params["pe.proj"])


# ---------------------------------------------------------------------------
# loss and metrics


def task_loss(cfg: FetaConfig, logits, targets, mask=None) -> T.Tensor:
    logits = T.as_tensor(logits)
    targets = np.asarray(targets)
    if cfg.task == "graph-regress":
        pred = T.reshape(logits, logits.shape[:-1])
        return T.mean(T.absolute(pred - targets.astype(np.float64)))
    logp = T.log_softmax_rows(logits)
    onehot = np.zeros(logits.shape)
    np.put_along_axis(onehot, targets.astype(np.int64)[..., None], 1.0, axis=-1)
    if cfg.task == "node-class":
        m = np.ones(targets.shape, bool) if mask is None else np.asarray(mask, bool)
        if not m.any():
            raise DomainError("supervision mask selects no nodes")
        onehot = onehot * m[..., None]
        count = float(m.sum())
    else:
        count = float(targets.shape[0])
    return T.sum(logp * onehot) * (-1.0 / count)


def regularizer(alphas) -> T.Tensor:
    total = T.Tensor(0.0)
    for a in alphas:
        if a is not None:
            total = total + orthogonality_penalty(a)
    return total


def model_loss(cfg: FetaConfig, logits, targets, alphas, mask=None) -> T.Tensor:
    """Task loss plus ``lambda_reg`` times the summed per-layer orthogonality penalty."""
    loss = task_loss(cfg, logits, targets, mask)
    if cfg.lambda_reg and alphas:
        loss = loss + regularizer(alphas) * cfg.lambda_reg
    return loss


def _batch_stats(cfg, logits, batch):
    if cfg.task == "graph-regress":
        err = np.abs(logits.data[..., 0] - batch.labels)
        return float(err.sum()), float(err.size)
    pred = np.argmax(logits.data, axis=-1)
    if cfg.task == "node-class":
        hit = (pred == batch.labels) & batch.mask
        return float(hit.sum()), float(batch.mask.sum())
    return float((pred == batch.labels).sum()), float(batch.labels.size)


def metric_name(cfg: FetaConfig) -> str:
    return "mae" if cfg.task == "graph-regress" else "accuracy"


def evaluate(cfg: FetaConfig, params, split, batch_size: int = 64, record_alphas: bool = True) -> dict:
    """Accuracy (or MAE) and mean loss over a split; optionally per-graph coefficients.

    ``alphas`` in the result is ``(graphs, layers, heads, width)`` in split order.
    """
    if not isinstance(split, PreparedSplit):
        split = prepare_split(cfg, split)
    num = den = loss_sum = 0.0
    batches = 0
    alphas = None
    for batch in split.batches(batch_size):
        logits, al = forward(cfg, params, batch)
        loss_sum += model_loss(cfg, logits, batch.labels, al, batch.mask).item()
        batches += 1
        a, b = _batch_stats(cfg, logits, batch)
        num, den = num + a, den + b
        if record_alphas and al and al[0] is not None:
            stacked = np.stack([np.broadcast_to(x.data, (batch.size,) + x.shape[-2:]) for x in al], axis=1)
            stacked = np.swapaxes(stacked, -1, -2)
            if alphas is None:
                alphas = np.zeros((split.count,) + stacked.shape[1:])
            alphas[batch.index] = stacked
    out = {metric_name(cfg): num / max(den, 1.0), "loss": loss_sum / max(batches, 1)}
    if record_alphas:
        out["alphas"] = alphas
    return out


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainResult:
    params: dict
    history: list
    best_epoch: int
    best_valid: float


def _snapshot(params):
    return {k: v.data.copy() for k, v in params.items()}


def _restore(params, snap):
    for k, v in snap.items():
        params[k].data = v.copy()


def train(cfg: FetaConfig, dataset, settings: TrainSettings | None = None, seed: int = 0, log=None, prepared=None) -> TrainResult:
    """Adam with plateau halving and early stopping; returns the best-validation parameters.

    ``dataset`` has ``splits["train"]`` and ``splits["valid"]``;
    ``prepared`` may supply already-prepared splits to skip precomputation.
    """
    settings = settings or TrainSettings()
    rng = np.random.default_rng(seed)
    params = init_params(cfg, rng)
    prepared = prepared or {}
    train_split = prepared.get("train") or prepare_split(cfg, dataset.splits["train"])
    valid_split = prepared.get("valid") or prepare_split(cfg, dataset.splits["valid"])
    opt = Adam(params.values(), lr=settings.lr)
    mode = "min" if cfg.task == "graph-regress" else "max"
    sched = PlateauSchedule(opt, mode, settings.plateau_patience, settings.stop_patience, settings.lr_factor, settings.min_lr)
    history, best, best_epoch = [], _snapshot(params), 0
    for epoch in range(1, settings.max_epochs + 1):
        signs = random_signs(rng, cfg.pe_k) if cfg.pe_mode == "lap_static" else None
        total = steps = 0.0
        for step, batch in enumerate(train_split.batches(settings.batch_size, rng)):
            opt.zero_grad()
            logits, al = forward(cfg, params, batch, signs)
            loss = model_loss(cfg, logits, batch.labels, al, batch.mask)
            value = loss.item()
            if not np.isfinite(value):
                bad = [k for k, v in params.items() if not np.all(np.isfinite(v.data))]
                raise NumericalAbort(
                    f"non-finite loss at epoch {epoch}, step {step}",
                    {"epoch": epoch, "step": step, "loss": value, "lr": opt.lr, "nonfinite_params": bad},
                )
            T.backward(loss)
            opt.step()
            total += value
            steps += 1
        metrics = evaluate(cfg, params, valid_split, record_alphas=False)
        key = metric_name(cfg)
        lr_used = opt.lr
        improved = sched.update(metrics[key])
        if improved:
            best, best_epoch = _snapshot(params), epoch
        row = {
            "epoch": epoch,
            "lr": lr_used,
            "train_loss": total / max(steps, 1),
            "valid_loss": metrics["loss"],
            f"valid_{key}": metrics[key],
        }
        history.append(row)
        if log is not None:
            log(row)
        if sched.should_stop:
            break
    _restore(params, best)
    return TrainResult(params=params, history=history, best_epoch=best_epoch, best_valid=sched.best)


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path, cfg: FetaConfig, params, extra=None) -> None:
    doc = {
        "version": CHECKPOINT_FORMAT,
        "config": asdict(cfg),
        "params": {
            k: {
                "shape": list(v.data.shape),
                "data": base64.b64encode(np.ascontiguousarray(v.data, dtype="<f8").tobytes()).decode("ascii"),
            }
            for k, v in params.items()
        },
    }
    if extra:
        doc["extra"] = extra
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path):
    """Returns ``(config, params, extra)``."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read checkpoint {path}: {exc}") from exc
    if doc.get("version") != CHECKPOINT_FORMAT:
        raise ConfigError(f"unsupported checkpoint version {doc.get('version')!r}")
    cfg = FetaConfig.from_dict(doc["config"])
    params = {}
    for k, rec in doc["params"].items():
        raw = np.frombuffer(base64.b64decode(rec["data"]), dtype="<f8").astype(np.float64)
        params[k] = T.parameter(raw.reshape(rec["shape"]))
    expected = init_params(cfg, np.random.default_rng(0))
    if set(expected) != set(params) or any(expected[k].shape != params[k].shape for k in expected):
        raise ConfigError("checkpoint parameters do not match its configuration")
    # keep the canonical creation order
    params = {k: params[k] for k in expected}
    return cfg, params, doc.get("extra", {})
