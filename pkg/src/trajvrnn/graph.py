"""Per-timestep spatial encoder over the agent graph.

Three parallel graph-convolution branches read the same embedded node
features and are fused by learned per-feature weights:

  * static topology: binary visibility adjacency, degree-normalised,
    three stacked layers with ReLU;
  * dynamic learnable: a free adjacency matrix trained end-to-end,
    sliced to the live agent count, one layer with ReLU;
  * edge conditioned: a per-edge weight matrix generated from the edge's
    visibility category (both / exactly one / neither endpoint visible),
    averaged over all nodes. Past timesteps only.

Visibility masks are plain numpy; only feature paths ride the tape.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, concat, matmul, relu, reshape, tanh, tmean, transpose
from .errors import CapacityError, ConfigError

CAT_BOTH_VISIBLE = 0
CAT_ONE_VISIBLE = 1
CAT_NONE_VISIBLE = 2


def masked_input_vector(coords, mask):
    """Raw past-phase embedding input: masked coordinates with the mask
    bit appended, so a missing agent contributes (0, 0, 0)."""
    x = np.asarray(coords, dtype=np.float64)
    m = np.asarray(mask, dtype=np.float64)[..., None]
    return np.concatenate([x * m, m], axis=-1)


def build_static_adjacency(mask):
    """Visibility adjacency and self-loop matrix from a binary mask.

    mask: (N,) or (B, N). Returns (A, I) with shape (..., N, N):
    A[i, j] = 1 iff i != j and both visible; I = diag(mask).
    """
    m = np.asarray(mask, dtype=np.float64)
    squeeze = m.ndim == 1
    if squeeze:
        m = m[None, :]
    n = m.shape[-1]
    a = m[:, :, None] * m[:, None, :]
    eye = np.eye(n, dtype=bool)
    a[:, eye] = 0.0
    i = np.zeros_like(a)
    i[:, eye] = m
    if squeeze:
        return a[0], i[0]
    return a, i


def normalize_static(a, i, literal=False):
    """Degree-normalise A + I. Zero degrees are clamped to 1 first, so
    fully invisible nodes keep all-zero rows and columns.

    By default the symmetric form D^{-1/2} (A + I) D^{-1/2} is used;
    `literal=True` selects D^{-1/2} (A + I) D^{+1/2} instead.
    """
    s = np.asarray(a, dtype=np.float64) + np.asarray(i, dtype=np.float64)
    deg = s.sum(axis=-1)
    deg = np.maximum(deg, 1.0)
    left = 1.0 / np.sqrt(deg)
    right = np.sqrt(deg) if literal else left
    return left[..., :, None] * s * right[..., None, :]


def edge_categories(mask):
    """Per-pair visibility category codes, symmetric in (i, j)."""
    m = np.asarray(mask, dtype=np.int64)
    squeeze = m.ndim == 1
    if squeeze:
        m = m[None, :]
    cats = 2 - (m[:, :, None] + m[:, None, :])
    return cats[0] if squeeze else cats


def category_masks(cats):
    """One float indicator matrix per category, stacked list of 3."""
    c = np.asarray(cats)
    return [(c == k).astype(np.float64) for k in range(3)]


def st_gcl_forward(features: Tensor, a_hat, weight: Tensor) -> Tensor:
    """One static-topology layer: relu(A_hat @ F @ W)."""
    a_hat = ad.as_tensor(a_hat)
    return relu(matmul(matmul(a_hat, features), weight))


def dl_gcl_forward(features: Tensor, adj: Tensor, weight: Tensor) -> Tensor:
    """One dynamic-learnable layer: relu(A_dl @ F @ W)."""
    return relu(matmul(matmul(adj, features), weight))


def ec_gcl_forward(features: Tensor, cats, thetas, bias: Tensor) -> Tensor:
    """Edge-conditioned update: mean over all nodes j of Theta[cat(i,j)] f_j.

    `thetas` is a (3, D_G, D) tensor of category weight matrices; the
    neighbourhood is every node including self, so the mean divisor is N.
    """
    n = features.shape[-2]
    out = None
    for k, cmask in enumerate(category_masks(cats)):
        projected = matmul(features, transpose(thetas[k]))
        term = matmul(Tensor(cmask), projected)
        out = term if out is None else out + term
    return out * (1.0 / n) + bias


def fuse(branch_outputs, weights) -> Tensor:
    """Weighted elementwise sum of whichever branch outputs are present.

    branch_outputs / weights: equal-length lists; entries may be None to
    drop a branch (disabled by ablation, or EC on a future step).
    """
    total = None
    for out, w in zip(branch_outputs, weights):
        if out is None:
            continue
        term = out * w
        total = term if total is None else total + term
    if total is None:
        raise ConfigError("graph fusion needs at least one enabled branch")
    return total


class SpatialEncoder:
    """Owns the graph parameters and runs the full per-timestep encoding."""

    def __init__(self, cfg, rng: np.random.Generator, prefix="msgnn"):
        if not (cfg.use_st or cfg.use_dl or cfg.use_ec):
            raise ConfigError("at least one graph branch must be enabled")
        self.cfg = cfg
        d, dg = cfg.d_embed, cfg.d_graph
        e, k = cfg.ec_hidden, cfg.ec_pool
        self.params = {}

        def param(name, shape, scale=None):
            fan = shape[0] if len(shape) > 1 else 1
            s = scale if scale is not None else 1.0 / np.sqrt(max(1, fan))
            p = ad.Parameter(f"{prefix}.{name}", rng.normal(0.0, s, size=shape))
            self.params[p.name] = p
            return p

        def zeros(name, shape):
            p = ad.Parameter(f"{prefix}.{name}", np.zeros(shape))
            self.params[p.name] = p
            return p

        def ones(name, shape):
            p = ad.Parameter(f"{prefix}.{name}", np.ones(shape))
            self.params[p.name] = p
            return p

        self.embed_past = (param("embed_past.w0", (3, d)), zeros("embed_past.b0", (d,)),
                           param("embed_past.w1", (d, d)), zeros("embed_past.b1", (d,)))
        self.embed_future = (param("embed_future.w0", (2, d)), zeros("embed_future.b0", (d,)),
                             param("embed_future.w1", (d, d)), zeros("embed_future.b1", (d,)))
        self.st_weights = [param("st.0.w", (d, d)), param("st.1.w", (d, d)),
                           param("st.2.w", (d, dg))]
        self.dl_adj = param("dl.adj", (cfg.n_agents_max, cfg.n_agents_max),
                            scale=1.0 / np.sqrt(cfg.n_agents_max))
        self.dl_weight = param("dl.w", (d, dg))
        self.ec_w0 = param("ec.w0", (3, e))
        self.ec_b0 = zeros("ec.b0", (e,))
        self.ec_w1 = param("ec.w1", (e, k * dg * d))
        self.ec_b1 = zeros("ec.b1", (k * dg * d,))
        self.ec_bias = zeros("ec.bias", (dg,))
        self.fuse_alpha = ones("fuse.alpha", (dg,))
        self.fuse_beta = ones("fuse.beta", (dg,))
        self.fuse_gamma = ones("fuse.gamma", (dg,))

    def embed(self, coords, mask, phase) -> Tensor:
        """Project inputs to node features. Past steps mask the coordinates
        and append the mask bit; future steps embed the raw coordinates."""
        x = np.asarray(coords, dtype=np.float64)
        if phase == "past":
            inp = Tensor(masked_input_vector(x, mask))
            w0, b0, w1, b1 = self.embed_past
        elif phase == "future":
            inp = Tensor(x)
            w0, b0, w1, b1 = self.embed_future
        else:
            raise ConfigError(f"unknown phase {phase!r}")
        return matmul(tanh(matmul(inp, w0) + b0), w1) + b1

    def edge_weight_matrices(self) -> Tensor:
        """Generate the three category weight matrices, shape (3, D_G, D).

        Two affine maps with a tanh between produce pool_channels copies
        of each matrix, which are averaged (the pooling step).
        """
        cfg = self.cfg
        onehots = Tensor(np.eye(3))
        hidden = tanh(matmul(onehots, self.ec_w0) + self.ec_b0)
        raw = matmul(hidden, self.ec_w1) + self.ec_b1
        stacked = reshape(raw, (3, cfg.ec_pool, cfg.d_graph, cfg.d_embed))
        return tmean(stacked, axis=1)

    def st_branch(self, features: Tensor, a_hat) -> Tensor:
        out = features
        for w in self.st_weights:
            out = st_gcl_forward(out, a_hat, w)
        return out

    def dl_branch(self, features: Tensor) -> Tensor:
        n = features.shape[-2]
        if n > self.cfg.n_agents_max:
            raise CapacityError(f"{n} agents exceed the configured maximum "
                                f"{self.cfg.n_agents_max}")
        adj = self.dl_adj[0:n, 0:n]
        return dl_gcl_forward(features, adj, self.dl_weight)

    def ec_branch(self, features: Tensor, cats, thetas=None) -> Tensor:
        if thetas is None:
            thetas = self.edge_weight_matrices()
        return ec_gcl_forward(features, cats, thetas, self.ec_bias)

    def forward(self, coords, mask, phase, thetas=None) -> Tensor:
        """Embed, run the enabled branches, fuse. `coords` (.., N, 2) and
        `mask` (.., N) are numpy; the result is an (.., N, D_G) tensor.

        The edge-conditioned branch only runs on past steps. Future steps
        treat every agent as visible.
        """
        cfg = self.cfg
        if phase == "future":
            mask = np.ones(np.asarray(coords).shape[:-1])
        features = self.embed(coords, mask, phase)
        f_st = f_dl = f_ec = None
        if cfg.use_st:
            a, i = build_static_adjacency(mask)
            a_hat = normalize_static(a, i, literal=(cfg.static_norm == "literal"))
            f_st = self.st_branch(features, a_hat)
        if cfg.use_dl:
            f_dl = self.dl_branch(features)
        if cfg.use_ec and phase == "past":
            f_ec = self.ec_branch(features, edge_categories(mask), thetas)
        return fuse([f_st, f_dl, f_ec],
                    [self.fuse_alpha, self.fuse_beta, self.fuse_gamma])
