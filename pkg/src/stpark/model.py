"""DeepPA: encoders, stacked spatial (GCO) / temporal (causal attention) blocks, predictor."""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import NonFiniteError, ShapeError, Tensor
from .spectral import dct2, idct2, path_eigenvalues, truncate_modes


@dataclass
class ModelConfig:
    n_lots: int
    history: int = 12
    horizon: int = 12
    hidden: int = 64
    spatial_hidden: Optional[int] = None
    temporal_feature_dim: int = 12
    spatial_numeric_dim: int = 3
    n_planning_areas: int = 1
    n_land_uses: int = 1
    embed_dim: int = 8
    n_blocks: int = 2
    n_heads: int = 4
    k_modes: Optional[int] = None
    ffn_hidden: Optional[int] = None
    predictor_hidden: int = 64
    activation: str = "gelu"
    residual: bool = True
    paper_literal_scale: bool = False
    predictor_last_step_only: bool = False
    use_slblock: bool = True
    use_spatial_info: bool = True
    use_temporal_node: bool = True
    use_tlblock: bool = True
    causal_mask_on: bool = True
    use_temporal_pe: bool = True

    def __post_init__(self):
        if self.spatial_hidden is None:
            self.spatial_hidden = self.hidden // 2
        if self.ffn_hidden is None:
            self.ffn_hidden = self.hidden
        for name in ("n_lots", "history", "horizon", "n_blocks", "n_heads", "hidden"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.hidden % self.n_heads:
            raise ValueError(f"hidden={self.hidden} not divisible by n_heads={self.n_heads}")
        if not 0 < self.spatial_hidden < self.hidden:
            raise ValueError("spatial_hidden must lie strictly between 0 and hidden")
        if self.activation not in ("gelu", "relu"):
            raise ValueError(f"unknown activation {self.activation!r}")
        n = self.n_nodes
        if self.k_modes is None:
            self.k_modes = n
        if not 1 <= self.k_modes <= n:
            raise ValueError(f"k_modes={self.k_modes} outside [1, {n}]")

    @property
    def n_nodes(self) -> int:
        """Nodes seen by the spatial block: lots plus the virtual temporal node."""
        return self.n_lots + (1 if self.use_temporal_node else 0)

    @property
    def spatial_feature_dim(self) -> int:
        return self.spatial_numeric_dim + 2 * self.embed_dim

    @property
    def head_dim(self) -> int:
        return self.hidden // self.n_heads

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


ABLATIONS = {
    "full": {},
    "w/o SLBlock": {"use_slblock": False},
    "w/o spatial": {"use_spatial_info": False},
    "w/o temporal": {"use_temporal_node": False},
    "w/o TLBlock": {"use_tlblock": False},
    "MSA": {"causal_mask_on": False},
    "w/o PE": {"use_temporal_pe": False},
}


def ablation_config(base: ModelConfig, variant: str) -> ModelConfig:
    """Copy of ``base`` with the flags of a named ablation variant switched off."""
    d = base.to_dict()
    d.update(ABLATIONS[variant])
    if not d.get("use_temporal_node", True) and d["k_modes"] == base.n_nodes:
        d["k_modes"] = None
    return ModelConfig.from_dict(d)


def _glorot(rng, fan_in, fan_out):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_params(cfg: ModelConfig, seed: int = 0) -> dict[str, Tensor]:
    """Named parameter set; insertion order is the canonical key order."""
    rng = np.random.default_rng(seed)
    raw: dict[str, np.ndarray] = {}
    c, chs = cfg.hidden, cfg.spatial_hidden

    def dense(name, fan_in, fan_out):
        raw[f"{name}.w"] = _glorot(rng, fan_in, fan_out)
        raw[f"{name}.b"] = np.zeros(fan_out)

    def norm(name, width):
        raw[f"{name}.gain"] = np.ones(width)
        raw[f"{name}.bias"] = np.zeros(width)

    dense("enc.pa", 1, c)
    if cfg.use_spatial_info:
        raw["embed.planning"] = _glorot(rng, cfg.n_planning_areas, cfg.embed_dim)
        raw["embed.land_use"] = _glorot(rng, cfg.n_land_uses, cfg.embed_dim)
        dense("enc.spatial", cfg.spatial_feature_dim, chs)
        raw["pos.spatial"] = rng.standard_normal((cfg.n_lots, c - chs)) * 0.02
    if cfg.use_temporal_node:
        dense("enc.temporal", cfg.temporal_feature_dim, c)
    if cfg.use_tlblock and cfg.use_temporal_pe:
        raw["pos.temporal"] = rng.standard_normal((cfg.history, c)) * 0.02

    for i in range(cfg.n_blocks):
        b = f"blocks.{i}"
        if cfg.use_slblock:
            # heat-kernel start: low-pass diffusion over the node axis, non-isotropic so
            # the virtual node mixes with the lots from the first step
            raw[f"{b}.gco.scale"] = np.exp(-path_eigenvalues(cfg.n_nodes)[: cfg.k_modes, None])
            raw[f"{b}.gco.freq.w"] = _glorot(rng, c, c)
            norm(f"{b}.gco.norm", c)
            dense(f"{b}.gco.mlp1", c, c)
            dense(f"{b}.gco.mlp2", c, c)
        else:
            dense(f"{b}.sl.mlp1", c, c)
            dense(f"{b}.sl.mlp2", c, c)
        if cfg.use_tlblock:
            norm(f"{b}.attn.norm", c)
            for proj in ("q", "k", "v"):
                raw[f"{b}.attn.{proj}.w"] = _glorot(rng, c, c)
            dense(f"{b}.attn.o", c, c)
            norm(f"{b}.ffn.norm", c)
            dense(f"{b}.ffn.mlp1", c, cfg.ffn_hidden)
            dense(f"{b}.ffn.mlp2", cfg.ffn_hidden, c)
        else:
            dense(f"{b}.tl.mlp1", c, c)
            dense(f"{b}.tl.mlp2", c, c)

    steps = 1 if cfg.predictor_last_step_only else cfg.history
    dense("pred.mlp1", steps * c, cfg.predictor_hidden)
    dense("pred.mlp2", cfg.predictor_hidden, cfg.horizon)
    return {k: Tensor(v, requires_grad=True) for k, v in raw.items()}


def parameter_count(params: dict[str, Tensor]) -> int:
    return int(sum(p.size for p in params.values()))


class DeepPA:
    """Forward pass of the model over a named parameter dict.

    Shapes: ``X`` (B, T, N) normalised availability, ``F_t`` (B, T, C_t)
    temporal features, ``F_s`` (N, C_s) spatial features (see
    :meth:`spatial_features`).
    """

    def __init__(self, config: ModelConfig, params: dict[str, Tensor] | None = None, seed: int = 0):
        self.config = config
        self.params = init_params(config, seed) if params is None else params
        self._act = ad.activation(config.activation)

    def __getitem__(self, key) -> Tensor:
        return self.params[key]

    @property
    def n_params(self) -> int:
        return parameter_count(self.params)

    def _dense(self, name, x):
        return x @ self.params[f"{name}.w"] + self.params[f"{name}.b"]

    def _mlp(self, prefix, x):
        return self._dense(f"{prefix}.mlp2", self._act(self._dense(f"{prefix}.mlp1", x)))

    def _norm(self, name, x):
        return ad.layer_norm(x, self.params[f"{name}.gain"], self.params[f"{name}.bias"])

    # encoders

    def spatial_features(self, numeric, categorical) -> Tensor:
        """Concatenate scaled numeric lot attributes with planning-area and land-use embeddings."""
        if not self.config.use_spatial_info:
            return None
        categorical = np.asarray(categorical)
        cols = [ad.as_tensor(numeric)]
        cols.append(ad.embedding(self.params["embed.planning"], categorical[:, 0]))
        cols.append(ad.embedding(self.params["embed.land_use"], categorical[:, 1]))
        return ad.concat(cols, axis=1)

    def encode_inputs(self, X, F_t, F_s):
        cfg = self.config
        X, F_t = ad.as_tensor(X), ad.as_tensor(F_t)
        if X.ndim != 3 or X.shape[1:] != (cfg.history, cfg.n_lots):
            raise ShapeError(f"X has shape {X.shape}, expected (B, {cfg.history}, {cfg.n_lots})")
        B, T, N = X.shape
        if F_t.shape != (B, T, cfg.temporal_feature_dim):
            raise ShapeError(f"F_t has shape {F_t.shape}, expected {(B, T, cfg.temporal_feature_dim)}")
        H_pa = self._dense("enc.pa", X.reshape(B, T, N, 1))
        H_s = H_t = None
        if cfg.use_spatial_info:
            F_s = ad.as_tensor(F_s)
            if F_s.shape != (N, cfg.spatial_feature_dim):
                raise ShapeError(f"F_s has shape {F_s.shape}, expected {(N, cfg.spatial_feature_dim)}")
            H_s = self._dense("enc.spatial", F_s) + np.zeros((B, T, 1, 1))
        if cfg.use_temporal_node:
            H_t = self._dense("enc.temporal", F_t).reshape(B, T, 1, cfg.hidden)
        return H_pa, H_s, H_t

    def fuse_spatial(self, H_pa, H_s, P_s=None):
        if not self.config.use_spatial_info:
            return H_pa
        if P_s is None:
            P_s = self.params["pos.spatial"]
        P_s = ad.as_tensor(P_s)
        c = self.config.hidden
        if H_s.shape[-1] + P_s.shape[-1] != c:
            raise ShapeError(f"{H_s.shape[-1]} + {P_s.shape[-1]} spatial channels != hidden {c}")
        B, T = H_s.shape[:2]
        P_s = P_s + np.zeros((B, T, 1, 1))
        return H_pa + ad.concat([H_s, P_s], axis=-1)

    def attach_virtual_node(self, H, H_t) -> Tensor:
        B, T, N, C = H.shape
        if self.config.use_temporal_node:
            H = ad.concat([H, H_t], axis=2)
            N += 1
        return H.reshape(B * T, N, C)

    def detach_virtual_node(self, Z, B, T):
        """Inverse of :meth:`attach_virtual_node`."""
        _, n, C = Z.shape
        Z = Z.reshape(B, T, n, C)
        if not self.config.use_temporal_node:
            return Z, None
        H, H_t = ad.split(Z, [n - 1, 1], axis=2)
        return H, H_t

    # spatial block

    def gco(self, H, block: int = 0, probe: bool = False) -> Tensor:
        """Graph cosine operator over the node axis of ``H`` (BT, nodes, C).

        ``probe=True`` skips the layer norm and the output MLP, leaving the
        purely linear spectral filter plus residual (used to check the filter
        against a known Laplacian).
        """
        cfg, p = self.config, self.params
        b = f"blocks.{block}.gco"
        n = H.shape[1]
        step = 1
        try:
            Z = dct2(H, axis=1)
            if cfg.k_modes < n:
                Z = truncate_modes(Z, cfg.k_modes, axis=1)
            step = 2
            scale = p[f"{b}.scale"]
            if scale.shape[0] < n:
                scale = ad.concat([scale, np.zeros((n - scale.shape[0], 1))], axis=0)
            Z = (Z * scale) @ p[f"{b}.freq.w"]
            step = 3
            Y = idct2(Z, axis=1)
            if not probe:
                step = 4
                Y = self._norm(f"{b}.norm", Y)
                step = 5
                Y = self._mlp(b, Y)
        except NonFiniteError as exc:
            raise NonFiniteError(f"GCO step {step}: {exc}") from exc
        return H + Y if cfg.residual else Y

    def slblock(self, H, block: int = 0) -> Tensor:
        if self.config.use_slblock:
            return self.gco(H, block)
        out = self._mlp(f"blocks.{block}.sl", H)
        return H + out if self.config.residual else out

    # temporal block

    def causal_msa(self, H, block: int = 0, return_weights: bool = False):
        cfg = self.config
        b = f"blocks.{block}.attn"
        Bp, T, C = H.shape
        if T == 0:
            raise ShapeError("attention over zero time steps")
        a, d = cfg.n_heads, cfg.head_dim

        def heads(x):
            return x.reshape(Bp, T, a, d).transpose(0, 2, 1, 3)

        q = heads(H @ self.params[f"{b}.q.w"])
        k = heads(H @ self.params[f"{b}.k.w"])
        v = heads(H @ self.params[f"{b}.v.w"])
        scale = 1.0 / math.sqrt(a if cfg.paper_literal_scale else d)
        scores = (q @ k.transpose(0, 1, 3, 2)) * scale
        if cfg.causal_mask_on:
            scores = ad.masked_fill(scores, causal_mask(T), -np.inf)
        weights = ad.softmax(scores, axis=-1)
        out = (weights @ v).transpose(0, 2, 1, 3).reshape(Bp, T, C)
        out = self._dense(f"{b}.o", out)
        return (out, weights) if return_weights else out

    def _merge_streams(self, H, H_t):
        B, T, N, C = H.shape
        X = H.transpose(0, 2, 1, 3).reshape(B * N, T, C)
        if H_t is not None:
            X = ad.concat([X, H_t.reshape(B, T, C)], axis=0)
        return X

    def _unmerge_streams(self, X, B, T, N):
        C = X.shape[-1]
        if self.config.use_temporal_node:
            X, X_t = ad.split(X, [B * N, B], axis=0)
            H_t = X_t.reshape(B, T, 1, C)
        else:
            H_t = None
        H = X.reshape(B, N, T, C).transpose(0, 2, 1, 3)
        return H, H_t

    def tlblock(self, Z, B: int, T: int, block: int = 0):
        """(BT, nodes, C) -> PA stream (B, T, N, C) and temporal stream (B, T, 1, C) or None."""
        cfg = self.config
        H, H_t = self.detach_virtual_node(Z, B, T)
        N = H.shape[2]
        X = self._merge_streams(H, H_t)
        b = f"blocks.{block}"
        if cfg.use_tlblock:
            if cfg.use_temporal_pe:
                X = X + self.params["pos.temporal"]
            attn = self.causal_msa(self._norm(f"{b}.attn.norm", X), block)
            X = X + attn if cfg.residual else attn
            ffn = self._mlp(f"{b}.ffn", self._norm(f"{b}.ffn.norm", X))
            X = X + ffn if cfg.residual else ffn
        else:
            out = self._mlp(f"{b}.tl", X)
            X = X + out if cfg.residual else out
        return self._unmerge_streams(X, B, T, N)

    # head

    def predict(self, H) -> Tensor:
        cfg = self.config
        B, T, N, C = H.shape
        if (T, N, C) != (cfg.history, cfg.n_lots, cfg.hidden):
            raise ShapeError(f"predictor input {H.shape} does not match config")
        if cfg.predictor_last_step_only:
            flat = ad.take(H, T - 1, axis=1)
        else:
            flat = H.transpose(0, 2, 1, 3).reshape(B, N, T * C)
        out = self._mlp("pred", flat)
        return out.transpose(0, 2, 1)

    def forward(self, X, F_t, F_s, return_hidden: bool = False):
        """Predict normalised availability (B, horizon, N)."""
        X = ad.as_tensor(X)
        B, T = X.shape[:2]
        H_pa, H_s, H_t = self.encode_inputs(X, F_t, F_s)
        H = self.fuse_spatial(H_pa, H_s)
        hidden = []
        for i in range(self.config.n_blocks):
            try:
                Z = self.attach_virtual_node(H, H_t)
                Z = self.slblock(Z, i)
                H, H_t = self.tlblock(Z, B, T, i)
            except (NonFiniteError, ShapeError) as exc:
                raise type(exc)(f"block {i}: {exc}") from exc
            hidden.append((H, H_t))
        Y = self.predict(H)
        return (Y, hidden) if return_hidden else Y

    __call__ = forward


def causal_mask(T: int) -> np.ndarray:
    """Boolean (T, T) mask, true where a query step would look at a later key step."""
    return np.triu(np.ones((T, T), dtype=bool), k=1)


def dense_msa_params(hidden: int, seed: int = 0) -> dict[str, Tensor]:
    rng = np.random.default_rng(seed)
    out = {}
    for proj in ("q", "k", "v", "o"):
        out[f"{proj}.w"] = Tensor(_glorot(rng, hidden, hidden), requires_grad=True)
        out[f"{proj}.b"] = Tensor(np.zeros(hidden), requires_grad=True)
    return out


def dense_msa(H, params: dict[str, Tensor], n_heads: int) -> Tensor:
    """Unmasked multi-head attention across the node axis; the quadratic baseline for GCO timing."""
    Bp, n, C = H.shape
    d = C // n_heads

    def proj(name, x):
        return x @ params[f"{name}.w"] + params[f"{name}.b"]

    def heads(x):
        return x.reshape(Bp, n, n_heads, d).transpose(0, 2, 1, 3)

    q, k, v = heads(proj("q", H)), heads(proj("k", H)), heads(proj("v", H))
    w = ad.softmax((q @ k.transpose(0, 1, 3, 2)) * (1.0 / math.sqrt(d)), axis=-1)
    out = (w @ v).transpose(0, 2, 1, 3).reshape(Bp, n, C)
    return H + proj("o", out)
