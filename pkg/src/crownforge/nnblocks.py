"""Forward-only attention primitives at toy scale.

These blocks make the architecture's shape and reshape contracts
executable: self-attention (token-preserving), grouped attention (token
count divided by 4 via farthest point sampling), cross-attention (query
count preserved), voxel feature encoding (per-voxel max), a template
deformation head, and a point-doubling refinement whose 2C -> 2xC
channel split is pinned channel-major (first C channels become child 0).

Everything is plain numpy, seeded-deterministic, and untrained; there is
no backward pass. Parameters serialize as named float32 tensors.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ShapeMismatchError, TNotDivisibleError
from .pointops import LabeledPointCloud, VoxelMap, farthest_point_sample


@dataclass
class FeatureMatrix:
    """T tokens of C channels, optionally carrying aligned 3D coordinates."""

    tokens: np.ndarray
    coords: Optional[np.ndarray] = None

    def __post_init__(self):
        self.tokens = np.asarray(self.tokens, dtype=np.float64)
        if self.tokens.ndim != 2:
            raise ShapeMismatchError(f"tokens must be (T, C), got {self.tokens.shape}")
        if not np.isfinite(self.tokens).all():
            raise ShapeMismatchError("tokens contain non-finite values")
        if self.coords is not None:
            self.coords = np.asarray(self.coords, dtype=np.float64)
            if self.coords.shape != (len(self.tokens), 3):
                raise ShapeMismatchError(
                    f"coords shape {self.coords.shape} != ({len(self.tokens)}, 3)")

    @property
    def n_tokens(self) -> int:
        return self.tokens.shape[0]

    @property
    def n_channels(self) -> int:
        return self.tokens.shape[1]


def _uniform(rng, fan_in, shape):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def seeded_linear(seed, c_in, c_out):
    """(weight, bias) drawn uniform(-1/sqrt(c_in), 1/sqrt(c_in))."""
    rng = np.random.default_rng(seed)
    return _uniform(rng, c_in, (c_in, c_out)), _uniform(rng, c_in, (c_out,))


def affine_adapter(x: FeatureMatrix, weight, bias) -> FeatureMatrix:
    """Channel-matching linear map between blocks; coords ride along."""
    if x.n_channels != weight.shape[0]:
        raise ShapeMismatchError(
            f"adapter expects {weight.shape[0]} channels, got {x.n_channels}")
    return FeatureMatrix(tokens=x.tokens @ weight + bias, coords=x.coords)


def global_feature(x: FeatureMatrix, weight, bias) -> np.ndarray:
    """1xH global descriptor: per-token MLP then max over tokens."""
    h = np.maximum(x.tokens @ weight + bias, 0.0)
    return h.max(axis=0, keepdims=True)


@dataclass
class AttentionParams:
    """Projection and feed-forward weights for one attention block.

    Channel contract: queries carry c_query channels, keys/values c_kv,
    and the block returns c_query channels (residual connections force
    input/output equality). The feed-forward expands 2x internally.
    """

    heads: int
    hidden: int
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    ff1: np.ndarray
    b1: np.ndarray
    ff2: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        if self.hidden % self.heads != 0:
            raise ShapeMismatchError(
                f"hidden {self.hidden} not divisible by heads {self.heads}")

    @classmethod
    def seeded(cls, seed, c_query, c_kv=None, heads=4, hidden=512):
        """Deterministic initialization; draw order is wq, wk, wv, wo, ff."""
        c_kv = c_query if c_kv is None else c_kv
        rng = np.random.default_rng(seed)
        c = c_query
        return cls(
            heads=heads,
            hidden=hidden,
            wq=_uniform(rng, c, (c, hidden)),
            wk=_uniform(rng, c_kv, (c_kv, hidden)),
            wv=_uniform(rng, c_kv, (c_kv, hidden)),
            wo=_uniform(rng, hidden, (hidden, c)),
            ff1=_uniform(rng, c, (c, 2 * c)),
            b1=_uniform(rng, c, (2 * c,)),
            ff2=_uniform(rng, 2 * c, (2 * c, c)),
            b2=_uniform(rng, 2 * c, (c,)),
        )

    def to_tensors(self, prefix=""):
        out = {prefix + "heads": np.array(float(self.heads)),
               prefix + "hidden": np.array(float(self.hidden))}
        for name in ("wq", "wk", "wv", "wo", "ff1", "b1", "ff2", "b2"):
            out[prefix + name] = getattr(self, name)
        return out

    @classmethod
    def from_tensors(cls, tensors, prefix=""):
        return cls(heads=int(tensors[prefix + "heads"]),
                   hidden=int(tensors[prefix + "hidden"]),
                   **{n: tensors[prefix + n]
                      for n in ("wq", "wk", "wv", "wo", "ff1", "b1", "ff2", "b2")})


def _softmax(scores):
    shifted = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _attention(q_tokens, kv_tokens, params: AttentionParams):
    """Multi-head attention + 2x feed-forward, both with residuals."""
    cq = q_tokens.shape[1]
    if params.wq.shape[0] != cq:
        raise ShapeMismatchError(
            f"params expect {params.wq.shape[0]} query channels, got {cq}")
    if params.wk.shape[0] != kv_tokens.shape[1]:
        raise ShapeMismatchError(
            f"params expect {params.wk.shape[0]} key channels, got {kv_tokens.shape[1]}")
    heads, hidden = params.heads, params.hidden
    dh = hidden // heads
    tq, tk = len(q_tokens), len(kv_tokens)
    # (tokens, heads, dh) -> head-major batches so matmul hits BLAS
    q = np.ascontiguousarray((q_tokens @ params.wq).reshape(tq, heads, dh).transpose(1, 0, 2))
    k = np.ascontiguousarray((kv_tokens @ params.wk).reshape(tk, heads, dh).transpose(1, 0, 2))
    v = np.ascontiguousarray((kv_tokens @ params.wv).reshape(tk, heads, dh).transpose(1, 0, 2))
    scores = q @ k.transpose(0, 2, 1) / np.sqrt(dh)
    attn = _softmax(scores)
    mixed = (attn @ v).transpose(1, 0, 2).reshape(tq, hidden)
    x = q_tokens + mixed @ params.wo
    ff = np.maximum(x @ params.ff1 + params.b1, 0.0) @ params.ff2 + params.b2
    return x + ff


def sat_forward(x: FeatureMatrix, params: AttentionParams) -> FeatureMatrix:
    """Self-attention over all tokens; token count and coords unchanged."""
    return FeatureMatrix(tokens=_attention(x.tokens, x.tokens, params), coords=x.coords)


def gat_forward(x: FeatureMatrix, params: AttentionParams, start=0) -> FeatureMatrix:
    """Grouped attention: queries from the FPS quarter of the tokens.

    Keys and values come from all T tokens; the output carries exactly
    T/4 tokens at the FPS-selected coordinates.
    """
    if x.coords is None:
        raise ShapeMismatchError("grouped attention requires token coords")
    t = x.n_tokens
    if t % 4 != 0:
        raise TNotDivisibleError(f"token count {t} not divisible by 4")
    sel = farthest_point_sample(x.coords, t // 4, start=start)
    out = _attention(x.tokens[sel], x.tokens, params)
    return FeatureMatrix(tokens=out, coords=x.coords[sel])


def cat_forward(query: FeatureMatrix, kv: FeatureMatrix, params: AttentionParams) -> FeatureMatrix:
    """Cross-attention; output token count equals the query count."""
    out = _attention(query.tokens, kv.tokens, params)
    return FeatureMatrix(tokens=out, coords=query.coords)


@dataclass
class VfeParams:
    """Two-layer voxel feature encoder weights."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    @classmethod
    def seeded(cls, seed, in_dim=3, hidden=32):
        rng = np.random.default_rng(seed)
        return cls(
            w1=_uniform(rng, in_dim, (in_dim, hidden)),
            b1=_uniform(rng, in_dim, (hidden,)),
            w2=_uniform(rng, 2 * hidden, (2 * hidden, hidden)),
            b2=_uniform(rng, 2 * hidden, (hidden,)),
        )

    def to_tensors(self, prefix=""):
        return {prefix + n: getattr(self, n) for n in ("w1", "b1", "w2", "b2")}

    @classmethod
    def from_tensors(cls, tensors, prefix=""):
        return cls(**{n: tensors[prefix + n] for n in ("w1", "b1", "w2", "b2")})


def vfe_forward(cloud: LabeledPointCloud, voxels: VoxelMap, params: VfeParams):
    """Per-voxel features by cascaded point encoding and max pooling.

    Point features are xyz, plus the label column when the cloud carries
    labels. Layer 1 -> per-voxel max -> concat back to points -> layer 2
    -> final per-voxel max. Rows follow sorted voxel index order; returns
    ``(voxel_indices, features)``.
    """
    feats = cloud.points
    if cloud.labels is not None:
        feats = np.column_stack([feats, cloud.labels.astype(np.float64)])
    if feats.shape[1] != params.w1.shape[0]:
        raise ShapeMismatchError(
            f"vfe expects {params.w1.shape[0]}-dim point features, got {feats.shape[1]}")
    h1 = np.maximum(feats @ params.w1 + params.b1, 0.0)
    keys = list(voxels.cells.keys())
    out = np.empty((len(keys), params.w2.shape[1]))
    for row, key in enumerate(keys):
        members = voxels.cells[key]
        local = h1[members]
        pooled = local.max(axis=0)
        combined = np.concatenate(
            [local, np.broadcast_to(pooled, local.shape)], axis=1)
        h2 = np.maximum(combined @ params.w2 + params.b2, 0.0)
        out[row] = h2.max(axis=0)
    return np.asarray(keys, dtype=np.int64), out


@dataclass
class TemplateDeformParams:
    """Weights for the coarse deformation head.

    Encodes the template to 128 channels, cross-attends against a 1x512
    global feature, runs two self-attention blocks, and decodes a
    residual displacement back to coordinates.
    """

    encode_w: np.ndarray
    encode_b: np.ndarray
    cat: AttentionParams
    sat1: AttentionParams
    sat2: AttentionParams
    decode_w: np.ndarray
    decode_b: np.ndarray

    @classmethod
    def seeded(cls, seed, channels=128, global_dim=512, heads=4, hidden=512):
        rng = np.random.default_rng(seed)
        return cls(
            encode_w=_uniform(rng, 3, (3, channels)),
            encode_b=_uniform(rng, 3, (channels,)),
            cat=AttentionParams.seeded(seed + 1, channels, c_kv=global_dim,
                                       heads=heads, hidden=hidden),
            sat1=AttentionParams.seeded(seed + 2, channels, heads=heads, hidden=hidden),
            sat2=AttentionParams.seeded(seed + 3, channels, heads=heads, hidden=hidden),
            decode_w=_uniform(rng, channels, (channels, 3)),
            decode_b=_uniform(rng, channels, (3,)),
        )

    def to_tensors(self, prefix=""):
        out = {prefix + "encode_w": self.encode_w, prefix + "encode_b": self.encode_b,
               prefix + "decode_w": self.decode_w, prefix + "decode_b": self.decode_b}
        out.update(self.cat.to_tensors(prefix + "cat."))
        out.update(self.sat1.to_tensors(prefix + "sat1."))
        out.update(self.sat2.to_tensors(prefix + "sat2."))
        return out

    @classmethod
    def from_tensors(cls, tensors, prefix=""):
        return cls(
            encode_w=tensors[prefix + "encode_w"], encode_b=tensors[prefix + "encode_b"],
            cat=AttentionParams.from_tensors(tensors, prefix + "cat."),
            sat1=AttentionParams.from_tensors(tensors, prefix + "sat1."),
            sat2=AttentionParams.from_tensors(tensors, prefix + "sat2."),
            decode_w=tensors[prefix + "decode_w"], decode_b=tensors[prefix + "decode_b"],
        )


def template_deform_forward(template, global_feat, params: TemplateDeformParams):
    """Deform template points by attending to the global scan feature.

    Returns m coarse points: template + decoded residual, so zeroed
    decode weights pass the template through unchanged.
    """
    template = np.asarray(template, dtype=np.float64).reshape(-1, 3)
    if len(template) == 0:
        raise ShapeMismatchError("template is empty")
    g = np.asarray(global_feat, dtype=np.float64).reshape(1, -1)
    feats = FeatureMatrix(tokens=template @ params.encode_w + params.encode_b,
                          coords=template)
    feats = cat_forward(feats, FeatureMatrix(tokens=g), params.cat)
    feats = sat_forward(feats, params.sat1)
    feats = sat_forward(feats, params.sat2)
    return template + (feats.tokens @ params.decode_w + params.decode_b)


def split_tokens(tokens):
    """(N, 2C) -> (2N, C), channel-major: first C channels become the
    even output rows (child 0), last C the odd rows (child 1)."""
    n, c2 = tokens.shape
    if c2 % 2 != 0:
        raise ShapeMismatchError(f"channel count {c2} is odd; cannot split")
    return tokens.reshape(n, 2, c2 // 2).reshape(2 * n, c2 // 2)


@dataclass
class RefineParams:
    """Weights for one point-doubling refinement stage."""

    cat: AttentionParams
    expand_w: np.ndarray
    expand_b: np.ndarray
    sat1: AttentionParams
    sat2: AttentionParams
    decode_w: np.ndarray
    decode_b: np.ndarray

    @classmethod
    def seeded(cls, seed, channels, kv_channels=None, heads=4, hidden=512):
        rng = np.random.default_rng(seed)
        c = channels
        return cls(
            cat=AttentionParams.seeded(seed + 1, c, c_kv=kv_channels,
                                       heads=heads, hidden=hidden),
            expand_w=_uniform(rng, c, (c, 2 * c)),
            expand_b=_uniform(rng, c, (2 * c,)),
            sat1=AttentionParams.seeded(seed + 2, 2 * c, heads=heads, hidden=hidden),
            sat2=AttentionParams.seeded(seed + 3, 2 * c, heads=heads, hidden=hidden),
            decode_w=_uniform(rng, c, (c, 3)),
            decode_b=_uniform(rng, c, (3,)),
        )

    def to_tensors(self, prefix=""):
        out = {prefix + "expand_w": self.expand_w, prefix + "expand_b": self.expand_b,
               prefix + "decode_w": self.decode_w, prefix + "decode_b": self.decode_b}
        out.update(self.cat.to_tensors(prefix + "cat."))
        out.update(self.sat1.to_tensors(prefix + "sat1."))
        out.update(self.sat2.to_tensors(prefix + "sat2."))
        return out

    @classmethod
    def from_tensors(cls, tensors, prefix=""):
        return cls(
            cat=AttentionParams.from_tensors(tensors, prefix + "cat."),
            expand_w=tensors[prefix + "expand_w"], expand_b=tensors[prefix + "expand_b"],
            sat1=AttentionParams.from_tensors(tensors, prefix + "sat1."),
            sat2=AttentionParams.from_tensors(tensors, prefix + "sat2."),
            decode_w=tensors[prefix + "decode_w"], decode_b=tensors[prefix + "decode_b"],
        )


def refine_forward(crown_feats: FeatureMatrix, ios_feats: FeatureMatrix,
                   params: RefineParams):
    """Double the crown points: N tokens in, 2N decoded points out.

    Cross-attend crown queries against scan features, expand to 2C
    channels through two self-attention blocks, split channel-major into
    2N C-channel child tokens, and decode each child as a residual
    displacement from its parent coordinate.

    Returns ``(points, child_feats)`` so stages can stack.
    """
    if crown_feats.coords is None:
        raise ShapeMismatchError("refinement requires parent coords for residuals")
    x = cat_forward(crown_feats, ios_feats, params.cat)
    expanded = FeatureMatrix(tokens=x.tokens @ params.expand_w + params.expand_b)
    expanded = sat_forward(expanded, params.sat1)
    expanded = sat_forward(expanded, params.sat2)
    children = split_tokens(expanded.tokens)
    parents = np.repeat(crown_feats.coords, 2, axis=0)
    points = parents + (children @ params.decode_w + params.decode_b)
    return points, FeatureMatrix(tokens=children, coords=points)
