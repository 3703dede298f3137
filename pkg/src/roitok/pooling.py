"""Region pooling and document tokenization.

Every pooling operator here is linear in the feature map and separable over
the two spatial axes, so it is represented by a pair of weight matrices
``(A_rows, A_cols)`` with ``out[i, j] = sum_ab A_rows[i, a] A_cols[j, b] F[a, b]``.
The ``*_adjoint`` functions apply the transpose of that operator, which is
what a backward pass through the pooling would compute.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .types import (
    FULL_PAGE,
    GLOBAL_REGION_ID,
    BBox,
    Branch,
    FeatureMap,
    FeaturePyramid,
    PoolingConfig,
    Provenance,
    RoiClass,
    RoiSet,
    TokenSequence,
    reading_order,
)

IMAGENET_MEAN = np.array([0.485, 0.456, 0.406])
IMAGENET_STD = np.array([0.229, 0.224, 0.225])

INPUT_SIZE = 1024
BBOX_FEATURES = 7  # x1, y1, x2, y2, w, h, is_vision

# FPN level assignment: a box of CANONICAL_BOX pixels per side maps to CANONICAL_LEVEL
CANONICAL_LEVEL = 2
CANONICAL_BOX = 224.0


# -- backbone stand-in -------------------------------------------------------

def _block_mean(x: np.ndarray, f: int) -> np.ndarray:
    """Average non-overlapping f x f blocks of an (H, W, C) array; ragged edge blocks
    average only the cells they contain."""
    if f == 1:
        return x
    h, w = x.shape[:2]
    rows = np.arange(0, h, f)
    cols = np.arange(0, w, f)
    s = np.add.reduceat(np.add.reduceat(x, rows, axis=0), cols, axis=1)
    nr = np.minimum(rows + f, h) - rows
    nc = np.minimum(cols + f, w) - cols
    return s / (nr[:, None] * nc[None, :])[..., None]


def _to_rgb(image) -> np.ndarray:
    """(H, W, 3) float64 view of a gray/RGB/RGBA image; uint8 is scaled to [0, 1]."""
    img = np.asarray(image)
    if img.size == 0 or 0 in img.shape:
        raise ValueError("zero-sized image")
    img = img.astype(np.float64) / 255.0 if img.dtype == np.uint8 else img.astype(np.float64)
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains NaN or Inf")
    if img.ndim == 2:
        img = img[..., None]
    if img.ndim != 3 or img.shape[2] not in (1, 3, 4):
        raise ValueError(f"expected a gray, RGB or RGBA image, got shape {img.shape}")
    if img.shape[2] == 4:
        img = img[..., :3]
    if img.shape[2] == 1:
        img = np.repeat(img, 3, axis=2)
    return img


def prepare_image(image, size: int = INPUT_SIZE) -> np.ndarray:
    """Bring a page image to ``size x size`` x 3 floats in [0, 1] (bilinear resize)."""
    img = _to_rgb(image)
    if img.shape[:2] != (size, size):
        zoom = (size / img.shape[0], size / img.shape[1], 1)
        img = ndimage.zoom(img, zoom, order=1, mode="nearest", grid_mode=True)
    return img


def backbone_stub(image, cfg: PoolingConfig, levels: int = 4, base_stride: int = 8,
                  seed: int = 0) -> FeaturePyramid:
    """Deterministic stand-in for a trained backbone + FPN.

    Pixels are normalized with ImageNet channel statistics, averaged over
    ``base_stride`` blocks and projected to ``cfg.d`` channels by a fixed
    seeded matrix. Each further level is a 2x2 average of the previous one.
    """
    if levels < 1 or base_stride < 1:
        raise ValueError("levels and base_stride must be >= 1")
    img = _to_rgb(image)

    norm = (img - IMAGENET_MEAN) / IMAGENET_STD
    proj = np.random.default_rng(seed).standard_normal((3, cfg.d)) / math.sqrt(3)
    fm = _block_mean(norm, base_stride) @ proj
    maps = [FeatureMap(fm)]
    for _ in range(1, levels):
        fm = _block_mean(fm, 2)
        maps.append(FeatureMap(fm))
    return FeaturePyramid(tuple(maps), base_stride, img.shape[:2])


# -- RoI Align ---------------------------------------------------------------

@dataclass(frozen=True)
class PoolSpec:
    """How one branch pools a region.

    ``size`` is the pooled side s. ``align_size`` is the RoI Align grid side
    before the conv and adaptive pooling (defaults to ``size``). ``level``
    forces a pyramid level instead of the size-based assignment.
    """

    branch: Branch
    size: int
    sampling_ratio: int = 2
    align_size: int | None = None
    level: int | None = None

    def __post_init__(self):
        if self.size < 1 or self.sampling_ratio < 1:
            raise ValueError("pool size and sampling_ratio must be >= 1")
        if self.align_size is not None and self.align_size < 1:
            raise ValueError("align_size must be >= 1")

    @property
    def grid(self) -> int:
        return self.align_size or self.size


def assign_level(box: BBox, pyr: FeaturePyramid) -> int:
    """Pick the pyramid level for a box: bigger boxes go to coarser levels."""
    side = math.sqrt(box.area * pyr.image_area)
    k = CANONICAL_LEVEL + math.floor(math.log2(side / CANONICAL_BOX))
    return min(max(k, 0), len(pyr.levels) - 1)


def _bilinear_axis_weights(lo: float, hi: float, n: int, s: int, ratio: int) -> np.ndarray:
    """(s, n) weights: each output bin averages ``ratio`` bilinear samples along one axis.

    Coordinates are in cell units with cell i covering [i, i+1) and its value
    sitting at the center i + 0.5. Samples beyond the outer cell centers
    clamp to the edge cell.
    """
    bin_len = (hi - lo) / s
    offsets = (np.arange(ratio) + 0.5) / ratio
    pts = lo + bin_len * (np.arange(s)[:, None] + offsets[None, :])  # (s, ratio)
    u = np.clip(pts - 0.5, 0.0, n - 1)
    i0 = np.floor(u).astype(int)
    frac = u - i0
    i1 = np.minimum(i0 + 1, n - 1)
    w = np.zeros((s, n))
    rows = np.repeat(np.arange(s), ratio)
    np.add.at(w, (rows, i0.ravel()), (1.0 - frac).ravel() / ratio)
    np.add.at(w, (rows, i1.ravel()), frac.ravel() / ratio)
    return w


def roi_align_operator(pyr: FeaturePyramid, box: BBox, spec: PoolSpec):
    """Return ``(level, A_rows, A_cols)`` describing RoI Align of ``box``."""
    k = assign_level(box, pyr) if spec.level is None else spec.level
    fm = pyr.levels[k]
    a_rows = _bilinear_axis_weights(box.y1 * fm.height, box.y2 * fm.height, fm.height,
                                    spec.grid, spec.sampling_ratio)
    a_cols = _bilinear_axis_weights(box.x1 * fm.width, box.x2 * fm.width, fm.width,
                                    spec.grid, spec.sampling_ratio)
    return k, a_rows, a_cols


def _apply_averaging(a_rows: np.ndarray, a_cols: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Apply a separable operator whose rows sum to one.

    The operator is evaluated on ``x`` minus its first cell and that cell is
    added back, so a constant map comes out bit-exact; the Jacobian is
    unchanged.
    """
    ref = x[0, 0]
    return ref + np.einsum("ia,jb,abc->ijc", a_rows, a_cols, x - ref, optimize=True)


def roi_align(pyr: FeaturePyramid, box: BBox, spec: PoolSpec) -> np.ndarray:
    """Bilinear RoI Align on the assigned pyramid level -> (grid, grid, d)."""
    k, a_rows, a_cols = roi_align_operator(pyr, box, spec)
    return _apply_averaging(a_rows, a_cols, pyr.levels[k].values)


def roi_align_adjoint(pyr: FeaturePyramid, box: BBox, spec: PoolSpec, grad: np.ndarray):
    """Transpose of :func:`roi_align`: maps an output gradient to ``(level, input gradient)``."""
    k, a_rows, a_cols = roi_align_operator(pyr, box, spec)
    return k, np.einsum("ia,jb,ijc->abc", a_rows, a_cols, grad, optimize=True)


# -- adaptive average pooling ------------------------------------------------

def adaptive_pool_weights(n: int, s: int) -> np.ndarray:
    """(s, n) averaging matrix; bin i covers [floor(i n / s), ceil((i + 1) n / s))."""
    if s < 1:
        raise ValueError(f"output size must be >= 1, got {s}")
    if n < 1:
        raise ValueError("input size must be >= 1")
    w = np.zeros((s, n))
    for i in range(s):
        lo = (i * n) // s
        hi = -((-(i + 1) * n) // s)
        w[i, lo:hi] = 1.0 / (hi - lo)
    return w


def adaptive_avg_pool(fm, s: int) -> np.ndarray:
    """Average an (h, w, d) map into (s, s, d) tiled bins."""
    x = fm.values if isinstance(fm, FeatureMap) else np.asarray(fm, dtype=np.float64)
    if x.ndim != 3:
        raise ValueError(f"expected an (h, w, d) array, got shape {x.shape}")
    pr = adaptive_pool_weights(x.shape[0], s)
    pc = adaptive_pool_weights(x.shape[1], s)
    return _apply_averaging(pr, pc, x)


def adaptive_avg_pool_adjoint(grad: np.ndarray, h: int, w: int) -> np.ndarray:
    s = grad.shape[0]
    pr = adaptive_pool_weights(h, s)
    pc = adaptive_pool_weights(w, s)
    return np.einsum("ia,jb,ijc->abc", pr, pc, grad, optimize=True)


# -- learned layers ----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LinearMap:
    weight: np.ndarray  # (d, k)
    bias: np.ndarray  # (d,)

    def __post_init__(self):
        w = np.asarray(self.weight, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        if w.ndim != 2 or b.shape != (w.shape[0],):
            raise ValueError(f"inconsistent linear map shapes {w.shape}, {b.shape}")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ValueError("linear map has non-finite entries")
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)

    @property
    def d(self) -> int:
        return self.weight.shape[0]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.weight.shape[1]:
            raise ValueError(f"expected {self.weight.shape[1]} input features, got {x.shape[-1]}")
        return x @ self.weight.T + self.bias


@dataclass(frozen=True, eq=False)
class ConvReluLayer:
    """1x1 convolution followed by ReLU."""

    kernel: np.ndarray  # (d_out, d_in)
    bias: np.ndarray  # (d_out,)

    def __post_init__(self):
        k = np.asarray(self.kernel, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        if k.ndim != 2 or k.shape[0] != k.shape[1] or b.shape != (k.shape[0],):
            raise ValueError(f"conv kernel must be (d, d) with a (d,) bias, got {k.shape}, {b.shape}")
        object.__setattr__(self, "kernel", k)
        object.__setattr__(self, "bias", b)

    @property
    def d(self) -> int:
        return self.kernel.shape[0]

    @staticmethod
    def activation(x: np.ndarray) -> np.ndarray:
        return np.maximum(x, 0.0)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.activation(x @ self.kernel.T + self.bias)


def bbox_features(box: BBox, cls: RoiClass = RoiClass.TEXT) -> np.ndarray:
    return np.array([box.x1, box.y1, box.x2, box.y2, box.width, box.height,
                     1.0 if cls is RoiClass.VISION else 0.0])


def spatial_embed(box: BBox, lm: LinearMap, cls: RoiClass = RoiClass.TEXT) -> np.ndarray:
    """Project a box's geometry (and modality flag) to a d-dimensional spatial token."""
    return lm(bbox_features(box, cls))


@dataclass(frozen=True, eq=False)
class TokenizerParams:
    spatial_embed: LinearMap
    conv_text: ConvReluLayer
    conv_vision: ConvReluLayer
    conv_cross: ConvReluLayer

    @property
    def d(self) -> int:
        return self.spatial_embed.d

    def conv_for(self, branch: Branch) -> ConvReluLayer:
        return {Branch.TEXT_POOL: self.conv_text, Branch.VISION_POOL: self.conv_vision,
                Branch.CROSS_MODALITY: self.conv_cross}[branch]

    def named_arrays(self) -> dict[str, np.ndarray]:
        out = {"spatial_embed.weight": self.spatial_embed.weight,
               "spatial_embed.bias": self.spatial_embed.bias}
        for name in ("text", "vision", "cross"):
            conv = getattr(self, f"conv_{name}")
            out[f"conv_{name}.kernel"] = conv.kernel
            out[f"conv_{name}.bias"] = conv.bias
        return out


PARAM_NAMES = ("spatial_embed.weight", "spatial_embed.bias",
               "conv_text.kernel", "conv_text.bias",
               "conv_vision.kernel", "conv_vision.bias",
               "conv_cross.kernel", "conv_cross.bias")


def init_params(d: int, seed: int = 0) -> TokenizerParams:
    """Seeded parameters (no training happens in this package)."""
    rng = np.random.default_rng(seed)

    def conv():
        return ConvReluLayer(rng.standard_normal((d, d)) / math.sqrt(d),
                             0.01 * rng.standard_normal(d))

    lm = LinearMap(rng.standard_normal((d, BBOX_FEATURES)) / math.sqrt(BBOX_FEATURES),
                   0.01 * rng.standard_normal(d))
    return TokenizerParams(lm, conv(), conv(), conv())


def save_params(path, params: TokenizerParams) -> None:
    with open(path, "wb") as fh:
        np.savez(fh, **params.named_arrays())


def params_from_arrays(arrays, d: int | None = None) -> TokenizerParams:
    missing = [n for n in PARAM_NAMES if n not in arrays]
    extra = [n for n in arrays if n not in PARAM_NAMES]
    if missing or extra:
        raise ValueError(f"parameter file: missing {missing}, unexpected {extra}")
    width = arrays["spatial_embed.weight"].shape[0]
    if d is not None and width != d:
        raise ValueError(f"parameter width {width} does not match d={d}")
    expected = {"spatial_embed.weight": (width, BBOX_FEATURES), "spatial_embed.bias": (width,)}
    for name in ("text", "vision", "cross"):
        expected[f"conv_{name}.kernel"] = (width, width)
        expected[f"conv_{name}.bias"] = (width,)
    for name, shape in expected.items():
        if arrays[name].shape != shape:
            raise ValueError(f"{name}: shape {arrays[name].shape}, expected {shape}")
    a = {k: np.asarray(v, dtype=np.float64) for k, v in arrays.items()}
    return TokenizerParams(
        LinearMap(a["spatial_embed.weight"], a["spatial_embed.bias"]),
        ConvReluLayer(a["conv_text.kernel"], a["conv_text.bias"]),
        ConvReluLayer(a["conv_vision.kernel"], a["conv_vision.bias"]),
        ConvReluLayer(a["conv_cross.kernel"], a["conv_cross.bias"]),
    )


def load_params(path, d: int | None = None) -> TokenizerParams:
    with np.load(Path(path), allow_pickle=False) as npz:
        arrays = {k: npz[k] for k in npz.files}
    return params_from_arrays(arrays, d)


# -- document tokenization ---------------------------------------------------

_REGION_BRANCH = {RoiClass.TEXT: Branch.TEXT_POOL, RoiClass.VISION: Branch.VISION_POOL}


def pool_region(pyr: FeaturePyramid, box: BBox, spec: PoolSpec, conv: ConvReluLayer) -> np.ndarray:
    """RoI Align -> conv + ReLU -> adaptive average pool, flattened to (size**2, d)."""
    x = conv(roi_align(pyr, box, spec))
    return adaptive_avg_pool(x, spec.size).reshape(-1, x.shape[-1])


def pool_global(pyr: FeaturePyramid, size: int, conv: ConvReluLayer) -> np.ndarray:
    """Cross-modality features from the coarsest map, flattened to (size**2, d)."""
    x = conv(pyr.levels[-1].values)
    return adaptive_avg_pool(x, size).reshape(-1, x.shape[-1])


def tokenize_document(pyr: FeaturePyramid, rs: RoiSet, cfg: PoolingConfig,
                      params: TokenizerParams, sampling_ratio: int = 2,
                      align_size: int | None = None, cross_first: bool = True) -> TokenSequence:
    """Build the interleaved image-token sequence for one page.

    Layout: the whole-image spatial token, the ``s_g**2`` cross-modality
    tokens, then for each region in reading order its spatial token followed
    by its ``s_t**2`` or ``s_v**2`` pooled tokens. With ``cross_first=False``
    the cross-modality block moves to the end.
    """
    if pyr.channels != cfg.d:
        raise ValueError(f"pyramid has {pyr.channels} channels but cfg.d={cfg.d}")
    if params.d != cfg.d:
        raise ValueError(f"parameters have width {params.d} but cfg.d={cfg.d}")
    sizes = {Branch.TEXT_POOL: cfg.s_t, Branch.VISION_POOL: cfg.s_v}

    vecs: list[np.ndarray] = []
    prov: list[Provenance] = []

    def emit(block, region_id, branch):
        block = np.atleast_2d(block)
        vecs.append(block)
        prov.extend(Provenance(region_id, branch, i) for i in range(block.shape[0]))

    emit(spatial_embed(FULL_PAGE, params.spatial_embed, RoiClass.WHOLE_IMAGE),
         GLOBAL_REGION_ID, Branch.SPATIAL)
    cross = pool_global(pyr, cfg.s_g, params.conv_cross)
    if cross_first:
        emit(cross, GLOBAL_REGION_ID, Branch.CROSS_MODALITY)

    regions = rs.by_id()
    for rid in reading_order(rs):
        r = regions[rid]
        branch = _REGION_BRANCH[r.cls]
        emit(spatial_embed(r.bbox, params.spatial_embed, r.cls), rid, Branch.SPATIAL)
        spec = PoolSpec(branch, sizes[branch], sampling_ratio, align_size)
        emit(pool_region(pyr, r.bbox, spec, params.conv_for(branch)), rid, branch)

    if not cross_first:
        emit(cross, GLOBAL_REGION_ID, Branch.CROSS_MODALITY)
    return TokenSequence(np.vstack(vecs), tuple(prov))
