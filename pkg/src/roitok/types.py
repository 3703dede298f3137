"""Geometry and data model shared by the tokenizer, budget, ingestion and metrics code.

Boxes live in normalized page coordinates (origin top-left, both axes in
[0, 1]); conversion to pixels or feature-map cells happens only where a
resolution is actually known.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

#: region id used for the appended whole-image region and the global pooling branch
GLOBAL_REGION_ID = -1


class RoiClass(enum.Enum):
    TEXT = "text"
    VISION = "vision"
    WHOLE_IMAGE = "whole_image"


class Branch(enum.Enum):
    """Which part of the encoder produced a token."""

    SPATIAL = "spatial"
    TEXT_POOL = "text_pool"
    VISION_POOL = "vision_pool"
    CROSS_MODALITY = "cross_modality"


@dataclass(frozen=True)
class BBox:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        coords = (self.x1, self.y1, self.x2, self.y2)
        if not all(math.isfinite(c) for c in coords):
            raise ValueError(f"non-finite box coordinates {coords}")
        if not (0.0 <= self.x1 < self.x2 <= 1.0 and 0.0 <= self.y1 < self.y2 <= 1.0):
            raise ValueError(f"invalid or degenerate box {coords}")

    @classmethod
    def from_pixels(cls, x1, y1, x2, y2, page_width, page_height) -> BBox:
        return cls(x1 / page_width, y1 / page_height, x2 / page_width, y2 / page_height)

    @classmethod
    def clipped(cls, x1, y1, x2, y2) -> BBox:
        """Clip to the unit square; still raises if nothing with positive area is left."""
        return cls(min(max(x1, 0.0), 1.0), min(max(y1, 0.0), 1.0),
                   min(max(x2, 0.0), 1.0), min(max(y2, 0.0), 1.0))

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)

    def to_pixels(self, page_width, page_height) -> tuple[float, float, float, float]:
        return (self.x1 * page_width, self.y1 * page_height,
                self.x2 * page_width, self.y2 * page_height)


FULL_PAGE = BBox(0.0, 0.0, 1.0, 1.0)


@dataclass(frozen=True)
class RoI:
    id: int
    bbox: BBox
    cls: RoiClass
    score: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"RoI {self.id}: score {self.score} outside [0, 1]")
        if self.cls is RoiClass.WHOLE_IMAGE and self.bbox != FULL_PAGE:
            raise ValueError("the whole-image region must span (0, 0, 1, 1)")


@dataclass(frozen=True)
class RoiSet:
    """Detected regions of one page plus the appended whole-image region (last)."""

    regions: tuple[RoI, ...]

    def __post_init__(self):
        n_global = sum(r.cls is RoiClass.WHOLE_IMAGE for r in self.regions)
        if n_global != 1 or self.regions[-1].cls is not RoiClass.WHOLE_IMAGE:
            raise ValueError("a finalized RoiSet holds exactly one whole-image region, last")

    @property
    def n_text(self) -> int:
        return sum(r.cls is RoiClass.TEXT for r in self.regions)

    @property
    def n_vision(self) -> int:
        return sum(r.cls is RoiClass.VISION for r in self.regions)

    @property
    def detected(self) -> tuple[RoI, ...]:
        """All regions except the whole-image one."""
        return self.regions[:-1]

    @property
    def whole_image(self) -> RoI:
        return self.regions[-1]

    def by_id(self) -> dict[int, RoI]:
        return {r.id: r for r in self.regions}

    def __len__(self):
        return len(self.regions)


def finalize_roi_set(regions: Iterable[RoI]) -> RoiSet:
    """Validate detected regions and append the whole-image region.

    Raises ValueError on duplicate or negative ids and on any region that is
    already a whole-image region.
    """
    regions = tuple(regions)
    seen = set()
    for r in regions:
        if r.cls is RoiClass.WHOLE_IMAGE:
            raise ValueError("input already contains a whole-image region")
        if r.id < 0:
            raise ValueError(f"region ids must be non-negative, got {r.id}")
        if r.id in seen:
            raise ValueError(f"duplicate region id {r.id}")
        seen.add(r.id)
    whole = RoI(GLOBAL_REGION_ID, FULL_PAGE, RoiClass.WHOLE_IMAGE, 1.0)
    return RoiSet(regions + (whole,))


def row_tolerance(boxes: Sequence[BBox]) -> float:
    if not boxes:
        return 0.0
    return 0.5 * float(np.median([b.height for b in boxes]))


def reading_order(rs: RoiSet, tolerance: float | None = None) -> list[int]:
    """Ids of the detected regions in top-to-bottom, left-to-right order.

    Regions are bucketed into rows: walking through them by ascending y1, a
    region joins the current row while its y1 is within ``tolerance`` of the
    row's first y1 (default: half the median region height). Rows go top to
    bottom; inside a row, by x1 then id. Text and vision regions share one
    ordering.
    """
    regions = rs.detected
    if tolerance is None:
        tolerance = row_tolerance([r.bbox for r in regions])
    by_top = sorted(regions, key=lambda r: (r.bbox.y1, r.bbox.x1, r.id))
    rows: list[list[RoI]] = []
    row_top = None
    for r in by_top:
        if row_top is None or r.bbox.y1 - row_top > tolerance:
            rows.append([])
            row_top = r.bbox.y1
        rows[-1].append(r)
    order = []
    for row in rows:
        order.extend(r.id for r in sorted(row, key=lambda r: (r.bbox.x1, r.id)))
    return order


@dataclass(frozen=True)
class PoolingConfig:
    """Pooled side lengths per branch and the feature width ``d``."""

    s_t: int = 1
    s_v: int = 4
    s_g: int = 8
    d: int = 256

    def __post_init__(self):
        for name in ("s_t", "s_v", "s_g", "d"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool) or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
        if not self.s_t <= self.s_v <= self.s_g:
            raise ValueError(f"need s_t <= s_v <= s_g, got {self.s_t}, {self.s_v}, {self.s_g}")


@dataclass(frozen=True, eq=False)
class FeatureMap:
    values: np.ndarray  # (height, width, channels)

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim != 3 or 0 in v.shape:
            raise ValueError(f"feature map must be a non-empty H x W x C array, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("feature map contains NaN or Inf")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def channels(self) -> int:
        return self.values.shape[2]


@dataclass(frozen=True, eq=False)
class FeaturePyramid:
    """Feature maps from finest (level 0) to coarsest, each level half the previous."""

    levels: tuple[FeatureMap, ...]
    base_stride: int
    image_size: tuple[int, int]  # (height, width) in pixels

    def __post_init__(self):
        levels = tuple(self.levels)
        object.__setattr__(self, "levels", levels)
        if not levels:
            raise ValueError("pyramid needs at least one level")
        h0, w0 = levels[0].height, levels[0].width
        d = levels[0].channels
        for k, fm in enumerate(levels):
            if fm.channels != d:
                raise ValueError("all pyramid levels must share the channel count")
            if (fm.height, fm.width) != (math.ceil(h0 / 2**k), math.ceil(w0 / 2**k)):
                raise ValueError(f"level {k} has shape {fm.height}x{fm.width}, expected halving")

    @property
    def channels(self) -> int:
        return self.levels[0].channels

    @property
    def image_area(self) -> float:
        return float(self.image_size[0] * self.image_size[1])

    @classmethod
    def single(cls, values, image_size=None) -> FeaturePyramid:
        """One-level pyramid with one pixel per cell; handy for tests and demos."""
        fm = FeatureMap(values)
        return cls((fm,), 1, image_size or (fm.height, fm.width))


@dataclass(frozen=True)
class Provenance:
    region_id: int
    branch: Branch
    slot: int


@dataclass(frozen=True, eq=False)
class Token:
    vector: np.ndarray
    provenance: Provenance


@dataclass(frozen=True)
class TokenCounts:
    spatial: int = 0
    semantic_text: int = 0
    semantic_vision: int = 0
    semantic_cross: int = 0

    @property
    def semantic(self) -> int:
        return self.semantic_text + self.semantic_vision + self.semantic_cross

    @property
    def total(self) -> int:
        return self.spatial + self.semantic


_BRANCH_FIELD = {
    Branch.SPATIAL: "spatial",
    Branch.TEXT_POOL: "semantic_text",
    Branch.VISION_POOL: "semantic_vision",
    Branch.CROSS_MODALITY: "semantic_cross",
}


@dataclass(frozen=True, eq=False)
class TokenSequence:
    """Ordered image tokens. ``vectors`` is the stacked (n, d) matrix of token vectors."""

    vectors: np.ndarray
    provenance: tuple[Provenance, ...]
    counts: TokenCounts = field(init=False)

    def __post_init__(self):
        if self.vectors.ndim != 2 or self.vectors.shape[0] != len(self.provenance):
            raise ValueError("one vector per provenance entry required")
        tally = dict.fromkeys(_BRANCH_FIELD.values(), 0)
        for p in self.provenance:
            tally[_BRANCH_FIELD[p.branch]] += 1
        object.__setattr__(self, "counts", TokenCounts(**tally))

    def __len__(self):
        return len(self.provenance)

    def __getitem__(self, i) -> Token:
        return Token(self.vectors[i], self.provenance[i])

    def __iter__(self):
        return (self[i] for i in range(len(self)))
