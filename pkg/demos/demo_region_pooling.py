"""
Region pooling on a feature pyramid
===================================

RoI Align samples a box on one pyramid level with bilinear interpolation;
adaptive average pooling then tiles the result into an s x s grid.
"""

import numpy as np

from roitok import BBox, Branch, FeatureMap, FeaturePyramid, PoolSpec, adaptive_avg_pool, roi_align
from roitok.pooling import assign_level, roi_align_adjoint

# A 2x2 map sampled once at the box center mixes all four cells equally.
tiny = FeaturePyramid.single(np.array([[1.0, 2.0], [3.0, 5.0]])[..., None])
print("center sample:", roi_align(tiny, BBox(0, 0, 1, 1), PoolSpec(Branch.TEXT_POOL, 1, sampling_ratio=1)).item())

# Adaptive pooling of a 4x4 ramp into quadrants.
ramp = np.arange(1, 17, dtype=float).reshape(4, 4, 1)
print("quadrant means:\n", adaptive_avg_pool(ramp, 2)[..., 0])

# Boxes are routed to pyramid levels by size: small boxes go to fine levels.
rng = np.random.default_rng(0)
levels = [FeatureMap(rng.standard_normal((128 >> k, 128 >> k, 8))) for k in range(4)]
pyr = FeaturePyramid(tuple(levels), base_stride=8, image_size=(1024, 1024))
for box in [BBox(0.1, 0.1, 0.15, 0.12), BBox(0.2, 0.2, 0.45, 0.45), BBox(0, 0, 1, 1)]:
    print(f"box {box.as_tuple()} -> level {assign_level(box, pyr)}")

# Both operators are linear; the adjoint gives their exact gradient.
box, spec = BBox(0.2, 0.3, 0.7, 0.6), PoolSpec(Branch.VISION_POOL, 4)
out = roi_align(pyr, box, spec)
level, grad = roi_align_adjoint(pyr, box, spec, np.ones_like(out))
print(f"pooled {out.shape} from level {level}; total gradient mass {grad.sum():.3f} "
      f"(= {out.shape[0] * out.shape[1] * out.shape[2]} outputs)")
