"""
Tokenizing a document page
==========================

A page becomes one spatial token per region (plus the whole image), a pooled
grid per region and a global cross-modality grid.
"""

import numpy as np

from roitok import (BBox, PoolingConfig, RoI, RoiClass, backbone_stub, count_tokens, finalize_roi_set,
                    init_params, tokenize_document)
from roitok.pooling import prepare_image

# A synthetic gray page with two dark text lines and a figure block.
page = np.full((800, 600), 235, dtype=np.uint8)
page[80:110, 60:400] = 30
page[140:170, 60:520] = 30
page[300:650, 100:500] = 120

regions = [
    RoI(0, BBox.from_pixels(60, 80, 400, 110, 600, 800), RoiClass.TEXT),
    RoI(1, BBox.from_pixels(60, 140, 520, 170, 600, 800), RoiClass.TEXT),
    RoI(2, BBox.from_pixels(100, 300, 500, 650, 600, 800), RoiClass.VISION),
]
rs = finalize_roi_set(regions)

cfg = PoolingConfig(s_t=1, s_v=4, s_g=8, d=32)
pyr = backbone_stub(prepare_image(page), cfg)
seq = tokenize_document(pyr, rs, cfg, init_params(cfg.d, seed=0))

print("tokens:", len(seq), "formula:", count_tokens(rs.n_text, rs.n_vision, cfg).total)
print("counts:", seq.counts)

# Provenance says where each token came from; print the layout in runs.
run_start = 0
for i in range(1, len(seq) + 1):
    if i == len(seq) or (seq.provenance[i].region_id, seq.provenance[i].branch) != (
            seq.provenance[run_start].region_id, seq.provenance[run_start].branch):
        p = seq.provenance[run_start]
        print(f"  tokens {run_start:3d}-{i - 1:3d}: region {p.region_id:2d} {p.branch.value}")
        run_start = i
