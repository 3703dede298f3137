import numpy as np
import pytest

from roitok.types import BBox, RoI, RoiClass


def random_box(rng, min_side=0.01, max_side=0.5):
    w = rng.uniform(min_side, max_side)
    h = rng.uniform(min_side, max_side)
    x1 = rng.uniform(0, 1 - w)
    y1 = rng.uniform(0, 1 - h)
    return BBox(x1, y1, x1 + w, y1 + h)


def random_regions(rng, n_text, n_vision, shuffle=True):
    classes = [RoiClass.TEXT] * n_text + [RoiClass.VISION] * n_vision
    if shuffle:
        rng.shuffle(classes)
    ids = rng.permutation(10 * (n_text + n_vision) + 1)[: n_text + n_vision]
    return [RoI(int(i), random_box(rng), c) for i, c in zip(ids, classes)]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
