"""Restoration operators: determinism, resolution preservation, distinctness."""

import numpy as np
import pytest

from driqa.corpus import make_pristine_image
from driqa.degradations import DegradationSpec, degrade
from driqa.errors import UsageError
from driqa.restorers import KINDS, RestorerSpec, default_restorers, restore


@pytest.fixture(scope="module")
def degraded():
    pristine = make_pristine_image(128, seed=33)
    return degrade(pristine, DegradationSpec("gaussian_noise", 25, seed=2))


def test_default_menu_covers_all_kinds():
    specs = default_restorers()
    assert [s.kind for s in specs] == list(KINDS)
    assert len({s.id for s in specs}) == len(specs)


def test_unknown_kind_rejected():
    with pytest.raises(UsageError):
        RestorerSpec("upscale9000", "x")


def test_identity_returns_equal_pixels(degraded):
    out = restore(degraded, RestorerSpec("identity", "identity"))
    assert np.array_equal(out, degraded)
    assert out is not degraded  # caller may mutate without aliasing the input


def test_restorers_preserve_resolution_and_dtype(degraded):
    for spec in default_restorers():
        out = restore(degraded, spec, seed=1)
        assert out.shape == degraded.shape, spec.id
        assert out.dtype == np.uint8


def test_restorers_are_deterministic(degraded):
    for spec in default_restorers():
        a = restore(degraded, spec, seed=5)
        b = restore(degraded, spec, seed=5)
        assert np.array_equal(a, b), spec.id


def test_distinct_restorers_give_distinct_outputs(degraded):
    outputs = [restore(degraded, spec, seed=1) for spec in default_restorers()]
    for i in range(len(outputs)):
        for j in range(i + 1, len(outputs)):
            gap = np.linalg.norm(outputs[i].astype(float) - outputs[j].astype(float))
            assert gap > 0, (default_restorers()[i].id, default_restorers()[j].id)


def test_median_filter_removes_single_impulse():
    img = np.full((32, 32, 3), 100, dtype=np.uint8)
    img[16, 16] = 255
    out = restore(img, RestorerSpec("median_denoise", "m"))
    assert out[16, 16, 0] == 100


def test_param_lookup():
    spec = RestorerSpec("gaussian_denoise", "g", (("radius", 2.0),))
    assert spec.param("radius", 1.0) == 2.0
    assert spec.param("missing", 7.0) == 7.0
