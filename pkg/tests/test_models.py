import numpy as np
import pytest

from echopipe import models
from echopipe.errors import UsageError
from echopipe.nn import layers as L

# derived by hand from the valid-conv / floor-pool laws
TRACE_W5 = [(236, 183, 5, 1), (234, 181, 3, 32), (117, 90, 3, 32), (115, 88, 2, 32), (57, 44, 2, 32),
            (55, 42, 1, 16), (27, 21, 1, 16), (25, 19, 1, 8), (12, 9, 1, 8), (864,), (32,), (16,), (1,)]


@pytest.mark.parametrize("w,count", [(5, 57977), (7, 68345), (9, 74105)])
def test_detector_parameter_counts(w, count):
    m = models.build_detector(w)
    assert m.count_parameters() == count
    assert m.expected_parameters() == count


def test_detector_shape_trace():
    assert models.build_detector(5).shapes == TRACE_W5


@pytest.mark.parametrize("w", [7, 9])
def test_flatten_is_864_for_every_window(w):
    assert (864,) in models.build_detector(w).shapes


def test_unsupported_window():
    with pytest.raises(UsageError):
        models.build_detector(6)


def test_segmenter_reference_count_and_trace():
    m = models.build_segmenter()
    assert m.count_parameters() == 189697
    assert [s[0] for s in m.shapes] == [150, 150, 75, 75, 38, 38, 19, 38, 76, 152, 150]
    assert m.output_shape == (150, 150, 1)


def test_glorot_limits_and_zero_bias():
    m = models.build_detector(5, seed=3)
    for p in m.params:
        fan_in, fan_out = L.fans(m.layers[p.layer], m.shapes[p.layer])
        limit = np.sqrt(6 / (fan_in + fan_out))
        assert np.abs(p.weight).max() <= limit
        assert np.abs(p.weight).max() > 0.9 * limit
        assert not p.bias.any()


def test_initialisation_is_seeded():
    a, b, c = models.build_detector(5, seed=1), models.build_detector(5, seed=1), models.build_detector(5, seed=2)
    assert all(np.array_equal(p.weight, q.weight) for p, q in zip(a.params, b.params))
    assert not np.array_equal(a.params[0].weight, c.params[0].weight)


def test_min_detector_input():
    side = models.min_detector_input(5)[0]
    models.build_detector(5, input_hw=(side, side))
    with pytest.raises(ValueError):
        models.build_detector(5, input_hw=(side - 1, side - 1))
    # the 20x20 toy input is too small for four conv/pool blocks
    assert side > 20


def test_arch_search_finds_reference():
    found = models.arch_search(189697)
    ref = models.SegmenterConfig((32, 64, 128), (64, 32, 16), 3, 3)
    assert ref in found
    sample = found[:: max(1, len(found) // 25)]
    assert all(c.count() == 189697 for c in sample)


def test_arch_search_empty_for_unreachable_target():
    assert models.arch_search(10) == []


def test_arch_search_reaches_192617():
    found = models.arch_search(192617)
    assert found
    # recount from the arrays a built model actually allocates
    for c in found[:: max(1, len(found) // 8)]:
        m = models.build_segmenter(encoder=c.encoder, decoder=c.decoder,
                                   enc_kernel=c.enc_kernel, dec_kernel=c.dec_kernel)
        assert sum(p.weight.size + p.bias.size for p in m.params if p is not None) == 192617
