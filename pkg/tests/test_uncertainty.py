import numpy as np
import pytest

from tubenmpc.uncertainty import UncertaintyBox, sample_uniform, weighting_matrix


def test_weighting_matrix_table_values():
    W = weighting_matrix(UncertaintyBox())
    np.testing.assert_allclose(np.diag(W), [0.0625, 0.0625, 0.0576, 0.0576, 0.0625, 0.0625],
                               rtol=1e-14)
    assert np.count_nonzero(W - np.diag(np.diag(W))) == 0


def test_weighting_matrix_degenerate_boxes():
    assert not weighting_matrix(UncertaintyBox.zero()).any()
    W = weighting_matrix(UncertaintyBox(0.1, 0, 0, 0, 0, 0))
    expected = np.zeros((6, 6))
    expected[0, 0] = 0.01
    np.testing.assert_allclose(W, expected, rtol=1e-14)


def test_box_rejects_negative_bounds():
    with pytest.raises(ValueError):
        UncertaintyBox(b_m1=-0.1)
    with pytest.raises(ValueError):
        UncertaintyBox.from_array(np.ones(5))


def test_zero_box_samples_are_zero():
    assert not sample_uniform(UncertaintyBox.zero(), 3, 10).any()


def test_sampling_is_deterministic():
    a = sample_uniform(UncertaintyBox(), 42, 2)
    b = sample_uniform(UncertaintyBox(), 42, 2)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, sample_uniform(UncertaintyBox(), 43, 2))


def test_sampling_statistics():
    box = UncertaintyBox()
    b = box.as_array()
    s = sample_uniform(box, 0, 10_000)
    assert s.shape == (10_000, 6)
    assert np.all(np.abs(s) <= b)
    # uniform on [-b, b]: standard error of the mean is b / sqrt(3 n)
    sem = b / np.sqrt(3 * len(s))
    assert np.all(np.abs(s.mean(axis=0)) <= 3 * sem)
    assert all(box.contains(p) for p in s[:100])


def test_sampling_rejects_empty_count():
    with pytest.raises(ValueError):
        sample_uniform(UncertaintyBox(), 0, 0)
