"""WA/UA semantics on hand-computed confusion matrices."""

import numpy as np
import pytest

from pcq.errors import InvalidInput
from pcq.metrics import compute_wa_ua, confusion_matrix, format_confusion

# (matrix, wa, ua) computed by hand from the definitions
HAND_CASES = [
    ([[3, 1], [1, 1]], 4 / 6, (3 / 4 + 1 / 2) / 2),
    ([[5, 0], [0, 5]], 1.0, 1.0),
    ([[2, 0, 0], [0, 3, 0], [0, 0, 4]], 1.0, 1.0),
    ([[0, 4], [0, 6]], 6 / 10, (0 / 4 + 6 / 6) / 2),
    ([[8, 2], [5, 5]], 13 / 20, (8 / 10 + 5 / 10) / 2),
    ([[1, 1, 1], [0, 2, 0], [3, 0, 3]], 6 / 11, (1 / 3 + 2 / 2 + 3 / 6) / 3),
    ([[10, 0, 0], [0, 0, 0], [0, 0, 1]], 1.0, 1.0),  # class 1 absent: excluded from UA
]


@pytest.mark.parametrize("matrix,wa,ua", HAND_CASES)
def test_hand_computed_cases_exact(matrix, wa, ua):
    got_wa, got_ua = compute_wa_ua(matrix)
    assert abs(got_wa - wa) < 1e-12
    assert abs(got_ua - ua) < 1e-12


def test_single_supported_class():
    wa, ua = compute_wa_ua([[7]])
    assert wa == 1.0 and ua == 1.0


def test_all_zero_rejected():
    with pytest.raises(InvalidInput):
        compute_wa_ua(np.zeros((3, 3)))


def test_non_square_rejected():
    with pytest.raises(InvalidInput):
        compute_wa_ua(np.zeros((2, 3)))


def test_negative_counts_rejected():
    with pytest.raises(InvalidInput):
        compute_wa_ua([[1, -1], [0, 2]])


def test_ua_invariant_under_class_duplication_wa_not():
    # duplicating every sample of one class preserves that class's recall
    # (UA is ratio-scale-free) but shifts the overall fraction correct
    base = np.array([[8, 2], [5, 5]])
    dup = base.copy()
    dup[1] *= 3
    wa0, ua0 = compute_wa_ua(base)
    wa1, ua1 = compute_wa_ua(dup)
    assert abs(ua0 - ua1) < 1e-12
    assert wa0 != wa1


def test_wa_equals_ua_when_balanced():
    conf = np.array([[7, 2, 1], [1, 8, 1], [2, 2, 6]])  # equal support of 10
    wa, ua = compute_wa_ua(conf)
    assert abs(wa - ua) < 1e-12


def test_confusion_matrix_builder():
    conf = confusion_matrix([0, 0, 1, 2], [0, 1, 1, 2], 3)
    np.testing.assert_array_equal(conf, [[1, 1, 0], [0, 1, 0], [0, 0, 1]])
    assert conf.sum() == 4


def test_format_confusion_is_aligned():
    text = format_confusion([[3, 1], [0, 6]], ["angry", "sad"])
    lines = text.splitlines()
    assert len(lines) == 3
    assert "angry" in lines[0] and "sad" in lines[0]
    assert lines[1].startswith("angry") or "angry" in lines[1]
