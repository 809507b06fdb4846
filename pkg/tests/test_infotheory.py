import math
from collections import Counter

import numpy as np
import pytest

from miqubo.data import DiscretizedTable, EncodedDataset
from miqubo.exceptions import CellBudgetError, DataError
from miqubo.infotheory import (
    CmiTensor,
    cmi_tensor,
    conditional_entropy,
    conditional_mutual_information,
    entropy,
    explained_variance_ratio,
    joint_distribution,
    joint_from_codes,
    mi_report,
    mutual_information,
    symmetric_eigenvalues,
)


def plugin_mi(a, b):
    """Direct double-sum oracle over observed pairs."""
    n = len(a)
    pab = Counter(zip(a, b))
    pa = Counter(a)
    pb = Counter(b)
    return sum(
        (c / n) * math.log((c / n) / ((pa[x] / n) * (pb[y] / n))) for (x, y), c in pab.items()
    )


def random_table(rng, n_features=None, max_bins=6, max_samples=64):
    n_features = n_features or int(rng.integers(2, 5))
    n = int(rng.integers(8, max_samples + 1))
    codes = np.column_stack(
        [rng.integers(0, rng.integers(2, max_bins + 1), size=n) for _ in range(n_features)]
    )
    target = rng.integers(0, rng.integers(2, max_bins + 1), size=n)
    return DiscretizedTable.from_codes(codes, target)


def encoded(matrix):
    matrix = np.asarray(matrix, dtype=float)
    names = tuple(f"f{i}" for i in range(matrix.shape[1]))
    return EncodedDataset(
        feature_names=names,
        matrix=matrix,
        target=np.zeros(matrix.shape[0]),
        origin_map={name: name for name in names},
    )


def test_joint_single_column():
    t = DiscretizedTable.from_codes([1, 1, 1, 0], [0, 0, 0, 0])
    p = joint_distribution(t, [0])
    np.testing.assert_array_equal(p.probabilities, [0.25, 0.75])


def test_joint_identical_columns():
    column = np.array([0, 1, 1, 0, 1])
    t = DiscretizedTable.from_codes(np.column_stack([column, column]), column)
    p = joint_distribution(t, [0, 1])
    assert p.support == 2
    np.testing.assert_array_equal(p.probabilities, [[0.4, 0.0], [0.0, 0.6]])


def test_joint_marginals():
    rng = np.random.default_rng(11)
    t = random_table(rng, n_features=3)
    p = joint_distribution(t, [0, 1, 2], include_target=True)
    assert p.probabilities.sum() == pytest.approx(1.0, abs=1e-12)
    for axis in range(3):
        single = joint_distribution(t, [axis]).probabilities
        np.testing.assert_allclose(p.marginal([axis]).probabilities, single, atol=1e-15)
    np.testing.assert_allclose(
        p.marginal([2, 0]).probabilities,
        joint_distribution(t, [0, 2]).probabilities.T,
        atol=1e-15,
    )


def test_joint_cell_budget():
    t = DiscretizedTable.from_codes(np.column_stack([np.arange(10)] * 3), np.arange(10))
    with pytest.raises(CellBudgetError):
        joint_distribution(t, [0, 1, 2], include_target=True, cell_budget=1000)


@pytest.mark.parametrize(
    "codes,expected",
    [([0, 1], math.log(2)), ([1, 1, 1], 0.0), ([0, 1, 1, 1], 0.5623351446188083)],
    ids=["uniform", "point-mass", "quarter"],
)
def test_entropy(codes, expected):
    p = joint_from_codes([np.array(codes)], [2])
    assert entropy(p) == pytest.approx(expected, abs=1e-12)


def test_mi_independent():
    t = DiscretizedTable.from_codes([0, 0, 1, 1], [0, 1, 0, 1])
    assert mutual_information(t, 0) == pytest.approx(0.0, abs=1e-12)


def test_mi_identical_is_entropy():
    y = np.array([0, 1, 2, 2, 1, 0, 0, 2])
    t = DiscretizedTable.from_codes(y, y)
    target_entropy = entropy(joint_from_codes([y], [3]))
    assert mutual_information(t, 0) == pytest.approx(target_entropy, abs=1e-12)


def test_mi_one_flip():
    y = np.array([0, 0, 0, 0, 1, 1, 1, 1])
    x = y.copy()
    x[2] = 1
    t = DiscretizedTable.from_codes(x, y)
    assert mutual_information(t, 0) == pytest.approx(plugin_mi(x, y), abs=1e-12)
    swapped = DiscretizedTable.from_codes(y, x)
    assert mutual_information(swapped, 0) == pytest.approx(mutual_information(t, 0), abs=1e-12)


def test_cmi_constant_condition():
    rng = np.random.default_rng(2)
    x = rng.integers(0, 3, size=30)
    y = rng.integers(0, 2, size=30)
    t = DiscretizedTable.from_codes(np.column_stack([x, np.zeros(30, dtype=int)]), y)
    assert conditional_mutual_information(t, 0, 1) == pytest.approx(mutual_information(t, 0), abs=1e-12)


def test_cmi_duplicate_is_zero():
    rng = np.random.default_rng(4)
    x = rng.integers(0, 4, size=40)
    y = (x + rng.integers(0, 2, size=40)) % 3
    t = DiscretizedTable.from_codes(np.column_stack([x, x]), y)
    assert conditional_mutual_information(t, 1, 0) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        conditional_mutual_information(t, 0, 0)


def test_random_table_identities():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        t = random_table(rng)
        y = t.target_codes
        s_y = entropy(joint_from_codes([y], [t.target_bin_count]))
        for i in range(t.n_features):
            mi = mutual_information(t, i)
            assert mi >= -1e-12
            assert mi == pytest.approx(s_y - conditional_entropy(t, i), abs=1e-10)
            for j in range(t.n_features):
                if i == j:
                    continue
                cmi = conditional_mutual_information(t, j, i)
                assert cmi >= -1e-12
                xj, xi = t.codes[:, j], t.codes[:, i]
                chain = plugin_mi(list(xj), list(zip(y, xi))) - plugin_mi(list(xj), list(xi))
                assert cmi == pytest.approx(chain, abs=1e-10)
        twin = DiscretizedTable.from_codes(np.column_stack([t.codes[:, 0], t.codes[:, 0]]), y)
        assert conditional_mutual_information(twin, 1, 0) == pytest.approx(0.0, abs=1e-12)


def test_merging_target_bins_never_increases_mi():
    rng = np.random.default_rng(8)
    for _ in range(50):
        t = random_table(rng, n_features=1, max_bins=5)
        if t.target_bin_count < 3:
            continue
        merged = np.where(t.target_codes == t.target_bin_count - 1, 0, t.target_codes)
        coarse = DiscretizedTable.from_codes(t.codes, merged)
        assert mutual_information(coarse, 0) <= mutual_information(t, 0) + 1e-12


def test_mi_report():
    y = np.array([0, 1, 1, 0, 2, 2, 1, 0])
    noise = np.array([0, 0, 1, 1, 0, 1, 0, 1])
    t = DiscretizedTable.from_codes(np.column_stack([noise, y, y]), y)
    report = mi_report(t, ["noise", "a", "b"])
    assert report.mi[1] == report.mi[2]
    np.testing.assert_array_equal(report.ranking(), [1, 2, 0])
    np.testing.assert_allclose(report.to_bits(), report.mi / math.log(2))
    table = report.to_frame()
    assert list(table.columns) == ["rank", "index", "feature", "mi_nats", "mi_bits"]
    assert list(table["feature"]) == ["a", "b", "noise"]
    assert report.to_dict()["units"] == "nats"


def test_mi_report_zero_total():
    rng = np.random.default_rng(5)
    t = DiscretizedTable.from_codes(rng.integers(0, 3, size=(20, 3)), np.zeros(20, dtype=int))
    report = mi_report(t)
    np.testing.assert_array_equal(report.mi, np.zeros(3))
    assert report.concentration == 1.0


def test_mi_report_needs_features():
    t = DiscretizedTable.from_codes(np.zeros((4, 0), dtype=int), [0, 1, 0, 1])
    with pytest.raises(DataError):
        mi_report(t)


def test_cmi_tensor_matches_pairwise():
    rng = np.random.default_rng(32)
    codes = rng.integers(0, 3, size=(32, 4))
    t = DiscretizedTable.from_codes(codes, rng.integers(0, 3, size=32))
    c = cmi_tensor(t)
    report = mi_report(t)
    np.testing.assert_array_equal(c.diagonal, report.mi)
    for i in range(4):
        for j in range(4):
            if i != j:
                assert c.values[i, j] == pytest.approx(
                    conditional_mutual_information(t, j, i), abs=1e-12
                )
    parallel = cmi_tensor(t, n_jobs=2)
    np.testing.assert_array_equal(parallel.values, c.values)
    assert (c.values >= 0).all()


def test_cmi_tensor_independent():
    x0 = np.array([0, 0, 1, 1, 0, 0, 1, 1])
    x1 = np.array([0, 1, 0, 1, 0, 1, 0, 1])
    y = np.array([0, 0, 0, 0, 1, 1, 1, 1])
    c = cmi_tensor(DiscretizedTable.from_codes(np.column_stack([x0, x1]), y))
    np.testing.assert_allclose(c.values, np.zeros((2, 2)), atol=1e-12)


def test_cmi_tensor_from_matrix():
    c = CmiTensor.from_matrix([[0.8, 0.1], [0.3, 0.6]])
    assert c.feature_names == ("x0", "x1")
    assert c.n == 2
    with pytest.raises(ValueError):
        CmiTensor.from_matrix([1.0, 2.0])


def test_evr_correlated():
    a = np.array([-1.5, -0.5, 0.5, 1.5])
    evr = explained_variance_ratio(encoded(np.column_stack([a, a])))
    np.testing.assert_allclose(evr, [1.0, 0.0], atol=1e-10)


def test_evr_isotropic():
    matrix = np.array([[1, 1, 1], [-1, 1, -1], [1, -1, -1], [-1, -1, 1]], dtype=float)
    np.testing.assert_allclose(explained_variance_ratio(encoded(matrix)), [1 / 3] * 3, atol=1e-12)


def test_evr_random_against_eigvalsh():
    rng = np.random.default_rng(50)
    matrix = rng.normal(size=(50, 5))
    expected = np.sort(np.linalg.eigvalsh(np.cov(matrix, rowvar=False)))[::-1]
    evr = explained_variance_ratio(encoded(matrix))
    np.testing.assert_allclose(evr, expected / expected.sum(), atol=1e-8)
    assert evr.sum() == pytest.approx(1.0)
    shuffled = explained_variance_ratio(encoded(matrix[rng.permutation(50)]))
    np.testing.assert_allclose(shuffled, evr, atol=1e-12)


def test_evr_zero_variance():
    with pytest.raises(DataError):
        explained_variance_ratio(encoded(np.ones((4, 2))))


def test_symmetric_eigenvalues():
    matrix = np.array([[2.0, 1.0], [1.0, 2.0]])
    np.testing.assert_allclose(symmetric_eigenvalues(matrix), [3.0, 1.0], atol=1e-12)
    with pytest.raises(ValueError):
        symmetric_eigenvalues(np.array([[1.0, 2.0], [0.0, 1.0]]))
