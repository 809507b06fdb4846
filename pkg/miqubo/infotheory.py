"""Histogram estimates of entropy, mutual information and conditional MI.

All quantities are in nats. Probabilities come from the integer codes of a
:class:`~miqubo.data.DiscretizedTable`; cells without mass contribute 0.
"""
import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from miqubo.data import DiscretizedTable, EncodedDataset
from miqubo.exceptions import CellBudgetError, DataError, InternalConsistencyError

logger = logging.getLogger(__name__)

DEFAULT_CELL_BUDGET = 10**7
CLAMP_TOLERANCE = 1e-12


@dataclass(frozen=True, eq=False)
class JointDistribution:
    dims: tuple
    probabilities: np.ndarray

    @property
    def support(self) -> int:
        return int(np.count_nonzero(self.probabilities))

    def marginal(self, axes: Sequence[int]) -> "JointDistribution":
        """Distribution of the variables on ``axes`` (in that order)."""
        axes = [int(a) for a in axes]
        others = tuple(a for a in range(len(self.dims)) if a not in axes)
        summed = self.probabilities.sum(axis=others) if others else self.probabilities
        kept = sorted(axes)
        summed = np.moveaxis(summed, [kept.index(a) for a in axes], range(len(axes)))
        return JointDistribution(tuple(self.dims[a] for a in axes), summed)


def _clamp(value: float, what: str) -> float:
    if value >= 0.0:
        return float(value)
    if value >= -CLAMP_TOLERANCE:
        return 0.0
    raise InternalConsistencyError(f"{what} evaluated to {value:.3e} < 0")


def _check_budget(dims: Sequence[int], cell_budget: int) -> int:
    cells = math.prod(int(d) for d in dims)
    if cells > cell_budget:
        raise CellBudgetError(cells, cell_budget)
    return cells


def _counts(arrays: Sequence[np.ndarray], dims: Sequence[int], cell_budget: int) -> np.ndarray:
    cells = _check_budget(dims, cell_budget)
    flat = np.ravel_multi_index([np.asarray(a, dtype=np.int64) for a in arrays], tuple(dims))
    return np.bincount(flat, minlength=cells).reshape(tuple(dims))


def joint_from_codes(
    arrays: Sequence[np.ndarray],
    dims: Sequence[int],
    cell_budget: int = DEFAULT_CELL_BUDGET,
) -> JointDistribution:
    if len(arrays) == 0:
        raise ValueError("At least one variable is required")
    n_samples = len(arrays[0])
    counts = _counts(arrays, dims, cell_budget)
    return JointDistribution(tuple(int(d) for d in dims), counts / n_samples)


def joint_distribution(
    t: DiscretizedTable,
    column_indices: Sequence[int],
    include_target: bool = False,
    cell_budget: int = DEFAULT_CELL_BUDGET,
) -> JointDistribution:
    """Empirical joint of the selected feature columns (target last)."""
    for i in column_indices:
        if not 0 <= int(i) < t.n_features:
            raise IndexError(f"Feature index {i} out of range for {t.n_features} features")
    arrays = [t.codes[:, int(i)] for i in column_indices]
    dims = [t.bin_counts[int(i)] for i in column_indices]
    if include_target:
        arrays.append(t.target_codes)
        dims.append(t.target_bin_count)
    return joint_from_codes(arrays, dims, cell_budget)


def entropy(p: JointDistribution) -> float:
    """Shannon entropy of the whole joint, 0 log 0 = 0."""
    mass = p.probabilities[p.probabilities > 0]
    return _clamp(-float(np.sum(mass * np.log(mass))), "entropy")


def mutual_information_codes(
    a: np.ndarray,
    b: np.ndarray,
    dims: Sequence[int],
    cell_budget: int = DEFAULT_CELL_BUDGET,
) -> float:
    pab = joint_from_codes([a, b], dims, cell_budget).probabilities
    pa = pab.sum(axis=1)
    pb = pab.sum(axis=0)
    rows, cols = np.nonzero(pab)
    mass = pab[rows, cols]
    value = float(np.sum(mass * (np.log(mass) - np.log(pa[rows]) - np.log(pb[cols]))))
    return _clamp(value, "mutual information")


def conditional_mutual_information_codes(
    a: np.ndarray,
    b: np.ndarray,
    c: np.ndarray,
    dims: Sequence[int],
    cell_budget: int = DEFAULT_CELL_BUDGET,
) -> float:
    """MI(A;B|C) from the empirical triple joint."""
    pabc = joint_from_codes([a, b, c], dims, cell_budget).probabilities
    pc = pabc.sum(axis=(0, 1))
    pac = pabc.sum(axis=1)
    pbc = pabc.sum(axis=0)
    ia, ib, ic = np.nonzero(pabc)
    mass = pabc[ia, ib, ic]
    value = float(
        np.sum(
            mass
            * (np.log(mass) + np.log(pc[ic]) - np.log(pac[ia, ic]) - np.log(pbc[ib, ic]))
        )
    )
    return _clamp(value, "conditional mutual information")


def mutual_information(
    t: DiscretizedTable, i: int, cell_budget: int = DEFAULT_CELL_BUDGET
) -> float:
    """MI(X_i; Y) between feature ``i`` and the target."""
    return mutual_information_codes(
        t.codes[:, i],
        t.target_codes,
        (t.bin_counts[i], t.target_bin_count),
        cell_budget,
    )


def conditional_entropy(
    t: DiscretizedTable, i: int, cell_budget: int = DEFAULT_CELL_BUDGET
) -> float:
    """S(Y|X_i) = -sum p(x, y) log p(y|x)."""
    pxy = joint_distribution(t, [i], include_target=True, cell_budget=cell_budget).probabilities
    px = pxy.sum(axis=1)
    rows, cols = np.nonzero(pxy)
    mass = pxy[rows, cols]
    return _clamp(-float(np.sum(mass * (np.log(mass) - np.log(px[rows])))), "conditional entropy")


def conditional_mutual_information(
    t: DiscretizedTable, j: int, i: int, cell_budget: int = DEFAULT_CELL_BUDGET
) -> float:
    """MI(X_j; Y | X_i): what feature ``j`` adds about the target once ``i`` is known."""
    if i == j:
        raise ValueError("Conditioning feature must differ from the measured feature")
    return conditional_mutual_information_codes(
        t.codes[:, j],
        t.target_codes,
        t.codes[:, i],
        (t.bin_counts[j], t.target_bin_count, t.bin_counts[i]),
        cell_budget,
    )


@dataclass(frozen=True, eq=False)
class MiReport:
    feature_names: tuple
    mi: np.ndarray

    @property
    def total_mi(self) -> float:
        return float(self.mi.sum())

    @property
    def concentration(self) -> float:
        """Share of the total MI held by the two most informative features."""
        total = self.total_mi
        if total <= 0:
            return 1.0
        return float(np.sort(self.mi)[::-1][:2].sum() / total)

    def ranking(self) -> np.ndarray:
        # stable sort keeps the lowest index first among ties
        return np.argsort(-self.mi, kind="stable")

    def to_bits(self) -> np.ndarray:
        return self.mi / math.log(2)

    def to_dict(self) -> dict:
        return {
            "feature_names": list(self.feature_names),
            "mi": self.mi.tolist(),
            "units": "nats",
            "total_mi": self.total_mi,
            "concentration": self.concentration,
            "ranking": self.ranking().tolist(),
        }

    def to_frame(self) -> pd.DataFrame:
        order = self.ranking()
        return pd.DataFrame(
            {
                "rank": np.arange(1, order.size + 1),
                "index": order,
                "feature": [self.feature_names[i] for i in order],
                "mi_nats": self.mi[order],
                "mi_bits": self.to_bits()[order],
            }
        )


@dataclass(frozen=True, eq=False)
class CmiTensor:
    """``values[i, j]`` = MI(X_j; Y | X_i) off the diagonal, MI(X_i; Y) on it."""

    feature_names: tuple
    values: np.ndarray

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def diagonal(self) -> np.ndarray:
        return np.diag(self.values).copy()

    def to_dict(self) -> dict:
        return {
            "feature_names": list(self.feature_names),
            "values": self.values.tolist(),
            "units": "nats",
        }

    def to_frame(self) -> pd.DataFrame:
        """Conditioning feature per row, conditioned feature per column."""
        table = pd.DataFrame(self.values, columns=list(self.feature_names))
        table.insert(0, "feature", list(self.feature_names), allow_duplicates=True)
        return table

    @classmethod
    def from_matrix(cls, values, feature_names: Optional[Sequence[str]] = None):
        values = np.asarray(values, dtype=float)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ValueError("A CMI tensor must be a square matrix")
        if feature_names is None:
            feature_names = [f"x{i}" for i in range(values.shape[0])]
        return cls(tuple(feature_names), values)


def mi_report(
    t: DiscretizedTable,
    names: Optional[Sequence[str]] = None,
    cell_budget: int = DEFAULT_CELL_BUDGET,
) -> MiReport:
    if t.n_features < 1:
        raise DataError("MI ranking needs at least one feature")
    names = tuple(names) if names is not None else tuple(t.feature_names)
    if len(names) != t.n_features:
        raise ValueError(f"{len(names)} names given for {t.n_features} features")
    values = np.array([mutual_information(t, i, cell_budget) for i in range(t.n_features)])
    report = MiReport(names, values)
    logger.info(
        f"MI ranking over {t.n_features} features: total {report.total_mi:.4f} nats, "
        f"concentration {report.concentration:.3f}"
    )
    return report


def _cmi_row(t: DiscretizedTable, i: int, cell_budget: int) -> np.ndarray:
    row = np.empty(t.n_features)
    for j in range(t.n_features):
        if j == i:
            row[j] = mutual_information(t, i, cell_budget)
        else:
            row[j] = conditional_mutual_information(t, j, i, cell_budget)
    return row


def cmi_tensor(
    t: DiscretizedTable,
    n_jobs: Optional[int] = 1,
    cell_budget: int = DEFAULT_CELL_BUDGET,
) -> CmiTensor:
    """All ordered pairwise CMI values; rows may be computed in parallel."""
    if t.n_features < 1:
        raise DataError("The CMI tensor needs at least one feature")
    rows = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_cmi_row)(t, i, cell_budget) for i in range(t.n_features)
    )
    logger.info(f"CMI tensor computed for {t.n_features} features")
    return CmiTensor(tuple(t.feature_names), np.vstack(rows))


def symmetric_eigenvalues(
    matrix, tol: float = 1e-12, max_sweeps: int = 100
) -> np.ndarray:
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps stop once the off-diagonal Frobenius norm drops below ``tol``
    times the norm of the matrix. Returned in descending order.
    """
    a = np.array(matrix, dtype=float, copy=True)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("Expected a square matrix")
    if not np.allclose(a, a.T, rtol=0, atol=1e-12 * max(1.0, np.abs(a).max(initial=0.0))):
        raise ValueError("Matrix is not symmetric")
    n = a.shape[0]
    scale = max(np.linalg.norm(a), np.finfo(float).tiny)
    for sweep in range(max_sweeps):
        off = np.sqrt(np.sum(a**2) - np.sum(np.diag(a) ** 2))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if a[p, q] == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * a[p, q])
                t = 1.0 if theta == 0 else np.sign(theta) / (abs(theta) + np.hypot(theta, 1.0))
                c = 1.0 / np.hypot(t, 1.0)
                s = t * c
                col_p, col_q = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p, row_q = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = a[q, p] = 0.0
    else:
        logger.warning(f"Jacobi eigensolver stopped after {max_sweeps} sweeps")
    return np.sort(np.diag(a))[::-1]


def explained_variance_ratio(e: EncodedDataset) -> np.ndarray:
    """PCA baseline: covariance eigenvalues over their sum, descending."""
    if e.n_features < 1 or e.n_samples < 2:
        raise DataError("Explained variance needs at least one feature and two samples")
    covariance = np.atleast_2d(np.cov(e.matrix, rowvar=False))
    eigenvalues = np.clip(symmetric_eigenvalues(covariance), 0.0, None)
    total = eigenvalues.sum()
    if total <= 0:
        raise DataError("Total variance is zero; explained variance ratio is undefined")
    return eigenvalues / total
