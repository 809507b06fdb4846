import logging
from dataclasses import dataclass, field
from typing import Mapping, Optional, Tuple

import numpy as np
from scipy.spatial.distance import cdist
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from miqubo.exceptions import ConfigError, DataError, SvrConvergenceError

logger = logging.getLogger(__name__)

KERNELS = ("rbf", "linear")
TAU = 1e-12


@dataclass(frozen=True)
class KernelParams:
    kind: str = "rbf"
    gamma: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in KERNELS:
            raise ConfigError(f"Unknown kernel {self.kind!r}, expected one of {KERNELS}")
        if self.kind == "rbf" and not self.gamma > 0:
            raise ConfigError(f"gamma must be positive for the rbf kernel, got {self.gamma}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "gamma": self.gamma}


@dataclass(frozen=True)
class SvrConfig:
    C: float = 1.0
    epsilon: float = 1e-3
    kernel: KernelParams = field(default_factory=KernelParams)
    tol: float = 1e-3
    max_iter: int = 100_000

    def __post_init__(self) -> None:
        if not self.C > 0:
            raise ConfigError(f"C must be positive, got {self.C}")
        if self.epsilon < 0:
            raise ConfigError(f"epsilon must be non-negative, got {self.epsilon}")
        if not self.tol > 0:
            raise ConfigError(f"tol must be positive, got {self.tol}")
        if int(self.max_iter) < 1:
            raise ConfigError(f"max_iter must be at least 1, got {self.max_iter}")

    def to_dict(self) -> dict:
        return {
            "C": self.C,
            "epsilon": self.epsilon,
            "kernel": self.kernel.to_dict(),
            "tol": self.tol,
            "max_iter": int(self.max_iter),
        }

    @classmethod
    def from_dict(cls, payload: Mapping):
        payload = dict(payload)
        kernel = payload.pop("kernel", {})
        if "gamma" in payload:
            kernel = {**kernel, "gamma": payload.pop("gamma")}
        unknown = set(payload) - {"C", "epsilon", "tol", "max_iter"}
        if unknown:
            raise ConfigError(f"Unknown SVR settings: {sorted(unknown)}")
        return cls(kernel=KernelParams(**kernel), **payload)


@dataclass(frozen=True, eq=False)
class SvrModel:
    """Trained approximator f(x) = sum_i coef_i K(s_i, x) + b.

    ``dual_coefs`` holds alpha_i - alpha*_i for the retained support inputs.
    """

    support_inputs: np.ndarray
    dual_coefs: np.ndarray
    bias: float
    params: KernelParams
    C: float
    epsilon: float
    iterations: int = 0
    objective_trace: Tuple[float, ...] = ()

    @property
    def n_features(self) -> int:
        return self.support_inputs.shape[1]

    def to_dict(self) -> dict:
        return {
            "support_inputs": self.support_inputs.tolist(),
            "dual_coefs": self.dual_coefs.tolist(),
            "bias": self.bias,
            "params": self.params.to_dict(),
            "C": self.C,
            "epsilon": self.epsilon,
            "iterations": self.iterations,
        }

    @classmethod
    def from_dict(cls, payload: Mapping):
        support = np.asarray(payload["support_inputs"], dtype=float)
        return cls(
            support_inputs=support.reshape(len(support), -1),
            dual_coefs=np.asarray(payload["dual_coefs"], dtype=float),
            bias=float(payload["bias"]),
            params=KernelParams(**payload["params"]),
            C=float(payload["C"]),
            epsilon=float(payload["epsilon"]),
            iterations=int(payload.get("iterations", 0)),
        )


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return X


def kernel_matrix(X, Z, p: Optional[KernelParams] = None) -> np.ndarray:
    p = p or KernelParams()
    X, Z = _as_matrix(X), _as_matrix(Z)
    if X.shape[1] != Z.shape[1]:
        raise DataError(f"Column counts differ: {X.shape[1]} and {Z.shape[1]}")
    if p.kind == "linear":
        return X @ Z.T
    return np.exp(-p.gamma * cdist(X, Z, "sqeuclidean"))


def _select_pair(beta, G, y, C, K, diag):
    """Working pair; returns (i, j, violation).

    ``i`` violates the optimality conditions most, ``j`` gives the largest
    second-order decrease of the dual objective together with ``i``.
    """
    score = -y * G
    up = ((y > 0) & (beta < C)) | ((y < 0) & (beta > 0))
    low = ((y > 0) & (beta > 0)) | ((y < 0) & (beta < C))
    if not up.any() or not low.any():
        return -1, -1, 0.0
    i = int(np.argmax(np.where(up, score, -np.inf)))
    violation = float(score[i] - score[low].min())
    gain = score[i] - score
    candidates = low & (gain > 0)
    if not candidates.any():
        return i, -1, violation
    row = K[i % K.shape[0]]
    curvature = np.maximum(diag[i] + diag - 2.0 * np.concatenate([row, row]), TAU)
    j = int(np.argmin(np.where(candidates, -(gain**2) / curvature, np.inf)))
    return i, j, violation


def _pair_update(ai, aj, yi, yj, Gi, Gj, Qii, Qjj, Qij, C):
    """Analytic two-variable step clipped to the box, keeping y'beta fixed."""
    if yi != yj:
        quad = max(Qii + Qjj + 2.0 * Qij, TAU)
        delta = (-Gi - Gj) / quad
        diff = ai - aj
        ai += delta
        aj += delta
        if diff > 0:
            if aj < 0:
                aj, ai = 0.0, diff
        elif ai < 0:
            ai, aj = 0.0, -diff
        if diff > 0:
            if ai > C:
                ai, aj = C, C - diff
        elif aj > C:
            aj, ai = C, C + diff
    else:
        quad = max(Qii + Qjj - 2.0 * Qij, TAU)
        delta = (Gi - Gj) / quad
        total = ai + aj
        ai -= delta
        aj += delta
        if total > C:
            if ai > C:
                ai, aj = C, total - C
            if aj > C:
                aj, ai = C, total - C
        else:
            if aj < 0:
                aj, ai = 0.0, total
            if ai < 0:
                ai, aj = 0.0, total
    return ai, aj


def _bias(beta, G, y, C) -> float:
    yG = y * G
    at_upper = beta >= C
    at_lower = beta <= 0
    free = ~(at_upper | at_lower)
    if free.any():
        return -float(yG[free].mean())
    bounds_ub = (at_upper & (y < 0)) | (at_lower & (y > 0))
    bounds_lb = (at_upper & (y > 0)) | (at_lower & (y < 0))
    ub = yG[bounds_ub].min(initial=np.inf)
    lb = yG[bounds_lb].max(initial=-np.inf)
    return -float((ub + lb) / 2.0)


def train(
    X,
    z,
    C: float = 1.0,
    epsilon: float = 1e-3,
    p: Optional[KernelParams] = None,
    tol: float = 1e-3,
    max_iter: int = 100_000,
    record_objective: bool = False,
) -> SvrModel:
    """Fit epsilon-SVR by pairwise coordinate descent on the dual.

    Each iteration picks a working pair (see :func:`_select_pair`) and
    solves the two-variable sub-problem exactly. Stops when the maximal KKT
    violation drops below ``tol``.

    Raises
    ------
    SvrConvergenceError
        When ``max_iter`` pair updates do not reach ``tol``.
    """
    p = p or KernelParams()
    X = _as_matrix(X)
    z = np.asarray(z, dtype=float).reshape(-1)
    if not C > 0:
        raise ConfigError(f"C must be positive, got {C}")
    if epsilon < 0:
        raise ConfigError(f"epsilon must be non-negative, got {epsilon}")
    if X.shape[0] != z.size:
        raise DataError(f"{X.shape[0]} rows but {z.size} targets")
    if z.size < 2:
        raise DataError("SVR training needs at least two samples")

    l = z.size
    K = kernel_matrix(X, X, p)
    y = np.concatenate([np.ones(l), -np.ones(l)])
    lin = np.concatenate([epsilon - z, epsilon + z])
    beta = np.zeros(2 * l)
    G = lin.copy()
    diag = np.concatenate([np.diag(K), np.diag(K)])
    trace = [0.0] if record_objective else []

    iterations = 0
    while True:
        i, j, violation = _select_pair(beta, G, y, C, K, diag)
        if violation < tol:
            break
        if iterations >= max_iter:
            raise SvrConvergenceError(violation, iterations, tol)
        old_i, old_j = beta[i], beta[j]
        new_i, new_j = _pair_update(
            old_i, old_j, y[i], y[j], G[i], G[j], diag[i], diag[j], y[i] * y[j] * K[i % l, j % l], C
        )
        beta[i], beta[j] = new_i, new_j
        # Q[t, s] = y_t y_s K[t mod l, s mod l]
        step = K[:, i % l] * (y[i] * (new_i - old_i)) + K[:, j % l] * (y[j] * (new_j - old_j))
        G[:l] += step
        G[l:] -= step
        iterations += 1
        if record_objective:
            trace.append(float(beta @ (G + lin)) / 2.0)

    coefs = beta[:l] - beta[l:]
    bias = _bias(beta, G, y, C)
    keep = coefs != 0.0
    logger.debug(f"SVR converged in {iterations} pair updates, {int(keep.sum())} support vectors")
    return SvrModel(
        support_inputs=X[keep],
        dual_coefs=coefs[keep],
        bias=bias,
        params=p,
        C=float(C),
        epsilon=float(epsilon),
        iterations=iterations,
        objective_trace=tuple(trace),
    )


def train_with(X, z, config: SvrConfig, record_objective: bool = False) -> SvrModel:
    return train(
        X,
        z,
        C=config.C,
        epsilon=config.epsilon,
        p=config.kernel,
        tol=config.tol,
        max_iter=config.max_iter,
        record_objective=record_objective,
    )


def predict(m: SvrModel, X) -> np.ndarray:
    X = _as_matrix(X)
    if X.shape[1] != m.n_features and m.dual_coefs.size:
        raise DataError(f"Model expects {m.n_features} columns, got {X.shape[1]}")
    if m.dual_coefs.size == 0:
        return np.full(X.shape[0], m.bias)
    return kernel_matrix(X, m.support_inputs, m.params) @ m.dual_coefs + m.bias


def r2_score(z_true, z_pred) -> float:
    z_true = np.asarray(z_true, dtype=float).reshape(-1)
    z_pred = np.asarray(z_pred, dtype=float).reshape(-1)
    if z_true.size != z_pred.size:
        raise DataError(f"Length mismatch: {z_true.size} and {z_pred.size}")
    if z_true.size < 2:
        raise DataError("R2 needs at least two values")
    total = np.sum((z_true - z_true.mean()) ** 2)
    if total == 0:
        raise DataError("R2 is undefined for a constant target")
    return float(1.0 - np.sum((z_true - z_pred) ** 2) / total)


class EpsilonSVR(BaseEstimator, RegressorMixin):
    """scikit-learn estimator around :func:`train` and :func:`predict`."""

    def __init__(self, C=1.0, epsilon=1e-3, kernel="rbf", gamma=1.0, tol=1e-3, max_iter=100_000):
        self.C = C
        self.epsilon = epsilon
        self.kernel = kernel
        self.gamma = gamma
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y):
        self.model_ = train(
            X,
            y,
            C=self.C,
            epsilon=self.epsilon,
            p=KernelParams(self.kernel, self.gamma),
            tol=self.tol,
            max_iter=self.max_iter,
        )
        self.n_features_in_ = _as_matrix(X).shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        return predict(self.model_, X)
