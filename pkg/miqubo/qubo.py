import logging
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from miqubo.exceptions import ConfigError, DataError
from miqubo.infotheory import CmiTensor
from miqubo.utils import read_json, write_json

logger = logging.getLogger(__name__)

PENALTY_MARGIN = 1e-9


@dataclass(frozen=True, eq=False)
class QuboProblem:
    """Minimize sum q_i x_i + sum_{i<j} q_ij x_i x_j over binary x.

    ``offset`` is the constant left over by the cardinality penalty; it is
    not part of :func:`energy`.
    """

    linear: np.ndarray
    quadratic: Dict[Tuple[int, int], float] = field(default_factory=dict)
    penalty_strength: float = 0.0
    k: Optional[int] = None
    labels: Tuple[str, ...] = ()
    offset: float = 0.0

    def __post_init__(self) -> None:
        linear = np.asarray(self.linear, dtype=float).reshape(-1)
        object.__setattr__(self, "linear", linear)
        n = linear.size
        quadratic = {}
        for (i, j), value in self.quadratic.items():
            i, j = int(i), int(j)
            if i == j:
                raise DataError(f"Self-pair ({i}, {i}) belongs in the linear terms")
            if not (0 <= i < j < n):
                raise DataError(f"Coupler ({i}, {j}) must satisfy 0 <= i < j < {n}")
            quadratic[(i, j)] = float(value)
        object.__setattr__(self, "quadratic", quadratic)
        if self.k is not None and not self.penalty_strength > 0:
            raise ConfigError("A cardinality target needs a positive penalty strength")
        if not self.labels:
            object.__setattr__(self, "labels", tuple(f"x{i}" for i in range(n)))
        elif len(self.labels) != n:
            raise DataError(f"{len(self.labels)} labels for {n} variables")
        else:
            object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def n(self) -> int:
        return self.linear.size

    @cached_property
    def upper(self) -> np.ndarray:
        """Dense strictly upper-triangular coupler matrix."""
        matrix = np.zeros((self.n, self.n))
        for (i, j), value in self.quadratic.items():
            matrix[i, j] = value
        return matrix

    @cached_property
    def couplings(self) -> np.ndarray:
        """Symmetric coupler matrix with a zero diagonal."""
        return self.upper + self.upper.T

    def to_matrix(self) -> np.ndarray:
        """Upper-triangular Q with the linear terms on the diagonal."""
        return self.upper + np.diag(self.linear)

    def max_abs_coefficient(self) -> float:
        values = np.concatenate([np.abs(self.linear), np.abs(list(self.quadratic.values()))])
        return float(values.max(initial=0.0))

    def penalty_contribution(self, x) -> float:
        """Energy contributed by the cardinality penalty, offset excluded."""
        if self.k is None:
            return 0.0
        weight = int(np.sum(x))
        return self.penalty_strength * ((weight - self.k) ** 2 - self.k**2)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "linear": self.linear.tolist(),
            "quadratic": [[i, j, v] for (i, j), v in sorted(self.quadratic.items())],
            "offset": self.offset,
            "labels": list(self.labels),
            "penalty_strength": self.penalty_strength,
            "k": self.k,
        }

    @classmethod
    def from_dict(cls, payload: Mapping):
        linear = np.asarray(payload["linear"], dtype=float)
        if "n" in payload and int(payload["n"]) != linear.size:
            raise DataError(f"'n' is {payload['n']} but {linear.size} linear terms are given")
        quadratic = {}
        for i, j, value in payload.get("quadratic", []):
            i, j = sorted((int(i), int(j)))
            quadratic[(i, j)] = quadratic.get((i, j), 0.0) + float(value)
        return cls(
            linear=linear,
            quadratic=quadratic,
            penalty_strength=float(payload.get("penalty_strength", 0.0)),
            k=payload.get("k"),
            labels=tuple(payload.get("labels") or ()),
            offset=float(payload.get("offset", 0.0)),
        )

    def to_coo(self) -> str:
        lines = [f"{i} {i} {value!r}" for i, value in enumerate(self.linear.tolist())]
        lines += [f"{i} {j} {value!r}" for (i, j), value in sorted(self.quadratic.items())]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_coo(cls, text: str, n: Optional[int] = None):
        """Parse ``i j value`` lines; diagonal entries are the linear terms."""
        entries = []
        for number, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3:
                raise DataError(f"COO line {number} needs 'i j value', got {line!r}")
            entries.append((int(parts[0]), int(parts[1]), float(parts[2])))
        size = n if n is not None else 1 + max((max(i, j) for i, j, _ in entries), default=-1)
        linear = np.zeros(size)
        quadratic = {}
        for i, j, value in entries:
            if i == j:
                linear[i] += value
            else:
                key = (min(i, j), max(i, j))
                quadratic[key] = quadratic.get(key, 0.0) + value
        return cls(linear=linear, quadratic=quadratic)


def write_qubo(q: QuboProblem, path: Union[str, Path]) -> Path:
    path = Path(path)
    if path.suffix == ".json":
        return write_json(q.to_dict(), path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(q.to_coo(), encoding="utf-8")
    return path


def read_qubo(path: Union[str, Path]) -> QuboProblem:
    path = Path(path)
    if path.suffix == ".json":
        return QuboProblem.from_dict(read_json(path))
    return QuboProblem.from_coo(path.read_text(encoding="utf-8"))


def build_miqubo(c: CmiTensor) -> QuboProblem:
    """Negated MI on the diagonal, negated CMI on the couplers.

    Both ordered terms MI(X_j;Y|X_i) and MI(X_i;Y|X_j) are summed into the
    single coupler (i, j), i < j, so that the energy of a selection equals
    minus the selection objective.
    """
    values = np.asarray(c.values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise DataError("CMI tensor contains non-finite values")
    n = values.shape[0]
    quadratic = {}
    for i in range(n):
        for j in range(i + 1, n):
            coupler = -(values[i, j] + values[j, i])
            if coupler != 0.0:
                quadratic[(i, j)] = coupler
    problem = QuboProblem(linear=-np.diag(values), quadratic=quadratic, labels=tuple(c.feature_names))
    logger.debug(f"MIQUBO built with {n} variables and {len(quadratic)} couplers")
    return problem


def default_penalty(q: QuboProblem) -> float:
    """Penalty large enough that every minimum has the requested weight.

    A single flip changes the unpenalized energy of variable i by at most
    |q_i| + sum_j |q_ij|; any penalty above the largest such row sum makes
    every off-weight string improvable by one flip towards weight k.
    """
    row_sums = np.abs(q.linear) + np.abs(q.couplings).sum(axis=1)
    return float(max(2.0 * q.max_abs_coefficient(), row_sums.max(initial=0.0))) + PENALTY_MARGIN


def with_cardinality(q: QuboProblem, k: int, P: Optional[float] = None) -> QuboProblem:
    """Add P (sum x - k)^2; the constant P k^2 goes to ``offset``."""
    if q.k is not None:
        raise ConfigError("The problem already carries a cardinality constraint")
    if not 1 <= int(k) <= q.n:
        raise ConfigError(f"k must lie in [1, {q.n}], got {k}")
    k = int(k)
    P = default_penalty(q) if P is None else float(P)
    if P <= 0:
        raise ConfigError(f"Penalty strength must be positive, got {P}")
    quadratic = dict(q.quadratic)
    for i in range(q.n):
        for j in range(i + 1, q.n):
            quadratic[(i, j)] = quadratic.get((i, j), 0.0) + 2.0 * P
    return replace(
        q,
        linear=q.linear + P * (1 - 2 * k),
        quadratic=quadratic,
        penalty_strength=P,
        k=k,
        offset=q.offset + P * k * k,
    )


def _as_bits(q: QuboProblem, x) -> np.ndarray:
    bits = np.asarray(x).reshape(-1)
    if bits.size != q.n:
        raise DataError(f"Bitstring has length {bits.size}, the problem has {q.n} variables")
    if not np.isin(bits, (0, 1)).all():
        raise DataError("Bitstring entries must be 0 or 1")
    return bits.astype(float)


def energy(q: QuboProblem, x) -> float:
    bits = _as_bits(q, x)
    return float(q.linear @ bits + bits @ q.upper @ bits)


def energies(q: QuboProblem, states: np.ndarray) -> np.ndarray:
    """Energy of every row of a 0/1 matrix."""
    states = np.asarray(states, dtype=float)
    return states @ q.linear + np.einsum("ri,ij,rj->r", states, q.upper, states)


@dataclass(frozen=True)
class SparsityReport:
    nnz: int
    density: float
    pattern: List[List[int]]

    def to_dict(self) -> dict:
        return {"nnz": self.nnz, "density": self.density, "pattern": self.pattern}


def sparsity_report(q: QuboProblem, threshold: float = 0.0) -> SparsityReport:
    if threshold < 0:
        raise ConfigError(f"threshold must be non-negative, got {threshold}")
    pattern = [[] for _ in range(q.n)]
    for (i, j), value in sorted(q.quadratic.items()):
        if abs(value) > threshold:
            pattern[i].append(j)
    nnz = sum(len(row) for row in pattern)
    pairs = q.n * (q.n - 1) // 2
    return SparsityReport(nnz=nnz, density=nnz / pairs if pairs else 0.0, pattern=pattern)


def selection_objective(c: CmiTensor, selection: Sequence[int]) -> float:
    """sum_{i in F} MI(X_i;Y) + sum_{i != j in F} MI(X_j;Y|X_i)."""
    chosen = sorted(int(i) for i in selection)
    values = np.asarray(c.values)
    block = values[np.ix_(chosen, chosen)]
    return float(block.sum())
