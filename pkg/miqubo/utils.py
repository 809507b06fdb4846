import hashlib
import json
import logging
from functools import wraps
from pathlib import Path
from time import perf_counter
from typing import Any, Iterable, Union

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def derive_rng(*keys: int) -> np.random.Generator:
    """Generator seeded from an ordered tuple of integers.

    Every stochastic component derives its stream from (master seed, role,
    index, ...) so results never depend on execution order.
    """
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in keys]))


def derive_seed(*keys: int) -> int:
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


def _json_default(obj: Any):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"Object of type {type(obj).__name__} is not JSON serializable")


def canonical_json(payload: Any) -> str:
    return json.dumps(payload, sort_keys=True, indent=2, default=_json_default) + "\n"


def write_json(payload: Any, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(canonical_json(payload), encoding="utf-8")
    logger.debug(f"Wrote {path}")
    return path


def read_json(path: PathLike) -> Any:
    with open(path, "r", encoding="utf-8") as JSON:
        return json.load(JSON)


def write_frame(table: pd.DataFrame, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(path, index=False, lineterminator="\n", float_format="%.12g")
    logger.debug(f"Wrote {path}")
    return path


def file_digest(path: PathLike) -> str:
    sha = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b""):
            sha.update(chunk)
    return sha.hexdigest()


def bits_to_string(bits: Iterable[int]) -> str:
    return "".join(str(int(b)) for b in bits)


# https://stackoverflow.com/a/51503837
def measure(func):
    @wraps(func)
    def _time_it(*args, **kwargs):
        start = perf_counter()
        try:
            return func(*args, **kwargs)
        finally:
            elapsed = (perf_counter() - start) * 1000
            logger.info(f"{func.__qualname__}: total execution time {elapsed:.0f} ms")

    return _time_it
