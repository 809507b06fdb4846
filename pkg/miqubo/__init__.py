from . import utils
from ._version import get_versions
from .data import Dataset, DiscretizedTable, EncodedDataset, SyntheticProfile
from .infotheory import CmiTensor, MiReport
from .qubo import QuboProblem
from .solve import SelectionResult, SolverResult, select_features

__version__ = get_versions()["version"]
del get_versions

__all__ = [
    "utils",
    "CmiTensor",
    "Dataset",
    "DiscretizedTable",
    "EncodedDataset",
    "MiReport",
    "QuboProblem",
    "SelectionResult",
    "SolverResult",
    "SyntheticProfile",
    "select_features",
]
