"""Grammar-based structure discovery for matrix decomposition models."""

from .components import HyperParams
from .config import RunConfig
from .expr import parse, to_text
from .grammar import enumerate_to_level, successors
from .scoring import make_holdout, score_structure
from .search import greedy_search, select_final, stopping_decision
from .synthesis import SynthSpec, generate

__all__ = [
    "HyperParams", "RunConfig", "parse", "to_text", "enumerate_to_level",
    "successors", "make_holdout", "score_structure", "greedy_search",
    "select_final", "stopping_decision", "SynthSpec", "generate",
]
__version__ = "0.1.0"
