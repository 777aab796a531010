from .gibbs import gibbs_sweep, sample_data
from .initialize import init_random, initialize_structure
from .state import DecompositionState, extract_context, transpose_state

__all__ = [
    "DecompositionState", "extract_context", "transpose_state",
    "gibbs_sweep", "sample_data", "init_random", "initialize_structure",
]
