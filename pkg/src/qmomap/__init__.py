"""Exact truncated computer algebra for quantum momentum maps, Gutt and
standard star-products, and formal G-systems."""

from .algebra import GaussianRational, HbarSeries, I, MultiPoly, ParseError, Universe
from .action import InfinitesimalAction
from .feynman import PhaseModel, enumerate_graphs, expand, wick_expand
from .lie import LieAlgebra
from .momentum import QmmError, QmmModel, load_bundle, qmm_apply, qmm_linear, run_suite
from .quantization import GSystem, SymbolOperator, gutt_via_phase, star_standard

__version__ = "0.1.0"

__all__ = [
    "GaussianRational", "HbarSeries", "I", "MultiPoly", "ParseError", "Universe",
    "InfinitesimalAction", "LieAlgebra", "PhaseModel", "enumerate_graphs", "expand", "wick_expand",
    "GSystem", "SymbolOperator", "gutt_via_phase", "star_standard",
    "QmmError", "QmmModel", "load_bundle", "qmm_apply", "qmm_linear", "run_suite",
]
