"""
Strand-space protocol analyzer for a Diffie-Hellman message algebra.

Modules:
    term_algebra   terms, substitutions, unification
    dolev_yao      adversary derivability
    model_lang     the s-expression model language
    skeleton       strands, skeletons, realization and rules
    strand_search  bounded shape search
    rendering      DOT / JSON / text output
"""
from analyzer.model_lang import ModelError, ModelSyntaxError, load_model_file, parse, validate
from analyzer.skeleton import Skeleton, realized, skeleton_from_def
from analyzer.strand_search import Bounds, SearchResult, Shape, search
from analyzer.term_algebra import SortError

__all__ = [
    "Bounds", "ModelError", "ModelSyntaxError", "SearchResult", "Shape", "Skeleton",
    "SortError", "load_model_file", "parse", "realized", "search", "skeleton_from_def",
    "validate",
]
