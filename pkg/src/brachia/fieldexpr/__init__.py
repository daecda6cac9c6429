"""Expression-tree vector fields with forward-mode derivatives and Lie brackets."""

from .dual import Dual
from .fields import (
    VectorFieldExpr,
    bracket_jet,
    central_difference_jacobian,
    constant_field,
    eval_field,
    eval_field_batch,
    field_jet,
    iterated_brackets,
    jacobian,
    lie_bracket,
    linear_combination,
    nested_bracket,
    parse_field,
    value_and_jacobian,
    word_label,
)
from .jet import Jet
from .parser import ScalarExpr, parse_node, to_text

__all__ = [
    "Dual",
    "Jet",
    "ScalarExpr",
    "VectorFieldExpr",
    "bracket_jet",
    "central_difference_jacobian",
    "constant_field",
    "eval_field",
    "eval_field_batch",
    "field_jet",
    "iterated_brackets",
    "jacobian",
    "lie_bracket",
    "linear_combination",
    "nested_bracket",
    "parse_field",
    "parse_node",
    "to_text",
    "value_and_jacobian",
    "word_label",
]
