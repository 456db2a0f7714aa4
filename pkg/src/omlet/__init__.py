"""Learning trapezoidal membership functions embedded in fuzzy AND/OR trees."""

from .errors import *  # noqa: F401,F403
from .membership import (
    OPEN_SENTINEL,
    DesiredPoint,
    Leg,
    Limits,
    Trapezoid,
    enforce_shape,
    evaluate_trapezoid,
    fit_line,
    init_from_points,
    update_legs,
)
from .model import Model
from .tree import (
    CategoryDef,
    DefinitionTree,
    Example,
    FunctionalProperty,
    LevelMap,
    ProofTree,
    assign_levels,
    build_proof_tree,
    evaluate,
    pand,
    por,
)
from .backprop import collect_points, pand_desired, por_desired
from .trainer import TrainConfig, TrainState, train_all, train_level
from .rulebase import parse_examples, parse_model, parse_rules, serialize_model

__version__ = "0.1.0"
