"""Semantic parsing by generating graph-construction action sequences."""

from .actions import EOS, Action, PartialGraphState, apply_action, build_graph, fold, is_complete
from .controller import ConstraintLevel, check_action, legal_actions
from .decoder import ParseResult, beam_search, parse
from .errors import Seq2ActError
from .evaluator import EvalReport, evaluate, exact_match, length_stats
from .graph import SemanticGraph, graphs_isomorphic, validate_wellformed
from .logical_form import actions_to_lf, lf_to_actions, lf_to_graph, parse_lf, print_lf
from .model import ModelConfig
from .schema import KBSchema, load_schema, load_schema_file
from .trainer import TrainSchedule, TrainedModel, load_checkpoint, preprocess, save_checkpoint, train

__version__ = "0.1.0"

__all__ = [
    "EOS", "Action", "PartialGraphState", "apply_action", "build_graph", "fold", "is_complete",
    "ConstraintLevel", "check_action", "legal_actions",
    "ParseResult", "beam_search", "parse",
    "Seq2ActError",
    "EvalReport", "evaluate", "exact_match", "length_stats",
    "SemanticGraph", "graphs_isomorphic", "validate_wellformed",
    "actions_to_lf", "lf_to_actions", "lf_to_graph", "parse_lf", "print_lf",
    "ModelConfig",
    "KBSchema", "load_schema", "load_schema_file",
    "TrainSchedule", "TrainedModel", "load_checkpoint", "preprocess", "save_checkpoint", "train",
]
