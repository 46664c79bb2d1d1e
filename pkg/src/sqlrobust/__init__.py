"""Robustness tooling for text-to-SQL under synonym substitution."""

from .attack import AttackConfig, AttackResult, adversarial_augment, attack_example, generate_worstcase_set
from .dataset import Example, diff_stats, load_examples, split_overlap, substitution_report
from .errors import (
    AlignmentError,
    InputError,
    PlanValidationError,
    ProtocolError,
    SqlParseError,
    SqlRobustError,
    TransportError,
    ValidationError,
)
from .linking import LinkedQuestion, LinkTag, link, mas_select, model_input, resolve_for_model
from .metrics import COMPONENTS, ComponentScores, component_f1, evaluate, exact_match
from .perturb import apply_plan, find_substitutable_spans, generate_syn_dataset, plan_substitutions
from .predictors import baseline_lexical_predictor, predict
from .providers import (
    EmbeddingTable,
    SynonymLexicon,
    build_domain_context,
    contextual_candidates,
    embedding_neighbors,
    lexicon_lookup,
)
from .schema import AnnotationSet, DatabaseSchema, attach_annotations, load_schemas
from .sql_ir import SqlQuery, canonicalize, serialize
from .sql_parser import parse_sql

__version__ = "0.1.0"
