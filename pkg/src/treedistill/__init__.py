"""Distill boosted trees into decision trees by rectifying the decision tree
with rules deduced from abductive explanations of the boosted tree."""

from .errors import (
    CapacityError,
    ExplanationTimeout,
    IngestError,
    ModelFormatError,
    PreconditionError,
    StructureError,
    TreeDistillError,
)
from .explain import (
    bt_margin_bounds,
    bt_sufficient_reason,
    bt_tree_specific_reason,
    dt_sufficient_reason,
    explanation_to_rule,
)
from .features import (
    Condition,
    ConditionKey,
    ConditionSet,
    DomainTheory,
    Instance,
    Term,
    binarize,
    build_condition_set,
    closure,
    derive_theory,
    th_consistent,
)
from .models import (
    BoostedTree,
    ClassificationRule,
    DecisionTree,
    RegressionTree,
    TreeBuilder,
    bt_classify,
    dt_classify,
    dumps_model,
    loads_model,
    rules_conflicting,
)
from .rectify import (
    DistillConfig,
    StepRecord,
    distill_step,
    distill_stream,
    misclassified,
    rectify_by_rule,
    relative_accuracy,
    simplify,
)

__version__ = "0.1.0"
