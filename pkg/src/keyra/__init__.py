"""Range-consistent answers for aggregation queries under primary-key repairs."""

from .aggregates import EMPTY_AGGREGATE
from .attacks import (
    AttackGraph,
    acyclic_topological_sort,
    attacks_variable,
    build_attack_graph,
    keycl,
)
from .classify import Verdict, classify, fuxman_membership
from .errors import (
    CapExceededError,
    EmitError,
    InstanceError,
    KeyraError,
    QueryError,
    RewritingError,
    SchemaError,
)
from .logic import BOTTOM, Evaluator, RangeAnswer
from .model import (
    Block,
    DatabaseInstance,
    Fact,
    NumericDomain,
    Repair,
    Schema,
    Signature,
    blocks,
    enumerate_repairs,
    load_instance,
    load_schema,
    repair_count,
)
from .oracle import (
    enumerate_forall_embeddings,
    enumerate_mcs,
    gen_2dm_instance,
    gen_maxcut_instance,
    is_n_minimal,
    is_superfrugal,
    range_by_enumeration,
)
from .query import AggQuery, Atom, fd_closure, fdset, freeze_free_vars, parse_query
from .rewriter import (
    Rewriting,
    consistent_fo_rewriting,
    evaluate_groups,
    forall_embedding_formula,
    glb_rewriting,
    group_by_rewriting,
    lub_rewriting,
    min_glb_rewriting,
    rewrite,
)
from .sqlgen import SqlScript, emit_ddl, emit_sql, run_script

__all__ = [name for name in dir() if not name.startswith("_")]
