"""Ground truth by exhaustive enumeration over repairs.

Everything here is deliberately definition-shaped and independent of the
rewriting pipeline: range answers iterate all repairs, universal embeddings
follow their inductive definition, and maximal consistent subsets are found
by branching on conflicts.  These are the oracles the rewriter is tested
against.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from . import aggregates
from .attacks import acyclic_topological_sort, build_attack_graph
from .errors import CapExceededError, RewritingError
from .logic import BOTTOM, RangeAnswer
from .model import DatabaseInstance, Fact, Repair, Schema, Signature, enumerate_repairs
from .query import AggQuery, Atom, Placeholder, Var, fdset

DEFAULT_CAP = 1_000_000


# ---------------------------------------------------------------------------
# Embedding search


def _match(
    atom: Atom, facts: Sequence[Fact], env: dict, params: dict
) -> Iterable[dict]:
    for fact in facts:
        if fact.relation != atom.relation.name:
            continue
        out = dict(env)
        ok = True
        for term, value in zip(atom.terms, fact.values):
            if isinstance(term, Var):
                if term.name in out:
                    if out[term.name] != value:
                        ok = False
                        break
                else:
                    out[term.name] = value
            else:
                expected = params.get(term, term) if isinstance(term, Placeholder) else term
                if expected != value:
                    ok = False
                    break
        if ok:
            yield out


def embeddings(
    facts: Iterable[Fact],
    body: Sequence[Atom],
    base: dict | None = None,
    params: dict | None = None,
) -> list[dict]:
    """All valuations mapping every body atom into the given fact set."""
    facts = list(facts)
    params = params or {}
    envs = [dict(base or {})]
    for atom in body:
        envs = [ext for env in envs for ext in _match(atom, facts, env, params)]
        if not envs:
            return []
    return envs


def satisfies(facts, body, base=None, params=None) -> bool:
    facts = list(facts)
    params = params or {}
    envs = [dict(base or {})]
    for atom in body:
        envs = [ext for env in envs for ext in _match(atom, facts, env, params)]
        if not envs:
            return False
    return True


# ---------------------------------------------------------------------------
# Range answers


def _query_values(facts, q: AggQuery, params) -> list[Fraction]:
    vals = []
    for theta in embeddings(facts, q.body, params=params):
        vals.append(theta[q.r.name] if isinstance(q.r, Var) else q.r)
    return vals


def range_by_enumeration(
    db: DatabaseInstance,
    q: AggQuery,
    cap: int = DEFAULT_CAP,
    params: dict | None = None,
) -> tuple[RangeAnswer, RangeAnswer]:
    """Exact (glb, lub) across all repairs; bottom if any repair is empty-handed."""
    params = params or {}
    lo = hi = None
    for repair in enumerate_repairs(db, cap):
        values = _query_values(repair.facts, q, params)
        if not values:
            return RangeAnswer(BOTTOM), RangeAnswer(BOTTOM)
        v = aggregates.apply(q.agg, values)
        lo = v if lo is None or v < lo else lo
        hi = v if hi is None or v > hi else hi
    if lo is None:  # no blocks at all: the single empty repair has no embedding
        return RangeAnswer(BOTTOM), RangeAnswer(BOTTOM)
    return RangeAnswer(lo), RangeAnswer(hi)


def dual_value(op: str, values: Sequence[Fraction]):
    """Sign-flipped operator; empty multisets keep the primal empty value."""
    if not values:
        return aggregates.get(op).empty_value
    return -aggregates.apply(op, values)


# ---------------------------------------------------------------------------
# Universal embeddings, by the inductive definition


@dataclass(frozen=True)
class EmbeddingSet:
    var_order: tuple[str, ...]
    rows: frozenset[tuple]

    def as_dicts(self) -> list[dict]:
        return [dict(zip(self.var_order, row)) for row in sorted(self.rows, key=repr)]

    def __len__(self) -> int:
        return len(self.rows)


def embedding_var_order(sort: Sequence[Atom]) -> tuple[str, ...]:
    order: list[str] = []
    for atom in sort:
        for term in atom.key_terms + atom.nonkey_terms:
            if isinstance(term, Var) and term.name not in order:
                order.append(term.name)
    return tuple(order)


def level_decomposition(sort: Sequence[Atom]) -> list[tuple[list[str], list[str]]]:
    """Per atom: (new key variables, new non-key variables), first-occurrence order."""
    seen: set[str] = set()
    out = []
    for atom in sort:
        new_key = []
        for term in atom.key_terms:
            if isinstance(term, Var) and term.name not in seen and term.name not in new_key:
                new_key.append(term.name)
        new_nonkey = []
        for term in atom.nonkey_terms:
            name = term.name if isinstance(term, Var) else None
            if name and name not in seen and name not in new_key and name not in new_nonkey:
                new_nonkey.append(name)
        seen.update(new_key)
        seen.update(new_nonkey)
        out.append((new_key, new_nonkey))
    return out


def enumerate_forall_embeddings(
    db: DatabaseInstance,
    body: Sequence[Atom],
    sort: Sequence[Atom] | None = None,
    cap: int = DEFAULT_CAP,
    params: dict | None = None,
) -> EmbeddingSet:
    """The universal embeddings, computed from the definition, level by level.

    A full embedding survives level l when its restriction to the first l-1
    atoms' variables plus the l-th key is certain for the suffix in every
    repair, and its shorter prefix already survived level l-1.
    """
    params = params or {}
    if sort is None:
        graph = build_attack_graph(body)
        sort = acyclic_topological_sort(graph)
        if sort is None:
            raise RewritingError("attack graph is cyclic")
    sort = list(sort)
    var_order = embedding_var_order(sort)
    levels = level_decomposition(sort)
    repairs = [r.facts for r in enumerate_repairs(db, cap)]

    if not all(satisfies(r, sort, params=params) for r in repairs):
        return EmbeddingSet(var_order, frozenset())

    full = embeddings(db.facts, sort, params=params)
    prefix_vars: list[str] = []
    survivors: set[tuple] = {()}
    for i, atom in enumerate(sort):
        new_key, new_nonkey = levels[i]
        next_prefix = prefix_vars + new_key + new_nonkey
        gamma_vars = set(prefix_vars) | set(new_key)
        suffix = sort[i:]
        candidates = {tuple(theta[v] for v in next_prefix) for theta in full}
        keep: set[tuple] = set()
        certain_cache: dict[tuple, bool] = {}
        for cand in candidates:
            if cand[: len(prefix_vars)] not in survivors:
                continue
            gamma = {
                v: value
                for v, value in zip(next_prefix, cand)
                if v in gamma_vars
            }
            gkey = tuple(sorted(gamma.items()))
            certain = certain_cache.get(gkey)
            if certain is None:
                certain = all(
                    satisfies(r, suffix, base=gamma, params=params) for r in repairs
                )
                certain_cache[gkey] = certain
            if certain:
                keep.add(cand)
        survivors = keep
        prefix_vars = next_prefix
    ordered = {
        tuple(dict(zip(prefix_vars, row))[v] for v in var_order) for row in survivors
    }
    return EmbeddingSet(var_order, frozenset(ordered))


# ---------------------------------------------------------------------------
# Maximal consistent subsets

MCS_CEILING = 2**20


def _conflicts(rows, var_order, fds) -> list[tuple[tuple, tuple]]:
    indexed = [dict(zip(var_order, row)) for row in rows]
    out = []
    for i, a in enumerate(indexed):
        for j in range(i + 1, len(indexed)):
            b = indexed[j]
            for fd in fds:
                if all(a[v] == b[v] for v in fd.lhs) and any(
                    a[v] != b[v] for v in fd.rhs
                ):
                    out.append((rows[i], rows[j]))
                    break
    return out


def enumerate_mcs(M: EmbeddingSet, body: Sequence[Atom]) -> list[EmbeddingSet]:
    """All maximal subsets of M satisfying the body's key dependencies."""
    fds = [fd for fd in fdset(body)]
    rows = sorted(M.rows, key=repr)
    results: set[frozenset] = set()
    seen: set[frozenset] = set()
    budget = [MCS_CEILING]

    def conflict_pair(subset: frozenset):
        listed = sorted(subset, key=repr)
        pairs = _conflicts(listed, M.var_order, fds)
        return pairs[0] if pairs else None

    def recurse(subset: frozenset):
        if subset in seen:
            return
        seen.add(subset)
        budget[0] -= 1
        if budget[0] < 0:
            raise CapExceededError("maximal-consistent-subset search exceeded ceiling")
        pair = conflict_pair(subset)
        if pair is None:
            results.add(subset)
            return
        a, b = pair
        recurse(subset - {a})
        recurse(subset - {b})

    recurse(frozenset(rows))
    maximal = [
        s for s in results if not any(s < other for other in results if other is not s)
    ]
    return [EmbeddingSet(M.var_order, s) for s in sorted(maximal, key=repr)]


def mcs_aggregate(mcs: EmbeddingSet, q: AggQuery):
    values = []
    r_index = None
    if isinstance(q.r, Var):
        r_index = mcs.var_order.index(q.r.name)
    for row in mcs.rows:
        values.append(row[r_index] if r_index is not None else q.r)
    return aggregates.apply(q.agg, values)


# ---------------------------------------------------------------------------
# Repair classes


def repair_embedding_rows(
    repair: Repair, body: Sequence[Atom], var_order, params=None
) -> frozenset[tuple]:
    return frozenset(
        tuple(theta[v] for v in var_order)
        for theta in embeddings(repair.facts, body, params=params)
    )


def is_superfrugal(
    repair: Repair,
    db: DatabaseInstance,
    body: Sequence[Atom],
    cap: int = DEFAULT_CAP,
    params: dict | None = None,
) -> bool:
    """True when every embedding of the body in the repair is universal."""
    universal = enumerate_forall_embeddings(db, body, cap=cap, params=params)
    mine = repair_embedding_rows(repair, list(body), universal.var_order, params)
    return mine <= universal.rows


def is_n_minimal(
    repair: Repair,
    db: DatabaseInstance,
    body: Sequence[Atom],
    cap: int = DEFAULT_CAP,
    params: dict | None = None,
) -> bool:
    """No other repair's embedding set is a strict subset of this repair's."""
    body = list(body)
    var_order = embedding_var_order(body)
    mine = repair_embedding_rows(repair, body, var_order, params)
    for other in enumerate_repairs(db, cap):
        theirs = repair_embedding_rows(other, body, var_order, params)
        if theirs < mine:
            return False
    return True


# ---------------------------------------------------------------------------
# Hardness gadget instance generators


def two_dm_schema() -> Schema:
    return Schema(
        (
            Signature("R", 3, 1, frozenset({3})),
            Signature("S1", 2, 1, frozenset()),
            Signature("S2", 2, 1, frozenset()),
        )
    )


def gen_2dm_instance(
    pairs: Sequence[tuple[str, str]],
    s: Fraction,
    t: Fraction,
    numeric_domain=None,
) -> DatabaseInstance:
    """Bipartite-matching gadget: R rows carry t per pair, plus sentinel rows carrying s."""
    from .model import NumericDomain

    schema = two_dm_schema()
    facts: set[Fact] = set()
    for a, b in pairs:
        facts.add(Fact("R", (a, b, Fraction(t))))
        facts.add(Fact("S1", (b, a)))
        facts.add(Fact("S2", (b, a)))
    facts.add(Fact("R", ("_botA", "_botB", Fraction(s))))
    facts.add(Fact("S1", ("_botB", "_botA")))
    facts.add(Fact("S2", ("_botB", "_botA")))
    domain = numeric_domain or NumericDomain.NON_NEGATIVE
    return DatabaseInstance(schema, frozenset(facts), domain)


def two_dm_query_text(agg: str) -> str:
    return f"{agg}(r) <- R(x | y, r), S1(y | x), S2(y | x)"


def maxcut_schema() -> Schema:
    return Schema(
        (
            Signature("S1", 2, 1, frozenset()),
            Signature("S2", 2, 1, frozenset()),
            Signature("T", 3, 2, frozenset({3})),
        )
    )


def gen_maxcut_instance(
    vertices: Sequence[str],
    edges: Sequence[tuple[str, str]],
    s: Fraction,
    t: Fraction,
    penalty: Fraction,
    numeric_domain=None,
) -> DatabaseInstance:
    """Cut gadget: side-choice rows per vertex, both edge directions, and
    self-loop penalty rows that punish putting a vertex on both sides."""
    from .model import NumericDomain

    schema = maxcut_schema()
    facts: set[Fact] = set()
    for v in vertices:
        facts.add(Fact("S1", (v, "c1")))
        facts.add(Fact("S1", (v, "d")))
        facts.add(Fact("S2", (v, "c2")))
        facts.add(Fact("S2", (v, "d")))
        facts.add(Fact("T", (v, v, Fraction(penalty))))
    for u, v in edges:
        facts.add(Fact("T", (u, v, Fraction(t))))
        facts.add(Fact("T", (v, u, Fraction(t))))
    facts.add(Fact("S1", ("_bot", "c1")))
    facts.add(Fact("S2", ("_bot", "c2")))
    facts.add(Fact("T", ("_bot", "_bot", Fraction(s))))
    domain = numeric_domain or NumericDomain.NON_NEGATIVE
    return DatabaseInstance(schema, frozenset(facts), domain)


def maxcut_query_text(agg: str) -> str:
    return f'{agg}(r) <- S1(x | "c1"), S2(y | "c2"), T(x, y | r)'
