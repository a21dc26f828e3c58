"""Rewritings of range answers into first-order logic with aggregates.

The pipeline, for a query whose attack graph is acyclic:

1. ``consistent_fo_rewriting`` builds the certainty formula of a body with
   some variables treated as constants, recursing on an unattacked atom:
   the block must exist and every member of it must pass the remaining
   conditions.
2. ``forall_embedding_formula`` chains those certainty formulas along a
   topological sort; its satisfying rows are exactly the universal
   embeddings.
3. ``glb_rewriting`` turns the rows into a nested value term, innermost
   first: per new-key group take the selection extreme (MIN for lower
   bounds) over completions, then fold the group values with the query's
   own operator, all ranges being projections of the row formula.

MIN lower bounds and MAX upper bounds shortcut to a plain aggregate over
the raw body under the certainty guard; MIN upper bounds run the general
construction with the order reversed.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Sequence

from . import aggregates
from .attacks import acyclic_topological_sort, build_attack_graph
from .errors import RewritingError
from .logic import (
    BOTTOM,
    TRUE,
    AggTerm,
    Equals,
    Evaluator,
    Formula,
    Implies,
    NumEq,
    RangeAnswer,
    RelAtom,
    conj,
    exists,
    forall,
)
from .aggregates import EMPTY_AGGREGATE
from .model import DatabaseInstance, NumericDomain
from .oracle import embedding_var_order, level_decomposition
from .query import AggQuery, Atom, Placeholder, Var, freeze_free_vars


class _Fresh:
    """Deterministic fresh-name supply; primes keep names out of the surface grammar."""

    def __init__(self) -> None:
        self.counter = 0

    def make(self, base: str) -> str:
        self.counter += 1
        return f"{base}'{self.counter}"


def _frozen_view(atoms: Sequence[Atom], frozen: frozenset[str]) -> list[Atom]:
    out = []
    for atom in atoms:
        out.append(
            replace(
                atom,
                terms=tuple(
                    Placeholder(f"frozen:{t.name}")
                    if isinstance(t, Var) and t.name in frozen
                    else t
                    for t in atom.terms
                ),
            )
        )
    return out


def _first_unattacked(atoms: Sequence[Atom], frozen: frozenset[str]) -> int:
    graph = build_attack_graph(_frozen_view(atoms, frozen))
    attacked = {j for (_, j) in graph.edges}
    for i in range(len(atoms)):
        if i not in attacked:
            return i
    raise RewritingError("attack graph is cyclic")


def consistent_fo_rewriting(
    body: Sequence[Atom], frozen_prefix: frozenset[str] = frozenset(), _fresh: _Fresh | None = None
) -> Formula:
    """Certainty of the body across all repairs, with frozen variables free.

    For an unattacked atom, existentially pick its block (new key variables
    plus a witness member) and require every member of that block to agree
    with the atom's bound non-key terms and to pass the rewriting of the
    remaining atoms.
    """
    fresh = _fresh or _Fresh()
    atoms = list(body)
    if not atoms:
        return TRUE
    frozen = frozenset(frozen_prefix)
    pick = _first_unattacked(atoms, frozen)
    atom = atoms[pick]
    rest = atoms[:pick] + atoms[pick + 1 :]

    new_key = []
    for term in atom.key_terms:
        if isinstance(term, Var) and term.name not in frozen and term.name not in new_key:
            new_key.append(term.name)
    bound_now = frozen | set(new_key)

    if not atom.nonkey_terms:
        inner = consistent_fo_rewriting(rest, bound_now, fresh)
        return exists(new_key, conj([RelAtom(atom), inner]))

    # Witness member: block nonempty.
    witness_vars = [fresh.make("w") for _ in atom.nonkey_terms]
    witness = RelAtom(
        replace(atom, terms=atom.key_terms + tuple(Var(v) for v in witness_vars))
    )

    # Universal member: fresh non-key slots, equalities for bound slots,
    # renaming for newly bound variables.
    sweep_vars: list[str] = []
    equalities = []
    rename: dict[str, str] = {}
    for term in atom.nonkey_terms:
        if isinstance(term, Var) and term.name in rename:
            z = rename[term.name]
            sweep_vars.append(fresh.make(term.name))
            equalities.append(Equals(Var(sweep_vars[-1]), Var(z)))
            continue
        if isinstance(term, Var) and term.name not in bound_now:
            z = fresh.make(term.name)
            rename[term.name] = z
            sweep_vars.append(z)
            continue
        z = fresh.make(term.name if isinstance(term, Var) else "w")
        sweep_vars.append(z)
        equalities.append(Equals(Var(z), term))
    member = RelAtom(
        replace(atom, terms=atom.key_terms + tuple(Var(v) for v in sweep_vars))
    )

    renamed_rest = [
        replace(
            a,
            terms=tuple(
                Var(rename[t.name]) if isinstance(t, Var) and t.name in rename else t
                for t in a.terms
            ),
        )
        for a in rest
    ]
    inner = consistent_fo_rewriting(
        renamed_rest, bound_now | set(rename.values()), fresh
    )
    obligations = conj(equalities + [inner])
    if isinstance(obligations, type(TRUE)):
        return exists(new_key + witness_vars, witness)
    universal = forall(sweep_vars, Implies(member, obligations))
    return exists(new_key + witness_vars, conj([witness, universal]))


def forall_embedding_formula(
    body: Sequence[Atom], sort: Sequence[Atom] | None = None
) -> Formula:
    """Formula whose satisfying valuations are the universal embeddings."""
    if sort is None:
        sort = acyclic_topological_sort(build_attack_graph(body))
        if sort is None:
            raise RewritingError("attack graph is cyclic")
    sort = list(sort)
    levels = level_decomposition(sort)
    parts = []
    seen: set[str] = set()
    for i, atom in enumerate(sort):
        new_key, _ = levels[i]
        certainty = consistent_fo_rewriting(sort[i:], frozenset(seen | set(new_key)))
        parts.append(certainty)
        parts.append(RelAtom(atom))
        seen |= atom.vars()
    return conj(parts)


# ---------------------------------------------------------------------------
# Rewritings


@dataclass(frozen=True)
class Level:
    index: int
    atom: Atom
    new_key_vars: tuple[str, ...]
    new_nonkey_vars: tuple[str, ...]
    group_formula: Formula  # free: earlier vars; binds new keys + group value
    group_value_var: str


@dataclass(frozen=True)
class Rewriting:
    query: AggQuery  # frozen form (group parameters substituted)
    source: AggQuery  # as written
    target: str  # "glb" | "lub"
    route: str  # "general" | "plain"
    agg_op: str  # operator folding group values (general) or the plain op
    select_op: str  # per-group selection extreme (general route)
    guard: Formula
    term: object
    sort: tuple[Atom, ...]
    psi: Formula | None
    var_order: tuple[str, ...]
    levels: tuple[Level, ...]  # outermost first
    group_params: tuple[tuple[str, Placeholder], ...]

    def evaluate(self, db: DatabaseInstance, group_values: dict | None = None) -> RangeAnswer:
        ev = Evaluator(db, self._params(group_values))
        if not ev.eval_formula(self.guard, {}):
            return RangeAnswer(BOTTOM)
        value = ev.eval_term(self.term, {})
        if value is EMPTY_AGGREGATE:
            return RangeAnswer(BOTTOM)
        return RangeAnswer(value)

    def group_rows(self, db: DatabaseInstance, group_values: dict | None = None):
        """Outermost per-group values (new key tuple, folded value)."""
        if not self.levels:
            raise RewritingError("plain rewritings have no per-group stage")
        level = self.levels[0]
        ev = Evaluator(db, self._params(group_values))
        rows = []
        for sol in ev.solutions(level.group_formula, {}):
            key = tuple(sol[v] for v in level.new_key_vars)
            rows.append((key, sol[level.group_value_var]))
        rows.sort(key=repr)
        return rows

    def _params(self, group_values: dict | None) -> dict:
        if not self.group_params:
            return {}
        if group_values is None:
            raise RewritingError("group query evaluation requires group values")
        return {ph: group_values[name] for name, ph in self.group_params}


def _check_acyclic(q: AggQuery):
    graph = build_attack_graph(q.body)
    sort = acyclic_topological_sort(graph)
    if sort is None:
        raise RewritingError(
            "attack graph is cyclic: range answers are not expressible in "
            "first-order logic with aggregates"
        )
    return sort


def _general_term(q: AggQuery, sort, psi, agg_op: str, select_op: str):
    """Nested value term, built innermost-out along the sort."""
    var_order = embedding_var_order(sort)
    levels_decomp = level_decomposition(sort)
    prefixes: list[list[str]] = [[]]
    for new_key, new_nonkey in levels_decomp:
        prefixes.append(prefixes[-1] + new_key + new_nonkey)

    value_term = q.r if isinstance(q.r, Fraction) else Var(q.r.name)
    built_levels: list[Level] = []
    n = len(sort)
    for i in range(n - 1, -1, -1):
        new_key, new_nonkey = levels_decomp[i]
        rest_after_full = [v for v in var_order if v not in prefixes[i + 1]]
        rest_after_keys = [
            v for v in var_order if v not in prefixes[i] and v not in new_key
        ]
        proj_full = exists(rest_after_full, psi)
        proj_keys = exists(rest_after_keys, psi)
        w = f"w'{i}"
        inner = AggTerm(
            select_op,
            tuple(new_nonkey) + (w,),
            Var(w),
            conj([proj_full, NumEq(w, value_term)]),
        )
        v = f"v'{i}"
        chi = conj([proj_keys, NumEq(v, inner)])
        value_term = AggTerm(agg_op, tuple(new_key) + (v,), Var(v), chi)
        built_levels.append(
            Level(i, sort[i], tuple(new_key), tuple(new_nonkey), chi, v)
        )
    built_levels.reverse()
    return value_term, tuple(built_levels), var_order


def glb_rewriting(
    q: AggQuery, domain: NumericDomain = NumericDomain.NON_NEGATIVE
) -> Rewriting:
    """Lower-bound rewriting for a monotone, associative operator."""
    source = q
    q = freeze_free_vars(q)
    sort = _check_acyclic(q)
    agg_op = aggregates.SUM if q.agg == aggregates.COUNT else q.agg
    folded = aggregates.get(agg_op)
    if not (folded.monotone(domain) and folded.associative):
        raise RewritingError(
            f"{q.agg} is not monotone and associative over the {domain.value} domain"
        )
    guard = consistent_fo_rewriting(sort)
    psi = forall_embedding_formula(q.body, sort)
    term, levels, var_order = _general_term(q, sort, psi, agg_op, aggregates.MIN)
    return Rewriting(
        query=q,
        source=source,
        target="glb",
        route="general",
        agg_op=agg_op,
        select_op=aggregates.MIN,
        guard=guard,
        term=term,
        sort=tuple(sort),
        psi=psi,
        var_order=var_order,
        levels=levels,
        group_params=q.frozen_params,
    )


def _plain_term(q: AggQuery, sort):
    body_formula = conj([RelAtom(a) for a in sort])
    var_order = embedding_var_order(sort)
    r = q.r if isinstance(q.r, Fraction) else Var(q.r.name)
    return AggTerm(q.agg, var_order, r, body_formula), var_order


def min_glb_rewriting(q: AggQuery) -> Rewriting:
    """Lower bound of a MIN query: the raw minimum, under the certainty guard."""
    source = q
    q = freeze_free_vars(q)
    if q.agg != aggregates.MIN:
        raise RewritingError("plain lower-bound route applies to MIN only")
    sort = _check_acyclic(q)
    guard = consistent_fo_rewriting(sort)
    term, var_order = _plain_term(q, sort)
    return Rewriting(
        query=q,
        source=source,
        target="glb",
        route="plain",
        agg_op=q.agg,
        select_op=q.agg,
        guard=guard,
        term=term,
        sort=tuple(sort),
        psi=None,
        var_order=var_order,
        levels=(),
        group_params=q.frozen_params,
    )


def lub_rewriting(q: AggQuery) -> Rewriting:
    """Upper-bound rewriting; exists for MIN and MAX queries only."""
    source = q
    q = freeze_free_vars(q)
    if q.agg == aggregates.MAX:
        sort = _check_acyclic(q)
        guard = consistent_fo_rewriting(sort)
        term, var_order = _plain_term(q, sort)
        return Rewriting(
            query=q,
            source=source,
            target="lub",
            route="plain",
            agg_op=q.agg,
            select_op=q.agg,
            guard=guard,
            term=term,
            sort=tuple(sort),
            psi=None,
            var_order=var_order,
            levels=(),
            group_params=q.frozen_params,
        )
    if q.agg == aggregates.MIN:
        # Reverse the order: fold groups with MIN, complete blocks with MAX.
        sort = _check_acyclic(q)
        guard = consistent_fo_rewriting(sort)
        psi = forall_embedding_formula(q.body, sort)
        term, levels, var_order = _general_term(
            q, sort, psi, aggregates.MIN, aggregates.MAX
        )
        return Rewriting(
            query=q,
            source=source,
            target="lub",
            route="general",
            agg_op=aggregates.MIN,
            select_op=aggregates.MAX,
            guard=guard,
            term=term,
            sort=tuple(sort),
            psi=psi,
            var_order=var_order,
            levels=levels,
            group_params=q.frozen_params,
        )
    raise RewritingError(
        f"upper bounds for {q.agg} are not expressible in first-order logic with aggregates"
    )


def rewrite(q: AggQuery, target: str, domain: NumericDomain = NumericDomain.NON_NEGATIVE) -> Rewriting:
    """Dispatch to the route that exists for (operator, target)."""
    if target == "glb":
        if q.agg == aggregates.MIN:
            return min_glb_rewriting(q)
        return glb_rewriting(q, domain)
    if target == "lub":
        return lub_rewriting(q)
    raise RewritingError(f"unknown target {target!r}")


def group_by_rewriting(
    q: AggQuery, target: str = "glb", domain: NumericDomain = NumericDomain.NON_NEGATIVE
) -> Rewriting:
    """Parametric rewriting over the frozen free variables."""
    if not q.free_vars:
        return rewrite(q, target, domain)
    return rewrite(q, target, domain)


@dataclass(frozen=True)
class GroupAnswer:
    values: tuple
    glb: RangeAnswer | None
    lub: RangeAnswer | None


def group_candidates(db: DatabaseInstance, q: AggQuery) -> list[tuple]:
    """Distinct projections of body embeddings onto the free variables."""
    from .oracle import embeddings

    seen = {
        tuple(theta[v] for v in q.free_vars)
        for theta in embeddings(db.facts, q.body)
    }
    return sorted(seen, key=repr)


def evaluate_groups(
    db: DatabaseInstance,
    q: AggQuery,
    targets: Sequence[str] = ("glb",),
    domain: NumericDomain = NumericDomain.NON_NEGATIVE,
) -> list[GroupAnswer]:
    """Per-group range answers; groups whose body is not certain come out bottom."""
    rewritings = {t: group_by_rewriting(q, t, domain) for t in targets}
    out = []
    for candidate in group_candidates(db, q):
        binding = dict(zip(q.free_vars, candidate))
        answers = {
            t: rw.evaluate(db, group_values=binding) for t, rw in rewritings.items()
        }
        out.append(
            GroupAnswer(candidate, answers.get("glb"), answers.get("lub"))
        )
    return out
