"""Decides whether a range answer has a rewriting, and on which route.

Verdicts are driven by the attack graph and the operator's algebraic
profile.  Negative verdicts are only issued for query shapes isomorphic to
a known hardness gadget; anything else outside the proven positive cases
is reported as unknown rather than guessed.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from . import aggregates
from .attacks import acyclic_topological_sort, build_attack_graph
from .model import NumericDomain
from .query import AggQuery, Atom, Var, freeze_free_vars

REWRITABLE = "Rewritable"
NOT_EXPRESSIBLE = "NotExpressible"
UNKNOWN = "Unknown"

GENERAL_GLB = "GeneralGlb"
MIN_GLB = "MinGlb"
MAX_LUB_PLAIN = "MaxLubPlain"
MIN_LUB_REVERSED = "MinLubReversed"


@dataclass(frozen=True)
class Verdict:
    status: str
    route: str | None
    citation: str
    reason: str

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "route": self.route,
            "citation": self.citation,
            "reason": self.reason,
        }


# ---------------------------------------------------------------------------
# Gadget shapes (matched up to renaming of relations, variables, constants)


def _is_const(term) -> bool:
    return not isinstance(term, Var)


def _aggregates_third_position(q: AggQuery, tr) -> bool:
    # Counting ignores the column, so a constant aggregated term is fine.
    if isinstance(q.r, Var):
        return isinstance(tr, Var) and tr.name == q.r.name
    return isinstance(tr, Var)


def matches_chain_gadget(q: AggQuery) -> bool:
    """R(x | y, r), S1(y | x), S2(y | x) with r aggregated (or counted over)."""
    if len(q.body) != 3:
        return False
    wide = [a for a in q.body if a.relation.arity == 3 and a.relation.key_len == 1]
    narrow = [a for a in q.body if a.relation.arity == 2 and a.relation.key_len == 1]
    if len(wide) != 1 or len(narrow) != 2:
        return False
    tx, ty, tr = wide[0].terms
    if not all(isinstance(t, Var) for t in (tx, ty, tr)):
        return False
    if not _aggregates_third_position(q, tr) or len({tx.name, ty.name, tr.name}) != 3:
        return False
    return all(a.terms == (ty, tx) for a in narrow)


def matches_bounded_chain_gadget(q: AggQuery) -> bool:
    """S1(x | c1), S2(y | c2), T(x, y | r) with constant c1, c2 and r aggregated."""
    if len(q.body) != 3:
        return False
    wide = [a for a in q.body if a.relation.arity == 3 and a.relation.key_len == 2]
    narrow = [a for a in q.body if a.relation.arity == 2 and a.relation.key_len == 1]
    if len(wide) != 1 or len(narrow) != 2:
        return False
    tx, ty, tr = wide[0].terms
    if not all(isinstance(t, Var) for t in (tx, ty, tr)):
        return False
    if not _aggregates_third_position(q, tr) or len({tx.name, ty.name, tr.name}) != 3:
        return False
    sides = {tx.name: False, ty.name: False}
    for a in narrow:
        k, c = a.terms
        if not isinstance(k, Var) or not _is_const(c):
            return False
        if k.name not in sides or sides[k.name]:
            return False
        sides[k.name] = True
    return all(sides.values())


def matches_count_distinct_gadget(q: AggQuery) -> bool:
    """A single binary key-first atom R(x | r) with r aggregated."""
    if len(q.body) != 1 or not isinstance(q.r, Var):
        return False
    atom = q.body[0]
    if atom.relation.arity != 2 or atom.relation.key_len != 1:
        return False
    tx, tr = atom.terms
    return (
        isinstance(tx, Var)
        and isinstance(tr, Var)
        and tr.name == q.r.name
        and tx.name != tr.name
    )


# ---------------------------------------------------------------------------
# Classification


def _acyclic(q: AggQuery) -> bool:
    frozen = freeze_free_vars(q)
    graph = build_attack_graph(frozen.body)
    return acyclic_topological_sort(graph) is not None


def classify(
    q: AggQuery,
    target: str,
    domain: NumericDomain = NumericDomain.NON_NEGATIVE,
) -> Verdict:
    if target not in ("glb", "lub"):
        raise ValueError(f"unknown target {target!r}")
    if not _acyclic(q):
        return Verdict(
            NOT_EXPRESSIBLE,
            None,
            "cyclic-attack-graph",
            "the attack graph has a cycle, so even certainty of the body is "
            "not first-order expressible",
        )
    op = aggregates.get(q.agg)
    if target == "glb":
        return _classify_glb(q, op, domain)
    return _classify_lub(q, op, domain)


def _classify_glb(q: AggQuery, op, domain: NumericDomain) -> Verdict:
    if q.agg == aggregates.MIN:
        return Verdict(
            REWRITABLE,
            MIN_GLB,
            "min-glb-plain",
            "the lowest answer over repairs is the raw minimum under the certainty guard",
        )
    folded = aggregates.get(
        aggregates.SUM if q.agg == aggregates.COUNT else q.agg
    )
    if folded.monotone(domain) and folded.associative:
        return Verdict(
            REWRITABLE,
            GENERAL_GLB,
            "monotone-associative-acyclic",
            "monotone and associative operator with an acyclic attack graph",
        )
    if q.agg == aggregates.SUM and domain is NumericDomain.UNCONSTRAINED:
        if matches_bounded_chain_gadget(q):
            return Verdict(
                NOT_EXPRESSIBLE,
                None,
                "negative-domain-bounded-chain",
                "with negative values allowed, summation has a bounded descending "
                "chain and this shape encodes a cut problem",
            )
        return _open(q)
    chain = op.chain(domain)
    if chain is not None:
        if matches_chain_gadget(q):
            return Verdict(
                NOT_EXPRESSIBLE,
                None,
                "descending-chain-gadget",
                f"{q.agg} has a descending chain and this shape encodes a matching problem",
            )
        if chain.bounded and matches_bounded_chain_gadget(q):
            return Verdict(
                NOT_EXPRESSIBLE,
                None,
                "bounded-descending-chain-gadget",
                f"{q.agg} has a bounded descending chain and this shape encodes a cut problem",
            )
    if q.agg == aggregates.COUNT_DISTINCT and matches_count_distinct_gadget(q):
        return Verdict(
            NOT_EXPRESSIBLE,
            None,
            "count-distinct-hardness",
            "distinct-counting over one key-violating relation is already intractable",
        )
    return _open(q)


def _classify_lub(q: AggQuery, op, domain: NumericDomain) -> Verdict:
    if q.agg == aggregates.MAX:
        return Verdict(
            REWRITABLE,
            MAX_LUB_PLAIN,
            "minmax-separation",
            "the highest answer over repairs is the raw maximum under the certainty guard",
        )
    if q.agg == aggregates.MIN:
        return Verdict(
            REWRITABLE,
            MIN_LUB_REVERSED,
            "minmax-separation",
            "the general construction with the order reversed",
        )
    dual_chain = op.dual_chain(domain)
    if dual_chain is not None:
        if matches_chain_gadget(q):
            return Verdict(
                NOT_EXPRESSIBLE,
                None,
                "dual-descending-chain-gadget",
                f"the sign-flipped {q.agg} has a descending chain and this shape "
                "encodes a matching problem",
            )
        if dual_chain.bounded and matches_bounded_chain_gadget(q):
            return Verdict(
                NOT_EXPRESSIBLE,
                None,
                "dual-bounded-descending-chain-gadget",
                f"the sign-flipped {q.agg} has a bounded descending chain and this "
                "shape encodes a cut problem",
            )
    return _open(q)


def _open(q: AggQuery) -> Verdict:
    return Verdict(
        UNKNOWN,
        None,
        "open-question",
        f"no rewriting route covers {q.agg} here and the query matches no known "
        "hardness gadget; expressibility is open",
    )


# ---------------------------------------------------------------------------
# Forest-shaped join classes


@dataclass(frozen=True)
class FuxmanGraph:
    atoms: tuple[Atom, ...]
    edges: frozenset[tuple[int, int]]


CFOREST = "Cforest"
CAGGFOREST = "Caggforest"
NEITHER = "Neither"


def build_fuxman_graph(q: AggQuery) -> FuxmanGraph:
    atoms = tuple(q.body)
    free = set(q.free_vars)
    edges = set()
    for i, src in enumerate(atoms):
        bound_notkey = src.notkey_vars() - free
        for j, dst in enumerate(atoms):
            if i != j and bound_notkey & dst.vars():
                edges.add((i, j))
    return FuxmanGraph(atoms, frozenset(edges))


def fuxman_membership(q: AggQuery) -> str:
    graph = build_fuxman_graph(q)
    indegree = [0] * len(graph.atoms)
    for (_, j) in graph.edges:
        indegree[j] += 1
    if any(d > 1 for d in indegree):
        return NEITHER
    # in-degrees at most one: any directed cycle would be a simple loop
    visited: set[int] = set()
    succ = {i: [j for (a, j) in graph.edges if a == i] for i in range(len(graph.atoms))}
    for start in range(len(graph.atoms)):
        node, trail = start, set()
        while node is not None:
            if node in trail:
                return NEITHER
            if node in visited:
                break
            trail.add(node)
            nxt = succ[node]
            node = nxt[0] if nxt else None
        visited |= trail
    free = set(q.free_vars)
    for (i, j) in graph.edges:
        src, dst = graph.atoms[i], graph.atoms[j]
        if not (dst.key_vars() - free) <= src.notkey_vars():
            return NEITHER
    if q.agg == aggregates.COUNT:
        return CAGGFOREST
    if q.agg in (aggregates.MIN, aggregates.MAX, aggregates.SUM) and isinstance(
        q.r, Var
    ):
        return CAGGFOREST
    return CFOREST
