"""Attack graphs over query bodies.

keycl(F) collects the variables that key(F) determines using every atom
except F.  F attacks a variable x when a path of co-occurring variables,
none of them in keycl(F), leads from a non-key variable of F to x; F
attacks an atom G when it attacks one of G's variables.  Acyclicity of the
resulting graph is what makes certainty first-order expressible, and a
topological sort of it drives every construction downstream.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

from .query import Atom, fd_closure, fdset


def keycl(atom: Atom, body) -> frozenset[str]:
    rest = [a for a in body if a is not atom]
    closure = fd_closure(fdset(rest), atom.key_vars())
    all_vars = set()
    for a in body:
        all_vars |= a.vars()
    return frozenset(closure & all_vars)


def _adjacency(body) -> dict[str, set[str]]:
    adj: dict[str, set[str]] = {}
    for a in body:
        vs = a.vars()
        for v in vs:
            adj.setdefault(v, set()).update(vs - {v})
    return adj


def attacked_variables(atom: Atom, body) -> frozenset[str]:
    """All x with a witness path from notkey(atom) avoiding keycl(atom)."""
    blocked = keycl(atom, body)
    adj = _adjacency(body)
    frontier = [v for v in atom.notkey_vars() if v not in blocked]
    reached = set(frontier)
    while frontier:
        v = frontier.pop()
        for w in adj.get(v, ()):
            if w not in blocked and w not in reached:
                reached.add(w)
                frontier.append(w)
    return frozenset(reached)


def attacks_variable(atom: Atom, var: str, body) -> bool:
    return var in attacked_variables(atom, body)


@dataclass(frozen=True)
class AttackGraph:
    atoms: tuple[Atom, ...]
    edges: frozenset[tuple[int, int]]
    keycl_by_atom: tuple[frozenset[str], ...]

    def is_acyclic(self) -> bool:
        return acyclic_topological_sort(self) is not None

    def successors(self, i: int) -> list[int]:
        return [j for (a, j) in self.edges if a == i]


def build_attack_graph(body) -> AttackGraph:
    atoms = tuple(body)
    keycls = tuple(keycl(a, atoms) for a in atoms)
    edges = set()
    for i, attacker in enumerate(atoms):
        reach = attacked_variables(attacker, atoms)
        for j, target in enumerate(atoms):
            if i != j and reach & target.vars():
                edges.add((i, j))
    graph = AttackGraph(atoms, frozenset(edges), keycls)
    if graph.is_acyclic():
        _assert_transitive(graph)
    return graph


def _assert_transitive(graph: AttackGraph) -> None:
    # Acyclic attack graphs are transitive; a violation means a bug upstream.
    for (i, j) in graph.edges:
        for (j2, k) in graph.edges:
            if j2 == j and k != i and (i, k) not in graph.edges:
                raise AssertionError(
                    f"attack graph not transitive: {i}->{j}->{k} without {i}->{k}"
                )


def acyclic_topological_sort(graph: AttackGraph) -> list[Atom] | None:
    """Deterministic topological sort, ties broken by body order; None if cyclic."""
    n = len(graph.atoms)
    indegree = [0] * n
    for (_, j) in graph.edges:
        indegree[j] += 1
    order: list[int] = []
    remaining = set(range(n))
    while remaining:
        ready = [i for i in sorted(remaining) if indegree[i] == 0]
        if not ready:
            return None
        pick = ready[0]
        remaining.remove(pick)
        order.append(pick)
        for j in graph.successors(pick):
            indegree[j] -= 1
    return [graph.atoms[i] for i in order]


def all_topological_sorts(graph: AttackGraph) -> Iterator[list[Atom]]:
    n = len(graph.atoms)
    indegree = [0] * n
    for (_, j) in graph.edges:
        indegree[j] += 1

    def recurse(remaining: set[int], prefix: list[int]) -> Iterator[list[int]]:
        if not remaining:
            yield list(prefix)
            return
        for i in sorted(remaining):
            if indegree[i] == 0:
                for j in graph.successors(i):
                    indegree[j] -= 1
                remaining.remove(i)
                prefix.append(i)
                yield from recurse(remaining, prefix)
                prefix.pop()
                remaining.add(i)
                for j in graph.successors(i):
                    indegree[j] += 1

    for order in recurse(set(range(n)), []):
        yield [graph.atoms[i] for i in order]


def to_dot(graph: AttackGraph) -> str:
    lines = ["digraph attacks {"]
    for atom in graph.atoms:
        lines.append(f'  "{atom.relation.name}";')
    for (i, j) in sorted(graph.edges):
        lines.append(
            f'  "{graph.atoms[i].relation.name}" -> "{graph.atoms[j].relation.name}";'
        )
    lines.append("}")
    return "\n".join(lines)
