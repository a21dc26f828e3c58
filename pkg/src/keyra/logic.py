"""First-order logic with aggregate terms, and a direct evaluator.

Formulas are range-restricted: every variable is bound by a relation atom
or by a value equation before any comparison or universal check needs it.
Evaluation therefore proceeds by binding propagation, with a plain
active-domain sweep as the fallback for hand-built formulas outside that
fragment.  Formula objects are shared (identity semantics), so a nested
construction stays quadratic even when one subformula backs many levels.

An aggregate term ``AggTerm(op, bound, r, q)`` denotes op applied to the
multiset of r-values over all distinct valuations of the bound variables
that satisfy q; on the empty multiset it denotes the operator's tagged
empty value, which the range plumbing converts to the bottom answer.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import product as iter_product

from . import aggregates
from .aggregates import EMPTY_AGGREGATE
from .errors import KeyraError
from .model import DatabaseInstance, Fact
from .query import Atom, Placeholder, Var, term_text


class EvalError(KeyraError):
    pass


# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True, eq=False)
class Formula:
    pass


@dataclass(frozen=True, eq=False)
class Tautology(Formula):
    pass


TRUE = Tautology()


@dataclass(frozen=True, eq=False)
class RelAtom(Formula):
    atom: Atom


@dataclass(frozen=True, eq=False)
class Equals(Formula):
    left: object
    right: object


@dataclass(frozen=True, eq=False)
class LessEq(Formula):
    left: object  # numeric term
    right: object


@dataclass(frozen=True, eq=False)
class Not(Formula):
    inner: Formula


@dataclass(frozen=True, eq=False)
class And(Formula):
    children: tuple[Formula, ...]


@dataclass(frozen=True, eq=False)
class Or(Formula):
    children: tuple[Formula, ...]


@dataclass(frozen=True, eq=False)
class Implies(Formula):
    premise: Formula
    conclusion: Formula


@dataclass(frozen=True, eq=False)
class Exists(Formula):
    bound: tuple[str, ...]
    inner: Formula


@dataclass(frozen=True, eq=False)
class Forall(Formula):
    bound: tuple[str, ...]
    inner: Formula


@dataclass(frozen=True, eq=False)
class NumEq(Formula):
    var: str
    term: object  # numeric term


@dataclass(frozen=True, eq=False)
class AggTerm:
    op: str
    bound: tuple[str, ...]
    r: object  # Var or Fraction
    formula: Formula


def conj(children) -> Formula:
    flat = []
    for c in children:
        if isinstance(c, Tautology):
            continue
        if isinstance(c, And):
            flat.extend(c.children)
        else:
            flat.append(c)
    if not flat:
        return TRUE
    if len(flat) == 1:
        return flat[0]
    return And(tuple(flat))


def exists(bound, inner: Formula) -> Formula:
    bound = tuple(bound)
    return inner if not bound else Exists(bound, inner)


def forall(bound, inner: Formula) -> Formula:
    bound = tuple(bound)
    return inner if not bound else Forall(bound, inner)


# ---------------------------------------------------------------------------
# Free variables (stashed on the node; nodes are shared DAGs)


def _term_free(term) -> frozenset[str]:
    if isinstance(term, Var):
        return frozenset({term.name})
    if isinstance(term, AggTerm):
        return free_vars(term.formula) - frozenset(term.bound)
    return frozenset()


def free_vars(node) -> frozenset[str]:
    cached = getattr(node, "_free_vars", None)
    if cached is not None:
        return cached
    if isinstance(node, Tautology):
        out = frozenset()
    elif isinstance(node, RelAtom):
        out = frozenset(node.atom.vars())
    elif isinstance(node, (Equals, LessEq)):
        out = _term_free(node.left) | _term_free(node.right)
    elif isinstance(node, Not):
        out = free_vars(node.inner)
    elif isinstance(node, (And, Or)):
        out = frozenset().union(*(free_vars(c) for c in node.children))
    elif isinstance(node, Implies):
        out = free_vars(node.premise) | free_vars(node.conclusion)
    elif isinstance(node, (Exists, Forall)):
        out = free_vars(node.inner) - frozenset(node.bound)
    elif isinstance(node, NumEq):
        out = frozenset({node.var}) | _term_free(node.term)
    elif isinstance(node, AggTerm):
        out = _term_free(node)
    else:
        raise EvalError(f"unknown node: {node!r}")
    object.__setattr__(node, "_free_vars", out)
    return out


def node_count(*roots) -> int:
    """Number of distinct AST nodes reachable from the given roots."""
    seen: set[int] = set()

    def walk(node) -> None:
        if node is None or id(node) in seen:
            return
        if isinstance(node, (Var, Placeholder, Fraction, str)):
            return
        seen.add(id(node))
        if isinstance(node, RelAtom):
            return
        if isinstance(node, (Equals, LessEq)):
            walk(node.left), walk(node.right)
        elif isinstance(node, Not):
            walk(node.inner)
        elif isinstance(node, (And, Or)):
            for c in node.children:
                walk(c)
        elif isinstance(node, Implies):
            walk(node.premise), walk(node.conclusion)
        elif isinstance(node, (Exists, Forall)):
            walk(node.inner)
        elif isinstance(node, NumEq):
            walk(node.term)
        elif isinstance(node, AggTerm):
            walk(node.formula)

    for root in roots:
        walk(root)
    return len(seen)


# ---------------------------------------------------------------------------
# Range answers


class Bottom:
    def __repr__(self) -> str:
        return "⊥"


BOTTOM = Bottom()


@dataclass(frozen=True)
class RangeAnswer:
    value: object  # Fraction or BOTTOM

    @property
    def is_bottom(self) -> bool:
        return isinstance(self.value, Bottom)

    def __repr__(self) -> str:
        return "⊥" if self.is_bottom else str(self.value)


# ---------------------------------------------------------------------------
# Evaluation

_CHECKER_TYPES = (Equals, LessEq, Not, Implies, Forall)


class Evaluator:
    """Evaluates formulas and numeric terms on one instance.

    ``params`` binds frozen group parameters to concrete values.  Solution
    sets and aggregate values are memoized per (node, relevant bindings),
    which keeps nested constructions linear in practice.
    """

    def __init__(self, db: DatabaseInstance, params: dict[Placeholder, object] | None = None):
        self.db = db
        self.params = params or {}
        self._facts_by_rel: dict[str, list[Fact]] = {}
        self._agg_cache: dict = {}
        self._sol_cache: dict = {}
        self._adom: list | None = None

    # -- public API

    def eval_formula(self, f: Formula, env: dict[str, object] | None = None) -> bool:
        env = dict(env or {})
        missing = free_vars(f) - set(env)
        if missing:
            raise EvalError(f"unbound free variables: {', '.join(sorted(missing))}")
        return self._check(f, env)

    def eval_term(self, term, env: dict[str, object] | None = None):
        env = dict(env or {})
        missing = _term_free(term) - set(env)
        if missing:
            raise EvalError(f"unbound free variables: {', '.join(sorted(missing))}")
        return self._eval_term(term, env)

    def solutions(self, f: Formula, env: dict[str, object] | None = None) -> list[dict]:
        """All extensions of env over the unbound free variables of f."""
        return self._solutions(f, dict(env or {}))

    # -- term evaluation

    def _resolve(self, term, env):
        if isinstance(term, Var):
            if term.name not in env:
                raise EvalError(f"unbound variable {term.name}")
            return env[term.name]
        if isinstance(term, Placeholder):
            if term not in self.params:
                raise EvalError(f"unbound group parameter {term!r}")
            return self.params[term]
        return term

    def _eval_term(self, term, env):
        if isinstance(term, AggTerm):
            return self._eval_agg(term, env)
        value = self._resolve(term, env)
        if isinstance(value, Placeholder):
            raise EvalError(f"unbound group parameter {value!r}")
        return value

    def _eval_agg(self, term: AggTerm, env):
        outer = free_vars(term.formula) - set(term.bound)
        if not outer <= set(env):
            raise EvalError(
                f"aggregate needs {sorted(outer - set(env))} bound before evaluation"
            )
        key = (term, tuple(sorted((v, env[v]) for v in outer)))
        if key in self._agg_cache:
            return self._agg_cache[key]
        base = {v: env[v] for v in outer}
        rows: set[tuple] = set()
        for sol in self._solutions(term.formula, dict(base)):
            try:
                rows.add(tuple(sol[v] for v in term.bound))
            except KeyError as exc:
                raise EvalError(
                    f"aggregate binds {exc.args[0]} but it does not occur in the formula"
                ) from exc
        values = []
        for row in rows:
            bound_env = dict(base)
            bound_env.update(zip(term.bound, row))
            values.append(self._eval_term(term.r, bound_env))
        result = aggregates.apply(term.op, values)
        self._agg_cache[key] = result
        return result

    # -- formula checking (fully bound)

    def _check(self, f: Formula, env) -> bool:
        if isinstance(f, Tautology):
            return True
        if isinstance(f, RelAtom):
            pattern = tuple(self._resolve(t, env) for t in f.atom.terms)
            return any(
                fact.values == pattern for fact in self._facts(f.atom.relation.name)
            )
        if isinstance(f, Equals):
            return self._eval_term(f.left, env) == self._eval_term(f.right, env)
        if isinstance(f, LessEq):
            left, right = self._eval_term(f.left, env), self._eval_term(f.right, env)
            if left is EMPTY_AGGREGATE or right is EMPTY_AGGREGATE:
                raise EvalError("comparison against an empty-aggregate value")
            return left <= right
        if isinstance(f, Not):
            return not self._check(f.inner, env)
        if isinstance(f, And):
            return all(self._check(c, env) for c in f.children)
        if isinstance(f, Or):
            return any(self._check(c, env) for c in f.children)
        if isinstance(f, Implies):
            return not self._check(f.premise, env) or self._check(f.conclusion, env)
        if isinstance(f, Exists):
            return bool(self._solutions_raw(f.inner, self._restrict(f.inner, env), limit=1))
        if isinstance(f, Forall):
            return self._check_forall(f, env)
        if isinstance(f, NumEq):
            if f.var in env:
                return env[f.var] == self._eval_term(f.term, env)
            raise EvalError(f"unbound variable {f.var} in value equation")
        raise EvalError(f"cannot check {f!r}")

    def _check_forall(self, f: Forall, env) -> bool:
        inner = f.inner
        if isinstance(inner, Implies):
            premise_free = free_vars(inner.premise)
            if set(f.bound) <= premise_free:
                base = {v: w for v, w in env.items() if v not in f.bound}
                for sol in self._solutions(inner.premise, dict(base)):
                    full = dict(base)
                    full.update(sol)
                    if not set(f.bound) <= set(full):
                        break  # premise under-binds; fall through to sweep
                    if not self._check(inner.conclusion, full):
                        return False
                else:
                    return True
        # Active-domain sweep for shapes outside the guarded fragment.
        base = {v: w for v, w in env.items() if v not in f.bound}
        for combo in iter_product(self._active_domain(), repeat=len(f.bound)):
            full = dict(base)
            full.update(zip(f.bound, combo))
            if not self._check(f.inner, full):
                return False
        return True

    # -- solution enumeration (binding propagation)

    def _restrict(self, f: Formula, env) -> dict:
        keep = free_vars(f)
        return {v: w for v, w in env.items() if v in keep}

    def _solutions(self, f: Formula, env) -> list[dict]:
        env = self._restrict(f, env)
        key = (f, tuple(sorted(env.items(), key=lambda kv: kv[0])))
        cached = self._sol_cache.get(key)
        if cached is None:
            cached = self._solutions_raw(f, env)
            self._sol_cache[key] = cached
        return cached

    def _solutions_raw(self, f: Formula, env, limit: int | None = None) -> list[dict]:
        out: list[dict] = []
        seen: set[tuple] = set()
        targets = tuple(sorted(free_vars(f) - set(env)))
        for sol in self._enumerate(f, dict(env)):
            row = tuple(sol[v] for v in targets)
            if row in seen:
                continue
            seen.add(row)
            out.append({v: sol[v] for v in targets})
            if limit is not None and len(out) >= limit:
                break
        return out

    def _enumerate(self, f: Formula, env):
        """Yield full environments extending env to cover free_vars(f)."""
        if isinstance(f, Tautology):
            yield env
        elif isinstance(f, RelAtom):
            yield from self._match_atom(f.atom, env)
        elif isinstance(f, Exists):
            unshadowed = {v: w for v, w in env.items() if v not in f.bound}
            for sol in self._solutions(f.inner, unshadowed):
                full = dict(env)
                full.update((v, w) for v, w in sol.items() if v not in f.bound)
                yield full
        elif isinstance(f, Or):
            needed = free_vars(f) - set(env)
            for child in f.children:
                if needed <= free_vars(child):
                    for sol in self._solutions(child, env):
                        full = dict(env)
                        full.update(sol)
                        yield full
                else:
                    for combo_env in self._domain_sweep(needed - free_vars(child), env):
                        for sol in self._solutions(child, combo_env):
                            full = dict(combo_env)
                            full.update(sol)
                            yield full
        elif isinstance(f, And):
            yield from self._enumerate_and(list(f.children), env)
        elif isinstance(f, NumEq):
            if f.var in env:
                if env[f.var] == self._eval_term(f.term, env):
                    yield env
            else:
                value = self._eval_term(f.term, env)
                if value is EMPTY_AGGREGATE:
                    return
                out = dict(env)
                out[f.var] = value
                yield out
        elif isinstance(f, _CHECKER_TYPES):
            missing = free_vars(f) - set(env)
            if missing:
                for swept in self._domain_sweep(missing, env):
                    if self._check(f, swept):
                        yield swept
            elif self._check(f, env):
                yield env
        else:
            raise EvalError(f"cannot enumerate {f!r}")

    def _enumerate_and(self, pending: list[Formula], env):
        if not pending:
            yield env
            return
        # Fire the first conjunct whose inputs are available: atoms and
        # nested existentials bind, value equations bind their variable once
        # the defining term is evaluable, checkers wait until fully bound.
        pick = None
        for i, child in enumerate(pending):
            if isinstance(child, (RelAtom, Exists, Or, Tautology)):
                pick = i
                break
            if isinstance(child, NumEq):
                needs = _term_free(child.term)
                if needs <= set(env):
                    pick = i
                    break
            elif free_vars(child) <= set(env):
                pick = i
                break
        if pick is None:
            # Only under-bound checkers remain: sweep the active domain.
            missing = frozenset().union(*(free_vars(c) for c in pending)) - set(env)
            for swept in self._domain_sweep(missing, env):
                if all(self._check(c, swept) for c in pending):
                    yield swept
            return
        child = pending[pick]
        rest = pending[:pick] + pending[pick + 1 :]
        for extended in self._enumerate(child, env):
            yield from self._enumerate_and(rest, dict(extended))

    def _match_atom(self, atom: Atom, env):
        for fact in self._facts(atom.relation.name):
            bound = dict(env)
            ok = True
            for term, value in zip(atom.terms, fact.values):
                if isinstance(term, Var):
                    if term.name in bound:
                        if bound[term.name] != value:
                            ok = False
                            break
                    else:
                        bound[term.name] = value
                else:
                    if self._resolve(term, env) != value:
                        ok = False
                        break
            if ok:
                yield bound

    def _domain_sweep(self, missing, env):
        missing = tuple(sorted(missing))
        if not missing:
            yield dict(env)
            return
        for combo in iter_product(self._active_domain(), repeat=len(missing)):
            out = dict(env)
            out.update(zip(missing, combo))
            yield out

    def _facts(self, relation: str) -> list[Fact]:
        cached = self._facts_by_rel.get(relation)
        if cached is None:
            cached = self.db.relation_facts(relation)
            self._facts_by_rel[relation] = cached
        return cached

    def _active_domain(self) -> list:
        if self._adom is None:
            from .model import value_sort_key

            self._adom = sorted(self.db.active_domain(), key=lambda v: value_sort_key((v,)))
        return self._adom


# ---------------------------------------------------------------------------
# Surface printing


def formula_text(f: Formula) -> str:
    if isinstance(f, Tautology):
        return "true"
    if isinstance(f, RelAtom):
        return f.atom.text()
    if isinstance(f, Equals):
        return f"{numeric_term_text(f.left)} = {numeric_term_text(f.right)}"
    if isinstance(f, LessEq):
        return f"{numeric_term_text(f.left)} ≤ {numeric_term_text(f.right)}"
    if isinstance(f, Not):
        return f"¬({formula_text(f.inner)})"
    if isinstance(f, And):
        return " ∧ ".join(_wrap(c) for c in f.children)
    if isinstance(f, Or):
        return " ∨ ".join(_wrap(c) for c in f.children)
    if isinstance(f, Implies):
        return f"({formula_text(f.premise)} → {formula_text(f.conclusion)})"
    if isinstance(f, Exists):
        return f"∃{','.join(f.bound)}({formula_text(f.inner)})"
    if isinstance(f, Forall):
        return f"∀{','.join(f.bound)}({formula_text(f.inner)})"
    if isinstance(f, NumEq):
        return f"{f.var} = {numeric_term_text(f.term)}"
    raise EvalError(f"cannot print {f!r}")


def _wrap(f: Formula) -> str:
    text = formula_text(f)
    if isinstance(f, (And, Or, Implies)):
        return f"({text})"
    return text


def numeric_term_text(term) -> str:
    if isinstance(term, AggTerm):
        bound = ",".join(term.bound)
        return f"{term.op}⟨{bound}⟩[{numeric_term_text(term.r)} : {formula_text(term.formula)}]"
    return term_text(term)
