"""Portable SQL for rewritings, plus a thin sqlite execution driver.

The emitter stays inside a small ANSI subset: SELECT/FROM/WHERE,
EXISTS/NOT EXISTS, GROUP BY, MIN/MAX/SUM/COUNT, scalar subqueries, and
CASE.  Universal rows become a DISTINCT join subquery; each rewriting
level nests one derived table (per-group selection extreme, then the fold
operator).  The bottom answer is encoded as NULL in the answer query, with
a separate 0/1 guard query so clients can tell it apart from any
empty-multiset convention.
"""
from __future__ import annotations

import sqlite3
from dataclasses import dataclass
from fractions import Fraction

from .errors import EmitError, KeyraError
from .logic import (
    AggTerm,
    And,
    Equals,
    Exists,
    Forall,
    Formula,
    Implies,
    Not,
    NumEq,
    RangeAnswer,
    RelAtom,
    Tautology,
    BOTTOM,
    conj,
)
from .model import DatabaseInstance, Schema
from .query import Atom, Placeholder, Var
from .rewriter import Rewriting


def quote_ident(name: str) -> str:
    return '"' + name.replace('"', '""') + '"'


def _col(i: int) -> str:
    return f"c{i}"


def literal(value) -> str:
    if isinstance(value, Fraction):
        if value.denominator != 1:
            raise EmitError(
                f"non-integer rational {value} cannot be emitted exactly as a SQL literal"
            )
        return str(value.numerator)
    if isinstance(value, Placeholder):
        raise EmitError("unresolved group parameter in a literal position")
    return "'" + str(value).replace("'", "''") + "'"


@dataclass(frozen=True)
class SqlScript:
    ddl: tuple[str, ...]
    guard_sql: str
    answer_sql: str
    params: tuple[tuple[str, str], ...] = ()  # (group variable, named parameter)
    groups_sql: str | None = None

    def text(self) -> str:
        parts = list(self.ddl)
        if self.groups_sql:
            parts.append("-- groups\n" + self.groups_sql + ";")
        parts.append("-- guard (1 = certain, 0 = bottom)\n" + self.guard_sql + ";")
        parts.append("-- answer (NULL = bottom)\n" + self.answer_sql + ";")
        return "\n\n".join(parts)


def emit_ddl(schema: Schema) -> tuple[str, ...]:
    out = []
    for sig in schema.relations:
        cols = ", ".join(
            f"{quote_ident(_col(i))} {'DECIMAL' if sig.is_numeric(i) else 'TEXT'}"
            for i in range(1, sig.arity + 1)
        )
        out.append(f"CREATE TABLE {quote_ident(sig.name)} ({cols});")
    return tuple(out)


def emit_inserts(db: DatabaseInstance) -> list[str]:
    out = []
    for sig in db.schema.relations:
        for fact in sorted(db.relation_facts(sig.name), key=lambda f: repr(f.values)):
            values = ", ".join(literal(v) for v in fact.values)
            out.append(f"INSERT INTO {quote_ident(sig.name)} VALUES ({values});")
    return out


# ---------------------------------------------------------------------------
# Formula translation


class _Emitter:
    def __init__(self, params: dict[Placeholder, str]):
        self.params = params
        self.counter = 0

    def alias(self) -> str:
        self.counter += 1
        return f"t{self.counter}"

    def term_ref(self, term, env: dict[str, str]) -> str:
        if isinstance(term, Var):
            if term.name not in env:
                raise EmitError(f"variable {term.name} not bound in SQL scope")
            return env[term.name]
        if isinstance(term, Placeholder):
            return self.params[term]
        return literal(term)

    def condition(self, f: Formula, env: dict[str, str]) -> str:
        if isinstance(f, Tautology):
            return "1 = 1"
        if isinstance(f, RelAtom):
            alias = self.alias()
            where = self.atom_conditions(f.atom, alias, dict(env), bind=False)
            return self.exists_sql([(f.atom, alias)], where)
        if isinstance(f, Equals):
            return f"{self.term_ref(f.left, env)} = {self.term_ref(f.right, env)}"
        if isinstance(f, Not):
            return f"NOT ({self.condition(f.inner, env)})"
        if isinstance(f, And):
            return " AND ".join(f"({self.condition(c, env)})" for c in f.children)
        if isinstance(f, Implies):
            return (
                f"(NOT ({self.condition(f.premise, env)}) "
                f"OR ({self.condition(f.conclusion, env)}))"
            )
        if isinstance(f, Exists):
            return self.exists_block(f, env)
        if isinstance(f, Forall):
            return self.forall_block(f, env)
        raise EmitError(f"formula shape outside the supported fragment: {type(f).__name__}")

    def atom_conditions(
        self, atom: Atom, alias: str, env: dict[str, str], bind: bool
    ) -> list[str]:
        """Equality conditions tying a table alias to the atom's terms.

        With bind=True, unbound variables get defined as the alias columns;
        otherwise every term must already be resolvable.
        """
        where = []
        for i, term in enumerate(atom.terms, start=1):
            ref = f"{alias}.{quote_ident(_col(i))}"
            if isinstance(term, Var) and term.name not in env:
                if not bind:
                    raise EmitError(f"variable {term.name} not bound in SQL scope")
                env[term.name] = ref
            else:
                where.append(f"{ref} = {self.term_ref(term, env)}")
        return where

    def exists_sql(self, froms: list[tuple[Atom, str]], where: list[str]) -> str:
        from_clause = ", ".join(
            f"{quote_ident(atom.relation.name)} {alias}" for atom, alias in froms
        )
        where_clause = f" WHERE {' AND '.join(where)}" if where else ""
        return f"EXISTS (SELECT 1 FROM {from_clause}{where_clause})"

    def exists_block(self, f: Exists, env: dict[str, str]) -> str:
        children = list(f.inner.children) if isinstance(f.inner, And) else [f.inner]
        inner_env = {v: r for v, r in env.items() if v not in f.bound}
        froms: list[tuple[Atom, str]] = []
        where: list[str] = []
        rest: list[Formula] = []
        for child in children:
            if isinstance(child, RelAtom):
                alias = self.alias()
                froms.append((child.atom, alias))
                where.extend(self.atom_conditions(child.atom, alias, inner_env, bind=True))
            else:
                rest.append(child)
        missing = set(f.bound) - set(inner_env)
        if missing or not froms:
            raise EmitError(
                f"existential variables {sorted(missing)} not bound by any atom"
            )
        for child in rest:
            where.append(f"({self.condition(child, inner_env)})")
        return self.exists_sql(froms, where)

    def forall_block(self, f: Forall, env: dict[str, str]) -> str:
        if not isinstance(f.inner, Implies) or not isinstance(f.inner.premise, RelAtom):
            raise EmitError("universal quantifier must be guarded by an atom")
        atom = f.inner.premise.atom
        inner_env = {v: r for v, r in env.items() if v not in f.bound}
        alias = self.alias()
        where = self.atom_conditions(atom, alias, inner_env, bind=True)
        missing = set(f.bound) - set(inner_env)
        if missing:
            raise EmitError(f"universal variables {sorted(missing)} not bound by the guard")
        negated = f"NOT ({self.condition(f.inner.conclusion, inner_env)})"
        from_clause = f"{quote_ident(atom.relation.name)} {alias}"
        conds = where + [negated]
        return f"NOT EXISTS (SELECT 1 FROM {from_clause} WHERE {' AND '.join(conds)})"


# ---------------------------------------------------------------------------
# Rewriting translation


def _rows_subquery(emitter: _Emitter, formula: Formula, var_order) -> str:
    """DISTINCT variable rows of a conjunction of atoms and guard conditions."""
    children = list(formula.children) if isinstance(formula, And) else [formula]
    env: dict[str, str] = {}
    froms: list[tuple[Atom, str]] = []
    where: list[str] = []
    conditions: list[Formula] = []
    for child in children:
        if isinstance(child, RelAtom):
            alias = emitter.alias()
            froms.append((child.atom, alias))
            where.extend(emitter.atom_conditions(child.atom, alias, env, bind=True))
        elif not isinstance(child, Tautology):
            conditions.append(child)
    for child in conditions:
        where.append(f"({emitter.condition(child, env)})")
    missing = [v for v in var_order if v not in env]
    if missing or not froms:
        raise EmitError(f"row variables {missing} not bound by any atom")
    select = ", ".join(f"{env[v]} AS {quote_ident(v)}" for v in var_order)
    from_clause = ", ".join(
        f"{quote_ident(atom.relation.name)} {alias}" for atom, alias in froms
    )
    where_clause = f" WHERE {' AND '.join(where)}" if where else ""
    return f"SELECT DISTINCT {select} FROM {from_clause}{where_clause}"


_VALUE_COL = quote_ident("val'")


def _general_term_sql(emitter: _Emitter, rw: Rewriting, rows_sql: str) -> str:
    """Flat aggregation pipeline over the universal rows.

    Innermost-out, each level first takes the selection extreme per
    (seen variables + new key variables) group, then folds those group
    values with the query operator per seen-variables group.  No
    correlation is needed: every stage is a plain GROUP BY over the
    previous derived table.
    """
    if isinstance(rw.query.r, Fraction):
        value_expr = literal(rw.query.r)
    else:
        value_expr = quote_ident(rw.query.r.name)
    all_cols = ", ".join(quote_ident(v) for v in rw.var_order)
    alias = emitter.alias()
    current = (
        f"SELECT {all_cols}{', ' if all_cols else ''}{value_expr} AS {_VALUE_COL} "
        f"FROM ({rows_sql}) {alias}"
    )
    prefixes: list[list[str]] = [[]]
    for lvl in rw.levels:
        prefixes.append(
            prefixes[-1] + list(lvl.new_key_vars) + list(lvl.new_nonkey_vars)
        )
    for index in range(len(rw.levels) - 1, -1, -1):
        lvl = rw.levels[index]
        seen = prefixes[index]
        inner_keys = seen + list(lvl.new_key_vars)
        a1, a2 = emitter.alias(), emitter.alias()
        inner_cols = ", ".join(quote_ident(v) for v in inner_keys)
        group_inner = f" GROUP BY {inner_cols}" if inner_keys else ""
        current = (
            f"SELECT {inner_cols}{', ' if inner_cols else ''}"
            f"{rw.select_op}({_VALUE_COL}) AS {_VALUE_COL} "
            f"FROM ({current}) {a1}{group_inner}"
        )
        outer_cols = ", ".join(quote_ident(v) for v in seen)
        group_outer = f" GROUP BY {outer_cols}" if seen else ""
        current = (
            f"SELECT {outer_cols}{', ' if outer_cols else ''}"
            f"{rw.agg_op}({_VALUE_COL}) AS {_VALUE_COL} "
            f"FROM ({current}) {a2}{group_outer}"
        )
    return current


def emit_sql(rw: Rewriting, schema: Schema) -> SqlScript:
    sql_ops = {"SUM", "COUNT", "MAX", "MIN"}
    if rw.agg_op not in sql_ops or rw.select_op not in sql_ops:
        raise EmitError(f"operator {rw.agg_op} has no exact portable SQL form")
    params = {ph: f":g_{name}" for name, ph in rw.group_params}
    emitter = _Emitter(params)
    guard_cond = emitter.condition(rw.guard, {})
    guard_sql = f"SELECT CASE WHEN {guard_cond} THEN 1 ELSE 0 END AS certain"

    if rw.route == "general":
        rows_sql = _rows_subquery(emitter, rw.psi, rw.var_order)
        term_body = _general_term_sql(emitter, rw, rows_sql)
    else:
        body_rows = _rows_subquery(
            emitter, conj([RelAtom(a) for a in rw.sort]), rw.var_order
        )
        alias = emitter.alias()
        if isinstance(rw.query.r, Fraction):
            target = literal(rw.query.r)
        else:
            target = quote_ident(rw.query.r.name)
        term_body = (
            f"SELECT {rw.query.agg}({target}) AS {_VALUE_COL} FROM ({body_rows}) {alias}"
        )

    # The guard sits in a WHERE clause (not inside one big CASE expression),
    # so the scalar subquery comes back NULL exactly when certainty fails.
    gate = emitter.alias()
    answer_sql = (
        f"SELECT (SELECT {_VALUE_COL} FROM ({term_body}) {gate} "
        f"WHERE {guard_cond}) AS answer"
    )

    groups_sql = None
    if rw.group_params:
        free = [name for name, _ in rw.group_params]
        body_rows = _rows_subquery(
            _Emitter({}),
            conj([RelAtom(a) for a in rw.source.body]),
            tuple(free),
        )
        groups_sql = body_rows
    return SqlScript(
        ddl=emit_ddl(schema),
        guard_sql=guard_sql,
        answer_sql=answer_sql,
        params=tuple((name, f":g_{name}") for name, _ in rw.group_params),
        groups_sql=groups_sql,
    )


# ---------------------------------------------------------------------------
# Execution driver (sqlite URL scheme)


def _connect(dsn: str) -> sqlite3.Connection:
    if dsn.startswith("sqlite:///"):
        path = dsn[len("sqlite:///") :] or ":memory:"
        return sqlite3.connect(path)
    if dsn in ("sqlite://", "sqlite:///:memory:"):
        return sqlite3.connect(":memory:")
    raise KeyraError(
        f"unsupported DSN {dsn!r}: this driver speaks the sqlite:/// URL scheme"
    )


def _to_sql_value(value):
    if isinstance(value, Fraction):
        if value.denominator == 1:
            return int(value)
        return float(value)
    return str(value)


def _from_sql_value(value):
    if value is None:
        return None
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(str(value))
    return value


def load_into(conn: sqlite3.Connection, db: DatabaseInstance) -> None:
    for stmt in emit_ddl(db.schema):
        conn.execute(stmt.rstrip(";"))
    for sig in db.schema.relations:
        rows = [
            tuple(_to_sql_value(v) for v in fact.values)
            for fact in db.relation_facts(sig.name)
        ]
        if rows:
            marks = ", ".join("?" * sig.arity)
            conn.executemany(
                f"INSERT INTO {quote_ident(sig.name)} VALUES ({marks})", rows
            )


def run_script(
    script: SqlScript, db: DatabaseInstance, dsn: str = "sqlite:///:memory:"
):
    """Load the instance and execute guard then answer.

    Returns a RangeAnswer for closed queries, or a list of
    (group values, RangeAnswer) pairs for group queries.
    """
    conn = _connect(dsn)
    try:
        load_into(conn, db)
        if script.groups_sql is None:
            return _run_single(conn, script, {})
        out = []
        group_rows = conn.execute(script.groups_sql).fetchall()
        for row in sorted(group_rows, key=repr):
            binding = {
                name: value for (name, _), value in zip(script.params, row)
            }
            answer = _run_single(conn, script, binding)
            out.append((tuple(_from_sql_value(v) for v in row), answer))
        return out
    finally:
        conn.close()


def _run_single(conn, script: SqlScript, binding: dict) -> RangeAnswer:
    named = {f"g_{k}": v for k, v in binding.items()}
    certain = conn.execute(script.guard_sql, named).fetchone()[0]
    if not certain:
        return RangeAnswer(BOTTOM)
    value = conn.execute(script.answer_sql, named).fetchone()[0]
    if value is None:
        return RangeAnswer(BOTTOM)
    return RangeAnswer(_from_sql_value(value))
