"""Aggregation queries: terms, atoms, surface syntax, and key dependencies.

Surface syntax, one query per line::

    SUM(y) <- Dealers("Smith" | t), Stock(p, t | y)
    (x, SUM(y)) <- Dealers(x | t), Stock(p, t | y)

Variables are bare lowercase identifiers, constants are double-quoted
strings or rational literals, and ``|`` splits an atom's key positions from
its non-key positions.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from fractions import Fraction

from . import aggregates
from .errors import QueryError
from .model import Schema, Signature

# ---------------------------------------------------------------------------
# Terms


@dataclass(frozen=True)
class Var:
    name: str

    def __repr__(self) -> str:
        return f"Var({self.name})"


@dataclass(frozen=True)
class Placeholder:
    """A frozen group parameter: behaves as a constant, bound at evaluation."""

    name: str

    def __repr__(self) -> str:
        return f"<{self.name}>"


# A term is a Var, a Placeholder, an opaque constant (str), or a rational.
Term = "Var | Placeholder | str | Fraction"


def term_text(term) -> str:
    if isinstance(term, Var):
        return term.name
    if isinstance(term, Placeholder):
        return f"<{term.name}>"
    if isinstance(term, Fraction):
        return str(term)
    return f'"{term}"'


@dataclass(frozen=True)
class Atom:
    relation: Signature
    terms: tuple

    def __post_init__(self) -> None:
        if len(self.terms) != self.relation.arity:
            raise QueryError(
                f"{self.relation.name}: {len(self.terms)} terms for arity {self.relation.arity}"
            )

    @property
    def key_terms(self) -> tuple:
        return self.terms[: self.relation.key_len]

    @property
    def nonkey_terms(self) -> tuple:
        return self.terms[self.relation.key_len :]

    def vars(self) -> set[str]:
        return {t.name for t in self.terms if isinstance(t, Var)}

    def key_vars(self) -> set[str]:
        return {t.name for t in self.key_terms if isinstance(t, Var)}

    def notkey_vars(self) -> set[str]:
        return self.vars() - self.key_vars()

    def text(self) -> str:
        key = ", ".join(term_text(t) for t in self.key_terms)
        rest = ", ".join(term_text(t) for t in self.nonkey_terms)
        return f"{self.relation.name}({key} | {rest})"


def body_vars(body) -> set[str]:
    out: set[str] = set()
    for atom in body:
        out |= atom.vars()
    return out


def numeric_vars(body) -> set[str]:
    out = set()
    for atom in body:
        for pos, t in enumerate(atom.terms, start=1):
            if isinstance(t, Var) and atom.relation.is_numeric(pos):
                out.add(t.name)
    return out


# ---------------------------------------------------------------------------
# Functional dependencies


@dataclass(frozen=True)
class FD:
    lhs: frozenset[str]
    rhs: frozenset[str]

    def __repr__(self) -> str:
        return f"{{{','.join(sorted(self.lhs))}}}->{{{','.join(sorted(self.rhs))}}}"


def fdset(body) -> tuple[FD, ...]:
    """One dependency key(F) -> vars(F) per atom."""
    return tuple(FD(frozenset(a.key_vars()), frozenset(a.vars())) for a in body)


def fd_closure(fds, attrs) -> frozenset[str]:
    closure = set(attrs)
    changed = True
    while changed:
        changed = False
        for fd in fds:
            if fd.lhs <= closure and not fd.rhs <= closure:
                closure |= fd.rhs
                changed = True
    return frozenset(closure)


# ---------------------------------------------------------------------------
# Queries


@dataclass(frozen=True)
class AggQuery:
    agg: str
    r: object  # Var or Fraction
    free_vars: tuple[str, ...]
    body: tuple[Atom, ...]
    frozen_params: tuple[tuple[str, Placeholder], ...] = ()

    def __post_init__(self) -> None:
        names = [a.relation.name for a in self.body]
        if len(set(names)) != len(names):
            raise QueryError("queries with self-joins unsupported")
        if self.agg not in aggregates.OPERATORS:
            raise QueryError(f"unknown aggregate: {self.agg}")
        if isinstance(self.r, Var):
            if self.r.name not in numeric_vars(self.body):
                raise QueryError(
                    f"aggregated variable {self.r.name} does not occur at a numeric position"
                )
        elif not isinstance(self.r, Fraction):
            raise QueryError("aggregated term must be a numeric variable or a rational")
        frozen = {name for name, _ in self.frozen_params}
        missing = set(self.free_vars) - body_vars(self.body) - frozen
        if missing:
            raise QueryError(f"free variables not in body: {', '.join(sorted(missing))}")

    def text(self) -> str:
        agg = "COUNT(*)" if self.agg == aggregates.COUNT else f"{self.agg}({term_text(self.r)})"
        head = agg if not self.free_vars else f"({', '.join(self.free_vars)}, {agg})"
        return f"{head} <- {', '.join(a.text() for a in self.body)}"


def freeze_free_vars(q: AggQuery) -> AggQuery:
    """Replace each free variable with a fresh distinguished constant.

    The mapping is kept on the query so group answers can be reported in
    terms of the original variables.
    """
    if not q.free_vars:
        return q
    params = tuple((v, Placeholder(v)) for v in q.free_vars)
    mapping = dict(params)
    new_body = tuple(
        replace(
            atom,
            terms=tuple(
                mapping[t.name] if isinstance(t, Var) and t.name in mapping else t
                for t in atom.terms
            ),
        )
        for atom in q.body
    )
    return replace(q, body=new_body, frozen_params=params)


# ---------------------------------------------------------------------------
# Parser

_TOKEN = re.compile(
    r"""\s*(?:
        (?P<arrow><-)
      | (?P<punct>[(),|*])
      | (?P<string>"[^"]*")
      | (?P<number>-?\d+(?:\.\d+)?(?:/\d+)?)
      | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
    )""",
    re.VERBOSE,
)


def _tokenize(text: str) -> list[tuple[str, str]]:
    tokens = []
    pos = 0
    while pos < len(text):
        match = _TOKEN.match(text, pos)
        if match is None:
            if text[pos:].strip():
                raise QueryError(f"cannot tokenize near: {text[pos:pos + 20]!r}")
            break
        pos = match.end()
        for kind in ("arrow", "punct", "string", "number", "name"):
            value = match.group(kind)
            if value is not None:
                tokens.append((kind, value))
                break
    return tokens


class _Parser:
    def __init__(self, text: str, schema: Schema):
        self.tokens = _tokenize(text)
        self.schema = schema
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else (None, None)

    def take(self, kind: str, value: str | None = None):
        k, v = self.peek()
        if k != kind or (value is not None and v != value):
            want = value or kind
            raise QueryError(f"expected {want!r}, found {v!r}")
        self.pos += 1
        return v

    def at(self, kind: str, value: str | None = None) -> bool:
        k, v = self.peek()
        return k == kind and (value is None or v == value)

    def parse(self) -> AggQuery:
        free_vars: list[str] = []
        if self.at("punct", "("):
            self.take("punct", "(")
            while True:
                name = self.take("name")
                if self.at("punct", "("):
                    agg, r = self.finish_agg(name)
                    break
                free_vars.append(name)
                self.take("punct", ",")
            self.take("punct", ")")
        else:
            agg, r = self.finish_agg(self.take("name"))
        self.take("arrow")
        body = [self.parse_atom()]
        while self.at("punct", ","):
            self.take("punct", ",")
            body.append(self.parse_atom())
        if self.pos != len(self.tokens):
            raise QueryError(f"trailing input after query: {self.peek()[1]!r}")
        return self.typecheck(agg, r, tuple(free_vars), tuple(body))

    def finish_agg(self, name: str):
        agg = name.upper()
        if agg not in aggregates.OPERATORS:
            raise QueryError(f"unknown aggregate: {name}")
        self.take("punct", "(")
        kind, value = self.peek()
        if kind == "punct" and value == "*":
            if agg != aggregates.COUNT:
                raise QueryError(f"{agg}(*) is not valid; only COUNT(*)")
            self.take("punct", "*")
            r = Fraction(1)
        elif kind == "number":
            self.take("number")
            r = Fraction(value)
        elif kind == "name":
            self.take("name")
            r = Var(value)
        else:
            raise QueryError("aggregate argument must be a variable or a rational")
        self.take("punct", ")")
        if agg == aggregates.COUNT:
            r = Fraction(1)  # counting is summing the constant 1
        return agg, r

    def parse_atom(self) -> Atom:
        name = self.take("name")
        if name not in self.schema:
            raise QueryError(f"unknown relation: {name}")
        sig = self.schema[name]
        self.take("punct", "(")
        key_terms = self.parse_terms(stop={"|"})
        self.take("punct", "|")
        nonkey_terms = self.parse_terms(stop={")"})
        self.take("punct", ")")
        terms = tuple(key_terms + nonkey_terms)
        if len(key_terms) != sig.key_len:
            raise QueryError(
                f"{name}: {len(key_terms)} key terms, signature has key_len {sig.key_len}"
            )
        return Atom(sig, terms)

    def parse_terms(self, stop: set[str]) -> list:
        terms: list = []
        if self.at("punct") and self.peek()[1] in stop:
            return terms
        while True:
            kind, value = self.peek()
            if kind == "name":
                self.take("name")
                terms.append(Var(value))
            elif kind == "string":
                self.take("string")
                terms.append(value[1:-1])
            elif kind == "number":
                self.take("number")
                terms.append(Fraction(value))
            else:
                raise QueryError(f"expected a term, found {value!r}")
            if self.at("punct", ","):
                self.take("punct", ",")
                continue
            return terms

    def typecheck(self, agg, r, free_vars, body) -> AggQuery:
        seen_numeric: dict[str, bool] = {}
        for atom in body:
            for pos, term in enumerate(atom.terms, start=1):
                numeric = atom.relation.is_numeric(pos)
                if isinstance(term, Fraction) and not numeric:
                    raise QueryError(
                        f"{atom.relation.name}: rational literal at non-numeric position {pos}"
                    )
                if isinstance(term, Var):
                    if term.name in seen_numeric and seen_numeric[term.name] != numeric:
                        raise QueryError(
                            f"variable {term.name} used at both numeric and non-numeric positions"
                        )
                    seen_numeric[term.name] = numeric
        return AggQuery(agg, r, free_vars, body)


def parse_query(text: str, schema: Schema) -> AggQuery:
    return _Parser(text, schema).parse()
