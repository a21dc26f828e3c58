"""Aggregate operators over multisets of exact rationals.

Each operator records the algebraic facts the classifier and rewriter rely
on: associativity, monotonicity per numeric domain, and (bounded)
descending-chain witnesses.  A descending chain is a pair (s, t) with
agg({s, t, ..., t}) strictly decreasing as copies of t are added; a bounded
chain additionally has a penalty value m(i) whose presence forces the
aggregate above every chain value.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

from .model import NumericDomain


class _EmptyAggregate:
    """Tagged value of an operator on the empty multiset, when no rational default exists."""

    def __repr__(self) -> str:
        return "EMPTY_AGGREGATE"


EMPTY_AGGREGATE = _EmptyAggregate()

SUM = "SUM"
COUNT = "COUNT"
MAX = "MAX"
MIN = "MIN"
AVG = "AVG"
PRODUCT = "PRODUCT"
COUNT_DISTINCT = "COUNT_DISTINCT"


def _sum(xs: Sequence[Fraction]) -> Fraction:
    return sum(xs, Fraction(0))


def _product(xs: Sequence[Fraction]) -> Fraction:
    out = Fraction(1)
    for x in xs:
        out *= x
    return out


def _avg(xs: Sequence[Fraction]) -> Fraction:
    return _sum(xs) / len(xs)


@dataclass(frozen=True)
class Chain:
    s: Fraction
    t: Fraction
    # penalty(i) present only for bounded chains
    penalty: Callable[[int], Fraction] | None = None

    @property
    def bounded(self) -> bool:
        return self.penalty is not None


@dataclass(frozen=True)
class Aggregate:
    name: str
    fn: Callable[[Sequence[Fraction]], Fraction]
    empty_value: object
    associative: bool
    monotone_domains: frozenset[NumericDomain]
    # descending chains of the operator itself, per domain
    chains: dict[NumericDomain, Chain] = field(default_factory=dict)
    # descending chains of the dual (sign-flipped) operator, per domain
    dual_chains: dict[NumericDomain, Chain] = field(default_factory=dict)

    def apply(self, values: Sequence[Fraction]):
        if not values:
            return self.empty_value
        return self.fn(list(values))

    def monotone(self, domain: NumericDomain) -> bool:
        return domain in self.monotone_domains

    def chain(self, domain: NumericDomain) -> Chain | None:
        return self.chains.get(domain)

    def dual_chain(self, domain: NumericDomain) -> Chain | None:
        return self.dual_chains.get(domain)


_BOTH = frozenset({NumericDomain.NON_NEGATIVE, NumericDomain.UNCONSTRAINED})
_NONNEG = frozenset({NumericDomain.NON_NEGATIVE})
_Q = Fraction

OPERATORS: dict[str, Aggregate] = {
    SUM: Aggregate(
        SUM,
        _sum,
        _Q(0),
        associative=True,
        monotone_domains=_NONNEG,
        chains={
            # with -1 allowed, adding copies of -1 drives the sum down
            NumericDomain.UNCONSTRAINED: Chain(_Q(1), _Q(-1), lambda i: _Q(i + 1)),
        },
        dual_chains={d: Chain(_Q(1), _Q(1)) for d in _BOTH},
    ),
    COUNT: Aggregate(
        COUNT,
        lambda xs: _Q(len(xs)),
        _Q(0),
        associative=False,  # COUNT itself; rewriting always goes through SUM(1)
        monotone_domains=_BOTH,
        dual_chains={d: Chain(_Q(0), _Q(0)) for d in _BOTH},
    ),
    MAX: Aggregate(
        MAX,
        max,
        EMPTY_AGGREGATE,
        associative=True,
        monotone_domains=_BOTH,
    ),
    MIN: Aggregate(
        MIN,
        min,
        EMPTY_AGGREGATE,
        associative=True,
        monotone_domains=frozenset(),
    ),
    AVG: Aggregate(
        AVG,
        _avg,
        EMPTY_AGGREGATE,
        associative=False,
        monotone_domains=frozenset(),
        chains={d: Chain(_Q(1), _Q(0), lambda i: _Q(i + 2)) for d in _BOTH},
        dual_chains={d: Chain(_Q(0), _Q(1)) for d in _BOTH},
    ),
    PRODUCT: Aggregate(
        PRODUCT,
        _product,
        _Q(1),
        associative=True,
        monotone_domains=frozenset(),
        chains={
            d: Chain(_Q(1, 2), _Q(1, 2), lambda i: _Q(2 ** (i + 1))) for d in _BOTH
        },
        dual_chains={
            d: Chain(_Q(2), _Q(2), lambda i: _Q(1, 2 ** (i + 1))) for d in _BOTH
        },
    ),
    COUNT_DISTINCT: Aggregate(
        COUNT_DISTINCT,
        lambda xs: _Q(len(set(xs))),
        _Q(0),
        associative=False,
        monotone_domains=frozenset(),
    ),
}


def get(name: str) -> Aggregate:
    return OPERATORS[name]


def apply(name: str, values: Sequence[Fraction]):
    return OPERATORS[name].apply(values)
