"""Differential verification: rewriting vs exhaustive-repair oracle.

Seeded random instances with bounded blocks are fed to both sides; any
disagreement is shrunk by greedy fact removal and kept for replay.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction

from .classify import REWRITABLE, classify
from .errors import RewritingError
from .model import DatabaseInstance, Fact, NumericDomain, Schema
from .oracle import range_by_enumeration
from .query import AggQuery
from .rewriter import rewrite

CONSTANT_POOL = ("a", "b", "c", "d", "e")
NUMERIC_POOL = tuple(Fraction(n) for n in (0, 1, 2, 3, 5))


def random_instance(
    schema: Schema,
    rng: random.Random,
    max_blocks: int = 3,
    max_block_size: int = 3,
    max_facts: int = 12,
    numeric_domain: NumericDomain = NumericDomain.NON_NEGATIVE,
) -> DatabaseInstance:
    facts: set[Fact] = set()
    for sig in schema.relations:
        n_blocks = rng.randint(1, max_blocks)
        keys = set()
        for _ in range(n_blocks):
            keys.add(
                tuple(
                    rng.choice(NUMERIC_POOL if sig.is_numeric(p) else CONSTANT_POOL)
                    for p in range(1, sig.key_len + 1)
                )
            )
        for key in keys:
            for _ in range(rng.randint(1, max_block_size)):
                rest = tuple(
                    rng.choice(NUMERIC_POOL if sig.is_numeric(p) else CONSTANT_POOL)
                    for p in range(sig.key_len + 1, sig.arity + 1)
                )
                facts.add(Fact(sig.name, key + rest))
    listed = sorted(facts, key=lambda f: (f.relation, repr(f.values)))
    while len(listed) > max_facts:
        listed.pop(rng.randrange(len(listed)))
    return DatabaseInstance(schema, frozenset(listed), numeric_domain)


@dataclass(frozen=True)
class CheckRecord:
    instance_id: int
    query: str
    oracle: str
    rewritten: str
    match: bool


@dataclass
class CheckReport:
    query: str
    target: str
    records: list[CheckRecord] = field(default_factory=list)
    failures: list[tuple[int, DatabaseInstance]] = field(default_factory=list)

    @property
    def checked(self) -> int:
        return len(self.records)

    @property
    def mismatches(self) -> int:
        return sum(1 for r in self.records if not r.match)

    @property
    def ok(self) -> bool:
        return self.mismatches == 0

    def to_dict(self) -> dict:
        return {
            "query": self.query,
            "target": self.target,
            "checked": self.checked,
            "mismatches": self.mismatches,
            "records": [r.__dict__ for r in self.records if not r.match],
        }


def _compare_once(
    db: DatabaseInstance, q: AggQuery, target: str, cap: int
) -> tuple[str, str, bool]:
    glb, lub = range_by_enumeration(db, q, cap=cap)
    expected = glb if target == "glb" else lub
    rw = rewrite(q, target, db.numeric_domain)
    got = rw.evaluate(db)
    match = (expected.is_bottom and got.is_bottom) or expected.value == got.value
    return repr(expected), repr(got), match


def shrink_instance(
    db: DatabaseInstance, q: AggQuery, target: str, cap: int
) -> DatabaseInstance:
    """Greedily drop facts while the oracle/rewriting disagreement persists."""

    def mismatches(candidate: DatabaseInstance) -> bool:
        try:
            return not _compare_once(candidate, q, target, cap)[2]
        except RewritingError:
            return False

    current = db
    improved = True
    while improved:
        improved = False
        for fact in sorted(current.facts, key=lambda f: (f.relation, repr(f.values))):
            smaller = DatabaseInstance(
                current.schema, current.facts - {fact}, current.numeric_domain
            )
            if mismatches(smaller):
                current = smaller
                improved = True
                break
    return current


def run_check(
    q: AggQuery,
    target: str = "glb",
    instance_count: int = 200,
    seed: int = 0,
    max_facts: int = 12,
    max_blocks: int = 3,
    max_block_size: int = 3,
    cap: int = 200_000,
    numeric_domain: NumericDomain = NumericDomain.NON_NEGATIVE,
    schema: Schema | None = None,
) -> CheckReport:
    verdict = classify(q, target, numeric_domain)
    if verdict.status != REWRITABLE:
        raise RewritingError(
            f"classifier refuses {target} for this query: {verdict.status} ({verdict.citation})"
        )
    schema = schema or Schema(tuple({a.relation.name: a.relation for a in q.body}.values()))
    report = CheckReport(q.text(), target)
    for i in range(instance_count):
        rng = random.Random(seed * 1_000_003 + i)
        db = random_instance(
            schema,
            rng,
            max_blocks=max_blocks,
            max_block_size=max_block_size,
            max_facts=max_facts,
            numeric_domain=numeric_domain,
        )
        oracle_text, got_text, match = _compare_once(db, q, target, cap)
        report.records.append(CheckRecord(i, q.text(), oracle_text, got_text, match))
        if not match:
            report.failures.append((i, shrink_instance(db, q, target, cap)))
    return report
