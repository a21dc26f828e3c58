"""Relational schemas, key-violating instances, blocks, and repairs.

An instance is a finite set of facts.  Facts of one relation that agree on
the primary key form a block; a repair picks exactly one fact from every
block.  Numeric cells are exact rationals throughout.
"""
from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from functools import reduce
from pathlib import Path
from typing import Iterator

from .errors import CapExceededError, InstanceError, SchemaError


class NumericDomain(Enum):
    NON_NEGATIVE = "non-negative"
    UNCONSTRAINED = "unconstrained"


@dataclass(frozen=True)
class Signature:
    """Relation signature: arity, key prefix length, numeric positions (1-based)."""

    name: str
    arity: int
    key_len: int
    numeric_positions: frozenset[int] = frozenset()

    def __post_init__(self) -> None:
        if self.arity < 1:
            raise SchemaError(f"{self.name}: arity must be positive")
        if not 1 <= self.key_len <= self.arity:
            raise SchemaError(
                f"{self.name}: key_len must satisfy 1 <= key_len <= arity, "
                f"got key_len={self.key_len}, arity={self.arity}"
            )
        if not all(1 <= p <= self.arity for p in self.numeric_positions):
            raise SchemaError(f"{self.name}: numeric positions out of range")

    @property
    def is_full_key(self) -> bool:
        return self.key_len == self.arity

    def is_numeric(self, position: int) -> bool:
        return position in self.numeric_positions


@dataclass(frozen=True)
class Schema:
    relations: tuple[Signature, ...]

    def __post_init__(self) -> None:
        names = [r.name for r in self.relations]
        if len(set(names)) != len(names):
            dup = sorted({n for n in names if names.count(n) > 1})
            raise SchemaError(f"duplicate relation names: {', '.join(dup)}")

    def __getitem__(self, name: str) -> Signature:
        for sig in self.relations:
            if sig.name == name:
                return sig
        raise SchemaError(f"unknown relation: {name}")

    def __contains__(self, name: str) -> bool:
        return any(sig.name == name for sig in self.relations)


Value = "str | Fraction"


@dataclass(frozen=True)
class Fact:
    relation: str
    values: tuple


def fact_key(fact: Fact, sig: Signature) -> tuple:
    return fact.values[: sig.key_len]


def _sort_token(value) -> tuple:
    # Values mix opaque strings and rationals; never compare across kinds.
    if isinstance(value, Fraction):
        return (0, value)
    return (1, str(value))


def value_sort_key(values: tuple) -> tuple:
    return tuple(_sort_token(v) for v in values)


@dataclass(frozen=True)
class Block:
    """All facts of one relation sharing a key value, in canonical order."""

    relation: str
    key_values: tuple
    members: tuple[Fact, ...]


@dataclass(frozen=True)
class DatabaseInstance:
    schema: Schema
    facts: frozenset[Fact]
    numeric_domain: NumericDomain = NumericDomain.NON_NEGATIVE

    def __post_init__(self) -> None:
        for fact in self.facts:
            sig = self.schema[fact.relation]
            if len(fact.values) != sig.arity:
                raise InstanceError(
                    f"{fact.relation}: row of width {len(fact.values)} "
                    f"does not match arity {sig.arity}"
                )
            for pos in range(1, sig.arity + 1):
                v = fact.values[pos - 1]
                if sig.is_numeric(pos):
                    if not isinstance(v, Fraction):
                        raise InstanceError(
                            f"{fact.relation}: position {pos} must hold a rational, got {v!r}"
                        )
                    if self.numeric_domain is NumericDomain.NON_NEGATIVE and v < 0:
                        raise InstanceError(
                            f"{fact.relation}: negative value {v} in a non-negative numeric column"
                        )
                elif isinstance(v, Fraction):
                    raise InstanceError(
                        f"{fact.relation}: position {pos} is not numeric but holds {v!r}"
                    )

    def relation_facts(self, name: str) -> list[Fact]:
        self.schema[name]
        return [f for f in self.facts if f.relation == name]

    def active_domain(self) -> set:
        return {v for f in self.facts for v in f.values}

    def is_consistent(self) -> bool:
        return all(len(b.members) == 1 for b in all_blocks(self))


def blocks(db: DatabaseInstance, relation: str) -> list[Block]:
    """Partition one relation into blocks, sorted by key value."""
    sig = db.schema[relation]
    grouped: dict[tuple, list[Fact]] = {}
    for fact in db.relation_facts(relation):
        grouped.setdefault(fact_key(fact, sig), []).append(fact)
    out = []
    for key in sorted(grouped, key=value_sort_key):
        members = tuple(sorted(grouped[key], key=lambda f: value_sort_key(f.values)))
        out.append(Block(relation, key, members))
    return out


def all_blocks(db: DatabaseInstance) -> list[Block]:
    out: list[Block] = []
    for sig in db.schema.relations:
        out.extend(blocks(db, sig.name))
    return out


@dataclass(frozen=True)
class Repair:
    """One member index per block of the instance."""

    blocks: tuple[Block, ...]
    selection: tuple[int, ...]

    @property
    def facts(self) -> frozenset[Fact]:
        return frozenset(b.members[i] for b, i in zip(self.blocks, self.selection))

    def as_instance(self, db: DatabaseInstance) -> DatabaseInstance:
        return DatabaseInstance(db.schema, self.facts, db.numeric_domain)


def repair_count(db: DatabaseInstance) -> int:
    return reduce(lambda acc, b: acc * len(b.members), all_blocks(db), 1)


def enumerate_repairs(db: DatabaseInstance, cap: int = 1_000_000) -> Iterator[Repair]:
    """Yield every repair exactly once (cartesian product over blocks)."""
    total = repair_count(db)
    if total > cap:
        raise CapExceededError(f"{total} repairs exceed the cap of {cap}")
    blks = tuple(all_blocks(db))
    sizes = [len(b.members) for b in blks]
    selection = [0] * len(blks)
    while True:
        yield Repair(blks, tuple(selection))
        for i in range(len(blks) - 1, -1, -1):
            selection[i] += 1
            if selection[i] < sizes[i]:
                break
            selection[i] = 0
        else:
            return
        continue


def parse_rational(text: str) -> Fraction:
    """Accept integer, decimal, or p/q literals."""
    try:
        return Fraction(text.strip())
    except (ValueError, ZeroDivisionError) as exc:
        raise InstanceError(f"not a rational literal: {text!r}") from exc


def load_schema(path: str | Path) -> Schema:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"cannot read schema {path}: {exc}") from exc
    try:
        rels = tuple(
            Signature(
                name=entry["name"],
                arity=int(entry["arity"]),
                key_len=int(entry["key_len"]),
                numeric_positions=frozenset(
                    int(p) for p in entry.get("numeric_positions", [])
                ),
            )
            for entry in raw["relations"]
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed schema {path}: {exc}") from exc
    return Schema(rels)


def load_instance(
    schema: Schema,
    source: str | Path,
    numeric_domain: NumericDomain = NumericDomain.NON_NEGATIVE,
) -> DatabaseInstance:
    """Read one headerless CSV per relation from a directory.

    Duplicate rows collapse silently (instances are sets); a missing file is
    an empty relation.
    """
    source = Path(source)
    facts: set[Fact] = set()
    saw_duplicates = False
    for sig in schema.relations:
        path = source / f"{sig.name}.csv"
        if not path.exists():
            continue
        with path.open(newline="") as handle:
            for lineno, row in enumerate(csv.reader(handle), start=1):
                if not row:
                    continue
                if len(row) != sig.arity:
                    raise InstanceError(
                        f"{path}:{lineno}: expected {sig.arity} cells, got {len(row)}"
                    )
                values = tuple(
                    parse_rational(cell) if sig.is_numeric(pos) else cell
                    for pos, cell in enumerate(row, start=1)
                )
                fact = Fact(sig.name, values)
                if fact in facts:
                    saw_duplicates = True
                facts.add(fact)
    if saw_duplicates:
        warnings.warn("duplicate rows collapsed; instances are sets", stacklevel=2)
    return DatabaseInstance(schema, frozenset(facts), numeric_domain)


def dump_instance(db: DatabaseInstance, target: str | Path) -> None:
    """Write an instance back out in the CSV directory format."""
    target = Path(target)
    target.mkdir(parents=True, exist_ok=True)
    for sig in db.schema.relations:
        rows = sorted(
            (f.values for f in db.relation_facts(sig.name)), key=value_sort_key
        )
        with (target / f"{sig.name}.csv").open("w", newline="") as handle:
            writer = csv.writer(handle)
            for values in rows:
                writer.writerow([str(v) for v in values])


def dump_schema(schema: Schema, path: str | Path) -> None:
    payload = {
        "relations": [
            {
                "name": sig.name,
                "arity": sig.arity,
                "key_len": sig.key_len,
                "numeric_positions": sorted(sig.numeric_positions),
            }
            for sig in schema.relations
        ]
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")
