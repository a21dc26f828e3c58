from pathlib import Path

import pytest

from keyra.model import Schema, Signature, load_instance, load_schema
from keyra.query import parse_query

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def stock_schema():
    return load_schema(DATA / "fig_stock" / "schema.json")


@pytest.fixture(scope="session")
def stock_db(stock_schema):
    return load_instance(stock_schema, DATA / "fig_stock")


@pytest.fixture(scope="session")
def db0_schema():
    return load_schema(DATA / "db0" / "schema.json")


@pytest.fixture(scope="session")
def db0(db0_schema):
    return load_instance(db0_schema, DATA / "db0")


@pytest.fixture(scope="session")
def smith_total(stock_schema):
    return parse_query('SUM(y) <- Dealers("Smith" | t), Stock(p, t | y)', stock_schema)


@pytest.fixture(scope="session")
def partial_join_sum(db0_schema):
    return parse_query('SUM(r) <- R(x | y), S(y, z | "d", r)', db0_schema)


@pytest.fixture(scope="session")
def james_body(stock_schema):
    q = parse_query('COUNT(*) <- Dealers("James" | t), Stock(p, t | 35)', stock_schema)
    return q.body


def shape_schemas():
    """The four differential-suite shapes: schema, body text, numeric variable."""
    return {
        "one-atom": (
            Schema((Signature("R", 2, 1, frozenset({2})),)),
            "R(x | y)",
            "y",
        ),
        "two-atom-full-join": (
            Schema(
                (
                    Signature("R", 2, 1, frozenset()),
                    Signature("S", 2, 1, frozenset({2})),
                )
            ),
            "R(x | z), S(z | y)",
            "y",
        ),
        "two-atom-partial-join": (
            Schema(
                (
                    Signature("R", 2, 1, frozenset()),
                    Signature("S", 3, 2, frozenset({3})),
                )
            ),
            "R(x | z), S(z, w | y)",
            "y",
        ),
        "three-atom-chain": (
            Schema(
                (
                    Signature("R", 2, 1, frozenset()),
                    Signature("S", 2, 1, frozenset()),
                    Signature("T", 2, 1, frozenset({2})),
                )
            ),
            "R(x | z), S(z | w), T(w | y)",
            "y",
        ),
    }
