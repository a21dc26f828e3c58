import random
import sqlite3
from fractions import Fraction as F

import pytest

from keyra.checking import random_instance
from keyra.errors import EmitError, KeyraError
from keyra.model import DatabaseInstance, Fact, Schema, Signature
from keyra.oracle import range_by_enumeration
from keyra.query import parse_query
from keyra.rewriter import rewrite
from keyra.sqlgen import emit_ddl, emit_inserts, emit_sql, run_script

from sql_grammar import SqlSyntaxError, check_statement


def test_ddl_shapes(stock_schema):
    ddl = emit_ddl(stock_schema)
    assert len(ddl) == 2
    assert 'CREATE TABLE "Stock" ("c1" TEXT, "c2" TEXT, "c3" DECIMAL);' in ddl


def test_ddl_empty_schema():
    assert emit_ddl(Schema(())) == ()


def test_reserved_word_relation_quoted():
    schema = Schema((Signature("select", 1, 1),))
    assert emit_ddl(schema)[0].startswith('CREATE TABLE "select"')


def test_inserts_are_literal_statements(stock_db):
    statements = emit_inserts(stock_db)
    assert len(statements) == 8
    assert any("'Tesla X'" in s and "35" in s for s in statements)
    for s in statements:
        check_statement(s)


def test_smith_answer_on_live_connection(stock_db, stock_schema, smith_total):
    script = emit_sql(rewrite(smith_total, "glb"), stock_schema)
    assert run_script(script, stock_db).value == 70


def test_partial_join_answer_on_live_connection(db0, db0_schema, partial_join_sum):
    script = emit_sql(rewrite(partial_join_sum, "glb"), db0_schema)
    assert run_script(script, db0).value == 9


def test_guard_failure_returns_bottom(stock_db, stock_schema):
    q = parse_query('SUM(y) <- Dealers("Nobody" | t), Stock(p, t | y)', stock_schema)
    script = emit_sql(rewrite(q, "glb"), stock_schema)
    conn = sqlite3.connect(":memory:")
    from keyra.sqlgen import load_into

    load_into(conn, stock_db)
    assert conn.execute(script.guard_sql).fetchone()[0] == 0
    assert conn.execute(script.answer_sql).fetchone()[0] is None
    assert run_script(script, stock_db).is_bottom


def test_group_script(stock_db, stock_schema):
    q = parse_query("(x, SUM(y)) <- Dealers(x | t), Stock(p, t | y)", stock_schema)
    script = emit_sql(rewrite(q, "glb"), stock_schema)
    assert script.params == (("x", ":g_x"),)
    rows = run_script(script, stock_db)
    assert [(values[0], answer.value) for values, answer in rows] == [
        ("James", 70),
        ("Smith", 70),
    ]


def test_plain_routes_on_live_connection(stock_db, stock_schema):
    qmin = parse_query("MIN(y) <- Stock(p, t | y)", stock_schema)
    qmax = parse_query("MAX(y) <- Stock(p, t | y)", stock_schema)
    assert run_script(emit_sql(rewrite(qmin, "glb"), stock_schema), stock_db).value == 35
    assert run_script(emit_sql(rewrite(qmin, "lub"), stock_schema), stock_db).value == 35
    assert run_script(emit_sql(rewrite(qmax, "lub"), stock_schema), stock_db).value == 96


def test_emitted_sql_is_in_the_portable_subset(stock_schema, db0_schema, stock_db):
    queries = [
        (stock_schema, 'SUM(y) <- Dealers("Smith" | t), Stock(p, t | y)', "glb"),
        (stock_schema, "MIN(y) <- Stock(p, t | y)", "lub"),
        (stock_schema, "(x, SUM(y)) <- Dealers(x | t), Stock(p, t | y)", "glb"),
        (db0_schema, 'SUM(r) <- R(x | y), S(y, z | "d", r)', "glb"),
        (stock_schema, "COUNT(*) <- Dealers(x | t), Stock(p, t | y)", "glb"),
    ]
    for schema, text, target in queries:
        script = emit_sql(rewrite(parse_query(text, schema), target), schema)
        for stmt in script.ddl:
            check_statement(stmt)
        check_statement(script.guard_sql)
        check_statement(script.answer_sql)
        if script.groups_sql:
            check_statement(script.groups_sql)


def test_grammar_rejects_foreign_constructs():
    for bad in [
        "SELECT a FROM t JOIN u ON a = b",
        "SELECT * FROM t LIMIT 1",
        "DROP TABLE x",
        "SELECT a FROM t HAVING a = 1",
        "SELECT a FROM t UNION SELECT b FROM u",
    ]:
        with pytest.raises(SqlSyntaxError):
            check_statement(bad)


def test_sql_agrees_with_evaluator_on_random_instances():
    schema = Schema(
        (Signature("R", 2, 1, frozenset()), Signature("S", 3, 2, frozenset({3})))
    )
    q = parse_query("SUM(y) <- R(x | z), S(z, w | y)", schema)
    rw = rewrite(q, "glb")
    script = emit_sql(rw, schema)
    rng = random.Random(13)
    agreements = 0
    for _ in range(30):
        db = random_instance(schema, rng, max_facts=10)
        via_sql = run_script(script, db)
        in_memory = rw.evaluate(db)
        oracle, _ = range_by_enumeration(db, q)
        assert via_sql.is_bottom == in_memory.is_bottom == oracle.is_bottom
        if not via_sql.is_bottom:
            assert via_sql.value == in_memory.value == oracle.value
            agreements += 1
    assert agreements > 5


def test_non_integer_literal_refused(db0_schema):
    q = parse_query("SUM(r) <- S(y, z | d, r), R(x | y)", db0_schema)
    # constant aggregated terms must be integers to stay exact in SQL text
    from keyra.sqlgen import literal

    with pytest.raises(EmitError):
        literal(F(1, 3))


def test_driver_rejects_other_engines(stock_db, stock_schema, smith_total):
    script = emit_sql(rewrite(smith_total, "glb"), stock_schema)
    with pytest.raises(KeyraError, match="sqlite"):
        run_script(script, stock_db, dsn="postgresql://localhost/db")


def test_driver_accepts_file_dsn(tmp_path, stock_db, stock_schema, smith_total):
    script = emit_sql(rewrite(smith_total, "glb"), stock_schema)
    dsn = f"sqlite:///{tmp_path}/check.db"
    assert run_script(script, stock_db, dsn=dsn).value == 70
