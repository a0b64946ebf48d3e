import json

import pytest

from analyzer.rendering import (
    JSON_SCHEMA_VERSION, check_dot, render_shape, report_to_dict, shape_to_dot, shape_to_text,
)
from analyzer.strand_search import Bounds, search
from tests.conftest import pov_from_file


@pytest.fixture
def cr_shape(challenge_response):
    _, pov = challenge_response
    return search(pov).shapes[0]


@pytest.fixture
def echo_shape(clear_echo):
    _, pov = clear_echo
    return search(pov).shapes[0]


def test_dot_has_one_cluster_per_strand(cr_shape):
    dot = shape_to_dot(cr_shape, "cr")
    assert check_dot(dot) == []
    assert dot.count("subgraph cluster_") == 2
    assert "style=solid" in dot
    assert "fillcolor=black" in dot and "fillcolor=blue" in dot


def test_single_strand_shape_has_no_inter_strand_edges(echo_shape):
    dot = shape_to_dot(echo_shape)
    assert check_dot(dot) == []
    assert dot.count("subgraph cluster_") == 1
    assert "style=solid" not in dot and "style=dashed" not in dot


def test_json_schema(cr_shape):
    data = json.loads(render_shape(cr_shape, "json", 1))
    assert data["schema"] == JSON_SCHEMA_VERSION
    assert [s["role"] for s in data["strands"]] == cr_shape.roles()
    assert {e["style"] for e in data["edges"]} == {"solid"}
    assert data["nodes"][0]["id"] == "0:1"


def test_report_dict(challenge_response):
    _, pov = challenge_response
    result = search(pov)
    report = report_to_dict("cr", "init-pov", result, Bounds().as_dict())
    assert report["schema"] == 1
    assert report["status"] == "complete"
    assert report["shape_count"] == 1
    assert report["bounds"]["max_strands"] == Bounds().max_strands


def test_text_lists_events(cr_shape):
    text = shape_to_text(cr_shape, 1)
    assert text.startswith("Shape 1: 2 strand(s)")
    assert "send" in text and "recv" in text


def test_rendering_is_byte_stable(cr_shape):
    for fmt in ("dot", "json", "text"):
        assert render_shape(cr_shape, fmt) == render_shape(cr_shape, fmt)


def test_unknown_format(cr_shape):
    with pytest.raises(ValueError):
        render_shape(cr_shape, "svg")


@pytest.mark.parametrize("text", [
    "digraph g { a -> b; }",
    'digraph "x y" { subgraph cluster_0 { label="s"; a [color=blue]; } a -> b [style=dashed]; }',
    "graph { a -- b -- c }",
])
def test_check_dot_accepts_well_formed(text):
    assert check_dot(text) == []


@pytest.mark.parametrize("text", [
    "digraph g { a -> b;",
    "digraph g { a -- b }",
    "tree g { }",
    "digraph g { a [color=] }",
    'digraph g { a -> "b }',
])
def test_check_dot_rejects_malformed(text):
    assert check_dot(text) != []


@pytest.mark.slow
def test_malserver_shape_has_no_client_column():
    result = search(pov_from_file("srp3-malserver.lisp"))
    shape = next(s for s in result.shapes if "malserver" in s.roles() and "client" not in s.roles())
    dot = shape_to_dot(shape)
    assert check_dot(dot) == []
    assert '"client 7' not in dot and '"malserver 7' in dot


@pytest.mark.slow
def test_client_shape_has_four_columns():
    shape = search(pov_from_file("srp3.lisp", "client-pov")).shapes[0]
    assert shape_to_dot(shape).count("subgraph cluster_") == 4
