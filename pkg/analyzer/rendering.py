"""
Shape output: Graphviz DOT, a versioned JSON document and plain text.

In DOT output every strand is a column (a cluster), transmissions are black,
receptions blue and state events grey. Inter-strand arrows are solid when
the message is relayed unchanged and dashed when the adversary altered it.
"""
import json
import logging
import re
from typing import Dict, List, Optional

from analyzer.skeleton import Node, Skeleton
from analyzer.strand_search import SearchResult, Shape
from analyzer.term_algebra import render

logger = logging.getLogger(__name__)

JSON_SCHEMA_VERSION = 1
FORMATS = ("dot", "json", "text")

NODE_COLORS = {"send": "black", "recv": "blue", "init": "grey", "obsv": "grey"}


def _node_id(node: Node) -> str:
    return f"n{node[0]}_{node[1]}"


def _quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _strand_title(sk: Skeleton, index: int) -> str:
    s = sk.strands[index]
    title = f"{s.role.name} {s.height}"
    return title + " (pov)" if s.pov else title


def shape_to_dot(shape: Shape, name: str = "shape") -> str:
    sk = shape.skeleton
    lines = [f"digraph {_quote(name)} {{", "  rankdir=TB;", "  node [shape=circle, style=filled, label=\"\", width=0.25];"]
    for i, s in enumerate(sk.strands):
        lines.append(f"  subgraph cluster_{i} {{")
        lines.append(f"    label={_quote(_strand_title(sk, i))};")
        lines.append("    color=white;")
        for p in range(s.height):
            kind = s.kind(p)
            tooltip = f"{kind} {render(s.message(p))}"
            lines.append(f"    {_node_id((i, p))} [fillcolor={NODE_COLORS[kind]}, color={NODE_COLORS[kind]}, "
                         f"tooltip={_quote(tooltip)}];")
        for p in range(1, s.height):
            lines.append(f"    {_node_id((i, p - 1))} -> {_node_id((i, p))} [arrowhead=none, weight=10];")
        lines.append("  }")
    for (src, dst), style in sorted(shape.edge_styles.items()):
        lines.append(f"  {_node_id(src)} -> {_node_id(dst)} [style={style}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def shape_to_dict(shape: Shape, index: int) -> Dict:
    sk = shape.skeleton
    strands = []
    nodes = []
    for i, s in enumerate(sk.strands):
        strands.append({
            "index": i,
            "role": s.role.name,
            "height": s.height,
            "pov": s.pov,
            "bindings": {v.name: render(t) for v, t in s.env},
        })
        for p in range(s.height):
            nodes.append({"id": f"{i}:{p + 1}", "strand": i, "position": p + 1,
                          "kind": s.kind(p), "message": render(s.message(p))})
    edges = [{"from": f"{a[0]}:{a[1] + 1}", "to": f"{b[0]}:{b[1] + 1}", "style": style}
             for (a, b), style in sorted(shape.edge_styles.items())]
    return {"index": index, "strands": strands, "nodes": nodes, "edges": edges,
            "provenance": list(shape.provenance)}


def report_to_dict(input_id: str, pov: str, result: SearchResult, bounds: Dict[str, int]) -> Dict:
    return {
        "schema": JSON_SCHEMA_VERSION,
        "input": input_id,
        "pov": pov,
        "status": result.status,
        "bounds": bounds,
        "shape_count": len(result.shapes),
        "shapes": [shape_to_dict(shape, k + 1) for k, shape in enumerate(result.shapes)],
    }


def shape_to_json(shape: Shape, index: int = 1) -> str:
    return json.dumps({"schema": JSON_SCHEMA_VERSION, **shape_to_dict(shape, index)}, indent=2) + "\n"


def shape_to_text(shape: Shape, index: int = 1) -> str:
    sk = shape.skeleton
    out = [f"Shape {index}: {len(sk.strands)} strand(s)"]
    for i, s in enumerate(sk.strands):
        out.append(f"  [{i}] {_strand_title(sk, i)}")
        for p in range(s.height):
            out.append(f"      {p + 1}. {s.kind(p):4} {render(s.message(p))}")
    for (src, dst), style in sorted(shape.edge_styles.items()):
        out.append(f"  {src[0]}:{src[1] + 1} -> {dst[0]}:{dst[1] + 1} ({style})")
    return "\n".join(out) + "\n"


def render_shape(shape: Shape, fmt: str, index: int = 1, name: Optional[str] = None) -> bytes:
    """Bytes of one shape in the requested format."""
    if fmt == "dot":
        return shape_to_dot(shape, name or f"shape_{index}").encode("utf-8")
    if fmt == "json":
        return shape_to_json(shape, index).encode("utf-8")
    if fmt == "text":
        return shape_to_text(shape, index).encode("utf-8")
    raise ValueError(f"unknown format {fmt!r}; expected one of {', '.join(FORMATS)}")


# ---------------------------------------------------------------------------
# DOT well-formedness
# ---------------------------------------------------------------------------

_TOKEN = re.compile(r'\s*(?:(->|--)|([{}\[\];,=])|("(?:[^"\\]|\\.)*")|([A-Za-z_][A-Za-z0-9_.]*|-?\d+(?:\.\d+)?))')


def _dot_tokens(text: str) -> List[str]:
    tokens, pos = [], 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ValueError(f"unexpected character at offset {pos}: {text[pos:pos + 10]!r}")
        tokens.append(next(g for g in m.groups() if g is not None))
        pos = m.end()
    return tokens


def _is_id(tok: Optional[str]) -> bool:
    return tok is not None and tok not in ("{", "}", "[", "]", ";", ",", "=", "->", "--")


class _DotParser:
    """Recursive descent over the statement grammar of the DOT language."""

    def __init__(self, tokens: List[str]):
        self.toks = tokens
        self.i = 0

    def peek(self, k: int = 0) -> Optional[str]:
        j = self.i + k
        return self.toks[j] if j < len(self.toks) else None

    def take(self, expected: Optional[str] = None) -> str:
        tok = self.peek()
        if tok is None or (expected is not None and tok != expected):
            raise ValueError(f"expected {expected or 'token'} at token {self.i}, got {tok!r}")
        self.i += 1
        return tok

    def take_id(self) -> str:
        if not _is_id(self.peek()):
            raise ValueError(f"expected identifier at token {self.i}, got {self.peek()!r}")
        return self.take()

    def graph(self, edge_op: str):
        self.take("{")
        self.statements(edge_op)
        self.take("}")

    def statements(self, edge_op: str):
        while self.peek() not in ("}", None):
            self.statement(edge_op)
            if self.peek() == ";":
                self.take(";")

    def attr_list(self):
        while self.peek() == "[":
            self.take("[")
            while self.peek() != "]":
                self.take_id()
                if self.peek() == "=":
                    self.take("=")
                    self.take_id()
                if self.peek() in (",", ";"):
                    self.take()
            self.take("]")

    def statement(self, edge_op: str):
        tok = self.peek()
        if tok == "subgraph":
            self.take()
            if _is_id(self.peek()):
                self.take_id()
            self.graph(edge_op)
            return
        if tok in ("graph", "node", "edge") and self.peek(1) == "[":
            self.take()
            self.attr_list()
            return
        if tok == "{":
            self.graph(edge_op)
            return
        self.take_id()
        if self.peek() == "=":
            self.take("=")
            self.take_id()
            return
        while self.peek() in ("->", "--"):
            if self.take() != edge_op:
                raise ValueError(f"wrong edge operator at token {self.i}")
            if self.peek() == "{":
                self.graph(edge_op)
            else:
                self.take_id()
        self.attr_list()


def check_dot(text: str) -> List[str]:
    """Problems found in DOT text; an empty list means it is well formed."""
    try:
        toks = _dot_tokens(text)
        parser = _DotParser(toks)
        if parser.peek() == "strict":
            parser.take()
        kind = parser.take()
        if kind not in ("digraph", "graph"):
            return [f"expected graph or digraph, got {kind!r}"]
        if _is_id(parser.peek()):
            parser.take_id()
        parser.graph("->" if kind == "digraph" else "--")
        if parser.peek() is not None:
            return [f"trailing tokens after graph body: {parser.peek()!r}"]
    except ValueError as exc:
        return [str(exc)]
    return []
