"""
Reader, validator and printer for the s-expression protocol language.

Supported forms:
    (defprotocol NAME diffie-hellman ROLE-OR-RULE...)
    (defrole NAME (vars ...) (trace EVENT...) (uniq-gen ...))
    (defrule NAME (forall ((z0 z1 strd) ...) (implies (and PRED...) (= z0 z1))))
    (defskeleton PROTOCOL (vars ...) (defstrand ROLE H (VAR TERM)...)
                 (deflistener TERM) (non-orig TERM...) (uniq-gen TERM...)
                 (neq (TERM TERM)...))

Comments run from ';' to the end of the line.
"""
import logging
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

from analyzer.term_algebra import (
    GEN, Hash, Skey, Sort, SortError, SymEnc, Tag, Term, Var, canonicalize,
    cat, make_product, Exp, render, subterms,
)

logger = logging.getLogger(__name__)

SUPPORTED_ALGEBRA = "diffie-hellman"
EVENT_KINDS = ("send", "recv", "init", "obsv")
MODEL_SUFFIX = ".lisp"


class ModelSyntaxError(ValueError):
    """Malformed model text; carries the source position."""

    def __init__(self, message: str, line: int = 0, col: int = 0):
        super().__init__(f"{line}:{col}: {message}")
        self.message = message
        self.line = line
        self.col = col


class ModelError(Exception):
    """A model file loads but cannot be used (missing protocol, unknown skeleton, ...)."""


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str
    line: int = 0
    col: int = 0

    def __str__(self):
        return f"{self.line}:{self.col}: {self.code}: {self.message}"


# ---------------------------------------------------------------------------
# S-expressions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Symbol:
    name: str
    line: int = field(default=0, compare=False)
    col: int = field(default=0, compare=False)


@dataclass(frozen=True)
class String:
    text: str
    line: int = field(default=0, compare=False)
    col: int = field(default=0, compare=False)


@dataclass(frozen=True)
class SList:
    items: Tuple["SExpr", ...]
    line: int = field(default=0, compare=False)
    col: int = field(default=0, compare=False)

    def head(self) -> Optional[str]:
        if self.items and isinstance(self.items[0], Symbol):
            return self.items[0].name
        return None


SExpr = Union[Symbol, String, SList]


def read_sexprs(text: Union[str, bytes]) -> List[SExpr]:
    """Tokenize and read every top-level s-expression."""
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    stack: List[Tuple[List[SExpr], int, int]] = []
    top: List[SExpr] = []
    i, line, col = 0, 1, 1
    n = len(text)

    def emit(item):
        (stack[-1][0] if stack else top).append(item)

    while i < n:
        ch = text[i]
        if ch == "\n":
            i, line, col = i + 1, line + 1, 1
            continue
        if ch.isspace():
            i, col = i + 1, col + 1
            continue
        if ch == ";":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if ch == "(":
            stack.append(([], line, col))
            i, col = i + 1, col + 1
            continue
        if ch == ")":
            if not stack:
                raise ModelSyntaxError("unbalanced ')'", line, col)
            items, l0, c0 = stack.pop()
            emit(SList(tuple(items), l0, c0))
            i, col = i + 1, col + 1
            continue
        if ch == '"':
            l0, c0 = line, col
            i, col = i + 1, col + 1
            buf = []
            while True:
                if i >= n or text[i] == "\n":
                    raise ModelSyntaxError("unterminated string", l0, c0)
                if text[i] == "\\" and i + 1 < n:
                    buf.append(text[i + 1])
                    i, col = i + 2, col + 2
                    continue
                if text[i] == '"':
                    i, col = i + 1, col + 1
                    break
                buf.append(text[i])
                i, col = i + 1, col + 1
            emit(String("".join(buf), l0, c0))
            continue
        l0, c0 = line, col
        start = i
        while i < n and not text[i].isspace() and text[i] not in '();"':
            i += 1
        col += i - start
        emit(Symbol(text[start:i], l0, c0))
    if stack:
        _, l0, c0 = stack[-1]
        raise ModelSyntaxError("unbalanced '(' never closed", l0, c0)
    return top


def sexpr_text(expr: SExpr) -> str:
    if isinstance(expr, Symbol):
        return expr.name
    if isinstance(expr, String):
        return '"' + expr.text.replace('"', '\\"') + '"'
    return "(" + " ".join(sexpr_text(e) for e in expr.items) + ")"


# ---------------------------------------------------------------------------
# Abstract syntax
# ---------------------------------------------------------------------------

@dataclass
class Event:
    kind: str
    term: Term
    line: int = field(default=0, compare=False)
    col: int = field(default=0, compare=False)


@dataclass
class RoleDef:
    name: str
    vars: List[Var]
    trace: List[Event]
    uniq_gen: List[Term] = field(default_factory=list)
    problems: List[Diagnostic] = field(default_factory=list, compare=False)
    line: int = field(default=0, compare=False)
    col: int = field(default=0, compare=False)

    def var(self, name: str) -> Optional[Var]:
        for v in self.vars:
            if v.name == name:
                return v
        return None

    def first_occurrence(self, atom: Term) -> Optional[int]:
        for index, event in enumerate(self.trace):
            if any(t == atom for t in subterms(event.term)):
                return index
        return None


@dataclass
class RuleDef:
    """Two strands of `role` with height >= `height` agreeing on `params` are one strand."""
    name: str
    role: str
    height: int
    params: List[str]
    strand_vars: Tuple[str, str] = ("z0", "z1")
    param_vars: List[Tuple[str, str]] = field(default_factory=list)
    quantified: List[Tuple[Tuple[str, ...], str]] = field(default_factory=list)
    line: int = field(default=0, compare=False)
    col: int = field(default=0, compare=False)


@dataclass
class ProtocolDef:
    name: str
    algebra: str
    roles: List[RoleDef]
    rules: List[RuleDef] = field(default_factory=list)
    problems: List[Diagnostic] = field(default_factory=list, compare=False)
    line: int = field(default=0, compare=False)
    col: int = field(default=0, compare=False)

    def role(self, name: str) -> Optional[RoleDef]:
        for r in self.roles:
            if r.name == name:
                return r
        return None


@dataclass
class StrandDef:
    role: str
    height: int
    bindings: List[Tuple[str, SExpr]]
    line: int = field(default=0, compare=False)
    col: int = field(default=0, compare=False)


@dataclass
class SkeletonDef:
    protocol: str
    vars: List[Var]
    strands: List[StrandDef]
    listeners: List[SExpr] = field(default_factory=list)
    non_orig: List[SExpr] = field(default_factory=list)
    uniq_gen: List[SExpr] = field(default_factory=list)
    neq: List[Tuple[SExpr, SExpr]] = field(default_factory=list)
    problems: List[Diagnostic] = field(default_factory=list, compare=False)
    line: int = field(default=0, compare=False)
    col: int = field(default=0, compare=False)

    def pov_name(self) -> str:
        base = f"{self.strands[0].role}-pov" if self.strands else "empty-pov"
        for listener in self.listeners:
            base += "-listener-" + sexpr_text(listener).replace(" ", "-").strip("()")
        if self.neq:
            base += "-neq"
        return base


Definition = Union[ProtocolDef, SkeletonDef]


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

def _error(message: str, expr: SExpr) -> ModelSyntaxError:
    return ModelSyntaxError(message, expr.line, expr.col)


def _expect_list(expr: SExpr, what: str) -> SList:
    if not isinstance(expr, SList):
        raise _error(f"expected {what}", expr)
    if not expr.items:
        raise _error("empty form", expr)
    return expr


def _symbol(expr: SExpr, what: str) -> str:
    if not isinstance(expr, Symbol):
        raise _error(f"expected {what}", expr)
    return expr.name


def _int(expr: SExpr, what: str) -> int:
    name = _symbol(expr, what)
    try:
        return int(name)
    except ValueError:
        raise _error(f"expected {what}, got {name}", expr) from None


def parse_sort(expr: SExpr) -> Sort:
    name = _symbol(expr, "sort")
    try:
        return Sort(name)
    except ValueError:
        raise _error(f"unknown sort {name}", expr) from None


def parse_vars(form: SList) -> List[Var]:
    declared: List[Var] = []
    for group in form.items[1:]:
        group = _expect_list(group, "variable declaration")
        if len(group.items) < 2:
            raise _error("variable declaration needs names and a sort", group)
        sort = parse_sort(group.items[-1])
        for item in group.items[:-1]:
            declared.append(Var(_symbol(item, "variable name"), sort))
    return declared


class TermReader:
    """Turns s-expressions into terms against a variable environment."""

    def __init__(self, env: Dict[str, Var], problems: List[Diagnostic]):
        self.env = env
        self.problems = problems

    def read(self, expr: SExpr) -> Term:
        try:
            return canonicalize(self._read(expr))
        except SortError as exc:
            self.problems.append(Diagnostic("IllSorted", str(exc), expr.line, expr.col))
            return Var(f"<ill-sorted@{expr.line}:{expr.col}>", Sort.MESG)

    def _read(self, expr: SExpr) -> Term:
        if isinstance(expr, String):
            return Tag(expr.text)
        if isinstance(expr, Symbol):
            var = self.env.get(expr.name)
            if var is None:
                self.problems.append(Diagnostic(
                    "UndeclaredVariable", expr.name, expr.line, expr.col))
                var = Var(expr.name, Sort.MESG)
                self.env[expr.name] = var
            return var
        if not expr.items:
            raise _error("empty form", expr)
        op = _symbol(expr.items[0], "operator")
        args = [self._read(a) for a in expr.items[1:]]
        if op == "gen" and not args:
            return GEN
        if op == "exp" and len(args) == 2:
            return Exp(args[0], args[1])
        if op == "mul" and args:
            return make_product(args)
        if op == "cat" and args:
            return cat(*args)
        if op == "enc" and len(args) >= 2:
            return SymEnc(cat(*args[:-1]), args[-1])
        if op == "hash" and args:
            return Hash(tuple(args))
        if op == "ltk" and len(args) == 2:
            return Skey(args[0], args[1])
        raise _error(f"unknown term form ({op} ...) with {len(args)} arguments", expr)


def parse_role(form: SList) -> RoleDef:
    if len(form.items) < 2:
        raise _error("defrole needs a name", form)
    name = _symbol(form.items[1], "role name")
    declared: List[Var] = []
    trace_form: Optional[SList] = None
    uniq_forms: List[SExpr] = []
    problems: List[Diagnostic] = []
    for item in form.items[2:]:
        item = _expect_list(item, "role clause")
        head = item.head()
        if head == "vars":
            declared.extend(parse_vars(item))
        elif head == "trace":
            trace_form = item
        elif head == "uniq-gen":
            uniq_forms.extend(item.items[1:])
        else:
            problems.append(Diagnostic("UnsupportedForm", f"({head} ...) in role {name}", item.line, item.col))
    if trace_form is None:
        raise _error(f"role {name} has no trace", form)
    env = {v.name: v for v in declared}
    reader = TermReader(env, problems)
    trace: List[Event] = []
    for ev in trace_form.items[1:]:
        ev = _expect_list(ev, "trace event")
        kind = ev.head()
        if kind not in EVENT_KINDS or len(ev.items) != 2:
            raise _error(f"unknown trace event {sexpr_text(ev)[:40]}", ev)
        trace.append(Event(kind, reader.read(ev.items[1]), ev.line, ev.col))
    uniq = [reader.read(u) for u in uniq_forms]
    return RoleDef(name, declared, trace, uniq, problems, form.line, form.col)


def _pred_args(pred: SList) -> List[SExpr]:
    if pred.head() != "p":
        raise _error("rule hypothesis must use (p ...) predicates", pred)
    return list(pred.items[1:])


def parse_rule(form: SList) -> RuleDef:
    if len(form.items) != 3:
        raise _error("defrule needs a name and a body", form)
    name = _symbol(form.items[1], "rule name")
    body = _expect_list(form.items[2], "forall")
    if body.head() != "forall" or len(body.items) != 3:
        raise _error("unsupported rule form, expected (forall ...)", body)
    quantified: List[Tuple[Tuple[str, ...], str]] = []
    for group in _expect_list(body.items[1], "quantifier list").items:
        group = _expect_list(group, "quantified variables")
        quantified.append((tuple(_symbol(s, "variable") for s in group.items[:-1]),
                           _symbol(group.items[-1], "sort")))
    implies = _expect_list(body.items[2], "implies")
    if implies.head() != "implies" or len(implies.items) != 3:
        raise _error("unsupported rule form, expected (implies ...)", implies)
    hyp = _expect_list(implies.items[1], "hypothesis")
    concl = _expect_list(implies.items[2], "conclusion")
    if concl.head() != "=" or len(concl.items) != 3:
        raise _error("unsupported rule conclusion, expected (= z0 z1)", concl)
    z0, z1 = _symbol(concl.items[1], "strand"), _symbol(concl.items[2], "strand")
    preds = [_expect_list(p, "predicate") for p in (hyp.items[1:] if hyp.head() == "and" else [hyp])]

    role: Optional[str] = None
    heights: Dict[str, int] = {}
    params: Dict[str, Dict[str, str]] = {z0: {}, z1: {}}
    for pred in preds:
        args = _pred_args(pred)
        if len(args) == 3 and isinstance(args[0], String):
            r, z, h = args[0].text, _symbol(args[1], "strand"), _int(args[2], "height")
            heights[z] = h
        elif len(args) == 4 and isinstance(args[0], String) and isinstance(args[1], String):
            r, z = args[0].text, _symbol(args[2], "strand")
            params.setdefault(z, {})[args[1].text] = _symbol(args[3], "variable")
        else:
            raise _error("unsupported predicate shape", pred)
        if role is not None and r != role:
            raise _error("rule predicates mention more than one role", pred)
        role = r
    if role is None or set(heights) != {z0, z1} or heights[z0] != heights[z1]:
        raise _error("rule must constrain both strands to one role and height", hyp)
    if params[z0] != params[z1]:
        raise _error("rule parameters must agree between both strands", hyp)
    param_vars = list(params[z0].items())
    return RuleDef(name, role, heights[z0], [p for p, _ in param_vars], (z0, z1),
                   param_vars, quantified, form.line, form.col)


def parse_protocol(form: SList) -> ProtocolDef:
    if len(form.items) < 3:
        raise _error("defprotocol needs a name and an algebra", form)
    name = _symbol(form.items[1], "protocol name")
    algebra = _symbol(form.items[2], "algebra name")
    protocol = ProtocolDef(name, algebra, [], [], [], form.line, form.col)
    for item in form.items[3:]:
        item = _expect_list(item, "protocol clause")
        head = item.head()
        if head == "defrole":
            protocol.roles.append(parse_role(item))
        elif head == "defrule":
            protocol.rules.append(parse_rule(item))
        else:
            protocol.problems.append(Diagnostic(
                "UnsupportedForm", f"({head} ...) in protocol {name}", item.line, item.col))
    return protocol


def parse_skeleton(form: SList) -> SkeletonDef:
    if len(form.items) < 2:
        raise _error("defskeleton needs a protocol name", form)
    skel = SkeletonDef(_symbol(form.items[1], "protocol name"), [], [], line=form.line, col=form.col)
    for item in form.items[2:]:
        item = _expect_list(item, "skeleton clause")
        head = item.head()
        if head == "vars":
            skel.vars.extend(parse_vars(item))
        elif head == "defstrand":
            if len(item.items) < 3:
                raise _error("defstrand needs a role and a height", item)
            bindings = []
            for b in item.items[3:]:
                b = _expect_list(b, "strand binding")
                if len(b.items) != 2:
                    raise _error("strand binding must be (role-var term)", b)
                bindings.append((_symbol(b.items[0], "role variable"), b.items[1]))
            skel.strands.append(StrandDef(_symbol(item.items[1], "role name"),
                                          _int(item.items[2], "height"), bindings, item.line, item.col))
        elif head == "deflistener":
            if len(item.items) != 2:
                raise _error("deflistener takes one term", item)
            skel.listeners.append(item.items[1])
        elif head == "non-orig":
            skel.non_orig.extend(item.items[1:])
        elif head == "uniq-gen":
            skel.uniq_gen.extend(item.items[1:])
        elif head == "neq":
            for pair in item.items[1:]:
                pair = _expect_list(pair, "disequality pair")
                if len(pair.items) != 2:
                    raise _error("neq pairs are (term term)", pair)
                skel.neq.append((pair.items[0], pair.items[1]))
        else:
            skel.problems.append(Diagnostic(
                "UnsupportedForm", f"({head} ...) in skeleton", item.line, item.col))
    return skel


def parse(text: Union[str, bytes]) -> List[Definition]:
    """Parse model text into protocol and skeleton definitions, in file order."""
    defs: List[Definition] = []
    for form in read_sexprs(text):
        form = _expect_list(form, "top-level form")
        head = form.head()
        if head == "defprotocol":
            defs.append(parse_protocol(form))
        elif head == "defskeleton":
            defs.append(parse_skeleton(form))
        else:
            raise _error(f"unknown form {head or sexpr_text(form.items[0])}", form)
    return defs


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def validate(protocol: ProtocolDef) -> List[Diagnostic]:
    """Diagnostics for a protocol definition; empty when it is usable."""
    out: List[Diagnostic] = list(protocol.problems)
    if protocol.algebra != SUPPORTED_ALGEBRA:
        out.append(Diagnostic("UnsupportedAlgebra", protocol.algebra, protocol.line, protocol.col))
    seen = set()
    for role in protocol.roles:
        if role.name in seen:
            out.append(Diagnostic("DuplicateRole", role.name, role.line, role.col))
        seen.add(role.name)
        out.extend(role.problems)
        names = [v.name for v in role.vars]
        for dup in sorted({n for n in names if names.count(n) > 1}):
            out.append(Diagnostic("DuplicateVariable", f"{dup} in role {role.name}", role.line, role.col))
        for atom in role.uniq_gen:
            if not isinstance(atom, Var) or atom not in role.vars:
                out.append(Diagnostic("BadUniqGen", f"{render(atom)} in role {role.name}", role.line, role.col))
                continue
            first = role.first_occurrence(atom)
            if first is None:
                out.append(Diagnostic("UnusedUniqGen", f"{atom.name} in role {role.name}", role.line, role.col))
            elif role.trace[first].kind not in ("send", "init"):
                ev = role.trace[first]
                out.append(Diagnostic("BadOrigination",
                                      f"{atom.name} first occurs in a {ev.kind} of role {role.name}",
                                      ev.line, ev.col))
    for rule in protocol.rules:
        role = protocol.role(rule.role)
        if role is None:
            out.append(Diagnostic("UnknownRole", f"{rule.role} in rule {rule.name}", rule.line, rule.col))
            continue
        if not 1 <= rule.height <= len(role.trace):
            out.append(Diagnostic("BadPosition", f"height {rule.height} in rule {rule.name}", rule.line, rule.col))
        for param in rule.params:
            if role.var(param) is None:
                out.append(Diagnostic("UnknownParameter", f"{param} in rule {rule.name}", rule.line, rule.col))
    return out


def validate_skeleton(skel: SkeletonDef, protocol: Optional[ProtocolDef]) -> List[Diagnostic]:
    out: List[Diagnostic] = list(skel.problems)
    if protocol is None:
        return out + [Diagnostic("UnknownProtocol", skel.protocol, skel.line, skel.col)]
    if not skel.strands:
        out.append(Diagnostic("EmptySkeleton", "no defstrand", skel.line, skel.col))
    for sd in skel.strands:
        role = protocol.role(sd.role)
        if role is None:
            out.append(Diagnostic("UnknownRole", sd.role, sd.line, sd.col))
            continue
        if not 1 <= sd.height <= len(role.trace):
            out.append(Diagnostic("BadHeight", f"{sd.role} {sd.height}", sd.line, sd.col))
        for var_name, _ in sd.bindings:
            if role.var(var_name) is None:
                out.append(Diagnostic("UndeclaredVariable", f"{var_name} in role {sd.role}", sd.line, sd.col))
    return out


# ---------------------------------------------------------------------------
# Printing
# ---------------------------------------------------------------------------

def _vars_text(declared: Sequence[Var]) -> str:
    return "(vars " + " ".join(f"({v.name} {v.sort.value})" for v in declared) + ")"


def _role_text(role: RoleDef) -> str:
    lines = [f"  (defrole {role.name}", f"    {_vars_text(role.vars)}", "    (trace"]
    lines += [f"     ({ev.kind} {render(ev.term)})" for ev in role.trace]
    lines[-1] += ")"
    if role.uniq_gen:
        lines.append("    (uniq-gen " + " ".join(render(u) for u in role.uniq_gen) + ")")
    lines[-1] += ")"
    return "\n".join(lines)


def _rule_text(rule: RuleDef) -> str:
    z0, z1 = rule.strand_vars
    quant = " ".join("(" + " ".join(names + (sort,)) + ")" for names, sort in rule.quantified)
    preds = [f'(p "{rule.role}" {z} {rule.height})' for z in (z0, z1)]
    for param, var in rule.param_vars:
        preds += [f'(p "{rule.role}" "{param}" {z} {var})' for z in (z0, z1)]
    return (f"  (defrule {rule.name}\n    (forall ({quant})\n      (implies\n"
            f"        (and {' '.join(preds)})\n        (= {z0} {z1}))))")


def _skeleton_text(skel: SkeletonDef) -> str:
    lines = [f"(defskeleton {skel.protocol}", f"  {_vars_text(skel.vars)}"]
    for sd in skel.strands:
        binds = "".join(f" ({name} {sexpr_text(term)})" for name, term in sd.bindings)
        lines.append(f"  (defstrand {sd.role} {sd.height}{binds})")
    lines += [f"  (deflistener {sexpr_text(t)})" for t in skel.listeners]
    if skel.neq:
        lines.append("  (neq " + " ".join(f"({sexpr_text(a)} {sexpr_text(b)})" for a, b in skel.neq) + ")")
    if skel.non_orig:
        lines.append("  (non-orig " + " ".join(sexpr_text(t) for t in skel.non_orig) + ")")
    if skel.uniq_gen:
        lines.append("  (uniq-gen " + " ".join(sexpr_text(t) for t in skel.uniq_gen) + ")")
    lines[-1] += ")"
    return "\n".join(lines)


def print_model(defs: Sequence[Definition]) -> str:
    """Render definitions back to model text that parses to the same definitions."""
    chunks = []
    for d in defs:
        if isinstance(d, ProtocolDef):
            body = [_role_text(r) for r in d.roles] + [_rule_text(r) for r in d.rules]
            chunks.append(f"(defprotocol {d.name} {d.algebra}\n" + "\n\n".join(body) + ")")
        else:
            chunks.append(_skeleton_text(d))
    return "\n\n".join(chunks) + "\n"


# ---------------------------------------------------------------------------
# Files
# ---------------------------------------------------------------------------

@dataclass
class ModelFile:
    """A parsed model file plus the protocols its skeletons refer to."""
    path: str
    protocols: Dict[str, ProtocolDef]
    skeletons: List[SkeletonDef]
    local_protocols: List[str] = field(default_factory=list)

    def pov_names(self) -> List[str]:
        names: List[str] = []
        for skel in self.skeletons:
            base = skel.pov_name()
            name, n = base, 2
            while name in names:
                name, n = f"{base}-{n}", n + 1
            names.append(name)
        return names

    def skeleton(self, pov: Optional[str] = None) -> Tuple[str, SkeletonDef]:
        names = self.pov_names()
        if not self.skeletons:
            raise ModelError(f"{self.path} defines no skeleton")
        if pov is None:
            return names[0], self.skeletons[0]
        if pov not in names:
            raise ModelError(f"unknown point of view {pov!r}; available: {', '.join(names)}")
        return pov, self.skeletons[names.index(pov)]

    def diagnostics(self) -> List[Diagnostic]:
        out: List[Diagnostic] = []
        for name in self.local_protocols:
            out.extend(validate(self.protocols[name]))
        for skel in self.skeletons:
            out.extend(validate_skeleton(skel, self.protocols.get(skel.protocol)))
        return out


def load_model_file(path: str) -> ModelFile:
    """
    Parse a model file. Skeletons naming a protocol defined elsewhere pull in
    `<protocol>.lisp` from the same directory.
    """
    logger.debug(f"Loading model file {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as exc:
        raise ModelError(f"cannot read {path}: {exc}") from exc
    except UnicodeDecodeError as exc:
        raise ModelError(f"{path} is not valid UTF-8 (byte {exc.start})") from exc
    defs = parse(text)
    model = ModelFile(path, {}, [])
    for d in defs:
        if isinstance(d, ProtocolDef):
            model.protocols[d.name] = d
            model.local_protocols.append(d.name)
        else:
            model.skeletons.append(d)
    for skel in model.skeletons:
        if skel.protocol in model.protocols:
            continue
        sibling = os.path.join(os.path.dirname(path), skel.protocol + MODEL_SUFFIX)
        if os.path.abspath(sibling) == os.path.abspath(path) or not os.path.exists(sibling):
            logger.warning(f"Protocol {skel.protocol} not found for skeleton in {path}")
            continue
        with open(sibling, "r", encoding="utf-8") as f:
            for d in parse(f.read()):
                if isinstance(d, ProtocolDef):
                    model.protocols.setdefault(d.name, d)
    return model
