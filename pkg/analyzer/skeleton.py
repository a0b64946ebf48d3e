"""
Strands, skeletons and the checks the search relies on.

A node is a pair (strand index, position) with 0-based positions. The
ordering of a skeleton is the transitive closure of the intra-strand order
and the inter-strand edges it stores.
"""
import logging
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Dict, FrozenSet, Iterable, List, Optional, Set, Tuple

from analyzer.dolev_yao import KnowledgeBase
from analyzer.model_lang import (
    Event, ModelError, ProtocolDef, RoleDef, SExpr, SkeletonDef, TermReader,
    validate, validate_skeleton,
)
from analyzer.term_algebra import (
    Sort, Substitution, Term, Var, accepts, carried, is_atom,
    render, replace_vars, substitute, subterms, unify_all,
)

logger = logging.getLogger(__name__)

Node = Tuple[int, int]
Edge = Tuple[Node, Node]

LISTENER_VAR = Var("m", Sort.MESG)
LISTENER_ROLE = RoleDef(
    name="listener",
    vars=[LISTENER_VAR],
    trace=[Event("recv", LISTENER_VAR), Event("send", LISTENER_VAR)],
)


@dataclass(frozen=True, eq=False)
class Strand:
    """An instance of a role: a binding for every role variable plus a height."""
    role: RoleDef
    height: int
    env: Tuple[Tuple[Var, Term], ...]
    pov: bool = False

    @property
    def is_listener(self) -> bool:
        return self.role is LISTENER_ROLE

    def binding(self, name: str) -> Optional[Term]:
        for var, term in self.env:
            if var.name == name:
                return term
        return None

    @cached_property
    def events(self) -> Tuple[Tuple[str, Term], ...]:
        """The whole instantiated role trace (positions beyond height included)."""
        mapping = dict(self.env)
        return tuple((ev.kind, replace_vars(ev.term, mapping)) for ev in self.role.trace)

    def kind(self, pos: int) -> str:
        return self.events[pos][0]

    def message(self, pos: int) -> Term:
        return self.events[pos][1]

    def substituted(self, sigma: Substitution) -> "Strand":
        return replace(self, env=tuple((v, substitute(t, sigma)) for v, t in self.env))

    def key(self) -> str:
        binds = " ".join(f"{v.name}={render(t)}" for v, t in self.env)
        return f"{self.role.name}/{self.height}[{binds}]"


def fresh_env(role: RoleDef, suffix: str) -> Tuple[Tuple[Var, Term], ...]:
    return tuple((v, Var(v.name + suffix if suffix else v.name, v.sort)) for v in role.vars)


class Skeleton:
    """
    A partially ordered set of regular strands with origination assumptions.

    Skeletons are treated as values: every operation returns a new skeleton.
    """

    def __init__(self, protocol: ProtocolDef, strands: Iterable[Strand],
                 edges: Iterable[Edge] = (), non_orig: Iterable[Term] = (),
                 uniq_gen: Iterable[Term] = (), neq: Iterable[Tuple[Term, Term]] = (),
                 next_id: int = 1, history: Tuple[str, ...] = ()):
        self.protocol = protocol
        self.strands: Tuple[Strand, ...] = tuple(strands)
        self.edges: FrozenSet[Edge] = frozenset(edges)
        self.non_orig: Tuple[Term, ...] = tuple(dict.fromkeys(non_orig))
        self.uniq_gen: Tuple[Term, ...] = tuple(dict.fromkeys(uniq_gen))
        self.neq: Tuple[Tuple[Term, Term], ...] = tuple(neq)
        self.next_id = next_id
        self.history = history
        self._kb_cache: Dict[Tuple[str, Node], KnowledgeBase] = {}

    def __repr__(self):
        return f"Skeleton({', '.join(s.key() for s in self.strands)})"

    def _copy(self, **changes) -> "Skeleton":
        args = dict(protocol=self.protocol, strands=self.strands, edges=self.edges,
                    non_orig=self.non_orig, uniq_gen=self.uniq_gen, neq=self.neq,
                    next_id=self.next_id, history=self.history)
        args.update(changes)
        return Skeleton(**args)

    # -- structure ---------------------------------------------------------

    @property
    def regular_count(self) -> int:
        return sum(1 for s in self.strands if not s.is_listener)

    def nodes(self) -> List[Node]:
        return [(i, p) for i, s in enumerate(self.strands) for p in range(s.height)]

    def kind(self, node: Node) -> str:
        return self.strands[node[0]].kind(node[1])

    def message(self, node: Node) -> Term:
        return self.strands[node[0]].message(node[1])

    @cached_property
    def _predecessors(self) -> Dict[Node, FrozenSet[Node]]:
        direct: Dict[Node, Set[Node]] = {n: set() for n in self.nodes()}
        for i, s in enumerate(self.strands):
            for p in range(1, s.height):
                direct[(i, p)].add((i, p - 1))
        for src, dst in self.edges:
            if src in direct and dst in direct:
                direct[dst].add(src)
        closure: Dict[Node, FrozenSet[Node]] = {}
        visiting: Set[Node] = set()

        def visit(n: Node) -> FrozenSet[Node]:
            if n in closure:
                return closure[n]
            if n in visiting:
                raise _Cycle()
            visiting.add(n)
            acc: Set[Node] = set()
            for m in direct[n]:
                acc.add(m)
                acc |= visit(m)
            visiting.discard(n)
            closure[n] = frozenset(acc)
            return closure[n]

        for n in direct:
            visit(n)
        return closure

    def is_acyclic(self) -> bool:
        try:
            preds = self._predecessors
        except _Cycle:
            return False
        return all(n not in before for n, before in preds.items())

    def precedes(self, a: Node, b: Node) -> bool:
        return a in self._predecessors[b]

    def before(self, node: Node) -> FrozenSet[Node]:
        return self._predecessors[node]

    # -- origination -------------------------------------------------------

    @cached_property
    def generation(self) -> Dict[Term, Set[Node]]:
        """Uniquely generated atoms and the nodes they originate at."""
        gens: Dict[Term, Set[Node]] = {}
        for i, s in enumerate(self.strands):
            if s.is_listener:
                continue
            mapping = dict(s.env)
            for u in s.role.uniq_gen:
                pos = s.role.first_occurrence(u)
                if pos is not None and pos < s.height:
                    gens.setdefault(replace_vars(u, mapping), set()).add((i, pos))
        for atom in self.uniq_gen:
            origin = self.first_origination(atom)
            gens.setdefault(atom, set())
            if origin is not None:
                gens[atom].add(origin)
        return gens

    def first_origination(self, atom: Term) -> Optional[Node]:
        for i, s in enumerate(self.strands):
            for p in range(s.height):
                if s.kind(p) in ("send", "init") and any(t == atom for t in subterms(s.message(p))):
                    return (i, p)
        return None

    @property
    def reserved(self) -> FrozenSet[Term]:
        return frozenset(self.generation)

    # -- knowledge ---------------------------------------------------------

    def _kb(self, tag: str, node: Node, sources: Iterable[Node]) -> KnowledgeBase:
        key = (tag, node)
        if key not in self._kb_cache:
            seen = [self.message(n) for n in sources if self.kind(n) == "send"]
            self._kb_cache[key] = KnowledgeBase(seen, self.reserved, self.non_orig)
        return self._kb_cache[key]

    def knowledge_before(self, node: Node) -> KnowledgeBase:
        """What the adversary has seen at nodes ordered strictly before node."""
        return self._kb("before", node, sorted(self.before(node)))

    def possible_sends(self, node: Node) -> List[Node]:
        """Send nodes that could still be ordered before node."""
        return [n for n in self.nodes()
                if n != node and self.kind(n) == "send" and not self.precedes(node, n)
                and not (n[0] == node[0] and n[1] > node[1])]

    def knowledge_possible(self, node: Node) -> KnowledgeBase:
        return self._kb("possible", node, self.possible_sends(node))

    def knowledge_alone(self) -> KnowledgeBase:
        """The adversary with no honest transmissions at all."""
        return self._kb("alone", (-1, -1), ())

    # -- realization -------------------------------------------------------

    def node_realized(self, node: Node) -> bool:
        kind = self.kind(node)
        if kind == "recv":
            return self.knowledge_before(node).derivable(self.message(node))
        if kind == "obsv":
            record = self.message(node)
            return any(self.kind(n) == "init" and self.message(n) == record
                       for n in self.before(node))
        return True

    def unrealized_nodes(self) -> List[Node]:
        return [n for n in self.nodes() if not self.node_realized(n)]

    def signature(self) -> str:
        edges = ",".join(f"{a}>{b}" for a, b in sorted(self.edges))
        extra = ";".join(render(t) for t in self.non_orig) + "|" + ";".join(
            f"{render(a)}!={render(b)}" for a, b in self.neq)
        return "|".join(s.key() for s in self.strands) + "#" + edges + "#" + extra

    # -- refinement --------------------------------------------------------

    def substituted(self, sigma: Substitution) -> "Skeleton":
        if not len(sigma):
            return self
        return self._copy(
            strands=[s.substituted(sigma) for s in self.strands],
            non_orig=[substitute(t, sigma) for t in self.non_orig],
            uniq_gen=[substitute(t, sigma) for t in self.uniq_gen],
            neq=[(substitute(a, sigma), substitute(b, sigma)) for a, b in self.neq],
        )

    def with_strand(self, role: RoleDef, height: int) -> Tuple["Skeleton", int]:
        strand = Strand(role, height, fresh_env(role, f"-{self.next_id}"))
        sk = self._copy(strands=self.strands + (strand,), next_id=self.next_id + 1)
        return sk, len(sk.strands) - 1

    def with_height(self, index: int, height: int) -> "Skeleton":
        strands = list(self.strands)
        strands[index] = replace(strands[index], height=height)
        edges = [(a, b) for a, b in self.edges
                 if not (a[0] == index and a[1] >= height) and not (b[0] == index and b[1] >= height)]
        return self._copy(strands=strands, edges=edges)

    def with_edges(self, extra: Iterable[Edge]) -> "Skeleton":
        return self._copy(edges=self.edges | frozenset(extra))

    def without_edge(self, edge: Edge) -> "Skeleton":
        return self._copy(edges=self.edges - {edge})

    def without_strand(self, index: int) -> "Skeleton":
        def shift(n: Node) -> Node:
            return (n[0] - 1, n[1]) if n[0] > index else n
        edges = [(shift(a), shift(b)) for a, b in self.edges if a[0] != index and b[0] != index]
        strands = self.strands[:index] + self.strands[index + 1:]
        return self._copy(strands=strands, edges=edges)

    def merge_strands(self, keep: int, drop: int) -> "Skeleton":
        """Identify strand `drop` with strand `keep`; bindings must already agree."""
        kept, gone = self.strands[keep], self.strands[drop]
        strands = list(self.strands)
        strands[keep] = replace(kept, height=max(kept.height, gone.height), pov=kept.pov or gone.pov)

        edges = set()
        for a, b in self.edges:
            a2, b2 = merged_node(a, keep, drop), merged_node(b, keep, drop)
            if a2[0] == b2[0] and a2[1] < b2[1]:
                continue
            edges.add((a2, b2))
        del strands[drop]
        return self._copy(strands=strands, edges=edges)

    def noted(self, step: str) -> "Skeleton":
        return self._copy(history=self.history + (step,))


class _Cycle(Exception):
    pass


# ---------------------------------------------------------------------------
# Checks
# ---------------------------------------------------------------------------

def realized(sk: Skeleton) -> bool:
    """Every reception derivable from earlier transmissions, every observation backed by an earlier init."""
    return sk.is_acyclic() and not sk.unrealized_nodes()


def consistent(sk: Skeleton) -> bool:
    if not sk.is_acyclic():
        return False
    for atom, origins in sk.generation.items():
        if not is_atom(atom) or len(origins) > 1:
            return False
        for gi, gp in origins:
            # a role-declared origin must be the atom's first appearance on its strand
            if atom not in sk.uniq_gen and any(
                    t == atom for p in range(gp) for t in subterms(sk.strands[gi].message(p))):
                return False
            for j, s in enumerate(sk.strands):
                if j == gi:
                    continue
                for p in range(s.height):
                    if any(t == atom for t in subterms(s.message(p))):
                        if s.kind(p) not in ("recv", "obsv"):
                            return False
                        break
    for i, s in enumerate(sk.strands):
        for p in range(s.height):
            if s.kind(p) == "send":
                shown = set(carried(s.message(p)))
                if any(t in shown for t in sk.non_orig):
                    return False
    return all(a != b for a, b in sk.neq)


def apply_rules(sk: Skeleton) -> Optional[Skeleton]:
    """Merge strands identified by the protocol's rules to a fixpoint; None on contradiction."""
    result = apply_rules_tracking(sk, [])
    return result[0] if result else None


def apply_rules_tracking(sk: Skeleton, tracked: List[Node], terms: Iterable[Term] = ()
                         ) -> Optional[Tuple[Skeleton, List[Node], List[Term]]]:
    """
    apply_rules that also reports where tracked nodes and terms end up after merges.

    Merging unifies the two strands' bindings pairwise and commits to the first
    most general unifier. Bindings that are variables or plain atoms have at
    most one; exponent bindings may have several, and only the first is tried.
    """
    tracked = list(tracked)
    terms = list(terms)
    changed = True
    while changed:
        changed = False
        for rule in sk.protocol.rules:
            pair = _rule_match(sk, rule.role, rule.height, rule.params)
            if pair is None:
                continue
            keep, drop = pair
            a, b = sk.strands[keep], sk.strands[drop]
            equations = [(ta, tb) for (_, ta), (_, tb) in zip(a.env, b.env)]
            unifiers = unify_all(equations)
            if not unifiers:
                logger.debug(f"Rule {rule.name} rejects {a.key()} vs {b.key()}")
                return None
            sk = sk.substituted(unifiers[0]).merge_strands(keep, drop).noted(f"rule {rule.name}")
            tracked = [merged_node(n, keep, drop) for n in tracked]
            terms = [substitute(t, unifiers[0]) for t in terms]
            changed = True
            break
    return sk, tracked, terms


def merged_node(node: Node, keep: int, drop: int) -> Node:
    i = keep if node[0] == drop else node[0]
    return (i - 1 if i > drop else i, node[1])


def _rule_match(sk: Skeleton, role: str, height: int, params: List[str]) -> Optional[Tuple[int, int]]:
    for i, a in enumerate(sk.strands):
        if a.role.name != role or a.height < height:
            continue
        for j in range(i + 1, len(sk.strands)):
            b = sk.strands[j]
            if b.role.name != role or b.height < height:
                continue
            if all(a.binding(p) == b.binding(p) for p in params):
                return i, j
    return None


# ---------------------------------------------------------------------------
# Points of view
# ---------------------------------------------------------------------------

def _read_term(expr: SExpr, names: Dict[str, Var], mapping: Dict[Var, Term], problems) -> Term:
    term = TermReader(dict(names), problems).read(expr)
    return replace_vars(term, mapping)


def skeleton_from_def(protocol: ProtocolDef, skdef: SkeletonDef) -> Skeleton:
    """Build the initial skeleton of a point of view."""
    problems = validate(protocol) + validate_skeleton(skdef, protocol)
    if problems:
        raise ModelError("; ".join(str(d) for d in problems))
    skel_names = {v.name: v for v in skdef.vars}
    strands: List[Strand] = []
    resolve: List[Tuple[Dict[str, Var], Dict[Var, Term]]] = []
    for k, sd in enumerate(skdef.strands):
        role = protocol.role(sd.role)
        env = dict(fresh_env(role, "" if k == 0 else f"-p{k}"))
        for var_name, expr in sd.bindings:
            rv = role.var(var_name)
            term = _read_term(expr, skel_names, {}, problems)
            if not accepts(rv.sort, term):
                raise ModelError(f"cannot bind {var_name}:{rv.sort.value} to {render(term)}")
            env[rv] = term
        strands.append(Strand(role, sd.height, tuple(env.items()), pov=True))
        resolve.append(({v.name: v for v in role.vars}, env))

    def read_pov_term(expr: SExpr) -> Term:
        names = dict(skel_names)
        mapping: Dict[Var, Term] = {}
        for role_names, env in resolve:
            for name, var in role_names.items():
                if name not in names:
                    names[name] = var
                    mapping[var] = env[var]
        return _read_term(expr, names, mapping, problems)

    for expr in skdef.listeners:
        term = read_pov_term(expr)
        strands.append(Strand(LISTENER_ROLE, 2, ((LISTENER_VAR, term),), pov=True))
    non_orig = [read_pov_term(e) for e in skdef.non_orig]
    uniq = [read_pov_term(e) for e in skdef.uniq_gen]
    neq = [(read_pov_term(a), read_pov_term(b)) for a, b in skdef.neq]
    if problems:
        raise ModelError("; ".join(str(d) for d in problems))
    sk = Skeleton(protocol, strands, non_orig=non_orig, uniq_gen=uniq, neq=neq)
    if not consistent(sk):
        raise ModelError(f"point of view for {skdef.protocol} is inconsistent")
    return sk
