"""
Bounded skeleton refinement.

Starting from a point of view, the search repeatedly picks the first node
that is not yet explained and branches over the ways it could be:
the skeleton as it stands (only ordering edges are missing), unification
with a transmission already present, identification of an atom with one the
adversary holds, extension of an existing strand, or a new strand of any
role. Realized skeletons are minimized into shapes; shapes that are
isomorphic to, or refinements of, an earlier shape are dropped.
"""
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterator, List, Optional, Set, Tuple

from analyzer.dolev_yao import KnowledgeBase
from analyzer.skeleton import (
    Edge, Node, Skeleton, apply_rules_tracking, consistent, realized,
)
from analyzer.term_algebra import (
    Pair, SymEnc, Term, Var, carried, match, render, substitute, subterms, unify,
)

logger = logging.getLogger(__name__)

DEFAULT_MAX_STRANDS = 6
DEFAULT_MAX_DEPTH = 12
DEFAULT_MAX_BRANCH = 64

STATUS_COMPLETE = "complete"
STATUS_EXHAUSTED = "bounds-exhausted"


@dataclass(frozen=True)
class Bounds:
    max_strands: int = DEFAULT_MAX_STRANDS
    max_depth: int = DEFAULT_MAX_DEPTH
    max_branch: int = DEFAULT_MAX_BRANCH

    def as_dict(self) -> Dict[str, int]:
        return {"max_strands": self.max_strands, "max_depth": self.max_depth,
                "max_branch": self.max_branch}


@dataclass
class Shape:
    """A minimized realized skeleton with its inter-strand edges annotated."""
    skeleton: Skeleton
    edge_styles: Dict[Edge, str]
    provenance: Tuple[str, ...] = ()

    @property
    def strands(self):
        return self.skeleton.strands

    def roles(self) -> List[str]:
        return [s.role.name for s in self.skeleton.strands]


@dataclass
class SearchResult:
    shapes: List[Shape]
    status: str
    explored: int = 0
    pruned: int = 0
    elapsed: float = 0.0
    notes: List[str] = field(default_factory=list)

    @property
    def complete(self) -> bool:
        return self.status == STATUS_COMPLETE


# ---------------------------------------------------------------------------
# Candidate explanations
# ---------------------------------------------------------------------------

def critical_subterms(term: Term, kb: KnowledgeBase) -> List[Term]:
    """Parts of term the adversary cannot build and must receive from someone."""
    if kb.derivable(term):
        return []
    if isinstance(term, Pair):
        return critical_subterms(term.left, kb) + critical_subterms(term.right, kb)
    if isinstance(term, SymEnc) and kb.derivable(term.key):
        return [term] + critical_subterms(term.payload, kb)
    return [term]


def _minimal_sources(sk: Skeleton, node: Node) -> Optional[List[Node]]:
    """A minimal set of transmissions from which the reception at node is derivable."""
    goal = sk.message(node)
    sources = sk.possible_sends(node)

    def works(chosen: List[Node]) -> bool:
        seen = [sk.message(n) for n in chosen]
        return KnowledgeBase(seen, sk.reserved, sk.non_orig).derivable(goal)

    if not works(sources):
        return None
    needed = list(sources)
    for n in sources:
        trial = [m for m in needed if m != n]
        if works(trial):
            needed = trial
    return needed


def _finish_reception(candidate: Skeleton, node: Node, target: Optional[Term]) -> Optional[Skeleton]:
    """
    Settle a candidate for a reception: rules, consistency, then ordering edges.

    A candidate that explains only the critical part `target` is kept without
    edges; the reception stays pending for its remaining parts.
    """
    settled = apply_rules_tracking(candidate, [node], [] if target is None else [target])
    if settled is None:
        return None
    # rule merges may renumber strands, so node and target come back remapped
    sk, (node,), targets = settled
    if not consistent(sk):
        return None
    needed = _minimal_sources(sk, node)
    if needed is None:
        # partial progress: the tracked part is now supplied, the rest is not
        if targets and sk.knowledge_possible(node).derivable(targets[0]):
            return sk
        return None
    # same-strand sources are already ordered by the strand itself
    edges = [(n, node) for n in needed if n[0] != node[0] and not sk.precedes(n, node)]
    sk = sk.with_edges(edges)
    if not sk.is_acyclic() or not sk.node_realized(node):
        return None
    return sk


def _finish_observation(candidate: Skeleton, node: Node, init: Node) -> Optional[Skeleton]:
    settled = apply_rules_tracking(candidate, [node, init])
    if settled is None:
        return None
    sk, (node, init), _ = settled
    if sk.message(node) != sk.message(init) or node[0] == init[0]:
        return None
    sk = sk.with_edges([(init, node)])
    if not consistent(sk) or not sk.node_realized(node):
        return None
    return sk


def _freely_extended(sk: Skeleton) -> Skeleton:
    """Lengthen every non-POV strand through the transmissions that follow its last node."""
    for i, s in enumerate(sk.strands):
        if s.pov or s.is_listener:
            continue
        h = s.height
        while h < len(s.role.trace) and s.kind(h) == "send":
            h += 1
        if h != s.height:
            sk = sk.with_height(i, h)
    return sk


Candidate = Tuple[str, Skeleton, Optional[Term]]


def _exposed(term: Term, kb: KnowledgeBase) -> Iterator[Term]:
    """Carried subterms not sealed under a key the adversary cannot derive."""
    yield term
    if isinstance(term, Pair):
        yield from _exposed(term.left, kb)
        yield from _exposed(term.right, kb)
    elif isinstance(term, SymEnc) and kb.derivable(term.key):
        yield from _exposed(term.payload, kb)


def _leaks(sk: Skeleton, i: int, p: int, target: Term) -> List[int]:
    """Receptions of strand i before p that hand it target in the open."""
    s = sk.strands[i]
    kb = sk.knowledge_alone()
    return [q for q in range(p) if s.kind(q) == "recv" and target in _exposed(s.message(q), kb)]


def _transforming(sk: Skeleton, i: int, p: int, target: Term) -> Iterator[Tuple[Skeleton, Term]]:
    """
    Variants of sk in which strand i produces target at p rather than passing it on.

    A strand that received target earlier only qualifies once the encryption
    it received it in is one of the protected encryptions other strands send.
    """
    leaks = _leaks(sk, i, p, target)
    if not leaks:
        yield sk, target
        return
    kb = sk.knowledge_alone()
    guards = [e for n in sk.nodes() if n[0] != i and sk.kind(n) == "send"
              for e in carried(sk.message(n))
              if isinstance(e, SymEnc) and not kb.derivable(e.key) and target in carried(e.payload)]
    received = [e for e in carried(sk.strands[i].message(leaks[0]))
                if isinstance(e, SymEnc) and target in carried(e.payload)]
    for mine in received:
        for guard in guards:
            for sigma in unify(mine, guard):
                variant = sk.substituted(sigma)
                moved = substitute(target, sigma)
                if not _leaks(variant, i, p, moved):
                    yield variant, moved


def _reception_candidates(sk: Skeleton, node: Node) -> Iterator[Candidate]:
    msg = sk.message(node)
    yield "as-is", sk, None
    crit = critical_subterms(msg, sk.knowledge_alone())
    # only parts the current transmissions cannot yet supply may be explained on their own
    before = sk.knowledge_possible(node)
    missing = [c for c in crit if not before.derivable(c)]

    for n in sk.possible_sends(node):
        for c in crit:
            for t in carried(sk.message(n)):
                for sigma in unify(c, t):
                    # empty unifier: that transmission is already an as-is source
                    if len(sigma):
                        tracked = substitute(c, sigma) if c in missing else None
                        yield f"unify with {n[0]}:{n[1] + 1}", sk.substituted(sigma), tracked
    extended = _freely_extended(sk)
    kb = extended.knowledge_possible(node)
    for f in kb.underivable_atoms(msg):
        if not isinstance(f, Var):
            continue
        for g in kb.known_atoms():
            if g == f:
                continue
            for sigma in unify(f, g):
                yield f"identify {render(f)}={render(g)}", extended.substituted(sigma), None
    for i, s in enumerate(sk.strands):
        if s.is_listener or i == node[0]:
            continue
        for p in range(s.height, len(s.role.trace)):
            if s.kind(p) != "send":
                continue
            ext = sk.with_height(i, p + 1)
            for c in crit:
                for t in carried(ext.message((i, p))):
                    for sigma in unify(c, t):
                        # a strand that only passes the term on does not explain it
                        for child, moved in _transforming(ext.substituted(sigma), i, p, substitute(c, sigma)):
                            yield f"extend {i} to {p + 1}", child, moved if c in missing else None
    for role in sk.protocol.roles:
        for p, ev in enumerate(role.trace):
            if ev.kind != "send":
                continue
            grown, i = sk.with_strand(role, p + 1)
            for c in crit:
                for t in carried(grown.message((i, p))):
                    for sigma in unify(c, t):
                        for child, moved in _transforming(grown.substituted(sigma), i, p, substitute(c, sigma)):
                            yield f"add {role.name} {p + 1}", child, moved if c in missing else None


def _observation_candidates(sk: Skeleton, node: Node) -> Iterator[Tuple[str, Skeleton, Node]]:
    record = sk.message(node)
    for n in sk.nodes():
        if sk.kind(n) != "init" or n[0] == node[0] or sk.precedes(node, n):
            continue
        for sigma in unify(record, sk.message(n)):
            yield f"state from {n[0]}:{n[1] + 1}", sk.substituted(sigma), n
    for i, s in enumerate(sk.strands):
        if s.is_listener or i == node[0]:
            continue
        for p in range(s.height, len(s.role.trace)):
            if s.kind(p) != "init":
                continue
            ext = sk.with_height(i, p + 1)
            for sigma in unify(record, ext.message((i, p))):
                yield f"extend {i} to {p + 1}", ext.substituted(sigma), (i, p)
    for role in sk.protocol.roles:
        for p, ev in enumerate(role.trace):
            if ev.kind != "init":
                continue
            grown, i = sk.with_strand(role, p + 1)
            for sigma in unify(record, grown.message((i, p))):
                yield f"add {role.name} {p + 1}", grown.substituted(sigma), (i, p)


def _explanations(sk: Skeleton, node: Node) -> Iterator[Skeleton]:
    seen: Set[str] = set()
    if sk.kind(node) == "obsv":
        finished = ((step, _finish_observation(c, node, init))
                    for step, c, init in _observation_candidates(sk, node))
    else:
        finished = ((step, _finish_reception(c, node, target))
                    for step, c, target in _reception_candidates(sk, node))
    for step, child in finished:
        if child is None:
            continue
        sig = child.signature()
        if sig in seen:
            continue
        seen.add(sig)
        yield child.noted(f"{step} for node {node[0]}:{node[1] + 1}")


def explain_reception(sk: Skeleton, node: Node) -> List[Skeleton]:
    """Every refinement of sk in which node becomes explained."""
    return list(_explanations(sk, node))


def has_explanation(sk: Skeleton, node: Node) -> bool:
    return next(_explanations(sk, node), None) is not None


# ---------------------------------------------------------------------------
# Minimization and comparison
# ---------------------------------------------------------------------------

def _keeps_origination(old: Skeleton, new: Skeleton) -> bool:
    present: Set[Term] = set()
    for n in new.nodes():
        present.update(subterms(new.message(n)))
    return all(atom in new.reserved for atom in old.reserved if atom in present)


def _acceptable(old: Skeleton, trial: Skeleton) -> bool:
    return consistent(trial) and realized(trial) and _keeps_origination(old, trial)


def edge_style(sk: Skeleton, edge: Edge) -> str:
    src, dst = edge
    if sk.kind(src) == "init" or sk.message(src) == sk.message(dst):
        return "solid"
    return "dashed"


def minimize(sk: Skeleton) -> Shape:
    """Drop strands, nodes and edges that realization does not need."""
    changed = True
    while changed:
        changed = False
        for i in reversed(range(len(sk.strands))):
            if sk.strands[i].pov:
                continue
            trial = sk.without_strand(i)
            if _acceptable(sk, trial):
                sk, changed = trial, True
                break
    for i in range(len(sk.strands)):
        if sk.strands[i].pov:
            continue
        while sk.strands[i].height > 1:
            trial = sk.with_height(i, sk.strands[i].height - 1)
            if not _acceptable(sk, trial):
                break
            sk = trial
    for edge in sorted(sk.edges):
        trial = sk.without_edge(edge)
        if realized(trial):
            sk = trial
    styles = {e: edge_style(sk, e) for e in sorted(sk.edges)}
    return Shape(sk, styles, sk.history)


def _match_env(a_terms: List[Tuple[Term, Term]], env: Dict[Var, Term]) -> Iterator[Dict[Var, Term]]:
    if not a_terms:
        yield env
        return
    (pa, tb), rest = a_terms[0], a_terms[1:]
    for env2 in match(pa, tb, env):
        yield from _match_env(rest, env2)


def embeds(a: Skeleton, b: Skeleton) -> bool:
    """True if a maps into b: a strand injection preserving role, heights, bindings and order."""
    if a.regular_count > b.regular_count or len(a.strands) > len(b.strands):
        return False

    def order_ok(mapping: List[int]) -> bool:
        for (si, sp), (di, dp) in a.edges:
            if not b.precedes((mapping[si], sp), (mapping[di], dp)):
                return False
        return True

    def extend(k: int, mapping: List[int], env: Dict[Var, Term]) -> bool:
        if k == len(a.strands):
            return order_ok(mapping)
        sa = a.strands[k]
        for j, sb in enumerate(b.strands):
            if j in mapping or sb.role.name != sa.role.name or sa.height > sb.height:
                continue
            pairs = [(sa.message(p), sb.message(p)) for p in range(sa.height)]
            for env2 in _match_env(pairs, env):
                if extend(k + 1, mapping + [j], env2):
                    return True
        return False

    return extend(0, [], {})


def isomorphic(a, b) -> bool:
    """Strand bijection preserving role, height, order and bindings up to renaming."""
    sa = a.skeleton if isinstance(a, Shape) else a
    sb = b.skeleton if isinstance(b, Shape) else b
    if len(sa.strands) != len(sb.strands):
        return False
    if sorted((s.role.name, s.height) for s in sa.strands) != sorted((s.role.name, s.height) for s in sb.strands):
        return False
    return embeds(sa, sb) and embeds(sb, sa)


def _record(shapes: List[Shape], shape: Shape) -> bool:
    for old in shapes:
        if embeds(old.skeleton, shape.skeleton):
            return False
    shapes[:] = [old for old in shapes if not embeds(shape.skeleton, old.skeleton)]
    shapes.append(shape)
    return True


# ---------------------------------------------------------------------------
# Driver
# ---------------------------------------------------------------------------

def _same_strands(a: Skeleton, b: Skeleton) -> bool:
    return [s.key() for s in a.strands] == [s.key() for s in b.strands]


def search(pov: Skeleton, bounds: Bounds = Bounds(),
           on_step: Optional[Callable[[int], None]] = None) -> SearchResult:
    """
    Depth-first refinement of pov into shapes.

    A skeleton into which a recorded shape already embeds is not refined
    further. Branches cut off by a bound are kept aside; the status is
    "complete" unless one of them is left that no final shape embeds into.
    """
    started = time.monotonic()
    stack: List[Tuple[Skeleton, int]] = [(pov, 0)]
    visited: Set[str] = set()
    shapes: List[Shape] = []
    cut: List[Tuple[Skeleton, str]] = []
    explored = pruned = 0

    if pov.regular_count > bounds.max_strands:
        return SearchResult([], STATUS_EXHAUSTED, notes=["point of view exceeds max strands"])

    while stack:
        sk, depth = stack.pop()
        sig = sk.signature()
        if sig in visited:
            continue
        visited.add(sig)
        explored += 1
        if on_step:
            on_step(explored)
        pending = sk.unrealized_nodes()
        if not pending:
            shape = minimize(sk)
            if _record(shapes, shape):
                logger.info(f"Shape {len(shapes)} found after {explored} skeletons: {', '.join(shape.roles())}")
            continue
        if any(embeds(s.skeleton, sk) for s in shapes):
            pruned += 1
            logger.debug(f"Pruned {sk!r}: refines a recorded shape")
            continue
        node = pending[0]
        children = explain_reception(sk, node)
        if not children or any(not has_explanation(sk, n) for n in pending[1:]):
            pruned += 1
            logger.debug(f"Pruned {sk!r}: node {node} or a later node has no explanation")
            continue
        if depth >= bounds.max_depth:
            cut.append((sk, f"depth bound {bounds.max_depth} reached"))
            continue
        if len(children) > bounds.max_branch:
            for child in children[bounds.max_branch:]:
                cut.append((child, f"branch bound {bounds.max_branch} cut children"))
            children = children[:bounds.max_branch]
        accepted = []
        for child in children:
            if child.regular_count > bounds.max_strands:
                cut.append((child, f"strand bound {bounds.max_strands} reached"))
                continue
            accepted.append((child, depth if _same_strands(child, sk) else depth + 1))
        stack.extend(reversed(accepted))

    open_cuts = [note for sk, note in cut if not any(embeds(s.skeleton, sk) for s in shapes)]
    status = STATUS_EXHAUSTED if open_cuts else STATUS_COMPLETE
    notes = sorted(set(open_cuts))
    if len(cut) > len(open_cuts):
        notes.append(f"{len(cut) - len(open_cuts)} cut branch(es) refine a found shape")
    elapsed = time.monotonic() - started
    logger.info(f"Search {status}: {len(shapes)} shape(s), {explored} skeletons explored, {pruned} pruned, {elapsed:.2f}s")
    return SearchResult(shapes, status, explored, pruned, elapsed, notes)
