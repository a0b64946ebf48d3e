"""
Dolev-Yao adversary knowledge.

A knowledge base is the set of terms the adversary has seen on the network
together with the origination restrictions of the current skeleton: atoms
uniquely generated by honest strands (reserved) and terms that never
originate anywhere (non_orig).
"""
import logging
from typing import Dict, FrozenSet, Iterable, Iterator, List, Set

from analyzer.term_algebra import (
    Exp, ExpProduct, Gen, Hash, Name, Pair, Skey, SymEnc, Tag, Term,
    factors_of, is_atom,
)

logger = logging.getLogger(__name__)


class KnowledgeBase:
    """
    Adversary knowledge with origination restrictions.

    The closure holds every term obtainable by projection and by decryption
    with a derivable key. Derivability of other goals is decided on demand
    and memoized.
    """

    def __init__(self, seen: Iterable[Term] = (), reserved: Iterable[Term] = (),
                 non_orig: Iterable[Term] = ()):
        self.seen: FrozenSet[Term] = frozenset(seen)
        self.reserved: FrozenSet[Term] = frozenset(reserved)
        self.non_orig: FrozenSet[Term] = frozenset(non_orig)
        self._memo: Dict[Term, bool] = {}
        self.closure: FrozenSet[Term] = self._analyze()

    def __repr__(self):
        return f"KnowledgeBase(seen={len(self.seen)}, closure={len(self.closure)})"

    def _analyze(self) -> FrozenSet[Term]:
        closure: Set[Term] = set()
        pending = list(self.seen)
        locked: List[Term] = []
        self.closure = frozenset()
        while pending:
            while pending:
                term = pending.pop()
                if term in closure:
                    continue
                closure.add(term)
                if isinstance(term, Pair):
                    pending.extend((term.left, term.right))
                elif isinstance(term, SymEnc):
                    locked.append(term)
            self.closure = frozenset(closure)
            self._memo.clear()
            for enc in list(locked):
                if self.derivable(enc.key):
                    locked.remove(enc)
                    pending.append(enc.payload)
        self._memo.clear()
        return frozenset(closure)

    def can_invent(self, atom: Term) -> bool:
        """Whether the adversary may originate this atom itself."""
        return atom not in self.reserved and atom not in self.non_orig

    def derivable(self, goal: Term) -> bool:
        memo = self._memo
        if goal in memo:
            return memo[goal]
        memo[goal] = False  # cycle guard
        result = self._derive(goal)
        memo[goal] = result
        return result

    def _derive(self, goal: Term) -> bool:
        if goal in self.non_orig:
            return False
        if goal in self.closure:
            return True
        if isinstance(goal, (Tag, Gen, Name)):
            return True
        if isinstance(goal, Skey):
            # any long-term key may be compromised unless declared non-originating
            return True
        if is_atom(goal):
            return self.can_invent(goal)
        if isinstance(goal, Pair):
            return self.derivable(goal.left) and self.derivable(goal.right)
        if isinstance(goal, SymEnc):
            return self.derivable(goal.payload) and self.derivable(goal.key)
        if isinstance(goal, Hash):
            return all(self.derivable(a) for a in goal.args)
        if isinstance(goal, ExpProduct):
            return all(self.derivable(f) for f in goal.factors)
        if isinstance(goal, Exp):
            return self._derive_exp(goal)
        return False

    def _derive_exp(self, goal: Exp) -> bool:
        wanted = factors_of(goal.power)
        if self.derivable(goal.base) and all(self.derivable(f) for f in wanted):
            return True
        # raise a known power of the same base by the missing factors
        for known in self.closure:
            if not isinstance(known, Exp) or known.base != goal.base:
                continue
            remaining = list(wanted)
            for f in factors_of(known.power):
                if f not in remaining:
                    break
                remaining.remove(f)
            else:
                if all(self.derivable(f) for f in remaining):
                    return True
        return False

    def underivable_atoms(self, goal: Term) -> List[Term]:
        """Atoms of goal the adversary can neither invent nor extract."""
        out: List[Term] = []
        for t in atom_leaves(goal):
            if t not in out and not self.derivable(t):
                out.append(t)
        return out

    def known_atoms(self) -> List[Term]:
        """Atoms appearing in the closure that the adversary actually holds."""
        out: List[Term] = []
        for term in sorted(self.closure, key=str):
            if is_atom(term) and term not in out:
                out.append(term)
        return out

    def extend(self, more: Iterable[Term]) -> "KnowledgeBase":
        return KnowledgeBase(self.seen | frozenset(more), self.reserved, self.non_orig)


def atom_leaves(term: Term) -> Iterator[Term]:
    if is_atom(term):
        yield term
        return
    if isinstance(term, (Pair, Skey)):
        yield from atom_leaves(term.left)
        yield from atom_leaves(term.right)
    elif isinstance(term, SymEnc):
        yield from atom_leaves(term.payload)
        yield from atom_leaves(term.key)
    elif isinstance(term, Hash):
        for a in term.args:
            yield from atom_leaves(a)
    elif isinstance(term, Exp):
        yield from atom_leaves(term.base)
        for f in factors_of(term.power):
            yield from atom_leaves(f)
    elif isinstance(term, ExpProduct):
        for f in term.factors:
            yield from atom_leaves(f)


def derivable(kb: KnowledgeBase, goal: Term) -> bool:
    return kb.derivable(goal)
