"""
Symbolic message terms for the Diffie-Hellman protocol algebra.

Terms are immutable and kept in canonical form: nested exponentiations are
flattened (exp(exp(b, x), y) == exp(b, x*y)), exponent products are sorted
multisets and singleton products collapse to their only factor.

The only equational theory is commutative multiplication of exponents.
There is no exponent addition, no base arithmetic and no inverses.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Iterator, List, Mapping, Optional, Set, Tuple, Union

logger = logging.getLogger(__name__)


class SortError(ValueError):
    """Raised when a term or substitution is ill-sorted."""


class Sort(Enum):
    NAME = "name"
    TEXT = "text"
    DATA = "data"
    MESG = "mesg"
    SKEY = "skey"
    EXPT = "expt"
    RNDX = "rndx"
    BASE = "base"


ATOMIC_SORTS = (Sort.NAME, Sort.TEXT, Sort.DATA, Sort.SKEY, Sort.EXPT, Sort.RNDX)
EXPONENT_SORTS = (Sort.EXPT, Sort.RNDX)


def is_subsort(lower: Sort, upper: Sort) -> bool:
    """Partial order on sorts: rndx <= expt, everything <= mesg."""
    if lower == upper or upper == Sort.MESG:
        return True
    return lower == Sort.RNDX and upper == Sort.EXPT


# ---------------------------------------------------------------------------
# Term variants
# ---------------------------------------------------------------------------

class Term:
    """Base class of all message terms."""

    __slots__ = ()

    def __str__(self):
        return render(self)


@dataclass(frozen=True)
class Var(Term):
    name: str
    sort: Sort


@dataclass(frozen=True)
class Tag(Term):
    text: str


@dataclass(frozen=True)
class Name(Term):
    ident: str


@dataclass(frozen=True)
class Text(Term):
    ident: str
    sort: Sort = Sort.TEXT


@dataclass(frozen=True)
class Skey(Term):
    """Long-term symmetric key shared by two names, written (ltk a b)."""
    left: Term
    right: Term


@dataclass(frozen=True)
class ExpAtom(Term):
    ident: str
    sort: Sort = Sort.RNDX


@dataclass(frozen=True)
class Gen(Term):
    pass


@dataclass(frozen=True)
class Exp(Term):
    base: Term
    power: Term


@dataclass(frozen=True)
class ExpProduct(Term):
    factors: Tuple[Term, ...]


@dataclass(frozen=True)
class Pair(Term):
    left: Term
    right: Term


@dataclass(frozen=True)
class SymEnc(Term):
    payload: Term
    key: Term


@dataclass(frozen=True)
class Hash(Term):
    args: Tuple[Term, ...]


GEN = Gen()


def sort_of(term: Term) -> Sort:
    if isinstance(term, (Var, Text, ExpAtom)):
        return term.sort
    if isinstance(term, Name):
        return Sort.NAME
    if isinstance(term, Skey):
        return Sort.SKEY
    if isinstance(term, (Gen, Exp)):
        return Sort.BASE
    if isinstance(term, ExpProduct):
        return Sort.EXPT
    return Sort.MESG


def is_atom(term: Term) -> bool:
    """Variables and constants that cannot be decomposed."""
    return isinstance(term, (Var, Name, Text, ExpAtom))


def is_factor(term: Term) -> bool:
    return isinstance(term, (Var, ExpAtom)) and term.sort in EXPONENT_SORTS


def accepts(var_sort: Sort, term: Term) -> bool:
    """True if a variable of var_sort may be bound to term."""
    return is_subsort(sort_of(term), var_sort)


def factor_key(term: Term) -> Tuple[str, str, int]:
    """Total order on exponent factors: (sort, id string)."""
    if isinstance(term, Var):
        return (term.sort.value, term.name, 1)
    if isinstance(term, ExpAtom):
        return (term.sort.value, term.ident, 0)
    raise SortError(f"not an exponent factor: {render(term)}")


# ---------------------------------------------------------------------------
# Construction and canonical form
# ---------------------------------------------------------------------------

def factors_of(power: Term) -> List[Term]:
    if isinstance(power, ExpProduct):
        return list(power.factors)
    return [power]


def make_product(factors: List[Term]) -> Term:
    flat: List[Term] = []
    for f in factors:
        flat.extend(factors_of(f))
    if not flat:
        raise SortError("empty exponent product")
    for f in flat:
        if not is_factor(f):
            raise SortError(f"exponent factor has sort {sort_of(f).value}: {render(f)}")
    flat.sort(key=factor_key)
    if len(flat) == 1:
        return flat[0]
    return ExpProduct(tuple(flat))


def cat(*terms: Term) -> Term:
    """Right-nested pairing, (cat a b c) == Pair(a, Pair(b, c))."""
    if not terms:
        raise SortError("cat of nothing")
    result = terms[-1]
    for t in reversed(terms[:-1]):
        result = Pair(t, result)
    return result


def exp(base: Term, *powers: Term) -> Term:
    return canonicalize(Exp(base, make_product(list(powers))))


def mul(*factors: Term) -> Term:
    return make_product(list(factors))


def hash_of(*args: Term) -> Hash:
    return Hash(tuple(args))


def canonicalize(term: Term) -> Term:
    """Return the unique canonical form of a well-sorted term."""
    if isinstance(term, (Var, Tag, Name, Text, ExpAtom, Gen)):
        return term
    if isinstance(term, Skey):
        left, right = canonicalize(term.left), canonicalize(term.right)
        for side in (left, right):
            if not accepts(Sort.NAME, side):
                raise SortError(f"ltk argument must be a name: {render(side)}")
        return Skey(left, right)
    if isinstance(term, Pair):
        return Pair(canonicalize(term.left), canonicalize(term.right))
    if isinstance(term, SymEnc):
        return SymEnc(canonicalize(term.payload), canonicalize(term.key))
    if isinstance(term, Hash):
        return Hash(tuple(canonicalize(a) for a in term.args))
    if isinstance(term, ExpProduct):
        return make_product([canonicalize(f) for f in term.factors])
    if isinstance(term, Exp):
        base = canonicalize(term.base)
        power = make_product([canonicalize(f) for f in factors_of(term.power)])
        if isinstance(base, Exp):
            return Exp(base.base, make_product(factors_of(base.power) + factors_of(power)))
        if not (isinstance(base, Gen) or (isinstance(base, Var) and base.sort in (Sort.BASE, Sort.MESG))):
            raise SortError(f"exponentiation base has sort {sort_of(base).value}: {render(base)}")
        return Exp(base, power)
    raise SortError(f"unknown term {term!r}")


# ---------------------------------------------------------------------------
# Traversal
# ---------------------------------------------------------------------------

def children(term: Term) -> Tuple[Term, ...]:
    if isinstance(term, (Pair, Skey)):
        return (term.left, term.right)
    if isinstance(term, SymEnc):
        return (term.payload, term.key)
    if isinstance(term, Hash):
        return term.args
    if isinstance(term, Exp):
        return (term.base,) + tuple(factors_of(term.power))
    if isinstance(term, ExpProduct):
        return term.factors
    return ()


def subterms(term: Term) -> Iterator[Term]:
    yield term
    for child in children(term):
        yield from subterms(child)


def variables(term: Term) -> Set[Var]:
    return {t for t in subterms(term) if isinstance(t, Var)}


def atoms(term: Term) -> List[Term]:
    """Atoms of a term in first-occurrence order, without repeats."""
    seen: List[Term] = []
    for t in subterms(term):
        if is_atom(t) and t not in seen:
            seen.append(t)
    return seen


def occurs(atom: Term, term: Term) -> bool:
    return any(t == atom for t in subterms(term))


def carried(term: Term) -> Iterator[Term]:
    """Subterms that travel in the clear or as encryption payloads."""
    yield term
    if isinstance(term, Pair):
        yield from carried(term.left)
        yield from carried(term.right)
    elif isinstance(term, SymEnc):
        yield from carried(term.payload)


def flatten_pair(term: Term) -> List[Term]:
    parts = [term.left]
    rest = term.right
    while isinstance(rest, Pair):
        parts.append(rest.left)
        rest = rest.right
    parts.append(rest)
    return parts


def render(term: Term) -> str:
    """Stable prefix rendering, e.g. (exp (gen) (mul a b))."""
    if isinstance(term, Var):
        return term.name
    if isinstance(term, Tag):
        return '"' + term.text.replace('"', '\\"') + '"'
    if isinstance(term, (Name, Text, ExpAtom)):
        return term.ident
    if isinstance(term, Gen):
        return "(gen)"
    if isinstance(term, Skey):
        return f"(ltk {render(term.left)} {render(term.right)})"
    if isinstance(term, Exp):
        return f"(exp {render(term.base)} {render(term.power)})"
    if isinstance(term, ExpProduct):
        return "(mul " + " ".join(render(f) for f in term.factors) + ")"
    if isinstance(term, Pair):
        return "(cat " + " ".join(render(p) for p in flatten_pair(term)) + ")"
    if isinstance(term, SymEnc):
        return f"(enc {render(term.payload)} {render(term.key)})"
    if isinstance(term, Hash):
        return "(hash " + " ".join(render(a) for a in term.args) + ")"
    return repr(term)


# ---------------------------------------------------------------------------
# Substitutions
# ---------------------------------------------------------------------------

def _replace(term: Term, mapping: Mapping[Var, Term]) -> Term:
    if isinstance(term, Var):
        return mapping.get(term, term)
    if isinstance(term, (Tag, Name, Text, ExpAtom, Gen)):
        return term
    if isinstance(term, Skey):
        return Skey(_replace(term.left, mapping), _replace(term.right, mapping))
    if isinstance(term, Pair):
        return Pair(_replace(term.left, mapping), _replace(term.right, mapping))
    if isinstance(term, SymEnc):
        return SymEnc(_replace(term.payload, mapping), _replace(term.key, mapping))
    if isinstance(term, Hash):
        return Hash(tuple(_replace(a, mapping) for a in term.args))
    if isinstance(term, Exp):
        return Exp(_replace(term.base, mapping), _replace(term.power, mapping))
    if isinstance(term, ExpProduct):
        return ExpProduct(tuple(_replace(f, mapping) for f in term.factors))
    raise SortError(f"unknown term {term!r}")


def replace_vars(term: Term, mapping: Mapping[Var, Term]) -> Term:
    """Simultaneous replacement, used to instantiate role traces and rename variables."""
    return canonicalize(_replace(term, mapping))


class Substitution:
    """Finite, sort-respecting, idempotent map from variables to terms."""

    __slots__ = ("_map", "_key")

    def __init__(self, mapping: Optional[Mapping[Var, Term]] = None):
        resolved: Dict[Var, Term] = {}
        raw = dict(mapping or {})
        for var, term in raw.items():
            if not isinstance(var, Var):
                raise SortError(f"substitution domain must be variables, got {var!r}")
            if not accepts(var.sort, term):
                raise SortError(f"cannot bind {var.name}:{var.sort.value} to {render(term)}")
        # resolve chains until the range no longer mentions the domain
        for _ in range(len(raw) + 1):
            changed = False
            for var, term in raw.items():
                new = canonicalize(_replace(term, raw))
                if new != term:
                    changed = True
                raw[var] = new
            if not changed:
                break
        else:
            raise SortError("cyclic substitution")
        for var, term in raw.items():
            if var in variables(term):
                raise SortError(f"occurs check failed for {var.name}")
            if term != var:
                resolved[var] = term
        self._map = resolved
        self._key = frozenset(resolved.items())

    def __contains__(self, var):
        return var in self._map

    def __len__(self):
        return len(self._map)

    def __iter__(self):
        return iter(self._map)

    def __eq__(self, other):
        return isinstance(other, Substitution) and self._key == other._key

    def __hash__(self):
        return hash(self._key)

    def __repr__(self):
        inner = ", ".join(f"{v.name}↦{render(t)}" for v, t in sorted(self._map.items(), key=lambda kv: kv[0].name))
        return "{" + inner + "}"

    def get(self, var: Var, default=None):
        return self._map.get(var, default)

    def items(self):
        return self._map.items()

    def as_dict(self) -> Dict[Var, Term]:
        return dict(self._map)

    def apply(self, term: Term) -> Term:
        return substitute(term, self)

    def bind(self, var: Var, term: Term) -> "Substitution":
        term = self.apply(term)
        if term == var:
            return self
        if var in variables(term):
            raise SortError(f"occurs check failed for {var.name}")
        single = {var: term}
        updated = {v: canonicalize(_replace(t, single)) for v, t in self._map.items()}
        updated[var] = term
        return Substitution(updated)


EMPTY = Substitution()


def substitute(term: Term, sigma: Union[Substitution, Mapping[Var, Term]]) -> Term:
    """Capture-free application of sigma followed by canonicalization."""
    if not isinstance(sigma, Substitution):
        sigma = Substitution(sigma)
    if not len(sigma):
        return canonicalize(term)
    return canonicalize(_replace(term, sigma._map))


# ---------------------------------------------------------------------------
# Unification
# ---------------------------------------------------------------------------

def _is_expt_var(term: Term) -> bool:
    return isinstance(term, Var) and term.sort == Sort.EXPT


def _bind(env: Substitution, var: Var, term: Term) -> Optional[Substitution]:
    if not accepts(var.sort, term):
        return None
    try:
        return env.bind(var, term)
    except SortError:
        return None


def _bind_vars(env: Substitution, left: Var, right: Var) -> Optional[Substitution]:
    # the right-hand variable yields to the left one unless its sort is narrower
    if left.sort == right.sort or is_subsort(left.sort, right.sort):
        return _bind(env, right, left)
    if is_subsort(right.sort, left.sort):
        return _bind(env, left, right)
    return None


def _unify(a: Term, b: Term, env: Substitution) -> Iterator[Substitution]:
    a, b = env.apply(a), env.apply(b)
    if a == b:
        yield env
        return
    if isinstance(a, Var) and isinstance(b, Var):
        bound = _bind_vars(env, a, b)
        if bound is not None:
            yield bound
        return
    if isinstance(a, Var):
        bound = _bind(env, a, b)
        if bound is not None:
            yield bound
        return
    if isinstance(b, Var):
        bound = _bind(env, b, a)
        if bound is not None:
            yield bound
        return
    if type(a) is not type(b):
        return
    if isinstance(a, (Pair, SymEnc, Skey)):
        left_a, right_a = children(a)
        left_b, right_b = children(b)
        for env2 in _unify(left_a, left_b, env):
            yield from _unify(right_a, right_b, env2)
        return
    if isinstance(a, Hash):
        if len(a.args) != len(b.args):
            return
        yield from _unify_sequence(list(a.args), list(b.args), env)
        return
    if isinstance(a, Exp):
        yield from _unify_exp(a, b, env)
        return
    if isinstance(a, ExpProduct):
        yield from _unify_products(list(a.factors), list(b.factors), env)
        return
    # distinct constants


def _unify_sequence(left: List[Term], right: List[Term], env: Substitution) -> Iterator[Substitution]:
    if not left:
        yield env
        return
    for env2 in _unify(left[0], right[0], env):
        yield from _unify_sequence(left[1:], right[1:], env2)


def _base_candidates(power: Term, other: Term) -> List[Term]:
    """Values a base variable raised to `other` may take to reach gen^power."""
    out: List[Term] = [GEN]
    for f in factors_of(power):
        single = Exp(GEN, f)
        if single not in out:
            out.append(single)
    residual = factors_of(power)
    for f in factors_of(other):
        if f not in residual:
            return out
        residual.remove(f)
    if len(residual) > 1:
        out.append(Exp(GEN, make_product(residual)))
    return out


def _unify_exp(a: Exp, b: Exp, env: Substitution) -> Iterator[Substitution]:
    if isinstance(a.base, Var) and isinstance(b.base, Gen):
        a, b = b, a
    if isinstance(b.base, Var) and isinstance(a.base, Gen):
        # a base variable is the generator, one factor, or what b's power leaves over
        for value in _base_candidates(a.power, b.power):
            bound = _bind(env, b.base, value)
            if bound is not None:
                yield from _unify(a, b, bound)
        return
    for env2 in _unify(a.base, b.base, env):
        yield from _unify_products(factors_of(a.power), factors_of(b.power), env2)


def _resolve_factors(factors: List[Term], env: Substitution) -> List[Term]:
    out: List[Term] = []
    for f in factors:
        out.extend(factors_of(env.apply(f)))
    return out


def _unify_factor(f: Term, g: Term, env: Substitution) -> Iterator[Substitution]:
    if f == g:
        yield env
        return
    if isinstance(f, Var) and isinstance(g, Var):
        bound = _bind_vars(env, f, g)
    elif isinstance(f, Var):
        bound = _bind(env, f, g)
    elif isinstance(g, Var):
        bound = _bind(env, g, f)
    else:
        bound = None
    if bound is not None:
        yield bound


def _unify_products(left: List[Term], right: List[Term], env: Substitution) -> Iterator[Substitution]:
    left = _resolve_factors(left, env)
    right = _resolve_factors(right, env)
    for f in list(left):
        if f in right:
            left.remove(f)
            right.remove(f)
    if not left and not right:
        yield env
        return
    if not left or not right:
        return
    left.sort(key=factor_key)
    right.sort(key=factor_key)
    # a lone expt variable may take the whole residual product
    if len(left) == 1 and len(right) > 1 and _is_expt_var(left[0]):
        bound = _bind(env, left[0], make_product(right))
        if bound is not None:
            yield bound
    if len(right) == 1 and len(left) > 1 and _is_expt_var(right[0]):
        bound = _bind(env, right[0], make_product(left))
        if bound is not None:
            yield bound
    first = left[0]
    tried: List[Term] = []
    for i, g in enumerate(right):
        if g in tried:
            continue
        tried.append(g)
        for env2 in _unify_factor(first, g, env):
            yield from _unify_products(left[1:], right[:i] + right[i + 1:], env2)


def unify(t1: Term, t2: Term, sigma: Optional[Substitution] = None) -> List[Substitution]:
    """
    Complete set of most general unifiers under the restricted exponent theory.

    Exponent variables bind to one factor or to the whole residual product.
    An empty list means the terms do not unify.
    """
    results: List[Substitution] = []
    for env in _unify(t1, t2, sigma or EMPTY):
        if env not in results:
            results.append(env)
    return results


def unify_all(pairs: List[Tuple[Term, Term]], sigma: Optional[Substitution] = None) -> List[Substitution]:
    """Simultaneous unification of several equations."""
    envs = [sigma or EMPTY]
    for left, right in pairs:
        nxt: List[Substitution] = []
        for env in envs:
            for env2 in _unify(left, right, env):
                if env2 not in nxt:
                    nxt.append(env2)
        envs = nxt
        if not envs:
            break
    return envs


MatchEnv = Dict[Var, Term]


def _match(p: Term, t: Term, env: MatchEnv) -> Iterator[MatchEnv]:
    if isinstance(p, Var):
        if p in env:
            if env[p] == t:
                yield env
        elif accepts(p.sort, t):
            yield {**env, p: t}
        return
    if type(p) is not type(t):
        # a product pattern may still meet a single factor through a bound var
        return
    if isinstance(p, (Tag, Name, Text, ExpAtom, Gen)):
        if p == t:
            yield env
        return
    if isinstance(p, (Pair, SymEnc, Skey)):
        pl, pr = children(p)
        tl, tr = children(t)
        for env2 in _match(pl, tl, env):
            yield from _match(pr, tr, env2)
        return
    if isinstance(p, Hash):
        if len(p.args) == len(t.args):
            yield from _match_sequence(list(p.args), list(t.args), env)
        return
    if isinstance(p, Exp):
        target_factors = factors_of(t.power)
        if isinstance(p.base, Var) and p.base not in env and isinstance(t.base, Gen):
            if accepts(p.base.sort, GEN):
                yield from _match_factors(factors_of(p.power), target_factors, {**env, p.base: GEN})
            seen: List[Term] = []
            for i, f in enumerate(target_factors):
                if f in seen:
                    continue
                seen.append(f)
                rest = target_factors[:i] + target_factors[i + 1:]
                if rest and accepts(p.base.sort, Exp(GEN, f)):
                    yield from _match_factors(factors_of(p.power), rest, {**env, p.base: Exp(GEN, f)})
            return
        for env2 in _match(p.base, t.base, env):
            yield from _match_factors(factors_of(p.power), target_factors, env2)
        return
    if isinstance(p, ExpProduct):
        yield from _match_factors(list(p.factors), list(t.factors), env)


def _match_sequence(ps: List[Term], ts: List[Term], env: MatchEnv) -> Iterator[MatchEnv]:
    if not ps:
        yield env
        return
    for env2 in _match(ps[0], ts[0], env):
        yield from _match_sequence(ps[1:], ts[1:], env2)


def _match_factors(ps: List[Term], ts: List[Term], env: MatchEnv) -> Iterator[MatchEnv]:
    if not ps:
        if not ts:
            yield env
        return
    first, rest = ps[0], ps[1:]
    if isinstance(first, Var) and first in env:
        remaining = list(ts)
        for f in factors_of(env[first]):
            if f not in remaining:
                return
            remaining.remove(f)
        yield from _match_factors(rest, remaining, env)
        return
    if not isinstance(first, Var):
        if first in ts:
            remaining = list(ts)
            remaining.remove(first)
            yield from _match_factors(rest, remaining, env)
        return
    if not rest and len(ts) > 1 and first.sort == Sort.EXPT:
        yield {**env, first: make_product(ts)}
        return
    tried: List[Term] = []
    for i, f in enumerate(ts):
        if f in tried:
            continue
        tried.append(f)
        if accepts(first.sort, f):
            yield from _match_factors(rest, ts[:i] + ts[i + 1:], {**env, first: f})


def match(pattern: Term, target: Term, env: Optional[MatchEnv] = None) -> List[MatchEnv]:
    """
    One-way matching: bindings of pattern variables that make it equal target.

    Variables of target are treated as constants, so both sides may share names.
    """
    results: List[MatchEnv] = []
    for found in _match(pattern, target, dict(env or {})):
        if found not in results:
            results.append(found)
    return results
