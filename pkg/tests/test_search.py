from itertools import combinations, combinations_with_replacement, product

import pytest

from analyzer.dolev_yao import KnowledgeBase
from analyzer.skeleton import apply_rules, apply_rules_tracking, consistent, realized
from analyzer.strand_search import (
    STATUS_COMPLETE, STATUS_EXHAUSTED, Bounds, critical_subterms, edge_style, embeds, explain_reception,
    isomorphic, minimize, search,
)
from analyzer.term_algebra import Name, Skey, Substitution, SymEnc, Text, carried, cat
from tests.conftest import pov_from_file, pov_from_text

RELAY = """
(defprotocol relay diffie-hellman
  (defrole init
    (vars (a b name) (n text))
    (trace
     (send (enc n a (ltk a b)))
     (recv (hash n)))
    (uniq-gen n))
  (defrole fwd
    (vars (m mesg) (c d name))
    (trace
     (recv (enc m (ltk c d)))
     (send m))))

(defskeleton relay
  (vars (a b name))
  (defstrand init 2 (a a) (b b))
  (non-orig (ltk a b)))
"""

ECHO_BACK = """
(defprotocol back diffie-hellman
  (defrole r
    (vars (m mesg) (n text))
    (trace
     (recv m)
     (send n))
    (uniq-gen n)))

(defskeleton back
  (vars)
  (defstrand r 2))
"""


def _role(sk, name):
    return next(r for r in sk.protocol.roles if r.name == name)


def test_critical_subterms():
    n, k = Text("n"), Text("k")
    alice, bob = Name("alice"), Name("bob")
    kb = KnowledgeBase([], reserved=[n], non_orig=[Skey(alice, bob)])
    assert critical_subterms(cat(alice, n), kb) == [n]
    assert critical_subterms(SymEnc(n, k), kb) == [SymEnc(n, k), n]
    assert critical_subterms(SymEnc(n, Skey(alice, bob)), kb) == [SymEnc(n, Skey(alice, bob))]
    assert critical_subterms(SymEnc(n, Skey(bob, alice)), kb) == [SymEnc(n, Skey(bob, alice)), n]
    assert critical_subterms(cat(alice, bob), kb) == []


def test_pov_is_consistent_but_unrealized(challenge_response):
    _, pov = challenge_response
    assert consistent(pov)
    assert not realized(pov)
    assert pov.unrealized_nodes() == [(0, 1)]


def test_reception_explained_by_a_responder(challenge_response):
    _, pov = challenge_response
    children = explain_reception(pov, (0, 1))
    assert [s.role.name for s in children[0].strands] == ["init", "resp"]
    assert all(consistent(c) for c in children)


def test_challenge_response_has_one_shape(challenge_response):
    _, pov = challenge_response
    result = search(pov)
    assert result.status == STATUS_COMPLETE
    assert len(result.shapes) == 1
    shape = result.shapes[0]
    assert sorted(shape.roles()) == ["init", "resp"]
    assert all(s.height == 2 for s in shape.strands)
    assert set(shape.edge_styles.values()) == {"solid"}
    assert len(shape.edge_styles) == 2
    assert realized(shape.skeleton)


def test_responder_agrees_on_names(challenge_response):
    _, pov = challenge_response
    shape = search(pov).shapes[0]
    init, resp = shape.strands
    for name in ("a", "b", "n"):
        assert init.binding(name) == resp.binding(name)


def test_strand_bound_exhausts(challenge_response):
    _, pov = challenge_response
    result = search(pov, Bounds(max_strands=1))
    assert result.status == STATUS_EXHAUSTED
    assert result.shapes == []
    assert any("strand bound" in note for note in result.notes)


def test_depth_bound_exhausts(challenge_response):
    _, pov = challenge_response
    result = search(pov, Bounds(max_depth=0))
    assert result.status == STATUS_EXHAUSTED


def test_already_realized_pov_is_its_own_shape(clear_echo):
    _, pov = clear_echo
    assert realized(pov)
    result = search(pov)
    assert result.complete
    assert len(result.shapes) == 1
    assert len(result.shapes[0].strands) == 1
    assert result.shapes[0].edge_styles == {}


def test_embedding_and_isomorphism(challenge_response):
    _, pov = challenge_response
    shape = search(pov).shapes[0]
    assert embeds(pov, shape.skeleton)
    assert not embeds(shape.skeleton, pov)
    assert isomorphic(shape, shape)
    assert not isomorphic(pov, shape.skeleton)


def test_edge_style_for_unchanged_relay(challenge_response):
    _, pov = challenge_response
    shape = search(pov).shapes[0]
    for edge in shape.skeleton.edges:
        assert edge_style(shape.skeleton, edge) == "solid"


def test_progress_callback_sees_every_skeleton(challenge_response):
    _, pov = challenge_response
    steps = []
    result = search(pov, on_step=steps.append)
    assert steps == list(range(1, result.explored + 1))


def test_search_is_deterministic(challenge_response):
    _, pov = challenge_response
    first = search(pov)
    second = search(pov)
    assert [s.skeleton.signature() for s in first.shapes] == [s.skeleton.signature() for s in second.shapes]
    assert first.explored == second.explored


def test_forwarding_strand_does_not_explain_what_it_receives():
    _, pov = pov_from_text(RELAY)
    assert explain_reception(pov, (0, 1)) == []
    result = search(pov)
    assert result.status == STATUS_COMPLETE
    assert result.shapes == []


def test_role_origin_must_be_its_first_appearance():
    _, sk = pov_from_text(ECHO_BACK)
    assert consistent(sk)
    strand = sk.strands[0]
    received = sk.substituted(Substitution({strand.binding("m"): strand.binding("n")}))
    assert not consistent(received)


# ---------------------------------------------------------------------------
# Rules
# ---------------------------------------------------------------------------

def _two_server_inits(first, second):
    """Client POV plus two server-init strands bound as given."""
    pov = pov_from_file("srp3.lisp", "client-pov")
    role = _role(pov, "server-init")
    sk, i = pov.with_strand(role, 2)
    sk, j = sk.with_strand(role, 2)
    bindings = {}
    for index, values in ((i, first), (j, second)):
        for name, term in values.items():
            bindings[sk.strands[index].binding(name)] = term
    return sk.substituted(Substitution(bindings)), i, j


def test_rule_merges_server_inits_for_one_client():
    pov = pov_from_file("srp3.lisp", "client-pov")
    names = {n: pov.strands[0].binding(n) for n in ("client", "server")}
    sk, i, j = _two_server_inits(names, names)
    tracked = sk.strands[j].binding("v")
    merged, nodes, terms = apply_rules_tracking(sk, [(j, 1)], [tracked])
    assert [s.role.name for s in merged.strands] == ["client", "server-init"]
    assert nodes == [(i, 1)]
    assert terms == [merged.strands[i].binding("v")]


def test_rule_leaves_different_clients_alone():
    pov = pov_from_file("srp3.lisp", "client-pov")
    names = {n: pov.strands[0].binding(n) for n in ("client", "server")}
    sk, _, _ = _two_server_inits(names, {})
    assert apply_rules(sk).signature() == sk.signature()


def test_rule_rejects_conflicting_records():
    pov = pov_from_file("srp3.lisp", "client-pov")
    names = {n: pov.strands[0].binding(n) for n in ("client", "server")}
    sk, _, _ = _two_server_inits(dict(names, v=Name("alice")), dict(names, v=Name("bob")))
    assert apply_rules(sk) is None


# ---------------------------------------------------------------------------
# Minimality and soundness of shapes
# ---------------------------------------------------------------------------

def test_shape_loses_realization_when_anything_is_removed(challenge_response):
    _, pov = challenge_response
    sk = search(pov).shapes[0].skeleton
    for i, s in enumerate(sk.strands):
        if s.pov:
            continue
        assert not realized(sk.without_strand(i))
        for h in range(1, s.height):
            assert not realized(sk.with_height(i, h))
    for edge in sk.edges:
        assert not realized(sk.without_edge(edge))


def test_minimize_drops_an_unneeded_strand(challenge_response):
    _, pov = challenge_response
    shape = search(pov).shapes[0]
    padded, _ = shape.skeleton.with_strand(_role(pov, "resp"), 1)
    assert consistent(padded) and realized(padded)
    trimmed = minimize(padded)
    assert [s.role.name for s in trimmed.strands] == ["init", "resp"]
    assert isomorphic(trimmed, shape)


def _assert_origination_sound(shape):
    sk = shape.skeleton
    assert consistent(sk)
    for atom, origins in sk.generation.items():
        assert len(origins) == 1, atom
    for n in sk.nodes():
        if sk.kind(n) == "send":
            assert not set(carried(sk.message(n))) & set(sk.non_orig)


def test_shapes_respect_origination_assumptions(challenge_response):
    _, pov = challenge_response
    for shape in search(pov).shapes:
        _assert_origination_sound(shape)


@pytest.mark.slow
@pytest.mark.parametrize("pov_name", ["client-pov", "server-pov"])
def test_srp3_shapes_respect_origination_assumptions(pov_name):
    for shape in search(pov_from_file("srp3.lisp", pov_name)).shapes:
        _assert_origination_sound(shape)


def _small_refinements(pov):
    """The POV plus up to two more strands over its own atoms, under every set of cross-strand edges."""
    a, b, n = (pov.strands[0].binding(name) for name in ("a", "b", "n"))
    options = [(role, height, names) for role in pov.protocol.roles for height in (1, 2)
               for names in product((a, b), repeat=2)]
    for count in range(3):
        for chosen in combinations_with_replacement(options, count):
            sk = pov
            for role, height, (ra, rb) in chosen:
                sk, i = sk.with_strand(role, height)
                s = sk.strands[i]
                sk = sk.substituted(Substitution({s.binding("a"): ra, s.binding("b"): rb, s.binding("n"): n}))
            sends = [x for x in sk.nodes() if sk.kind(x) == "send"]
            recvs = [x for x in sk.nodes() if sk.kind(x) == "recv"]
            pairs = [(s, r) for s in sends for r in recvs if s[0] != r[0]]
            for size in range(len(pairs) + 1):
                for edges in combinations(pairs, size):
                    yield sk.with_edges(edges)


@pytest.mark.slow
def test_every_small_realized_skeleton_refines_a_shape(challenge_response):
    _, pov = challenge_response
    shapes = search(pov).shapes
    seen = 0
    for sk in _small_refinements(pov):
        if consistent(sk) and realized(sk):
            seen += 1
            assert any(embeds(s.skeleton, sk) for s in shapes), sk
    assert seen > 0


# ---------------------------------------------------------------------------
# SRP-3 explanation steps
# ---------------------------------------------------------------------------

def test_client_state_is_explained_by_client_init():
    pov = pov_from_file("srp3.lisp", "client-pov")
    children = explain_reception(pov, (0, 2))
    assert [(s.role.name, s.height) for s in children[0].strands] == [("client", 7), ("client-init", 1)]


def test_blinded_key_is_explained_by_a_server_through_its_fifth_event():
    pov = pov_from_file("srp3.lisp", "client-pov")
    with_state = explain_reception(pov, (0, 2))[0]
    assert (0, 4) in with_state.unrealized_nodes()
    children = explain_reception(with_state, (0, 4))
    assert any(s.role.name == "server" and s.height == 5 for c in children for s in c.strands)


def test_server_record_is_explained_by_server_init():
    pov = pov_from_file("srp3.lisp", "server-pov")
    children = explain_reception(pov, (0, 1))
    assert [(s.role.name, s.height) for s in children[0].strands] == [("server", 7), ("server-init", 2)]
