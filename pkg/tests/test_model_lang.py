import os

import pytest

from analyzer.model_lang import (
    ModelError, ModelSyntaxError, ProtocolDef, SkeletonDef, Symbol, load_model_file, parse, print_model,
    read_sexprs, validate, validate_skeleton,
)
from analyzer.skeleton import skeleton_from_def
from analyzer.term_algebra import GEN, Sort, SymEnc, Tag, Var, exp
from tests.conftest import CHALLENGE_RESPONSE, MODELS_DIR

CORPUS_FILES = ["srp3.lisp", "srp3-listener-x.lisp", "srp3-listener-v.lisp", "srp3-leak.lisp",
                "srp3-leak-neq.lisp", "srp3-malserver.lisp"]


def _codes(diagnostics):
    return [d.code for d in diagnostics]


def test_reader_tracks_positions():
    forms = read_sexprs('; comment\n(a "b c"\n  (d))')
    assert len(forms) == 1
    form = forms[0]
    assert (form.line, form.col) == (2, 1)
    assert form.items[0] == Symbol("a")
    assert form.items[1].text == "b c"
    assert (form.items[2].line, form.items[2].col) == (3, 3)


@pytest.mark.parametrize("text", ["(a (b)", "(a))", '(a "open)'])
def test_reader_rejects_malformed_text(text):
    with pytest.raises(ModelSyntaxError):
        read_sexprs(text)


def test_unknown_top_level_form_is_a_syntax_error():
    with pytest.raises(ModelSyntaxError) as info:
        parse("(defthing x)")
    assert info.value.line == 1


def test_parse_role_terms():
    protocol = parse(CHALLENGE_RESPONSE)[0]
    init = protocol.role("init")
    a, n = Var("a", Sort.NAME), Var("n", Sort.TEXT)
    first = init.trace[0]
    assert first.kind == "send"
    assert isinstance(first.term, SymEnc)
    assert init.uniq_gen == [n]
    assert init.var("a") == a
    assert init.first_occurrence(n) == 0


def test_enc_with_several_arguments_pairs_the_payload():
    text = """
    (defprotocol p diffie-hellman
      (defrole r (vars (a name) (x rndx))
        (trace (send (enc "t" (exp (gen) x) a (ltk a a))))))
    """
    role = parse(text)[0].role("r")
    term = role.trace[0].term
    assert term.payload.left == Tag("t")
    assert term.payload.right.left == exp(GEN, Var("x", Sort.RNDX))


def test_undeclared_variable_is_a_diagnostic():
    text = """
    (defprotocol p diffie-hellman
      (defrole r (vars (a name)) (trace (send (cat a zz)))))
    """
    protocol = parse(text)[0]
    assert "UndeclaredVariable" in _codes(validate(protocol))


def test_ill_sorted_term_is_a_diagnostic():
    text = """
    (defprotocol p diffie-hellman
      (defrole r (vars (a name)) (trace (send (exp (gen) a)))))
    """
    assert "IllSorted" in _codes(validate(parse(text)[0]))


def test_validate_origination_and_algebra():
    text = """
    (defprotocol p basic
      (defrole r (vars (n text) (m text))
        (trace (recv n) (send m))
        (uniq-gen n)))
    """
    codes = _codes(validate(parse(text)[0]))
    assert "UnsupportedAlgebra" in codes
    assert "BadOrigination" in codes


def test_validate_duplicates_and_unused():
    text = """
    (defprotocol p diffie-hellman
      (defrole r (vars (n text) (n name) (k text)) (trace (send n)) (uniq-gen k))
      (defrole r (vars (n text)) (trace (send n))))
    """
    codes = _codes(validate(parse(text)[0]))
    assert "DuplicateRole" in codes
    assert "DuplicateVariable" in codes
    assert "UnusedUniqGen" in codes


def test_rule_parses_role_height_and_parameters():
    protocol = parse(open(os.path.join(MODELS_DIR, "srp3.lisp")).read())[0]
    rule = protocol.rules[0]
    assert rule.role == "server-init"
    assert rule.height == 1
    assert rule.params == ["client", "server"]
    assert validate(protocol) == []


def test_rule_with_unknown_parameter_is_reported():
    text = """
    (defprotocol p diffie-hellman
      (defrole r (vars (n text)) (trace (send n)))
      (defrule same
        (forall ((z0 z1 strd) (n text))
          (implies (and (p "r" z0 1) (p "r" z1 1) (p "r" "k" z0 n) (p "r" "k" z1 n)) (= z0 z1)))))
    """
    assert "UnknownParameter" in _codes(validate(parse(text)[0]))


def test_skeleton_validation():
    protocol = parse(CHALLENGE_RESPONSE)[0]
    skel = parse("(defskeleton cr (vars) (defstrand init 5) (defstrand nobody 1))")[0]
    codes = _codes(validate_skeleton(skel, protocol))
    assert "BadHeight" in codes
    assert "UnknownRole" in codes
    assert _codes(validate_skeleton(skel, None)) == ["UnknownProtocol"]


def test_pov_names():
    defs = parse(open(os.path.join(MODELS_DIR, "srp3-listener-x.lisp")).read())
    assert defs[0].pov_name() == "client-pov-listener-x"
    defs = parse(open(os.path.join(MODELS_DIR, "srp3-leak-neq.lisp")).read())
    assert defs[0].pov_name() == "server-pov-neq"


@pytest.mark.parametrize("file_name", CORPUS_FILES)
def test_corpus_files_validate(file_name):
    model = load_model_file(os.path.join(MODELS_DIR, file_name))
    assert model.diagnostics() == []
    assert model.skeletons or model.protocols


@pytest.mark.parametrize("file_name", CORPUS_FILES)
def test_print_parse_round_trip(file_name):
    with open(os.path.join(MODELS_DIR, file_name)) as f:
        defs = parse(f.read())
    assert parse(print_model(defs)) == defs


def test_sibling_protocol_is_loaded():
    model = load_model_file(os.path.join(MODELS_DIR, "srp3-listener-v.lisp"))
    assert "srp3" in model.protocols
    assert model.local_protocols == []


def test_corpus_pov_names():
    model = load_model_file(os.path.join(MODELS_DIR, "srp3.lisp"))
    assert model.pov_names() == ["client-pov", "server-pov"]
    with pytest.raises(ModelError):
        model.skeleton("nobody-pov")


def test_missing_file_is_a_model_error(tmp_path):
    with pytest.raises(ModelError):
        load_model_file(str(tmp_path / "absent.lisp"))


def test_invalid_utf8_is_a_model_error(tmp_path):
    path = tmp_path / "latin1.lisp"
    path.write_bytes(b"(defprotocol p diffie-hellman ; caf\xe9\n)")
    with pytest.raises(ModelError, match="not valid UTF-8"):
        load_model_file(str(path))


def test_kinds_of_definitions():
    defs = parse(CHALLENGE_RESPONSE)
    assert isinstance(defs[0], ProtocolDef)
    assert isinstance(defs[1], SkeletonDef)


def test_skeleton_from_def_binds_pov_variables():
    defs = parse(open(os.path.join(MODELS_DIR, "srp3.lisp")).read())
    sk = skeleton_from_def(defs[0], defs[1])
    strand = sk.strands[0]
    assert strand.role.name == "client" and strand.height == 7 and strand.pov
    assert strand.binding("client") == Var("client", Sort.NAME)


def test_skeleton_from_def_rejects_bad_binding_sort():
    defs = parse(CHALLENGE_RESPONSE)
    skel = parse('(defskeleton cr (vars (k text)) (defstrand init 2 (a k)))')[0]
    with pytest.raises(ModelError):
        skeleton_from_def(defs[0], skel)
