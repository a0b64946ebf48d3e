import os
import sys

import pytest

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
if ROOT not in sys.path:
    sys.path.insert(0, ROOT)

from analyzer.model_lang import load_model_file, parse  # noqa: E402
from analyzer.skeleton import skeleton_from_def  # noqa: E402

MODELS_DIR = os.path.join(ROOT, "models")

CHALLENGE_RESPONSE = """
(defprotocol cr diffie-hellman
  (defrole init
    (vars (a b name) (n text))
    (trace
     (send (enc n a (ltk a b)))
     (recv n))
    (uniq-gen n))
  (defrole resp
    (vars (a b name) (n text))
    (trace
     (recv (enc n a (ltk a b)))
     (send n))))

(defskeleton cr
  (vars (a b name))
  (defstrand init 2 (a a) (b b))
  (non-orig (ltk a b)))
"""

CLEAR_ECHO = """
(defprotocol echo diffie-hellman
  (defrole init
    (vars (n text))
    (trace
     (send n)
     (recv n))
    (uniq-gen n)))

(defskeleton echo
  (vars)
  (defstrand init 2))
"""


def pov_from_text(text):
    """Protocol and point-of-view skeleton from model text with one of each."""
    defs = parse(text)
    protocol, skdef = defs[0], defs[1]
    return protocol, skeleton_from_def(protocol, skdef)


def pov_from_file(file_name, pov=None):
    model = load_model_file(os.path.join(MODELS_DIR, file_name))
    _, skdef = model.skeleton(pov)
    return skeleton_from_def(model.protocols[skdef.protocol], skdef)


@pytest.fixture
def models_dir():
    return MODELS_DIR


@pytest.fixture
def challenge_response():
    return pov_from_text(CHALLENGE_RESPONSE)


@pytest.fixture
def clear_echo():
    return pov_from_text(CLEAR_ECHO)
