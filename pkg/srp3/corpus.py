"""
The SRP-3 model corpus and its regression runner.

Every entry of models/manifest.json5 names a model file, optionally a point
of view, and what the analysis must produce.
"""
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import json5
from tqdm import tqdm

from analyzer.model_lang import ModelError, ModelSyntaxError, load_model_file
from analyzer.skeleton import skeleton_from_def
from analyzer.strand_search import Bounds, SearchResult, Shape, search
from analyzer.term_algebra import GEN, Sort, Term, Var, canonicalize, exp, hash_of, mul

logger = logging.getLogger(__name__)

MODELS_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "models")
MANIFEST_PATH = os.path.join(MODELS_DIR, "manifest.json5")

EXPECT_KINDS = ("valid", "shapes", "empty", "witness", "absent")
SERVER_HEIGHT = 7


class CorpusError(Exception):
    """The manifest is missing or malformed."""


@dataclass(frozen=True)
class CorpusEntry:
    id: str
    file: str
    title: str
    kind: str
    pov: Optional[str] = None
    count: Optional[int] = None
    predicate: Optional[str] = None

    def path(self, models_dir: str = MODELS_DIR) -> str:
        return os.path.join(models_dir, self.file)

    def describe(self) -> str:
        if self.kind == "shapes":
            return f"{self.count} shape(s)"
        if self.kind in ("witness", "absent"):
            return f"{self.kind} {self.predicate}"
        return self.kind


def load_json5_file(file_path: str):
    """Load a JSON5 document from file."""
    try:
        with open(file_path, "r", encoding="utf-8") as f:
            return json5.load(f)
    except (OSError, ValueError) as e:
        logger.error(f"Error loading JSON5 file {file_path}: {e}")
        raise CorpusError(f"cannot load {file_path}: {e}") from e


def _entry(raw: Dict) -> CorpusEntry:
    try:
        expect = raw["expect"]
        entry = CorpusEntry(id=str(raw["id"]), file=raw["file"], title=raw.get("title", ""),
                            kind=expect["kind"], pov=raw.get("pov"), count=expect.get("count"),
                            predicate=expect.get("predicate"))
    except (KeyError, TypeError) as e:
        raise CorpusError(f"malformed manifest entry {raw!r}: missing {e}") from e
    if entry.kind not in EXPECT_KINDS:
        raise CorpusError(f"entry {entry.id}: unknown expectation {entry.kind!r}")
    if entry.kind == "shapes" and entry.count is None:
        raise CorpusError(f"entry {entry.id}: shapes expectation without count")
    if entry.kind in ("witness", "absent") and entry.predicate not in WITNESS_PREDICATES:
        raise CorpusError(f"entry {entry.id}: unknown predicate {entry.predicate!r}")
    return entry


def corpus(manifest_path: str = MANIFEST_PATH) -> List[CorpusEntry]:
    """Corpus entries in manifest order."""
    data = load_json5_file(manifest_path)
    entries = [_entry(raw) for raw in data.get("entries", [])]
    ids = [e.id for e in entries]
    if len(set(ids)) != len(ids):
        raise CorpusError(f"duplicate corpus ids in {manifest_path}")
    return entries


# ---------------------------------------------------------------------------
# Session key terms
# ---------------------------------------------------------------------------

def _exponents():
    return (Var("a", Sort.RNDX), Var("b", Sort.RNDX), Var("u", Sort.RNDX), Var("x", Sort.RNDX))


def key_term_client() -> Term:
    """K = h((g^b)^a, (g^b)^(ux)) as the client derives it."""
    a, b, u, x = _exponents()
    gb = exp(GEN, b)
    return hash_of(exp(gb, a), exp(gb, mul(u, x)))


def key_term_server() -> Term:
    """K = h((g^a)^b, (g^x)^(ub)) as the server derives it."""
    a, b, u, x = _exponents()
    return hash_of(exp(exp(GEN, a), b), exp(exp(GEN, x), mul(u, b)))


# ---------------------------------------------------------------------------
# Witness predicates
# ---------------------------------------------------------------------------

def _complete_server(shape: Shape):
    return [s for s in shape.strands if s.role.name == "server" and s.height == SERVER_HEIGHT]


def clientless_server(shape: Shape) -> bool:
    """A server run completes with no client strand and with b identified with u."""
    if "client" in shape.roles():
        return False
    return any(canonicalize(s.binding("b")) == canonicalize(s.binding("u")) for s in _complete_server(shape))


def malserver_no_client(shape: Shape) -> bool:
    """The malicious server talks an honest server through a full run, no client involved."""
    roles = set(shape.roles())
    return ("client" not in roles and {"malserver", "client-init", "server-init"} <= roles
            and bool(_complete_server(shape)))


WITNESS_PREDICATES: Dict[str, Callable[[Shape], bool]] = {
    "clientless-server": clientless_server,
    "malserver-no-client": malserver_no_client,
}


# ---------------------------------------------------------------------------
# Regression
# ---------------------------------------------------------------------------

@dataclass
class EntryResult:
    entry: CorpusEntry
    passed: bool
    detail: str
    status: Optional[str] = None
    shape_count: Optional[int] = None
    elapsed: float = 0.0
    result: Optional[SearchResult] = field(default=None, repr=False)


def analyze_file(path: str, pov: Optional[str] = None, bounds: Bounds = Bounds()):
    """(pov name, search result) for one point of view of a model file."""
    model = load_model_file(path)
    problems = model.diagnostics()
    if problems:
        raise ModelError("; ".join(str(d) for d in problems))
    name, skdef = model.skeleton(pov)
    protocol = model.protocols.get(skdef.protocol)
    if protocol is None:
        raise ModelError(f"protocol {skdef.protocol} not found for {path}")
    logger.info(f"Analyzing {os.path.basename(path)} from {name}")
    return name, search(skeleton_from_def(protocol, skdef), bounds)


def judge(entry: CorpusEntry, result: SearchResult) -> EntryResult:
    """Compare a search result against the entry's expectation."""
    shapes = result.shapes
    if entry.kind == "shapes":
        ok = result.complete and len(shapes) == entry.count
        detail = f"{len(shapes)} shape(s), {result.status}"
    elif entry.kind == "empty":
        ok = result.complete and not shapes
        detail = f"{len(shapes)} shape(s), {result.status}"
    else:
        predicate = WITNESS_PREDICATES[entry.predicate]
        hits = sum(1 for s in shapes if predicate(s))
        if entry.kind == "witness":
            ok = hits > 0
        else:
            ok = result.complete and hits == 0
        detail = f"{hits} of {len(shapes)} shape(s) satisfy {entry.predicate}, {result.status}"
    return EntryResult(entry, ok, detail, result.status, len(shapes), result.elapsed, result)


def run_entry(entry: CorpusEntry, bounds: Bounds = Bounds(), models_dir: str = MODELS_DIR) -> EntryResult:
    """Run one corpus entry; input problems become a failed result."""
    started = time.monotonic()
    path = entry.path(models_dir)
    try:
        if entry.kind == "valid":
            model = load_model_file(path)
            problems = model.diagnostics()
            detail = "no diagnostics" if not problems else "; ".join(str(d) for d in problems)
            return EntryResult(entry, not problems, detail, elapsed=time.monotonic() - started)
        _, result = analyze_file(path, entry.pov, bounds)
    except (ModelError, ModelSyntaxError) as e:
        logger.error(f"Entry {entry.id}: {e}")
        return EntryResult(entry, False, str(e), elapsed=time.monotonic() - started)
    return judge(entry, result)


def run_regression(entries: List[CorpusEntry], bounds: Bounds = Bounds(), workers: int = 1,
                   progress: bool = True, models_dir: str = MODELS_DIR) -> List[EntryResult]:
    """Run entries, in parallel when workers > 1; results keep manifest order."""
    results: Dict[str, EntryResult] = {}
    with tqdm(total=len(entries), desc="corpus", disable=not progress) as bar:
        if workers <= 1:
            for entry in entries:
                results[entry.id] = run_entry(entry, bounds, models_dir)
                bar.update(1)
        else:
            with ThreadPoolExecutor(max_workers=workers) as executor:
                future_to_id = {executor.submit(run_entry, e, bounds, models_dir): e.id for e in entries}
                for future in as_completed(future_to_id):
                    results[future_to_id[future]] = future.result()
                    bar.update(1)
    ordered = [results[e.id] for e in entries]
    passed = sum(1 for r in ordered if r.passed)
    logger.info(f"Regression complete: {passed} out of {len(ordered)} entries pass")
    return ordered


def format_results(results: List[EntryResult]) -> Dict:
    """Format regression results into a structured dictionary."""
    formatted = {"passed": [], "failed": [], "results_details": []}
    for r in results:
        formatted["results_details"].append({
            "id": r.entry.id,
            "file": r.entry.file,
            "expected": r.entry.describe(),
            "passed": r.passed,
            "detail": r.detail,
        })
        formatted["passed" if r.passed else "failed"].append(r.entry.id)
    return formatted
