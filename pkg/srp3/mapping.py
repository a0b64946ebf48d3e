"""Checks that docs/MAPPING.md has one row per corpus entry, cites real files and quotes them."""
import logging
import os
import re
from dataclasses import dataclass
from typing import Dict, List, Optional

from srp3.corpus import MANIFEST_PATH, MODELS_DIR, corpus

logger = logging.getLogger(__name__)

DOCS_DIR = os.path.join(os.path.dirname(MODELS_DIR), "docs")
MAPPING_PATH = os.path.join(DOCS_DIR, "MAPPING.md")
REQUIRED_DEVIATIONS = ("bounded search", "exponent unification", "scrambling parameter")

_ROW = re.compile(r"^\|(.+)\|\s*$")
_SEPARATOR = re.compile(r"^\|[\s:|-]+\|\s*$")


class MappingError(Exception):
    pass


@dataclass(frozen=True)
class MappingRow:
    corpus_id: str
    file: str
    anchor: str
    expectation: str
    notes: str


def _cells(line: str) -> List[str]:
    return [c.strip().strip("`") for c in _ROW.match(line).group(1).split("|")]


def read_mapping(path: str = MAPPING_PATH) -> List[MappingRow]:
    """Rows of the first table in the mapping document."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            lines = f.read().splitlines()
    except OSError as e:
        raise MappingError(f"cannot read {path}: {e}") from e
    rows: List[MappingRow] = []
    header: Optional[List[str]] = None
    for line in lines:
        if not _ROW.match(line):
            if header is not None:
                break
            continue
        if _SEPARATOR.match(line):
            continue
        cells = _cells(line)
        if header is None:
            header = [c.lower() for c in cells]
            continue
        if len(cells) != len(header):
            raise MappingError(f"malformed mapping row: {line}")
        row = dict(zip(header, cells))
        rows.append(MappingRow(row.get("id", ""), row.get("file", ""), row.get("anchor", ""),
                               row.get("expectation", ""), row.get("notes", "")))
    if header is None:
        raise MappingError(f"no mapping table in {path}")
    return rows


_QUOTE = re.compile(r"'([^']+)'")


def _squash(text: str) -> str:
    return " ".join(text.split())


def _anchor_problems(row: MappingRow, models_dir: str) -> List[str]:
    """An anchor must quote a fragment that the cited model file contains."""
    if not row.anchor:
        return [f"mapping row {row.corpus_id} has no anchor"]
    quotes = _QUOTE.findall(row.anchor)
    if not quotes:
        return [f"mapping row {row.corpus_id} anchor quotes no model fragment"]
    path = os.path.join(models_dir, row.file)
    if not os.path.exists(path):
        return []
    with open(path, "r", encoding="utf-8") as f:
        source = _squash(f.read())
    return [f"mapping row {row.corpus_id} quotes '{q}', not found in {row.file}"
            for q in quotes if _squash(q) not in source]


def _deviations_text(path: str) -> str:
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    m = re.search(r"^## Deviations\s*$(.*?)(?=^## |\Z)", text, re.M | re.S)
    return m.group(1).lower() if m else ""


def check_mapping_complete(manifest_path: str = MANIFEST_PATH, mapping_path: str = MAPPING_PATH,
                           models_dir: str = MODELS_DIR) -> List[str]:
    """Omissions found; an empty list means the mapping is complete."""
    entries = corpus(manifest_path)
    rows = read_mapping(mapping_path)
    problems: List[str] = []
    by_id: Dict[str, List[MappingRow]] = {}
    for row in rows:
        by_id.setdefault(row.corpus_id, []).append(row)
    for entry in entries:
        found = by_id.get(entry.id, [])
        if not found:
            problems.append(f"corpus entry {entry.id} has no mapping row")
        elif len(found) > 1:
            problems.append(f"corpus entry {entry.id} has {len(found)} mapping rows")
        elif found[0].file != entry.file:
            problems.append(f"mapping row {entry.id} cites {found[0].file}, manifest says {entry.file}")
    known = {e.id for e in entries}
    for row in rows:
        if row.corpus_id not in known:
            problems.append(f"mapping row {row.corpus_id} has no corpus entry")
        if not os.path.exists(os.path.join(models_dir, row.file)):
            problems.append(f"mapping row {row.corpus_id} cites missing file {row.file}")
        problems.extend(_anchor_problems(row, models_dir))
    deviations = _deviations_text(mapping_path)
    for topic in REQUIRED_DEVIATIONS:
        if topic not in deviations:
            problems.append(f"deviations section does not cover {topic}")
    for p in problems:
        logger.warning(p)
    return problems
