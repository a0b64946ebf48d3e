import pytest

from srp3.mapping import MAPPING_PATH, MappingError, check_mapping_complete, read_mapping


@pytest.fixture
def mapping_text():
    with open(MAPPING_PATH, "r", encoding="utf-8") as f:
        return f.read()


def write(tmp_path, text):
    path = tmp_path / "MAPPING.md"
    path.write_text(text)
    return str(path)


def test_shipped_mapping_is_complete():
    assert check_mapping_complete() == []


def test_rows_follow_the_manifest():
    rows = read_mapping()
    assert [r.corpus_id for r in rows] == ["1", "2", "3", "4", "5", "6a", "6b", "7"]
    assert rows[3].file == "srp3-listener-x.lisp"
    assert all(r.anchor for r in rows)


def test_deleted_row_is_reported(tmp_path, mapping_text):
    text = "\n".join(line for line in mapping_text.splitlines() if not line.startswith("| 6b "))
    problems = check_mapping_complete(mapping_path=write(tmp_path, text))
    assert problems == ["corpus entry 6b has no mapping row"]


def test_duplicate_row_is_reported(tmp_path, mapping_text):
    row = next(line for line in mapping_text.splitlines() if line.startswith("| 4 "))
    text = mapping_text.replace(row, row + "\n" + row)
    problems = check_mapping_complete(mapping_path=write(tmp_path, text))
    assert "corpus entry 4 has 2 mapping rows" in problems


def test_dangling_file_is_reported(tmp_path, mapping_text):
    text = mapping_text.replace("`srp3-malserver.lisp`", "`srp3-evil.lisp`")
    problems = check_mapping_complete(mapping_path=write(tmp_path, text))
    assert "mapping row 7 cites missing file srp3-evil.lisp" in problems
    assert any("manifest says srp3-malserver.lisp" in p for p in problems)


def test_missing_deviation_topic_is_reported(tmp_path, mapping_text):
    text = mapping_text.replace("Bounded search", "Depth-first exploration")
    problems = check_mapping_complete(mapping_path=write(tmp_path, text))
    assert problems == ["deviations section does not cover bounded search"]


def test_document_without_table(tmp_path):
    with pytest.raises(MappingError):
        read_mapping(write(tmp_path, "# Nothing here\n"))


def test_missing_document(tmp_path):
    with pytest.raises(MappingError):
        read_mapping(str(tmp_path / "absent.md"))


def test_every_anchor_quotes_its_model(models_dir):
    for row in read_mapping():
        with open(f"{models_dir}/{row.file}", "r", encoding="utf-8") as f:
            source = " ".join(f.read().split())
        quote = row.anchor.split("'")[1]
        assert quote in source, (row.corpus_id, quote)


def test_anchor_without_quote_is_reported(tmp_path, mapping_text):
    text = mapping_text.replace("'(deflistener x)'", "the x listener")
    problems = check_mapping_complete(mapping_path=write(tmp_path, text))
    assert problems == ["mapping row 4 anchor quotes no model fragment"]


def test_anchor_quoting_another_file_is_reported(tmp_path, mapping_text):
    text = mapping_text.replace("'(deflistener v)'", "'(deflistener x)'")
    problems = check_mapping_complete(mapping_path=write(tmp_path, text))
    assert problems == ["mapping row 5 quotes '(deflistener x)', not found in srp3-listener-v.lisp"]
