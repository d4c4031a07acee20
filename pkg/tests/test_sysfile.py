import pytest

from flatlas.sysfile import (
    SystemFileError,
    corpus_file,
    corpus_names,
    load_system,
    parse_system,
    render_system,
)

GOOD = """\
system tiny   # comment
states x1 x2
controls u1
f0 = [x2, 0]
f1 = [0, 1]
point p: x=1/2,0.25, u=0
candidate c: k=1, psi=[x1]
"""


def test_parse_small_file():
    sf = parse_system(GOOD)
    assert sf.name == "tiny" and sf.states == ["x1", "x2"]
    assert sf.points["p"]["x"][1] == 0.25
    assert sf.candidates["c"].kind == "generic"
    assert sf.system().n == 2


def test_corpus_is_bundled():
    assert corpus_names() == ["example1.sys", "example2.sys", "example3.sys"]
    assert corpus_file("missing.sys") is None
    assert load_system("example3.sys").candidates["z"].a == [1, 2]


@pytest.mark.parametrize("name", ["example1.sys", "example2.sys", "example3.sys"])
def test_render_roundtrip(name):
    sf = load_system(name)
    again = parse_system(render_system(sf))
    assert again == sf


def test_load_from_path(tmp_path):
    p = tmp_path / "tiny.sys"
    p.write_text(GOOD, encoding="utf-8")
    assert load_system(p).name == "tiny"
    with pytest.raises(FileNotFoundError):
        load_system(tmp_path / "nothing.sys")


@pytest.mark.parametrize("text,line,column", [
    (GOOD.replace("f0 = [x2, 0]", "f0 = [x2, y]"), 4, 11),
    (GOOD.replace("f1 = [0, 1]", "f1 = [0]"), 5, None),
    (GOOD.replace("x=1/2,0.25", "x=1/2"), 6, None),
    (GOOD.replace("f0 = [x2, 0]", "f0 = [x2, 0] junk"), 4, None),
    (GOOD.replace("k=1, psi", "psi"), 7, None),
], ids=["unknown-symbol", "short-field", "short-point", "trailing-junk", "candidate-kind"])
def test_errors_carry_location(text, line, column):
    with pytest.raises(SystemFileError) as info:
        parse_system(text)
    assert info.value.line == line
    if column is not None:
        assert info.value.column == column


def test_missing_fields():
    with pytest.raises(SystemFileError):
        parse_system("states x1 x2\ncontrols u1\nf0 = [0, 0]\n")
    with pytest.raises(SystemFileError):
        parse_system("controls u1\nf0 = [0]\nf1 = [1]\n")
