"""Tests for AST extraction, identifier tokenization and annotation handling."""

import pytest
from hypothesis import given, strategies as st

from typesim.errors import UnparsableAnnotation
from typesim.extraction import (
    ExtractionReport,
    filter_and_label,
    normalize_annotation,
    parse_module,
    tokenize_identifier,
    tokenize_statement,
)

SQL_VISITOR = '''
class SqlVisitor(NodeVisitor):
    def __init__(self, grammar: Grammar) -> None:
        self.action_sequence: List[str] = []
        self.grammar: Grammar = grammar
'''


def test_parse_module_method_record():
    records = parse_module(SQL_VISITOR, "sql.py")
    assert len(records) == 1
    rec = records[0]
    assert rec.qualified_name == "SqlVisitor.__init__"
    assert [a.name for a in rec.arguments] == ["self", "grammar"]
    grammar = rec.arguments[1]
    assert grammar.raw_annotation == "Grammar"
    assert rec.return_annotation == "None"
    assert rec.name_tokens == ["init"]


def test_parse_module_empty_file():
    assert parse_module("", "empty.py") == []


def test_parse_module_unannotated_function():
    records = parse_module("def foo(a, b):\n    return a + b\n", "m.py")
    assert len(records) == 1
    rec = records[0]
    assert len(rec.arguments) == 2
    assert all(a.raw_annotation is None for a in rec.arguments)
    assert rec.return_annotation is None
    assert len(rec.return_exprs) == 1
    assert "a" in rec.return_exprs[0]


def test_parse_module_nested_functions_and_lambdas():
    src = (
        "def outer(x):\n"
        "    f = lambda v: v + x\n"
        "    def inner(y):\n"
        "        return y\n"
        "    return inner\n"
    )
    records = parse_module(src, "m.py")
    names = [r.qualified_name for r in records]
    assert names == ["outer", "outer.inner"]


def test_usage_sequences_lexical_identifier_match():
    src = (
        "def f(count, counter):\n"
        "    total = count + 1\n"
        "    print(counter)\n"
        "    recount = 2\n"
    )
    rec = parse_module(src, "m.py")[0]
    count_usages = rec.arguments[0].usage_sequences
    # 'recount' and 'counter' must not match as substrings of statements.
    assert len(count_usages) == 1
    assert "count" in count_usages[0]
    counter_usages = rec.arguments[1].usage_sequences
    assert len(counter_usages) == 1
    for arg in rec.arguments:
        for seq in arg.usage_sequences:
            assert arg.name in seq


def test_usage_in_compound_statement_header():
    src = (
        "def f(items):\n"
        "    for it in items:\n"
        "        print(it)\n"
    )
    rec = parse_module(src, "m.py")[0]
    assert len(rec.arguments[0].usage_sequences) == 1


def test_return_statements_tokenized():
    src = (
        "def get_current_date(self):\n"
        "    args = self.parsers.parse_args()\n"
        "    return args.get('current_date')\n"
    )
    rec = parse_module(src, "m.py")[0]
    assert rec.name_tokens == ["get", "current", "date"]
    assert len(rec.return_exprs) == 1
    assert rec.return_exprs[0][0] == "return"
    assert "<str>" in rec.return_exprs[0]


@pytest.mark.parametrize(
    "raw,expected",
    [
        ("get_current_date", ["get", "current", "date"]),
        ("rowCount", ["row", "count"]),
        ("SqlVisitor", ["sql", "visitor"]),
        ("__init__", ["init"]),
        ("HTTPServer2", ["http", "server", "2"]),
        ("self", ["self"]),
    ],
)
def test_tokenize_identifier(raw, expected):
    assert tokenize_identifier(raw) == expected


def test_tokenize_identifier_stop_words_and_lemmas():
    assert tokenize_identifier("list_of_items") == ["list", "item"]
    assert tokenize_identifier("is_valid") == ["valid"]
    assert tokenize_identifier("parsed_classes") == ["pars", "class"]
    # Lemmatization can be disabled.
    assert tokenize_identifier("parsed_classes", lemmatize=False) == [
        "parsed",
        "classes",
    ]


@given(st.from_regex(r"[A-Za-z_][A-Za-z0-9_]{0,30}", fullmatch=True))
def test_tokenize_identifier_deterministic(raw):
    assert tokenize_identifier(raw) == tokenize_identifier(raw)


@pytest.mark.parametrize(
    "raw,canonical,base",
    [
        ("[]", "List", "List"),
        ("{}", "Dict", "Dict"),
        ("Text", "str", "str"),
        ("Dict[str, List[int]]", "Dict[str, List[int]]", "Dict"),
        ("dict[str,list[int]]", "Dict[str, List[int]]", "Dict"),
        ("List [ int ]", "List[int]", "List"),
        ("Optional['Grammar']", "Optional[Grammar]", "Optional"),
        ("Callable[..., int]", "Callable[..., int]", "Callable"),
        ("tuple[int, ...]", "Tuple[int, ...]", "Tuple"),
        ("np.ndarray", "np.ndarray", "np.ndarray"),
        ("int | None", "int | None", "int | None"),
        ("None", "None", "None"),
    ],
)
def test_normalize_annotation(raw, canonical, base):
    result = normalize_annotation(raw)
    assert result.canonical == canonical
    assert result.base == base
    assert "[" not in result.base


def test_normalize_annotation_idempotent_on_examples():
    for raw in ("[]", "{}", "Text", "Dict[ str ,List[ Text ]]", "list"):
        once = normalize_annotation(raw)
        twice = normalize_annotation(once.canonical)
        assert once == twice


def test_normalize_annotation_unparsable():
    with pytest.raises(UnparsableAnnotation):
        normalize_annotation("def not-a-type(")
    with pytest.raises(UnparsableAnnotation):
        normalize_annotation("")


def test_filter_and_label_dunder_and_any():
    src = (
        "def __len__(self) -> int:\n    return 1\n"
        "def use(x: Any, y: int) -> None:\n    return None\n"
        "def foo(x: int) -> str:\n    return 'a'\n"
    )
    records = parse_module(src, "m.py")
    report = ExtractionReport()
    filter_and_label(records, report)
    dunder, use, foo = records
    assert dunder.return_label is None
    assert use.arguments[0].label is None  # Any stripped
    assert use.arguments[1].label.canonical == "int"
    assert use.return_label is None  # None stripped
    assert foo.arguments[0].label.canonical == "int"
    assert foo.return_label.canonical == "str"
    assert report.label_drops["dunder_return"] == 1
    assert report.label_drops["any_or_none"] == 2


def test_filter_and_label_text_alias_labels():
    records = parse_module("def f(x: Text) -> Text:\n    return x\n", "m.py")
    filter_and_label(records)
    assert records[0].arguments[0].label.canonical == "str"
    assert records[0].return_label.canonical == "str"


def test_tokenize_statement_names_exact():
    toks = tokenize_statement("total = rowCount + 2")
    assert toks == ["total", "=", "rowCount", "+", "<num>"]
