"""AST-based extraction of per-function type hints from Python source files.

Walks every function/method definition (including nested ones, excluding
lambdas) and records the natural information (function and argument name
tokens) and code context (argument usage statements, return statements)
needed to build trainable datapoints, plus the raw annotations that become
supervision labels after normalization and filtering.
"""

from __future__ import annotations

import ast
import io
import json
import logging
import re
import tokenize
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional

from .errors import UnparsableAnnotation

log = logging.getLogger("typesim.extraction")

# Pure English function words only; code-significant names like "self",
# "get" or "data" must survive tokenization.
STOP_WORDS = frozenset({
    "a", "an", "the", "of", "in", "on", "at", "to", "for", "with", "by",
    "from", "as", "is", "are", "was", "were", "be", "been", "being", "am",
    "and", "or", "nor", "not", "no", "if", "then", "else", "than", "that",
    "this", "these", "those", "it", "its", "his", "her", "their", "my",
    "your", "our", "into", "onto", "over", "under", "about", "during",
    "through", "while", "do", "does", "did", "so", "such", "too", "very",
})

# Alias resolution applied at every constructor position of an annotation.
TYPE_ALIASES = {
    "Text": "str",
    "List": "List",
    "list": "List",
    "dict": "Dict",
    "tuple": "Tuple",
    "set": "Set",
    "frozenset": "FrozenSet",
    "type": "Type",
}

_CAMEL_SPLIT = re.compile(
    r"[A-Z]+(?=[A-Z][a-z])|[A-Z][a-z]*|[a-z]+|[0-9]+"
)

RECEIVER_NAMES = frozenset({"self", "cls"})

# Label drop reasons tallied in the extraction report.
DROP_UNPARSABLE = "unparsable_annotation"
DROP_ANY_OR_NONE = "any_or_none"
DROP_DUNDER_RETURN = "dunder_return"


@dataclass(frozen=True)
class CanonicalType:
    """A normalized annotation plus its outermost constructor."""

    canonical: str
    base: str

    def __str__(self) -> str:
        return self.canonical


@dataclass
class ArgumentRecord:
    """One function parameter: name tokens, raw annotation, usage statements."""

    name: str
    name_tokens: list[str]
    raw_annotation: Optional[str] = None
    usage_sequences: list[list[str]] = field(default_factory=list)
    label: Optional[CanonicalType] = None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "name_tokens": self.name_tokens,
            "raw_annotation": self.raw_annotation,
            "usage_sequences": self.usage_sequences,
            "label": self.label.canonical if self.label else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ArgumentRecord":
        rec = cls(
            name=d["name"],
            name_tokens=list(d["name_tokens"]),
            raw_annotation=d.get("raw_annotation"),
            usage_sequences=[list(s) for s in d.get("usage_sequences", [])],
        )
        if d.get("label"):
            rec.label = normalize_annotation(d["label"])
        return rec


@dataclass
class FunctionRecord:
    """One function/method definition and everything extracted from it."""

    module_path: str
    qualified_name: str
    name: str
    name_tokens: list[str]
    arguments: list[ArgumentRecord]
    return_exprs: list[list[str]]
    return_annotation: Optional[str] = None
    source_span: tuple[int, int] = (0, 0)
    return_label: Optional[CanonicalType] = None

    def to_dict(self) -> dict:
        return {
            "module_path": self.module_path,
            "qualified_name": self.qualified_name,
            "name": self.name,
            "name_tokens": self.name_tokens,
            "arguments": [a.to_dict() for a in self.arguments],
            "return_exprs": self.return_exprs,
            "return_annotation": self.return_annotation,
            "source_span": list(self.source_span),
            "return_label": self.return_label.canonical if self.return_label else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FunctionRecord":
        rec = cls(
            module_path=d["module_path"],
            qualified_name=d["qualified_name"],
            name=d["name"],
            name_tokens=list(d["name_tokens"]),
            arguments=[ArgumentRecord.from_dict(a) for a in d["arguments"]],
            return_exprs=[list(s) for s in d["return_exprs"]],
            return_annotation=d.get("return_annotation"),
            source_span=tuple(d.get("source_span", (0, 0))),
        )
        if d.get("return_label"):
            rec.return_label = normalize_annotation(d["return_label"])
        return rec


def _lemmatize(token: str) -> str:
    """Rule lemmatizer: strip 'ing'/'ed'/'es'/'s' when a stem of >= 3 chars remains."""
    for suffix in ("ing", "ed", "es", "s"):
        if token.endswith(suffix) and len(token) - len(suffix) >= 3:
            if suffix == "s" and token.endswith("ss"):
                continue
            return token[: -len(suffix)]
    return token


def tokenize_identifier(raw: str, lemmatize: bool = True) -> list[str]:
    """Split an identifier on underscores, camel-case and digit boundaries.

    Tokens are lowercased, stop words removed, and (by default) passed
    through the rule lemmatizer. An empty result is permitted.
    """
    tokens = []
    for part in raw.split("_"):
        if not part:
            continue
        tokens.extend(m.group(0).lower() for m in _CAMEL_SPLIT.finditer(part))
    tokens = [t for t in tokens if t not in STOP_WORDS]
    if lemmatize:
        tokens = [_lemmatize(t) for t in tokens]
    return tokens


def _alias(name: str) -> str:
    return TYPE_ALIASES.get(name, name)


def _render_annotation(node: ast.expr) -> str:
    """Render an annotation AST node into canonical textual form."""
    if isinstance(node, ast.Name):
        return _alias(node.id)
    if isinstance(node, ast.Attribute):
        return f"{_render_annotation(node.value)}.{node.attr}"
    if isinstance(node, ast.Constant):
        if node.value is None:
            return "None"
        if node.value is Ellipsis:
            return "..."
        if isinstance(node.value, str):
            # Forward reference: normalize its content recursively.
            return _parse_annotation_text(node.value)
        return repr(node.value)
    if isinstance(node, ast.Subscript):
        head = _render_annotation(node.value)
        return f"{head}[{_render_annotation(node.slice)}]"
    if isinstance(node, ast.Tuple):
        return ", ".join(_render_annotation(e) for e in node.elts)
    if isinstance(node, ast.List):
        if not node.elts:
            return "List"
        inner = ", ".join(_render_annotation(e) for e in node.elts)
        return f"List[{inner}]"
    if isinstance(node, ast.Dict):
        if not node.keys:
            return "Dict"
        pairs = []
        for k, v in zip(node.keys, node.values):
            if k is None:
                raise UnparsableAnnotation("dict-unpacking inside annotation")
            pairs.append(f"{_render_annotation(k)}, {_render_annotation(v)}")
        return f"Dict[{', '.join(pairs)}]"
    if isinstance(node, ast.BinOp) and isinstance(node.op, ast.BitOr):
        # PEP 604 unions keep their syntax and normalize both sides.
        return f"{_render_annotation(node.left)} | {_render_annotation(node.right)}"
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.USub):
        return f"-{_render_annotation(node.operand)}"
    if isinstance(node, ast.Starred):
        return f"*{_render_annotation(node.value)}"
    raise UnparsableAnnotation(
        f"unsupported annotation construct {type(node).__name__}"
    )


def _parse_annotation_text(raw: str) -> str:
    raw = raw.strip()
    if not raw:
        raise UnparsableAnnotation("empty annotation")
    try:
        tree = ast.parse(raw, mode="eval")
    except SyntaxError as exc:
        raise UnparsableAnnotation(f"{raw!r}: {exc}") from exc
    return _render_annotation(tree.body)


def normalize_annotation(raw: str) -> CanonicalType:
    """Normalize a raw annotation string into its canonical form.

    Applies the alias table at every constructor position, normalizes
    whitespace (no spaces around brackets, one space after commas) and
    computes the base constructor by stripping from the first '['.
    Normalization is idempotent.
    """
    canonical = _parse_annotation_text(raw)
    bracket = canonical.find("[")
    base = canonical if bracket < 0 else canonical[:bracket]
    return CanonicalType(canonical=canonical, base=base.strip())


def tokenize_statement(source: str) -> list[str]:
    """Lex a statement into code-context tokens.

    Names keep their exact spelling (so usage detection can match argument
    identifiers), numbers and strings collapse to '<num>'/'<str>', operator
    tokens keep their text, comments and layout tokens are dropped.
    """
    tokens: list[str] = []
    try:
        for tok in tokenize.generate_tokens(io.StringIO(source).readline):
            if tok.type == tokenize.NAME:
                tokens.append(tok.string)
            elif tok.type == tokenize.NUMBER:
                tokens.append("<num>")
            elif tok.type == tokenize.STRING:
                tokens.append("<str>")
            elif tok.type == tokenize.OP:
                tokens.append(tok.string)
    except (tokenize.TokenError, IndentationError):
        # Unterminated constructs from unparse artifacts: fall back to words.
        tokens = re.findall(r"[A-Za-z_][A-Za-z0-9_]*", source)
    return tokens


class _UsageCollector(ast.NodeVisitor):
    """Collects per-statement token sequences from a function body.

    Compound statements contribute their header expressions (test, iter,
    with-items) as one pseudo-statement; simple statements contribute their
    full token sequence. Nested function/class bodies are visited too, since
    closures may use the enclosing function's arguments.
    """

    def __init__(self) -> None:
        self.statements: list[list[str]] = []
        self.return_statements: list[list[str]] = []

    def _add(self, node_or_nodes) -> None:
        nodes = node_or_nodes if isinstance(node_or_nodes, list) else [node_or_nodes]
        parts = []
        for n in nodes:
            try:
                parts.append(ast.unparse(n))
            except Exception:  # pragma: no cover - defensive
                continue
        tokens = tokenize_statement(" ".join(parts))
        if tokens:
            self.statements.append(tokens)

    def visit_Return(self, node: ast.Return) -> None:
        tokens = tokenize_statement(ast.unparse(node))
        if tokens:
            self.statements.append(tokens)
            self.return_statements.append(tokens)

    def visit_If(self, node: ast.If) -> None:
        self._add(node.test)
        for child in node.body + node.orelse:
            self.visit(child)

    def visit_While(self, node: ast.While) -> None:
        self._add(node.test)
        for child in node.body + node.orelse:
            self.visit(child)

    def visit_For(self, node: ast.For) -> None:
        self._add([node.target, node.iter])
        for child in node.body + node.orelse:
            self.visit(child)

    visit_AsyncFor = visit_For

    def visit_With(self, node: ast.With) -> None:
        self._add(list(node.items))
        for child in node.body:
            self.visit(child)

    visit_AsyncWith = visit_With

    def visit_Try(self, node: ast.Try) -> None:
        for child in node.body + node.orelse + node.finalbody:
            self.visit(child)
        for handler in node.handlers:
            for child in handler.body:
                self.visit(child)

    def visit_FunctionDef(self, node: ast.FunctionDef) -> None:
        # Header only; the nested body is visited for closure usages.
        for child in node.body:
            self.visit(child)

    visit_AsyncFunctionDef = visit_FunctionDef

    def visit_ClassDef(self, node: ast.ClassDef) -> None:
        for child in node.body:
            self.visit(child)

    def generic_visit(self, node: ast.AST) -> None:
        if isinstance(node, ast.stmt):
            self._add(node)
        else:
            super().generic_visit(node)


def _iter_parameters(args: ast.arguments) -> Iterator[ast.arg]:
    yield from args.posonlyargs
    yield from args.args
    if args.vararg:
        yield args.vararg
    yield from args.kwonlyargs
    if args.kwarg:
        yield args.kwarg


def _extract_function(
    node: ast.FunctionDef | ast.AsyncFunctionDef,
    module_path: str,
    qualname: str,
    lemmatize: bool,
) -> FunctionRecord:
    collector = _UsageCollector()
    for stmt in node.body:
        collector.visit(stmt)

    arguments = []
    for arg in _iter_parameters(node.args):
        usages = [
            seq for seq in collector.statements if arg.arg in seq
        ]
        arguments.append(
            ArgumentRecord(
                name=arg.arg,
                name_tokens=tokenize_identifier(arg.arg, lemmatize=lemmatize),
                raw_annotation=ast.unparse(arg.annotation) if arg.annotation else None,
                usage_sequences=usages,
            )
        )

    return FunctionRecord(
        module_path=module_path,
        qualified_name=qualname,
        name=node.name,
        name_tokens=tokenize_identifier(node.name, lemmatize=lemmatize),
        arguments=arguments,
        return_exprs=collector.return_statements,
        return_annotation=ast.unparse(node.returns) if node.returns else None,
        source_span=(node.lineno, node.end_lineno or node.lineno),
    )


def parse_module(
    source_text: str, module_path: str | Path, lemmatize: bool = True
) -> list[FunctionRecord]:
    """Parse one module and return a record per function/method definition.

    Nested functions produce their own records; lambdas are excluded.
    Raises SyntaxError for unparsable sources (callers skip and log).
    """
    tree = ast.parse(source_text)
    module_path = str(module_path)
    records: list[FunctionRecord] = []

    def walk(body: Iterable[ast.stmt], prefix: str) -> None:
        for node in body:
            if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef)):
                qualname = f"{prefix}{node.name}" if prefix else node.name
                records.append(
                    _extract_function(node, module_path, qualname, lemmatize)
                )
                walk(node.body, f"{qualname}.")
            elif isinstance(node, ast.ClassDef):
                cls_prefix = f"{prefix}{node.name}." if prefix else f"{node.name}."
                walk(node.body, cls_prefix)
            elif isinstance(node, (ast.If, ast.While, ast.For, ast.AsyncFor)):
                walk(node.body, prefix)
                walk(node.orelse, prefix)
            elif isinstance(node, (ast.With, ast.AsyncWith)):
                walk(node.body, prefix)
            elif isinstance(node, ast.Try):
                walk(node.body, prefix)
                walk(node.orelse, prefix)
                walk(node.finalbody, prefix)
                for handler in node.handlers:
                    walk(handler.body, prefix)

    walk(tree.body, "")
    return records


def _is_dunder(name: str) -> bool:
    return name.startswith("__") and name.endswith("__") and len(name) > 4


@dataclass
class ExtractionReport:
    """Counters accumulated over a corpus extraction run."""

    files_total: int = 0
    files_parsed: int = 0
    files_skipped_syntax: int = 0
    functions: int = 0
    arguments: int = 0
    annotated_arguments: int = 0
    annotated_returns: int = 0
    labeled_arguments: int = 0
    labeled_returns: int = 0
    label_drops: dict = field(default_factory=dict)

    def drop(self, reason: str) -> None:
        self.label_drops[reason] = self.label_drops.get(reason, 0) + 1

    def to_dict(self) -> dict:
        return {
            "files_total": self.files_total,
            "files_parsed": self.files_parsed,
            "files_skipped_syntax": self.files_skipped_syntax,
            "functions": self.functions,
            "arguments": self.arguments,
            "annotated_arguments": self.annotated_arguments,
            "annotated_returns": self.annotated_returns,
            "labeled_arguments": self.labeled_arguments,
            "labeled_returns": self.labeled_returns,
            "label_drops": dict(sorted(self.label_drops.items())),
        }


def filter_and_label(
    records: list[FunctionRecord], report: Optional[ExtractionReport] = None
) -> list[FunctionRecord]:
    """Attach supervision labels, applying the pre-processing exclusions.

    Return slots of dunder-named functions are never labeled; argument and
    return annotations normalizing to Any or None lose their label (the
    datapoint itself survives as unsupervised); unparsable annotations are
    dropped and counted.
    """
    report = report if report is not None else ExtractionReport()

    def to_label(raw: Optional[str]) -> Optional[CanonicalType]:
        if raw is None:
            return None
        try:
            canonical = normalize_annotation(raw)
        except UnparsableAnnotation:
            report.drop(DROP_UNPARSABLE)
            return None
        if canonical.canonical in ("Any", "None"):
            report.drop(DROP_ANY_OR_NONE)
            return None
        return canonical

    for record in records:
        report.functions += 1
        for arg in record.arguments:
            report.arguments += 1
            if arg.raw_annotation is not None:
                report.annotated_arguments += 1
            arg.label = to_label(arg.raw_annotation)
            if arg.label is not None:
                report.labeled_arguments += 1
        if record.return_annotation is not None:
            report.annotated_returns += 1
        if _is_dunder(record.name):
            if record.return_annotation is not None:
                report.drop(DROP_DUNDER_RETURN)
            record.return_label = None
        else:
            record.return_label = to_label(record.return_annotation)
            if record.return_label is not None:
                report.labeled_returns += 1
    return records


def iter_corpus_files(corpus_root: str | Path) -> list[Path]:
    """All .py files under a corpus root, sorted for determinism."""
    root = Path(corpus_root)
    return sorted(p for p in root.rglob("*.py") if p.is_file())


def extract_corpus(
    corpus_root: str | Path,
    files: Optional[Iterable[Path]] = None,
    lemmatize: bool = True,
) -> tuple[list[FunctionRecord], ExtractionReport]:
    """Extract and label records from every parseable file under a root.

    Files failing to parse are skipped and counted; the merge order is the
    sorted module path order, so repeated runs are byte-identical.
    """
    root = Path(corpus_root)
    report = ExtractionReport()
    records: list[FunctionRecord] = []
    file_list = sorted(files) if files is not None else iter_corpus_files(root)
    for path in file_list:
        report.files_total += 1
        rel = str(path.relative_to(root)) if path.is_absolute() else str(path)
        try:
            source = Path(root, rel).read_text(encoding="utf-8")
            module_records = parse_module(source, rel, lemmatize=lemmatize)
        except (SyntaxError, UnicodeDecodeError, ValueError) as exc:
            report.files_skipped_syntax += 1
            log.warning("skipping %s: %s", rel, exc)
            continue
        report.files_parsed += 1
        records.extend(module_records)
    filter_and_label(records, report)
    return records, report


def save_records(records: list[FunctionRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")


def load_records(path: str | Path) -> list[FunctionRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                records.append(FunctionRecord.from_dict(json.loads(line)))
    return records
