"""Shared fixtures: synthetic corpora with known type structure."""

from pathlib import Path

import numpy as np
import pytest

# Argument/function name suffixes that deterministically encode the type.
TYPE_MARKERS = [
    ("count", "int"),
    ("name", "str"),
    ("items", "List[str]"),
    ("mapping", "Dict[str, int]"),
    ("flag", "bool"),
]

_CONSONANTS = "bcdfghjklmnpqrstvwz"
_VOWELS = "aeiou"


def _prefix(i: int) -> str:
    """Unique letter-only prefix (digits or casing would split the token)."""
    n_c, n_v = len(_CONSONANTS), len(_VOWELS)
    c1 = _CONSONANTS[i % n_c]
    v1 = _VOWELS[(i // n_c) % n_v]
    c2 = _CONSONANTS[(i // (n_c * n_v)) % n_c]
    return f"{c1}{v1}{c2}olum"


_BODY_TEMPLATES = [
    (
        "    {p}_local = prepare({arg})\n"
        "    checked = validate({p}_local, {arg})\n"
        "    return convert(checked)\n"
    ),
    (
        "    staged = stage({arg})\n"
        "    {p}_ready = polish(staged)\n"
        "    return deliver({p}_ready)\n"
    ),
    (
        "    {p}_raw = ingest({arg})\n"
        "    cleaned = scrub({p}_raw, {arg})\n"
        "    return emit(cleaned)\n"
    ),
]


def generate_separable_corpus(
    root: Path, n_functions: int = 200, seed: int = 7
) -> dict:
    """Write one file per function; argument and function names carry a
    type-marking suffix, bodies use the argument through generic helpers.

    Held-out files get unseen prefixes, so the code context carries almost
    no transferable signal and identifiers dominate.
    """
    rng = np.random.default_rng(seed)
    root.mkdir(parents=True, exist_ok=True)
    labels = {}
    for i in range(n_functions):
        marker, type_name = TYPE_MARKERS[i % len(TYPE_MARKERS)]
        p = _prefix(i)
        arg = f"{p}_{marker}"
        body = _BODY_TEMPLATES[int(rng.integers(len(_BODY_TEMPLATES)))].format(
            p=p, arg=arg
        )
        source = (
            f"def get_{p}_{marker}({arg}: {type_name}) -> {type_name}:\n{body}"
        )
        filename = f"mod_{i:03d}.py"
        (root / filename).write_text(source, encoding="utf-8")
        labels[filename] = type_name
    return labels


@pytest.fixture(scope="session")
def separable_corpus(tmp_path_factory) -> tuple[Path, dict]:
    root = tmp_path_factory.mktemp("separable_corpus")
    labels = generate_separable_corpus(root, n_functions=200, seed=7)
    return root, labels


MINI_PROJECT = {
    "core/__init__.py": "from .grammar import *\n",
    "core/grammar.py": (
        "from core.tokens import Token\n"
        "class Grammar:\n"
        "    pass\n"
    ),
    "core/tokens.py": "class Token:\n    pass\n",
    "app.py": (
        "import numpy as np\n"
        "from core import *\n"
        "def visit(grammar: Grammar) -> None:\n"
        "    print(grammar)\n"
    ),
}


@pytest.fixture()
def mini_project(tmp_path) -> Path:
    root = tmp_path / "mini"
    for rel, text in MINI_PROJECT.items():
        path = root / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    return root
