"""Tests for import graph construction and visible-type resolution."""

import numpy as np
import pytest

from typesim.visible import (
    ImportGraph,
    VisibleTypeVocab,
    build_import_graph,
    build_vocab,
    module_name_for,
    scan_module_imports,
)


def graph_of(**sources):
    pairs = [(text, name.replace("__", "/") + ".py") for name, text in sources.items()]
    return build_import_graph(pairs)


def test_module_name_for():
    assert module_name_for("pkg/mod.py") == "pkg.mod"
    assert module_name_for("pkg/__init__.py") == "pkg"
    assert module_name_for("top.py") == "top"


def test_paper_edge_example():
    graph = graph_of(
        a="from B import Type\nfrom C.D import E\n",
        B="class Type: pass\n",
    )
    assert ("a", "B.Type") in graph.edges
    assert ("a", "C.D.E") in graph.edges


def test_no_imports_no_edges():
    graph = graph_of(a="x = 1\n")
    assert not any(src == "a" for src, _ in graph.edges)
    assert graph.visible_types_for("a") == set()


def test_single_hop_visibility():
    graph = graph_of(
        a="from B import Type\n",
        B="class Type: pass\nclass Hidden: pass\n",
    )
    visible = graph.visible_types_for("a")
    assert "B.Type" in visible
    # Traversal into B also surfaces B's other definitions.
    assert "B.Hidden" in visible


def test_local_definition_visible():
    graph = graph_of(m="class Grammar: pass\n")
    assert graph.visible_types_for("m") == {"m.Grammar"}


def test_two_hop_wildcard_chain():
    graph = graph_of(
        a="from b import *\n",
        b="from c import T\n",
        c="class T: pass\n",
    )
    assert "c.T" in graph.visible_types_for("a")
    # The wildcard-bound name resolves to the defining module.
    assert graph.resolve_symbol("a", "T") == "c.T"


def test_alias_resolution_numpy():
    graph = graph_of(a="import numpy as np\n")
    assert graph.resolve_type_name("a", "np.array") == "numpy.array"


def test_alias_injectivity():
    src = "from B import Type as T1\nfrom B import Type as T2\n"
    graph = graph_of(a=src, B="class Type: pass\n")
    assert graph.resolve_symbol("a", "T1") == graph.resolve_symbol("a", "T2") == "B.Type"


def test_external_import_literal_leaf():
    graph = graph_of(a="from torch import Tensor\nfrom tf import Tensor as TfT\n")
    visible = graph.visible_types_for("a")
    assert "torch.Tensor" in visible
    assert "tf.Tensor" in visible
    assert "torch.Tensor.*" not in visible
    assert any("torch.Tensor" in u for u in graph.unresolved)


def test_relative_import_resolution():
    graph = build_import_graph(
        [
            ("from . import util\nfrom .util import Helper\n", "pkg/mod.py"),
            ("class Helper: pass\n", "pkg/util.py"),
        ]
    )
    assert graph.resolve_symbol("pkg.mod", "Helper") == "pkg.util.Helper"
    assert "pkg.util.Helper" in graph.visible_types_for("pkg.mod")


def test_newtype_and_alias_declarations():
    src = (
        "from typing import NewType\n"
        "import numpy as np\n"
        "UserId = NewType('UserId', int)\n"
        "Arr = np.ndarray\n"
    )
    info = scan_module_imports(src, "m.py")
    assert info.newtypes == ["UserId"]
    assert info.type_aliases == {"Arr": "np.ndarray"}
    graph = build_import_graph([(src, "m.py")])
    visible = graph.visible_types_for("m")
    assert "m.UserId" in visible
    assert "numpy.ndarray" in visible


def test_wildcard_respects_all_exports():
    graph = graph_of(
        a="from b import *\n",
        b="__all__ = ['Exported']\nclass Exported: pass\n",
    )
    assert graph.resolve_symbol("a", "Exported") == "b.Exported"


def test_cycle_terminates():
    graph = graph_of(
        a="from b import X\nclass A: pass\n",
        b="from a import A\nclass X: pass\n",
    )
    visible = graph.visible_types_for("a")
    assert {"a.A", "b.X"} <= visible


def test_visibility_monotone_under_added_edge():
    base = graph_of(a="class A: pass\n", b="class B: pass\n")
    extended = graph_of(a="import b\nclass A: pass\n", b="class B: pass\n")
    for mod in ("a", "b"):
        assert base.visible_types_for(mod) <= extended.visible_types_for(mod)


def test_vocab_ranking_and_mask():
    graph = graph_of(
        a="from shared import Common\nclass OnlyA: pass\n",
        b="from shared import Common\n",
        shared="class Common: pass\n",
    )
    vocab, visible_sets = build_vocab(graph, size=2)
    # shared.Common is visible from a, b and shared itself: rank first.
    assert vocab.entries[0] == "shared.Common"
    assert len(vocab.entries) == 2

    mask = vocab.mask_vector(visible_sets["b"])
    assert mask.shape == (3,)
    assert mask[0] == 1

    in_vocab_only = vocab.mask_vector({"shared.Common"})
    assert in_vocab_only[vocab.index_of_other] == 0

    with_oov = vocab.mask_vector({"shared.Common", "zzz.NotThere"})
    assert with_oov[vocab.index_of_other] == 1

    empty = vocab.mask_vector(set())
    assert empty[vocab.index_of_other] == 1
    assert empty.sum() == 1


def test_mask_always_has_a_set_bit():
    vocab = VisibleTypeVocab(entries=["x.T"])
    for types in (set(), {"x.T"}, {"unknown.U"}, {"x.T", "unknown.U"}):
        assert vocab.mask_vector(types).sum() >= 1


def test_graph_roundtrip(tmp_path):
    graph = graph_of(
        a="from b import *\nimport numpy as np\n",
        b="class T: pass\n",
    )
    path = tmp_path / "graph.json"
    graph.save(path)
    loaded = ImportGraph.load(path)
    assert loaded.visible_types_for("a") == graph.visible_types_for("a")
    assert loaded.resolve_type_name("a", "np.float64") == "numpy.float64"
