"""Import dependency graph and visible-type resolution.

A type is *visible* to a module if it is defined locally or reachable
through the module's (transitive) imports. Visible types are stored with
fully-qualified names so that e.g. tf.Tensor and torch.Tensor stay
distinct; wildcard imports are expanded against the target module's
exported names, and name aliasing (``import numpy as np``) is resolved.
"""

from __future__ import annotations

import ast
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

log = logging.getLogger("typesim.visible")

DEFAULT_VOCAB_SIZE = 1024


def module_name_for(relpath: str | Path) -> str:
    """Dotted module name for a corpus-relative path."""
    parts = list(Path(relpath).with_suffix("").parts)
    if parts and parts[-1] == "__init__":
        parts = parts[:-1]
    return ".".join(parts) if parts else "__root__"


@dataclass
class ModuleImports:
    """Statically collected import facts and local type definitions."""

    name: str
    is_package: bool = False
    local_classes: list[str] = field(default_factory=list)
    newtypes: list[str] = field(default_factory=list)
    # alias name -> raw dotted target text, or None for composite targets
    type_aliases: dict[str, Optional[str]] = field(default_factory=dict)
    # (target module, symbol, local name)
    from_imports: list[tuple[str, str, str]] = field(default_factory=list)
    # (target module, local name)
    module_imports: list[tuple[str, str]] = field(default_factory=list)
    wildcard_imports: list[str] = field(default_factory=list)
    all_exports: Optional[list[str]] = None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "is_package": self.is_package,
            "local_classes": self.local_classes,
            "newtypes": self.newtypes,
            "type_aliases": self.type_aliases,
            "from_imports": [list(t) for t in self.from_imports],
            "module_imports": [list(t) for t in self.module_imports],
            "wildcard_imports": self.wildcard_imports,
            "all_exports": self.all_exports,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModuleImports":
        return cls(
            name=d["name"],
            is_package=d.get("is_package", False),
            local_classes=list(d.get("local_classes", [])),
            newtypes=list(d.get("newtypes", [])),
            type_aliases=dict(d.get("type_aliases", {})),
            from_imports=[tuple(t) for t in d.get("from_imports", [])],
            module_imports=[tuple(t) for t in d.get("module_imports", [])],
            wildcard_imports=list(d.get("wildcard_imports", [])),
            all_exports=d.get("all_exports"),
        )


def _dotted_name(node: ast.expr) -> Optional[str]:
    if isinstance(node, ast.Name):
        return node.id
    if isinstance(node, ast.Attribute):
        base = _dotted_name(node.value)
        return f"{base}.{node.attr}" if base else None
    return None


def _is_type_alias_target(node: ast.expr) -> bool:
    return isinstance(node, (ast.Name, ast.Attribute, ast.Subscript))


def _resolve_relative(module: ModuleImports, level: int, target: Optional[str]) -> Optional[str]:
    """Absolute module for a level-N relative import, or None if it escapes the root."""
    parts = module.name.split(".")
    pkg = parts if module.is_package else parts[:-1]
    if level - 1 > len(pkg):
        return None
    base = pkg[: len(pkg) - (level - 1)]
    if target:
        base = base + target.split(".")
    return ".".join(base) if base else None


def scan_module_imports(
    source_text: str, relpath: str | Path, is_package: Optional[bool] = None
) -> ModuleImports:
    """Collect imports, local classes, NewType declarations and type aliases."""
    if is_package is None:
        is_package = Path(relpath).name == "__init__.py"
    info = ModuleImports(name=module_name_for(relpath), is_package=is_package)
    tree = ast.parse(source_text)

    for node in tree.body:
        if isinstance(node, ast.ClassDef):
            info.local_classes.append(node.name)
        elif isinstance(node, ast.Assign) and len(node.targets) == 1:
            target = node.targets[0]
            if not isinstance(target, ast.Name):
                continue
            if target.id == "__all__" and isinstance(node.value, (ast.List, ast.Tuple)):
                info.all_exports = [
                    e.value
                    for e in node.value.elts
                    if isinstance(e, ast.Constant) and isinstance(e.value, str)
                ]
            elif (
                isinstance(node.value, ast.Call)
                and _dotted_name(node.value.func) in ("NewType", "typing.NewType")
            ):
                info.newtypes.append(target.id)
            elif _is_type_alias_target(node.value):
                info.type_aliases[target.id] = _dotted_name(node.value)

    # Imports may hide inside try/except or functions; walk the whole tree.
    for node in ast.walk(tree):
        if isinstance(node, ast.Import):
            for alias in node.names:
                local = alias.asname or alias.name.split(".")[0]
                bound = alias.name if alias.asname else alias.name.split(".")[0]
                info.module_imports.append((bound, local))
        elif isinstance(node, ast.ImportFrom):
            if node.level:
                resolved = _resolve_relative(info, node.level, node.module)
                target = resolved if resolved else (node.module or "?")
            else:
                target = node.module or "?"
            for alias in node.names:
                if alias.name == "*":
                    info.wildcard_imports.append(target)
                else:
                    info.from_imports.append(
                        (target, alias.name, alias.asname or alias.name)
                    )
    return info


@dataclass
class ImportGraph:
    """Per-module import facts plus symbol-level edges over the corpus."""

    modules: dict[str, ModuleImports] = field(default_factory=dict)
    edges: set[tuple[str, str]] = field(default_factory=set)
    unresolved: list[str] = field(default_factory=list)

    def is_corpus_module(self, name: str) -> bool:
        return name in self.modules

    # ----- symbol resolution -------------------------------------------------

    def resolve_symbol(self, module: str, symbol: str, _seen: Optional[set] = None) -> str:
        """Fully-qualified name of `symbol` as seen from `module`.

        Follows re-export chains to the defining module; unresolvable
        symbols keep their literal dotted name as a leaf.
        """
        seen = _seen if _seen is not None else set()
        key = (module, symbol)
        if key in seen or module not in self.modules:
            return f"{module}.{symbol}"
        seen.add(key)
        info = self.modules[module]
        if symbol in info.local_classes or symbol in info.newtypes:
            return f"{module}.{symbol}"
        if symbol in info.type_aliases:
            target = info.type_aliases[symbol]
            if target:
                return self.resolve_type_name(module, target, _seen=seen)
            return f"{module}.{symbol}"
        for target_mod, name, local in info.from_imports:
            if local == symbol:
                return self.resolve_symbol(target_mod, name, _seen=seen)
        for target_mod, local in info.module_imports:
            if local == symbol:
                return target_mod
        for target_mod in info.wildcard_imports:
            if target_mod in self.modules and symbol in self.exported_names(target_mod):
                return self.resolve_symbol(target_mod, symbol, _seen=seen)
        return f"{module}.{symbol}"

    def resolve_type_name(self, module: str, dotted: str, _seen: Optional[set] = None) -> str:
        """Resolve a possibly-aliased dotted type reference to its fq name.

        e.g. with ``import numpy as np`` in scope, 'np.array' -> 'numpy.array'.
        """
        head, _, rest = dotted.partition(".")
        resolved_head = self.resolve_symbol(module, head, _seen=_seen)
        return f"{resolved_head}.{rest}" if rest else resolved_head

    def exported_names(self, module: str) -> set[str]:
        """Names a wildcard import of `module` binds.

        Local class/alias/NewType definitions and imported type symbols,
        plus an explicit __all__ when present. External modules export nothing.
        """
        info = self.modules.get(module)
        if info is None:
            return set()
        names = set(info.local_classes) | set(info.newtypes) | set(info.type_aliases)
        names |= {local for _, _, local in info.from_imports}
        if info.all_exports is not None:
            names |= set(info.all_exports)
        return names

    # ----- visibility closure ------------------------------------------------

    def _own_types(self, module: str) -> set[str]:
        """Types contributed directly by one module (no traversal)."""
        info = self.modules[module]
        types: set[str] = set()
        for cls in info.local_classes:
            types.add(f"{module}.{cls}")
        for nt in info.newtypes:
            types.add(f"{module}.{nt}")
        for alias, target in info.type_aliases.items():
            if target:
                types.add(self.resolve_type_name(module, target))
            else:
                types.add(f"{module}.{alias}")
        for target_mod, name, _local in info.from_imports:
            types.add(self.resolve_symbol(target_mod, name))
        return types

    def _dependencies(self, module: str) -> set[str]:
        info = self.modules[module]
        deps = {t for t, _, _ in info.from_imports}
        deps |= {t for t, _ in info.module_imports}
        deps |= set(info.wildcard_imports)
        return {d for d in deps if d in self.modules}

    def visible_types_for(self, module: str) -> set[str]:
        """All fully-qualified type names visible to a module.

        Union of the module's own contributions and those of every corpus
        module reachable through its imports; each module is visited once,
        so import cycles terminate.
        """
        if module not in self.modules:
            return set()
        visible: set[str] = set()
        stack = [module]
        visited: set[str] = set()
        while stack:
            current = stack.pop()
            if current in visited:
                continue
            visited.add(current)
            visible |= self._own_types(current)
            stack.extend(sorted(self._dependencies(current)))
        return visible

    # ----- persistence -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "modules": {name: m.to_dict() for name, m in sorted(self.modules.items())},
            "edges": sorted(list(e) for e in self.edges),
            "unresolved": sorted(self.unresolved),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ImportGraph":
        return cls(
            modules={
                name: ModuleImports.from_dict(m) for name, m in d["modules"].items()
            },
            edges={tuple(e) for e in d.get("edges", [])},
            unresolved=list(d.get("unresolved", [])),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), sort_keys=True, indent=1), encoding="utf-8"
        )

    @classmethod
    def load(cls, path: str | Path) -> "ImportGraph":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def build_import_graph(sources: Iterable[tuple[str, str | Path]]) -> ImportGraph:
    """Build the corpus import graph from (source_text, relative_path) pairs.

    Unresolvable imports stay as literal leaf names and are listed in the
    graph's unresolved report.
    """
    graph = ImportGraph()
    for source_text, relpath in sources:
        try:
            info = scan_module_imports(source_text, relpath)
        except SyntaxError:
            log.warning("import scan skipped (syntax error): %s", relpath)
            continue
        graph.modules[info.name] = info

    for name, info in sorted(graph.modules.items()):
        for target_mod, symbol, _local in info.from_imports:
            graph.edges.add((name, f"{target_mod}.{symbol}"))
            if target_mod not in graph.modules:
                graph.unresolved.append(f"{target_mod}.{symbol}")
        for target_mod, _local in info.module_imports:
            graph.edges.add((name, target_mod))
        for target_mod in info.wildcard_imports:
            graph.edges.add((name, f"{target_mod}.*"))
            if target_mod not in graph.modules:
                graph.unresolved.append(f"{target_mod}.*")
    graph.unresolved = sorted(set(graph.unresolved))
    return graph


def build_import_graph_from_files(
    corpus_root: str | Path, files: Optional[Iterable[Path]] = None
) -> ImportGraph:
    root = Path(corpus_root)
    if files is None:
        files = sorted(p for p in root.rglob("*.py") if p.is_file())
    sources = []
    for path in sorted(files):
        rel = path.relative_to(root) if path.is_absolute() else path
        try:
            sources.append(((root / rel).read_text(encoding="utf-8"), rel))
        except (OSError, UnicodeDecodeError) as exc:
            log.warning("unreadable module %s: %s", rel, exc)
    return build_import_graph(sources)


@dataclass
class VisibleTypeVocab:
    """Fixed-size vocabulary of visible types plus a reserved `other` slot."""

    entries: list[str]

    def __post_init__(self) -> None:
        self._index = {name: i for i, name in enumerate(self.entries)}

    @property
    def size(self) -> int:
        return len(self.entries)

    @property
    def index_of_other(self) -> int:
        return len(self.entries)

    def mask_vector(self, type_names: Iterable[str]) -> np.ndarray:
        """Binary vector of length size+1; bit i set iff entries[i] is present.

        The final `other` slot is set when any input type is out of
        vocabulary, and also for an empty input set, so every mask has at
        least one set bit.
        """
        mask = np.zeros(self.size + 1, dtype=np.int8)
        other = False
        empty = True
        for name in type_names:
            empty = False
            idx = self._index.get(name)
            if idx is None:
                other = True
            else:
                mask[idx] = 1
        if other or empty:
            mask[self.index_of_other] = 1
        return mask

    def to_dict(self) -> dict:
        return {"entries": self.entries}

    @classmethod
    def from_dict(cls, d: dict) -> "VisibleTypeVocab":
        return cls(entries=list(d["entries"]))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), sort_keys=True, indent=1), encoding="utf-8"
        )

    @classmethod
    def load(cls, path: str | Path) -> "VisibleTypeVocab":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def build_vocab(
    graph: ImportGraph,
    size: int = DEFAULT_VOCAB_SIZE,
    visible_sets: Optional[dict[str, set[str]]] = None,
) -> tuple[VisibleTypeVocab, dict[str, set[str]]]:
    """Rank visible types by how many modules see them and keep the top `size`.

    Ties break lexicographically. Returns the vocab together with the
    per-module visible sets (reusable for mask construction).
    """
    if visible_sets is None:
        visible_sets = {
            name: graph.visible_types_for(name) for name in graph.modules
        }
    counts: dict[str, int] = {}
    for types in visible_sets.values():
        for t in types:
            counts[t] = counts.get(t, 0) + 1
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    entries = [name for name, _ in ranked[:size]]
    return VisibleTypeVocab(entries=entries), visible_sets


def mask_vector(type_names: Iterable[str], vocab: VisibleTypeVocab) -> np.ndarray:
    return vocab.mask_vector(type_names)
