"""Directive-level model of package recipes.

A recipe is a single class in a constrained Python dialect::

    class Example(CMakePackage, CudaPackage):
        version("1.0")
        variant("openmp", default=False)
        depends_on("mpi@3")
        conflicts("+cuda", when="+hip")

        def cmake_args(self):
            return [self.define_from_variant("ENABLE_OPENMP", "openmp")]

:func:`parse_recipe` turns source text into a :class:`Recipe` without
executing anything; :func:`render_recipe` goes the other way, and
:meth:`Recipe.to_dict` / :meth:`Recipe.from_dict` give the JSON form used for
persistence and golden files.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Any, Iterable, Union

from . import _lexer
from ._lexer import NAME, NUMBER, OP, STRING, Block, Token
from .errors import ParseError

DEPENDENCY_TYPES = ("build", "link", "run", "test")

DIRECTIVES = frozenset(
    {
        "version",
        "variant",
        "depends_on",
        "conflicts",
        "provides",
        "extends",
        "patch",
        "requires",
        "resource",
        "maintainers",
        "license",
        "redistribute",
        "build_system",
        "can_splice",
    }
)

# Base classes that add capabilities but do not select a build system.
MIXIN_CLASSES = frozenset(
    {
        "CudaPackage",
        "ROCmPackage",
        "SourceforgePackage",
        "SourcewarePackage",
        "GNUMirrorPackage",
        "XorgPackage",
        "CompilerPackage",
        "PythonExtension",
        "RPackageMixin",
        "LuaPackageMixin",
    }
)

CHECKSUM_KEYS = ("sha256", "sha512", "sha384", "sha224", "sha1", "md5", "checksum")

_SPEC_NAME_RE = re.compile(r"\s*([A-Za-z0-9_][A-Za-z0-9_.\-]*)")
_DASH_D_RE = re.compile(r"-D([A-Za-z_][A-Za-z0-9_]*)(?::[A-Za-z]+)?=")
_DEFINE_CALLS = frozenset({"define", "define_from_variant", "from_variant"})


def normalize_spec(text: str | None) -> str:
    """Strip and collapse whitespace runs; case is preserved."""
    if not text:
        return ""
    return " ".join(text.split())


def pascal_case(package_name: str) -> str:
    """Class name for a package name (``cabana-pd`` -> ``CabanaPd``)."""
    parts = re.split(r"[-_]+", package_name)
    name = "".join(p[:1].upper() + p[1:] for p in parts if p)
    if name[:1].isdigit():
        name = "_" + name
    return name


def split_dependency_spec(text: str) -> tuple[str, str]:
    """Split ``"cmake@3.5: +ssl"`` into ``("cmake", "@3.5: +ssl")``."""
    m = _SPEC_NAME_RE.match(text)
    if not m:
        return "", normalize_spec(text)
    return m.group(1), normalize_spec(text[m.end():])


def join_dependency_spec(name: str, spec: str) -> str:
    if not spec:
        return name
    if spec[0] in "@+~^%":
        return name + spec
    return f"{name} {spec}"


# --------------------------------------------------------------------------
# model


@dataclass(frozen=True)
class Opaque:
    """An argument value that is not a literal (variable, call, f-string...)."""

    source: str


Value = Union[str, bool, None, tuple, Opaque]


@dataclass
class VersionDecl:
    version_string: str
    source_url: str | None = None
    checksum: str | None = None
    extra: dict[str, Any] = field(default_factory=dict)
    line: int = 0


@dataclass
class VariantDecl:
    name: str
    default: Any = None
    description: str | None = None
    when: str | None = None
    extra: dict[str, Any] = field(default_factory=dict)
    line: int = 0


@dataclass
class Dependency:
    name: str
    spec: str = ""
    condition: str | None = None
    types: frozenset[str] = frozenset()
    line: int = 0

    def __post_init__(self) -> None:
        self.spec = normalize_spec(self.spec)
        self.condition = normalize_spec(self.condition) or None
        self.types = frozenset(self.types)

    def key(self) -> tuple:
        return (self.name, self.spec, self.condition or "", tuple(sorted(self.types)))

    def __str__(self) -> str:
        out = join_dependency_spec(self.name, self.spec)
        if self.types:
            out += "(" + ",".join(sorted(self.types)) + ")"
        if self.condition:
            out += f" when {self.condition}"
        return out


@dataclass
class ConflictDecl:
    spec: str
    when: str | None = None
    msg: str | None = None
    line: int = 0

    def __post_init__(self) -> None:
        self.spec = normalize_spec(self.spec)
        self.when = normalize_spec(self.when) or None


@dataclass
class ConfigKeySet:
    keys: frozenset[str] = frozenset()
    # define(...) calls or -D literals whose key could not be resolved statically
    skipped: int = 0

    def __post_init__(self) -> None:
        self.keys = frozenset(self.keys)

    def __len__(self) -> int:
        return len(self.keys)

    def __iter__(self):
        return iter(sorted(self.keys))

    def __contains__(self, key: object) -> bool:
        return key in self.keys


@dataclass
class Directive:
    """Any directive call kept verbatim (used for the less common ones)."""

    name: str
    source: str
    line: int
    end_line: int
    opaque: bool = False


@dataclass
class MethodDef:
    name: str
    owner: str
    line: int
    end_line: int
    decorators: list[str] = field(default_factory=list)


@dataclass
class Statement:
    """A top-level statement of the package class body, for chunking."""

    kind: str  # "attribute", "directive", "method", "block", "docstring", "other"
    name: str
    line: int
    end_line: int


@dataclass
class Diagnostic:
    kind: str  # "opaque_directive", "when_context", "loop_directive", "bad_type", ...
    message: str
    line: int


@dataclass
class Recipe:
    class_name: str
    base_classes: list[str]
    versions: list[VersionDecl] = field(default_factory=list)
    variants: list[VariantDecl] = field(default_factory=list)
    dependencies: list[Dependency] = field(default_factory=list)
    conflicts: list[ConflictDecl] = field(default_factory=list)
    config_keys: ConfigKeySet = field(default_factory=ConfigKeySet)
    raw_text: str = ""
    attributes: dict[str, Any] = field(default_factory=dict)
    other_directives: list[Directive] = field(default_factory=list)
    methods: list[MethodDef] = field(default_factory=list)
    statements: list[Statement] = field(default_factory=list)
    diagnostics: list[Diagnostic] = field(default_factory=list)
    class_line: int = 1
    class_end_line: int = 1

    @property
    def build_system_classes(self) -> list[str]:
        return [b for b in self.base_classes if is_build_system_class(b)]

    def directive_counts(self) -> dict[str, int]:
        counts = {
            "version": len(self.versions),
            "variant": len(self.variants),
            "depends_on": len(self.dependencies),
            "conflicts": len(self.conflicts),
        }
        for d in self.other_directives:
            counts[d.name] = counts.get(d.name, 0) + 1
        return counts

    def directive_signature(self) -> dict[str, Any]:
        """Everything that must survive a render/parse round trip."""
        return {
            "class_name": self.class_name,
            "base_classes": list(self.base_classes),
            "versions": [(v.version_string, v.source_url, v.checksum) for v in self.versions],
            "variants": [(v.name, _plain(v.default), v.description, v.when) for v in self.variants],
            "dependencies": [d.key() for d in self.dependencies],
            "conflicts": [(c.spec, c.when, c.msg) for c in self.conflicts],
            "config_keys": sorted(self.config_keys.keys),
            "other_directives": sorted(
                ((d.name, d.source, d.opaque) for d in self.other_directives), key=lambda t: t[2]
            ),
        }

    def to_dict(self) -> dict[str, Any]:
        return {
            "class_name": self.class_name,
            "base_classes": list(self.base_classes),
            "attributes": {k: _plain(v) for k, v in self.attributes.items()},
            "versions": [
                {
                    "version": v.version_string,
                    "url": v.source_url,
                    "checksum": v.checksum,
                    "extra": {k: _plain(x) for k, x in v.extra.items()},
                }
                for v in self.versions
            ],
            "variants": [
                {
                    "name": v.name,
                    "default": _plain(v.default),
                    "description": v.description,
                    "when": v.when,
                    "extra": {k: _plain(x) for k, x in v.extra.items()},
                }
                for v in self.variants
            ],
            "dependencies": [
                {"name": d.name, "spec": d.spec, "when": d.condition, "type": sorted(d.types)}
                for d in self.dependencies
            ],
            "conflicts": [{"spec": c.spec, "when": c.when, "msg": c.msg} for c in self.conflicts],
            "config_keys": sorted(self.config_keys.keys),
            "other_directives": [
                {"name": d.name, "source": d.source, "opaque": d.opaque} for d in self.other_directives
            ],
            "methods": [m.name for m in self.methods],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Recipe":
        return cls(
            class_name=data["class_name"],
            base_classes=list(data["base_classes"]),
            attributes=dict(data.get("attributes", {})),
            versions=[
                VersionDecl(v["version"], v.get("url"), v.get("checksum"), dict(v.get("extra", {})))
                for v in data.get("versions", [])
            ],
            variants=[
                VariantDecl(v["name"], v.get("default"), v.get("description"), v.get("when"),
                            dict(v.get("extra", {})))
                for v in data.get("variants", [])
            ],
            dependencies=[
                Dependency(d["name"], d.get("spec", ""), d.get("when"), frozenset(d.get("type", ())))
                for d in data.get("dependencies", [])
            ],
            conflicts=[ConflictDecl(c["spec"], c.get("when"), c.get("msg")) for c in data.get("conflicts", [])],
            config_keys=ConfigKeySet(frozenset(data.get("config_keys", ()))),
            other_directives=[
                Directive(d["name"], d["source"], 0, 0, bool(d.get("opaque")))
                for d in data.get("other_directives", [])
            ],
        )


def _plain(value: Any) -> Any:
    if isinstance(value, Opaque):
        return {"opaque": value.source}
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    return value


def is_build_system_class(name: str) -> bool:
    short = name.rsplit(".", 1)[-1]
    return short.endswith("Package") and short not in MIXIN_CLASSES


# --------------------------------------------------------------------------
# parsing


def _source(tokens: list[Token]) -> str:
    """Re-join tokens into compact source text (used for opaque values)."""
    out: list[str] = []
    prev: Token | None = None
    for tok in tokens:
        if prev is not None:
            tight = (
                tok.kind == OP and tok.value in ",)]}.:"
                or prev.kind == OP and prev.value in "([{."
                or tok.is_op("(") and prev.kind == NAME
                or tok.is_op("[") and prev.kind in (NAME, STRING)
            )
            if not tight:
                out.append(" ")
        out.append(tok.value)
        prev = tok
    return "".join(out)


def _literal(tokens: list[Token]) -> Value:
    """Evaluate a literal argument; non-literals come back as :class:`Opaque`."""
    if tokens and all(t.kind == STRING for t in tokens):
        pieces = [_lexer.string_literal(t) for t in tokens]
        if any("f" in prefix or "b" in prefix for prefix, _ in pieces):
            return Opaque(_source(tokens))
        return "".join(text for _, text in pieces)
    if len(tokens) == 1:
        tok = tokens[0]
        if tok.is_name("True"):
            return True
        if tok.is_name("False"):
            return False
        if tok.is_name("None"):
            return None
        if tok.kind == NUMBER:
            return tok.value
    if len(tokens) >= 2 and tokens[0].kind == OP and tokens[0].value in "([" \
            and _lexer.matching_close(tokens, 0) == len(tokens) - 1:
        items = [_literal(part) for part in _lexer.split_top_level(tokens[1:-1])]
        if not any(isinstance(i, Opaque) for i in items):
            return tuple(items)
    if len(tokens) == 2 and tokens[0].is_op("-") and tokens[1].kind == NUMBER:
        return "-" + tokens[1].value
    return Opaque(_source(tokens))


@dataclass
class _Call:
    name: str
    args: list[Value]
    kwargs: dict[str, Value]
    source: str
    line: int
    end_line: int


def _as_call(tokens: list[Token]) -> _Call | None:
    """Recognize ``name(args...)`` spanning the whole token list."""
    if len(tokens) < 3 or tokens[0].kind != NAME or not tokens[1].is_op("("):
        return None
    if _lexer.matching_close(tokens, 1) != len(tokens) - 1:
        return None
    args: list[Value] = []
    kwargs: dict[str, Value] = {}
    for part in _lexer.split_top_level(tokens[2:-1]):
        if len(part) >= 2 and part[0].kind == NAME and part[1].is_op("="):
            kwargs[part[0].value] = _literal(part[2:])
        elif part[0].kind == OP and part[0].value in ("*", "**"):
            kwargs.setdefault("**", Opaque(_source(part)))
        else:
            args.append(_literal(part))
    return _Call(tokens[0].value, args, kwargs, _source(tokens), tokens[0].line, tokens[-1].end_line)


def _str_or_none(value: Value) -> str | None:
    return value if isinstance(value, str) else None


def _dependency_types(value: Value, line: int, diags: list[Diagnostic]) -> frozenset[str]:
    if value is None:
        return frozenset()
    items = value if isinstance(value, tuple) else (value,)
    types = set()
    for item in items:
        if isinstance(item, str):
            types.add(item)
            if item not in DEPENDENCY_TYPES:
                diags.append(Diagnostic("bad_type", f"unknown dependency type {item!r}", line))
        else:
            diags.append(Diagnostic("opaque_directive", "non-literal dependency type", line))
    return frozenset(types)


class _RecipeBuilder:
    def __init__(self, recipe: Recipe):
        self.recipe = recipe
        self.seen_variants: set[tuple[str, str | None]] = set()

    def directive(self, call: _Call, context: str) -> None:
        r = self.recipe
        diags = r.diagnostics
        first = call.args[0] if call.args else None
        if context == "loop" or (call.name in {"version", "variant", "depends_on", "conflicts"}
                                 and not isinstance(first, str)):
            diags.append(Diagnostic("opaque_directive", call.source, call.line))
            r.other_directives.append(Directive(call.name, call.source, call.line, call.end_line, opaque=True))
            return
        if context == "when":
            diags.append(Diagnostic("when_context", f"{call.name} inside when() block recorded without condition",
                                    call.line))
        when = call.kwargs.get("when")
        if when is not None and not isinstance(when, str):
            diags.append(Diagnostic("opaque_directive", f"non-literal when= in {call.source}", call.line))
            when = None

        if call.name == "version":
            checksum = None
            for key in CHECKSUM_KEYS:
                if isinstance(call.kwargs.get(key), str):
                    checksum = call.kwargs[key]
                    break
            if checksum is None and len(call.args) > 1 and isinstance(call.args[1], str):
                checksum = call.args[1]
            extra = {k: v for k, v in call.kwargs.items() if k not in CHECKSUM_KEYS and k != "url"}
            r.versions.append(VersionDecl(first, _str_or_none(call.kwargs.get("url")), checksum, extra, call.line))
        elif call.name == "variant":
            key = (first, normalize_spec(when) or None)
            if key in self.seen_variants:
                diags.append(Diagnostic("duplicate_variant", f"variant {first!r} redeclared", call.line))
            self.seen_variants.add(key)
            default = call.kwargs.get("default", call.args[1] if len(call.args) > 1 else None)
            extra = {k: v for k, v in call.kwargs.items() if k not in {"default", "description", "when"}}
            r.variants.append(VariantDecl(first, default, _str_or_none(call.kwargs.get("description")),
                                          normalize_spec(when) or None, extra, call.line))
        elif call.name == "depends_on":
            name, spec = split_dependency_spec(first)
            if not name:
                raise ParseError(f"depends_on without a package name: {call.source}", call.line)
            types = _dependency_types(call.kwargs.get("type"), call.line, diags)
            r.dependencies.append(Dependency(name, spec, when, types, call.line))
        elif call.name == "conflicts":
            if not normalize_spec(first):
                raise ParseError("conflicts() needs a non-empty spec", call.line)
            r.conflicts.append(ConflictDecl(first, when, _str_or_none(call.kwargs.get("msg")), call.line))
        else:
            r.other_directives.append(Directive(call.name, call.source, call.line, call.end_line))

    def body(self, blocks: list[Block], context: str) -> None:
        """Walk statements nested in class-level control flow."""
        for block in blocks:
            tokens = block.line.tokens
            head = tokens[0]
            if head.kind == NAME and head.value in DIRECTIVES:
                call = _as_call(tokens)
                if call is not None:
                    self.directive(call, context)
                    continue
            if block.children:
                if head.is_name("for") or head.is_name("while"):
                    sub = "loop"
                elif head.is_name("with") and len(tokens) > 1 and tokens[1].is_name("when"):
                    sub = "when"
                elif head.is_name("def") or head.is_name("class"):
                    continue
                else:
                    sub = context if context == "loop" else "cond"
                self.body(block.children, sub)


def _class_header(tokens: list[Token]) -> tuple[str, list[str]]:
    if len(tokens) < 3 or tokens[1].kind != NAME:
        raise ParseError("malformed class statement", tokens[0].line)
    name = tokens[1].value
    bases: list[str] = []
    if tokens[2].is_op("("):
        close = _lexer.matching_close(tokens, 2)
        if close != len(tokens) - 2:
            raise ParseError("malformed class statement", tokens[0].line)
        for part in _lexer.split_top_level(tokens[3:close]):
            if len(part) >= 2 and part[1].is_op("="):
                continue  # metaclass= and friends
            if not all(t.kind == NAME or t.is_op(".") for t in part):
                raise ParseError(f"unsupported base class expression {_source(part)!r}", part[0].line)
            bases.append("".join(t.value for t in part))
    elif len(tokens) != 3:
        raise ParseError("malformed class statement", tokens[0].line)
    return name, bases


def _method_name(block: Block) -> str | None:
    tokens = block.line.tokens
    idx = 1 if tokens[0].is_name("async") else 0
    if tokens[idx].is_name("def") and len(tokens) > idx + 1 and tokens[idx + 1].kind == NAME:
        return tokens[idx + 1].value
    return None


def _scan_config_keys(method: str, blocks: list[Block], keys: set[str]) -> int:
    """Collect define()-style keys and -DKEY= literals; returns the skip count."""
    skipped = 0
    arg_method = method.endswith("_args")
    for block in blocks:
        for sub in [block, *block.walk()]:
            tokens = sub.line.tokens
            for k, tok in enumerate(tokens):
                if (tok.kind == NAME and tok.value in _DEFINE_CALLS and k + 1 < len(tokens)
                        and tokens[k + 1].is_op("(")):
                    close = _lexer.matching_close(tokens, k + 1)
                    parts = _lexer.split_top_level(tokens[k + 2: close])
                    first = _literal(parts[0]) if parts else None
                    if isinstance(first, str) and first.strip():
                        keys.add(first.strip())
                    else:
                        skipped += 1
                elif tok.kind == STRING and arg_method:
                    prefix, text = _lexer.string_literal(tok)
                    for m in _DASH_D_RE.finditer(text):
                        keys.add(m.group(1))
                    if "f" in prefix and re.search(r"-D\{", text):
                        skipped += 1
    return skipped


def parse_recipe(source_text: str | bytes) -> Recipe:
    """Parse recipe source into a :class:`Recipe`.

    Raises :class:`ParseError` (with a line number) for anything that is not
    valid in the recipe dialect.  Never raises anything else.
    """
    if isinstance(source_text, (bytes, bytearray)):
        try:
            source_text = bytes(source_text).decode("utf-8")
        except UnicodeDecodeError as exc:
            line = bytes(source_text)[: exc.start].count(b"\n") + 1
            raise ParseError("source is not valid UTF-8", line) from None
    if "\x00" in source_text:
        raise ParseError("source contains NUL bytes", source_text[: source_text.index("\x00")].count("\n") + 1)
    try:
        return _parse(source_text)
    except ParseError:
        raise
    except (IndexError, ValueError, TypeError, KeyError, AssertionError, RecursionError) as exc:  # pragma: no cover - defensive
        raise ParseError(f"malformed recipe ({exc.__class__.__name__})") from None


def _parse(text: str) -> Recipe:
    root = _lexer.build_blocks(_lexer.tokenize(text))

    classes = [b for b in root.children if b.line.tokens[0].is_name("class")]
    headers = [(b, *_class_header(b.line.tokens)) for b in classes]
    if not headers:
        raise ParseError("no package class found", 1)
    for block, name, bases in headers:
        if not block.children:
            raise ParseError("empty class body", block.first_line)
    main = next((h for h in headers if any(is_build_system_class(b) for b in h[2])), None)
    if main is None:
        raise ParseError("package class has no build-system base class", headers[0][0].first_line)
    main_block, class_name, bases = main

    recipe = Recipe(class_name, bases, raw_text=text, class_line=main_block.first_line,
                    class_end_line=main_block.last_line)
    builder = _RecipeBuilder(recipe)
    keys: set[str] = set()
    skipped = 0
    decorators: list[str] = []
    decorator_line = 0

    for block in main_block.children:
        tokens = block.line.tokens
        head = tokens[0]
        first_line, last_line = block.first_line, block.last_line
        if head.is_op("@"):
            if not decorators:
                decorator_line = first_line
            decorators.append(_source(tokens[1:]))
            continue
        method = _method_name(block)
        if method is not None:
            start = decorator_line if decorators else first_line
            recipe.methods.append(MethodDef(method, class_name, start, last_line, decorators))
            recipe.statements.append(Statement("method", method, start, last_line))
            skipped += _scan_config_keys(method, block.children, keys)
            decorators = []
            continue
        decorators = []
        if head.kind == NAME and head.value in DIRECTIVES:
            call = _as_call(tokens)
            if call is None:
                raise ParseError(f"malformed {head.value}() directive", head.line)
            builder.directive(call, "class")
            recipe.statements.append(Statement("directive", head.value, first_line, last_line))
            continue
        if len(tokens) >= 3 and head.kind == NAME and tokens[1].is_op("="):
            recipe.attributes[head.value] = _literal(tokens[2:])
            recipe.statements.append(Statement("attribute", head.value, first_line, last_line))
            continue
        if len(tokens) == 1 and head.kind == STRING:
            recipe.statements.append(Statement("docstring", "", first_line, last_line))
            continue
        if block.children:
            builder.body([block], "class")
            recipe.statements.append(Statement("block", head.value, first_line, last_line))
            continue
        recipe.statements.append(Statement("other", head.value, first_line, last_line))

    # builder classes (e.g. class CMakeBuilder(cmake.CMakeBuilder)) carry cmake_args too
    for block, name, _ in headers:
        if block is main_block:
            continue
        for child in block.children:
            method = _method_name(child)
            if method is not None:
                recipe.methods.append(MethodDef(method, name, child.first_line, child.last_line))
                skipped += _scan_config_keys(method, child.children, keys)

    recipe.config_keys = ConfigKeySet(frozenset(keys), skipped)
    return recipe


def extract_config_keys(recipe: Recipe) -> ConfigKeySet:
    """Configuration argument keys used by the recipe's build-argument methods."""
    return recipe.config_keys


def extract_dependencies(recipe: Recipe, class_inherent: Iterable[str] = ()) -> list[Dependency]:
    """Dependencies in source order, minus those supplied by the package class."""
    drop = set(class_inherent)
    return [d for d in recipe.dependencies if d.name not in drop]


# --------------------------------------------------------------------------
# rendering


def _py(value: Any) -> str:
    if isinstance(value, Opaque):
        return value.source
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n") + '"'
    if isinstance(value, tuple):
        inner = ", ".join(_py(v) for v in value)
        return f"({inner},)" if len(value) == 1 else f"({inner})"
    if value is True or value is False or value is None:
        return repr(value)
    return str(value)


def _call(name: str, args: list[Any], kwargs: list[tuple[str, Any]]) -> str:
    parts = [_py(a) for a in args] + [f"{k}={_py(v)}" for k, v in kwargs if v is not None]
    return f"{name}({', '.join(parts)})"


def render_recipe(recipe: Recipe, imports: bool = True) -> str:
    """Render a :class:`Recipe` back to recipe text.

    Method bodies are not preserved; configuration keys are emitted as
    ``self.define`` calls in a single ``cmake_args`` method so that the key
    set survives a round trip.
    """
    ind = "    "
    lines: list[str] = []
    if imports:
        lines += ["from spack.package import *", "", ""]
    lines.append(f"class {recipe.class_name}({', '.join(recipe.base_classes)}):")
    body: list[str] = []
    for key, value in recipe.attributes.items():
        body.append(f"{key} = {_py(value)}")
    if recipe.attributes:
        body.append("")
    for v in recipe.versions:
        kwargs = [("sha256" if v.checksum else "checksum", v.checksum), ("url", v.source_url)]
        kwargs += list(v.extra.items())
        body.append(_call("version", [v.version_string], kwargs))
    for v in recipe.variants:
        kwargs = [("default", v.default), ("description", v.description), ("when", v.when)]
        kwargs += list(v.extra.items())
        body.append(_call("variant", [v.name], kwargs))
    for d in recipe.dependencies:
        types = tuple(sorted(d.types)) or None
        if types and len(types) == 1:
            types = types[0]
        body.append(_call("depends_on", [join_dependency_spec(d.name, d.spec)],
                          [("when", d.condition), ("type", types)]))
    for c in recipe.conflicts:
        body.append(_call("conflicts", [c.spec], [("when", c.when), ("msg", c.msg)]))
    for d in recipe.other_directives:
        if not d.opaque:
            body.append(d.source)
    opaque = [d for d in recipe.other_directives if d.opaque]
    if opaque:
        # keep unresolved directives out of the static grammar on re-parse
        body.append("for _unresolved in ():")
        body += [ind + d.source for d in opaque]
    if recipe.config_keys.keys:
        body += ["", "def cmake_args(self):", ind + "return ["]
        body += [f"{ind}{ind}self.define({_py(k)}, True)," for k in sorted(recipe.config_keys.keys)]
        body.append(ind + "]")
    if not body:
        body.append("pass")
    lines += [(ind + b) if b else "" for b in body]
    return "\n".join(lines) + "\n"
