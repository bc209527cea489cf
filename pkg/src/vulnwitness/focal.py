"""Slice a Java class into the four focal-context levels.

A class is first binned into fragments (package declaration, class header,
the vulnerable method, constructor headers, other method headers, field
declarations); the levels then recombine those bins into a parseable class
skeleton of growing size:

    L0  package + class header + vulnerable method
    L1  L0 + constructor headers
    L2  L1 + headers of the other methods
    L3  L2 + field declarations

Imports are deliberately never included at any level; downstream consumers
that want them can opt in via ``include_imports``.
"""

from __future__ import annotations

from dataclasses import dataclass

from .javaparse import (
    JavaClass,
    JavaMember,
    JavaParseError,
    erased_simple_type,
    normalize_type,
    parse_java_unit,
)

LEVELS = ("L0", "L1", "L2", "L3")

ELISION = "{ /* ... */ }"


class LocatorError(ValueError):
    """A method locator did not resolve to exactly one member."""


class LocatorNotFoundError(LocatorError):
    pass


class AmbiguousLocatorError(LocatorError):
    pass


@dataclass(frozen=True)
class MethodLocator:
    """Identifies one method: class name, method name, parameter types.

    ``param_types`` of None means "don't filter by signature"; an empty
    list means a no-argument method. Types may be simple or qualified.
    """

    class_name: str
    method_name: str
    param_types: tuple[str, ...] | None = None

    @classmethod
    def from_dict(cls, data: dict) -> "MethodLocator":
        params = data.get("param_types")
        return cls(
            class_name=data["class_name"],
            method_name=data["method_name"],
            param_types=None if params is None else tuple(params),
        )

    def to_dict(self) -> dict:
        return {
            "class_name": self.class_name,
            "method_name": self.method_name,
            "param_types": None if self.param_types is None else list(self.param_types),
        }


@dataclass(frozen=True)
class FragmentBins:
    package_decl: str
    class_decl_header: str
    vulnerable_method: str
    constructor_headers: tuple[str, ...]
    method_headers: tuple[str, ...]
    field_decls: tuple[str, ...]


@dataclass(frozen=True)
class FocalContext:
    level: str
    snippet: str
    fragments_used: frozenset[str]


def _types_match(declared: str, wanted: str) -> bool:
    if normalize_type(declared) == normalize_type(wanted):
        return True
    return erased_simple_type(declared) == erased_simple_type(wanted)


def resolve_method(unit, locator: MethodLocator) -> tuple[JavaClass, JavaMember]:
    """Find the single member a locator names, or raise a LocatorError."""
    cls = next((c for c in unit.classes if c.name == locator.class_name), None)
    if cls is None:
        raise LocatorNotFoundError(
            f"class {locator.class_name!r} not found "
            f"(top-level types: {[c.name for c in unit.classes]})"
        )
    candidates = [
        m for m in cls.members
        if m.kind in ("method", "constructor") and m.name == locator.method_name
    ]
    if locator.param_types is not None:
        wanted = list(locator.param_types)
        candidates = [
            m for m in candidates
            if m.param_types is not None
            and len(m.param_types) == len(wanted)
            and all(_types_match(d, w) for d, w in zip(m.param_types, wanted))
        ]
    if not candidates:
        raise LocatorNotFoundError(
            f"no method {locator.method_name!r} with the given signature "
            f"in class {locator.class_name!r}"
        )
    if len(candidates) > 1:
        sigs = [f"{m.name}({', '.join(m.param_types or [])})" for m in candidates]
        raise AmbiguousLocatorError(
            f"locator matches {len(candidates)} overloads: {sigs}; "
            "specify param_types to disambiguate"
        )
    return cls, candidates[0]


def _elide(member: JavaMember) -> str:
    return f"{member.header.rstrip()} {ELISION}"


def extract_fragments(source: str, locator: MethodLocator) -> FragmentBins:
    """Bin a class's declarations around the located vulnerable method.

    Raises JavaParseError on malformed source and LocatorError when the
    locator resolves to zero or several members.
    """
    unit = parse_java_unit(source)
    cls, target = resolve_method(unit, locator)

    constructor_headers = []
    method_headers = []
    field_decls = []
    for m in cls.members:
        if m is target:
            continue
        if m.kind == "constructor":
            constructor_headers.append(_elide(m))
        elif m.kind == "method":
            method_headers.append(_elide(m))
        elif m.kind == "type":
            # nested types stay opaque: header only, alongside the methods
            method_headers.append(_elide(m))
        elif m.kind == "field":
            field_decls.append(m.text)
        # initializer blocks carry no signature worth showing; dropped

    return FragmentBins(
        package_decl=(unit.package or "").strip(),
        class_decl_header=cls.header,
        vulnerable_method=target.text,
        constructor_headers=tuple(constructor_headers),
        method_headers=tuple(method_headers),
        field_decls=tuple(field_decls),
    )


def _fragment_ids(bins: FragmentBins, level: str) -> frozenset[str]:
    ids = {"class_header", "vulnerable_method"}
    if bins.package_decl:
        ids.add("package")
    rank = LEVELS.index(level)
    if rank >= 1:
        ids.update(f"constructor:{i}" for i in range(len(bins.constructor_headers)))
    if rank >= 2:
        ids.update(f"method:{i}" for i in range(len(bins.method_headers)))
    if rank >= 3:
        ids.update(f"field:{i}" for i in range(len(bins.field_decls)))
    return frozenset(ids)


def assemble_context(bins: FragmentBins, level: str) -> FocalContext:
    """Recombine bins into one snippet for the given level.

    Member order is fixed for determinism: fields, then constructors, then
    method headers, with the vulnerable method last; one blank line between
    members.
    """
    if level not in LEVELS:
        raise ValueError(f"unknown context level {level!r}")
    rank = LEVELS.index(level)

    members: list[str] = []
    if rank >= 3:
        members.extend(bins.field_decls)
    if rank >= 1:
        members.extend(bins.constructor_headers)
    if rank >= 2:
        members.extend(bins.method_headers)
    members.append(bins.vulnerable_method)

    parts = []
    if bins.package_decl:
        parts.append(bins.package_decl)
        parts.append("")
    parts.append(bins.class_decl_header + " {")
    parts.append("")
    for i, member in enumerate(members):
        if i:
            parts.append("")
        parts.append(member)
    parts.append("}")
    snippet = "\n".join(parts) + "\n"

    return FocalContext(level=level, snippet=snippet,
                        fragments_used=_fragment_ids(bins, level))


def slice_levels(source: str, locator: MethodLocator) -> dict[str, FocalContext]:
    """All four contexts for one class, keyed by level name."""
    bins = extract_fragments(source, locator)
    return {level: assemble_context(bins, level) for level in LEVELS}
