"""Structure-level parser for Java source files.

Recovers just enough shape to slice a class into prompt fragments: the
package declaration, top-level type headers, and the member list of each
class body (fields, constructors, methods, nested types, initializers).
It is not a full Java grammar; expressions are never interpreted, only
skipped with correct bracket/comment/literal tracking.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field


class JavaParseError(ValueError):
    """Raised when the structural scan cannot make sense of the source."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"{message} (line {line})"
        super().__init__(message)


_IDENT = r"[A-Za-z_$][A-Za-z0-9_$]*"
_PACKAGE_RE = re.compile(r"\bpackage\s+[\w.$]+\s*;")
_IMPORT_RE = re.compile(r"\bimport\s+(?:static\s+)?[\w.$*]+\s*;")
_TYPE_KEYWORD_RE = re.compile(r"\b(class|interface|enum|record)\b")
_IDENT_RE = re.compile(_IDENT)

# Modifier/soft keywords that may precede a member name; anything else found
# directly before '(' is the method or constructor name.
_MODIFIERS = frozenset(
    "public private protected static final abstract native synchronized "
    "transient volatile strictfp default sealed non-sealed".split()
)


def mask_source(source: str) -> str:
    """Return a same-length copy with comment and literal interiors blanked.

    Newlines are preserved (line numbers stay valid) and every other masked
    character becomes a space, so bracket scanning on the mask never trips
    over braces inside strings, chars, or comments.
    """
    out = list(source)
    i, n = 0, len(source)

    def blank(a: int, b: int) -> None:
        for k in range(a, b):
            if out[k] != "\n":
                out[k] = " "

    while i < n:
        c = source[i]
        if c == "/" and i + 1 < n and source[i + 1] == "/":
            j = source.find("\n", i)
            j = n if j == -1 else j
            blank(i, j)
            i = j
        elif c == "/" and i + 1 < n and source[i + 1] == "*":
            j = source.find("*/", i + 2)
            j = n if j == -1 else j + 2
            blank(i, j)
            i = j
        elif c == '"' and source.startswith('"""', i):
            j = source.find('"""', i + 3)
            j = n - 3 if j == -1 else j
            blank(i + 3, j)
            i = j + 3
        elif c == '"' or c == "'":
            quote = c
            j = i + 1
            while j < n:
                if source[j] == "\\":
                    j += 2
                    continue
                if source[j] == quote or source[j] == "\n":
                    break
                j += 1
            blank(i + 1, min(j, n))
            i = min(j, n) + 1
        else:
            i += 1
    return "".join(out)


def _line_of(source: str, pos: int) -> int:
    return source.count("\n", 0, pos) + 1


def _match_brace(mask: str, open_pos: int) -> int:
    """Index of the '}' matching the '{' at open_pos (scans the mask)."""
    depth = 0
    for i in range(open_pos, len(mask)):
        ch = mask[i]
        if ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return i
    raise JavaParseError("unbalanced braces", _line_of(mask, open_pos))


def _match_paren(mask: str, open_pos: int) -> int:
    depth = 0
    for i in range(open_pos, len(mask)):
        ch = mask[i]
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth == 0:
                return i
    raise JavaParseError("unbalanced parentheses", _line_of(mask, open_pos))


def _skip_ws(mask: str, i: int) -> int:
    while i < len(mask) and mask[i].isspace():
        i += 1
    return i


def _skip_annotation(mask: str, i: int) -> int:
    """Advance past one '@Name' or '@Name(...)' starting at '@'."""
    i += 1
    m = _IDENT_RE.match(mask, _skip_ws(mask, i))
    if not m:
        raise JavaParseError("dangling '@'", _line_of(mask, i))
    i = m.end()
    while True:  # qualified annotation names: @a.b.C
        j = _skip_ws(mask, i)
        if j < len(mask) and mask[j] == ".":
            m = _IDENT_RE.match(mask, _skip_ws(mask, j + 1))
            if not m:
                break
            i = m.end()
        else:
            break
    j = _skip_ws(mask, i)
    if j < len(mask) and mask[j] == "(":
        return _match_paren(mask, j) + 1
    return i


@dataclass
class JavaMember:
    kind: str  # field | method | constructor | type | initializer
    name: str | None
    param_types: list[str] | None
    start: int  # includes attached leading comments and annotations
    header_start: int  # first char after annotations/comments
    end: int  # one past ';' or '}'
    body_open: int | None  # index of body '{', None for field/abstract
    text: str = ""
    header: str = ""  # declaration up to the body, annotations stripped


@dataclass
class JavaClass:
    name: str
    kind: str  # class | interface | enum | record
    decl_start: int  # includes attached comments/annotations
    header_end: int  # index of the body '{'
    body_close: int
    header: str = ""  # attached trivia + modifiers ... up to (excl.) '{'
    members: list[JavaMember] = field(default_factory=list)


@dataclass
class JavaUnit:
    source: str
    mask: str
    package: str | None
    imports: list[str]
    classes: list[JavaClass]


def _attach_leading_trivia(source: str, mask: str, start: int) -> int:
    """Extend start backwards over directly attached comments.

    A comment block is attached when no blank line separates it from the
    declaration below it. Annotations are handled by the caller.
    """
    pos = start
    while True:
        # back up over whitespace, counting newlines
        i = pos - 1
        newlines = 0
        while i >= 0 and source[i].isspace():
            if source[i] == "\n":
                newlines += 1
            i -= 1
        if i < 0 or newlines > 1:
            return pos
        if source[i] == "/" and i >= 1 and source[i - 1] == "*":
            open_at = source.rfind("/*", 0, i - 1)
            if open_at == -1 or mask[open_at] != " ":
                return pos
            pos = open_at
        elif mask[i] == " " and source[i] != " ":
            # tail of a line comment: find its '//'
            line_start = source.rfind("\n", 0, i) + 1
            rel = source.find("//", line_start, i + 1)
            if rel == -1 or mask[rel] != " ":
                return pos
            if source[line_start:rel].strip():
                return pos  # trailing comment on a code line, not attached
            pos = rel
        else:
            return pos


def _expand_to_line_start(source: str, pos: int) -> int:
    line_start = source.rfind("\n", 0, pos) + 1
    if source[line_start:pos].strip() == "":
        return line_start
    return pos


def split_parameter_types(params_text: str) -> list[str]:
    """Parse a '(...)' interior into normalized parameter type names."""
    inner = params_text.strip()
    if not inner:
        return []
    parts: list[str] = []
    depth = 0
    current = []
    for ch in inner:
        if ch in "<([{":
            depth += 1
        elif ch in ">)]}":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(current))
            current = []
        else:
            current.append(ch)
    parts.append("".join(current))

    types: list[str] = []
    for raw in parts:
        toks = raw.strip()
        # drop parameter annotations and 'final'
        toks = re.sub(r"@\s*[\w.$]+(\s*\([^)]*\))?\s*", "", toks)
        toks = re.sub(r"\bfinal\b", "", toks).strip()
        if not toks:
            continue
        # split off the trailing variable name; keep varargs/array markers
        m = re.match(rf"^(.*?)(\.\.\.)?\s*({_IDENT})\s*((?:\[\s*\])*)$", toks, re.S)
        if not m:
            types.append(normalize_type(toks))
            continue
        base, varargs, _name, trailing_arrays = m.groups()
        t = base.strip()
        if trailing_arrays:
            t += "[]" * trailing_arrays.count("[")
        if varargs:
            t += "..."
        types.append(normalize_type(t))
    return types


def normalize_type(type_text: str) -> str:
    """Collapse whitespace in a type; '? extends Foo < T >' -> '? extends Foo<T>'."""
    t = re.sub(r"\s+", " ", type_text.strip())
    t = re.sub(r"\s*([<>,\[\]])\s*", r"\1", t)
    return t


def erased_simple_type(type_text: str) -> str:
    """Erase generics and package qualifiers: 'java.util.List<String>' -> 'List'."""
    t = normalize_type(type_text)
    suffix = ""
    while t.endswith("[]") or t.endswith("..."):
        if t.endswith("..."):
            t, suffix = t[:-3], "..." + suffix
        else:
            t, suffix = t[:-2], "[]" + suffix
    t = re.sub(r"<.*>$", "", t)
    t = t.rsplit(".", 1)[-1]
    return t + suffix


def _first_structural_char(mask: str, start: int, stop: int) -> tuple[str, int]:
    """First of ';' '{' '=' '(' at bracket depth 0 in mask[start:stop].

    Annotations embedded in the header (type annotations, parameter-less or
    with arguments) are skipped so their parentheses don't read as a method.
    Headers use '<>' only as generics, so '>' is safe to treat as a closer.
    """
    depth = 0
    i = start
    while i < stop:
        ch = mask[i]
        if ch == "@":
            i = _skip_annotation(mask, i)
            continue
        if depth == 0 and ch in ";{=(":
            return ch, i
        if ch in "<([":
            depth += 1
        elif ch in ">)]":
            depth = max(depth - 1, 0)
        i += 1
    raise JavaParseError("declaration does not terminate", _line_of(mask, start))


def _member_name_before(mask: str, paren_pos: int) -> str | None:
    i = paren_pos - 1
    while i >= 0 and mask[i].isspace():
        i -= 1
    end = i + 1
    while i >= 0 and (mask[i].isalnum() or mask[i] in "_$"):
        i -= 1
    name = mask[i + 1 : end]
    return name or None


def _scan_members(source: str, mask: str, body_open: int, body_close: int,
                  class_name: str) -> list[JavaMember]:
    members: list[JavaMember] = []
    i = body_open + 1
    while i < body_close:
        i = _skip_ws(mask, i)
        if i >= body_close:
            break
        if mask[i] == ";":  # stray semicolon
            i += 1
            continue
        decl_start = i
        # consume annotations (keep their span; they belong to the member)
        header_start = i
        while mask[i] == "@":
            nxt = _skip_ws(mask, i + 1)
            if mask.startswith("interface", nxt):
                break  # @interface: an annotation-type declaration
            i = _skip_ws(mask, _skip_annotation(mask, i))
        header_start = i

        ch, pos = _first_structural_char(mask, i, body_close)
        header_text = mask[header_start:pos]

        if ch == "(":
            close = _match_paren(mask, pos)
            # body '{' or ';' (abstract/native) possibly after throws-clause
            j = _skip_ws(mask, close + 1)
            while j < body_close and mask[j] not in "{;":
                j += 1
            if j >= body_close:
                raise JavaParseError("method body not found", _line_of(mask, pos))
            if mask[j] == "{":
                end = _match_brace(mask, j) + 1
                body_at: int | None = j
            else:
                end = j + 1
                body_at = None
            name = _member_name_before(mask, pos)
            if name is None or name in _MODIFIERS:
                raise JavaParseError("cannot find member name", _line_of(mask, pos))
            params = split_parameter_types(source[pos + 1 : close])
            kind = "constructor" if name == class_name else "method"
            members.append(JavaMember(kind, name, params, decl_start,
                                      header_start, end, body_at))
            i = end
        elif ch == "{":
            tokens = header_text.split()
            type_kw = _TYPE_KEYWORD_RE.search(header_text)
            if type_kw:
                end = _match_brace(mask, pos) + 1
                m = _IDENT_RE.match(mask, _skip_ws(mask, header_start + type_kw.end()))
                nested_name = m.group(0) if m else None
                members.append(JavaMember("type", nested_name, None, decl_start,
                                          header_start, end, pos))
            elif not tokens or tokens == ["static"]:
                end = _match_brace(mask, pos) + 1
                members.append(JavaMember("initializer", None, None, decl_start,
                                          header_start, end, pos))
            else:
                raise JavaParseError("unrecognized member shape",
                                     _line_of(mask, decl_start))
            i = end
        else:  # '=' or ';' -> field declaration
            if ch == "=":
                # skip the initializer: to ';' at depth 0 (arrays/anon classes)
                depth = 0
                j = pos
                while j < body_close:
                    c = mask[j]
                    if c in "([{":
                        depth += 1
                    elif c in ")]}":
                        depth -= 1
                    elif c == ";" and depth == 0:
                        break
                    j += 1
                end = j + 1
            else:
                end = pos + 1
            names = [t for t in header_text.replace(",", " ").split() if t]
            field_name = names[-1].rstrip("[]") if names else None
            members.append(JavaMember("field", field_name, None, decl_start,
                                      header_start, end, None))
            i = end

    # fill texts, headers, and attached leading comments
    for m in members:
        m.start = _expand_to_line_start(
            source, _attach_leading_trivia(source, mask, m.start))
        m.text = source[m.start : m.end].rstrip()
        header_end = m.body_open if m.body_open is not None else m.end - 1
        header_from = _expand_to_line_start(source, m.header_start)
        m.header = source[header_from:header_end].rstrip()
    return members


def parse_java_unit(source: str) -> JavaUnit:
    """Parse a compilation unit into package, imports, and top-level types."""
    mask = mask_source(source)

    package = None
    pkg = _PACKAGE_RE.search(mask)
    if pkg:
        package = source[pkg.start() : pkg.end()]
    imports = [source[m.start() : m.end()] for m in _IMPORT_RE.finditer(mask)]

    classes: list[JavaClass] = []
    depth = 0
    i = 0
    decl_anchor = 0  # start of the run of tokens since the last boundary
    n = len(mask)
    while i < n:
        ch = mask[i]
        if ch == "{":
            if depth == 0:
                header_zone = mask[decl_anchor:i]
                kw = _TYPE_KEYWORD_RE.search(header_zone)
                if kw:
                    name_at = _skip_ws(mask, decl_anchor + kw.end())
                    m = _IDENT_RE.match(mask, name_at)
                    if not m:
                        raise JavaParseError("type name missing",
                                             _line_of(mask, decl_anchor))
                    close = _match_brace(mask, i)
                    decl_start = _skip_ws(mask, decl_anchor)
                    decl_start = _expand_to_line_start(
                        source, _attach_leading_trivia(source, mask, decl_start))
                    cls = JavaClass(
                        name=m.group(0),
                        kind=kw.group(1),
                        decl_start=decl_start,
                        header_end=i,
                        body_close=close,
                    )
                    cls.header = source[decl_start:i].rstrip()
                    if cls.kind == "class":
                        cls.members = _scan_members(source, mask, i, close, cls.name)
                    classes.append(cls)
                    i = close + 1
                    decl_anchor = i
                    continue
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth < 0:
                raise JavaParseError("unbalanced '}'", _line_of(mask, i))
        elif ch == ";" and depth == 0:
            decl_anchor = i + 1
        elif ch == "@" and depth == 0:
            # keep annotations out of the header keyword scan zone but let
            # decl_anchor include them so headers carry class annotations
            i = _skip_annotation(mask, i)
            continue
        i += 1
    if depth != 0:
        raise JavaParseError("unbalanced braces at end of file", _line_of(mask, n - 1))
    if not classes:
        raise JavaParseError("no type declaration found")
    return JavaUnit(source=source, mask=mask, package=package,
                    imports=imports, classes=classes)
