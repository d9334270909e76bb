"""SKILL.md documents: a small frontmatter grammar plus heading-delimited sections.

The frontmatter accepted here is a deliberately narrow subset of YAML:

* ``key: scalar`` pairs, scalars plain, single- or double-quoted;
* one nested mapping level (``metadata:`` with indented keys);
* block lists (``- item``) or flow lists (``[a, b]``) of scalars.

Anything richer (block scalars, anchors, flow mappings, deeper nesting) raises
:class:`FrontmatterSyntax`. Serialization is canonical: ``name``,
``description``, ``metadata`` (``domain``, ``category``, ``version``, then any
other keys), then unknown top-level keys in their original order. ``version``
is always double-quoted. For documents already in canonical form,
``serialize_skill(parse_skill(doc)) == doc`` byte for byte.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Union

from .errors import BadVersion, FrontmatterSyntax, MissingField, MissingFrontmatter

CATEGORIES: tuple[str, ...] = ("meta", "phase", "technique", "scenario")
DOMAIN = "emotional-support-counseling"

FmValue = Union[str, list, dict]

_KEY_RE = re.compile(r"^([A-Za-z_][\w.-]*):(?:[ \t]+(.*))?$")
_VERSION_RE = re.compile(r"^(\d+)\.(\d+)$")
_NAME_RE = re.compile(r"^[a-z0-9]+(?:-[a-z0-9]+)*$")
_HEADING_RE = re.compile(r"^(#{1,6}) (.*)$")
_FENCE_RE = re.compile(r"^ {0,3}(```|~~~)")
_SPECIAL_PLAIN = re.compile(
    r"^(?:~|null|true|false|yes|no|on|off|y|n|[-+]?(?:\d[\d_]*)?\.?\d+(?:[eE][-+]?\d+)?|[-+]?\.(?:inf|nan)|0x[0-9a-fA-F]+|0o[0-7]+)$",
    re.IGNORECASE,
)
_INDICATORS = set("-?:,[]{}#&*!|>'\"%@`")


@dataclass(frozen=True)
class Section:
    level: int
    title: str
    body: str = ""

    def render(self) -> str:
        body = self.body
        if body and not body.endswith("\n"):
            body += "\n"
        return f"{'#' * self.level} {self.title}\n{body}"


@dataclass(frozen=True)
class SkillMetadata:
    domain: str | None = None
    category: str | None = None
    version: str | None = None
    extra: dict[str, FmValue] = field(default_factory=dict)

    @property
    def is_empty(self) -> bool:
        return self.domain is None and self.category is None and self.version is None and not self.extra


@dataclass(frozen=True)
class Skill:
    name: str
    description: str
    metadata: SkillMetadata = field(default_factory=SkillMetadata)
    sections: tuple[Section, ...] = ()
    preamble: str = ""
    extra: dict[str, FmValue] = field(default_factory=dict)
    # bank bookkeeping, not part of the document
    source: str = field(default="induced", compare=False)
    parent_version: str | None = field(default=None, compare=False)

    @property
    def version(self) -> str | None:
        return self.metadata.version

    @property
    def category(self) -> str | None:
        return self.metadata.category

    def with_version(self, version: str) -> "Skill":
        parse_version(version)
        return replace(self, metadata=replace(self.metadata, version=version))

    def find_sections(self, *keywords: str) -> list[Section]:
        kws = [k.lower() for k in keywords]
        return [s for s in self.sections if any(k in s.title.lower() for k in kws)]

    @property
    def body_text(self) -> str:
        return self.preamble + "".join(s.render() for s in self.sections)


def parse_version(version: str) -> tuple[int, int]:
    m = _VERSION_RE.match(version or "")
    if not m:
        raise BadVersion(f"version must look like 'X.Y', got {version!r}")
    return int(m.group(1)), int(m.group(2))


def bump_version(version: str) -> str:
    """Next major version: '1.0' -> '2.0', '3.2' -> '4.0'."""
    major, _ = parse_version(version)
    return f"{major + 1}.0"


# --- scalar encoding -------------------------------------------------------

_ESCAPES = {"\\": "\\\\", '"': '\\"', "\n": "\\n", "\t": "\\t", "\r": "\\r", "\0": "\\0"}
_UNESCAPES = {"\\": "\\", '"': '"', "n": "\n", "t": "\t", "r": "\r", "0": "\0", "/": "/", " ": " "}


def _needs_quotes(value: str) -> bool:
    if value == "" or value != value.strip():
        return True
    if value[0] in _INDICATORS or value.endswith(":"):
        return True
    if ": " in value or "\t" in value or re.search(r"\s#", value):
        return True
    if any(ord(ch) < 0x20 or ord(ch) == 0x7F or 0x80 <= ord(ch) < 0xA0 or ch in "  ﻿" for ch in value):
        return True
    return bool(_SPECIAL_PLAIN.match(value))


def quote(value: str) -> str:
    out = []
    for ch in value:
        if ch in _ESCAPES:
            out.append(_ESCAPES[ch])
        elif ord(ch) < 0x20 or ord(ch) == 0x7F or 0x80 <= ord(ch) < 0xA0 or ch in "  ﻿":
            out.append(f"\\u{ord(ch):04x}")
        else:
            out.append(ch)
    return '"' + "".join(out) + '"'


def encode_scalar(value: str, force_quotes: bool = False) -> str:
    return quote(value) if force_quotes or _needs_quotes(value) else value


def _read_double(text: str, pos: int) -> tuple[str, int]:
    """Decode a double-quoted scalar starting at ``text[pos] == '"'``; return (value, end)."""
    out = []
    i = pos + 1
    while i < len(text):
        ch = text[i]
        if ch == '"':
            return "".join(out), i + 1
        if ch == "\\":
            if i + 1 >= len(text):
                break
            esc = text[i + 1]
            if esc in _UNESCAPES:
                out.append(_UNESCAPES[esc])
                i += 2
                continue
            width = {"x": 2, "u": 4, "U": 8}.get(esc)
            if width:
                digits = text[i + 2 : i + 2 + width]
                if len(digits) != width or not re.fullmatch(r"[0-9a-fA-F]+", digits):
                    raise FrontmatterSyntax(f"bad escape in {text!r}")
                out.append(chr(int(digits, 16)))
                i += 2 + width
                continue
            raise FrontmatterSyntax(f"unsupported escape \\{esc}")
        out.append(ch)
        i += 1
    raise FrontmatterSyntax(f"unterminated double-quoted string: {text!r}")


def _read_single(text: str, pos: int) -> tuple[str, int]:
    out = []
    i = pos + 1
    while i < len(text):
        ch = text[i]
        if ch == "'":
            if text[i + 1 : i + 2] == "'":
                out.append("'")
                i += 2
                continue
            return "".join(out), i + 1
        out.append(ch)
        i += 1
    raise FrontmatterSyntax(f"unterminated single-quoted string: {text!r}")


def _trailing_ok(rest: str, raw: str) -> None:
    rest = rest.strip()
    if rest and not rest.startswith("#"):
        raise FrontmatterSyntax(f"unexpected text after quoted scalar: {raw!r}")


def decode_scalar(raw: str) -> str:
    raw = raw.strip()
    if not raw:
        return ""
    if raw[0] == '"':
        value, end = _read_double(raw, 0)
        _trailing_ok(raw[end:], raw)
        return value
    if raw[0] == "'":
        value, end = _read_single(raw, 0)
        _trailing_ok(raw[end:], raw)
        return value
    if raw[0] in "|>":
        raise FrontmatterSyntax("block scalars are not supported")
    if raw[0] in "{&*!":
        raise FrontmatterSyntax(f"unsupported frontmatter syntax: {raw!r}")
    comment = re.search(r"\s#", raw)
    if comment:
        raw = raw[: comment.start()].rstrip()
    return raw


def _decode_flow_list(raw: str) -> list[str]:
    raw = raw.strip()
    end = raw.rfind("]")
    if end < 0:
        raise FrontmatterSyntax(f"unterminated flow list: {raw!r}")
    _trailing_ok(raw[end + 1 :], raw)
    inner = raw[1:end]
    items: list[str] = []
    i = 0
    while i < len(inner):
        while i < len(inner) and inner[i] in " \t":
            i += 1
        if i >= len(inner):
            break
        if inner[i] == '"':
            value, i = _read_double(inner, i)
        elif inner[i] == "'":
            value, i = _read_single(inner, i)
        else:
            j = inner.find(",", i)
            j = len(inner) if j < 0 else j
            value = inner[i:j].strip()
            if value[:1] in ("[", "{"):
                raise FrontmatterSyntax("nested flow collections are not supported")
            i = j
        items.append(value)
        while i < len(inner) and inner[i] in " \t":
            i += 1
        if i < len(inner):
            if inner[i] != ",":
                raise FrontmatterSyntax(f"bad flow list: {raw!r}")
            i += 1
    return items


def _decode_value(raw: str) -> FmValue:
    if raw.strip().startswith("["):
        return _decode_flow_list(raw)
    return decode_scalar(raw)


# --- frontmatter parsing ---------------------------------------------------


def _significant(lines: list[str]) -> list[tuple[int, int, str]]:
    out = []
    for n, line in enumerate(lines):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        if "\t" in line[: len(line) - len(line.lstrip())]:
            raise FrontmatterSyntax(f"tab indentation on frontmatter line {n + 1}")
        indent = len(line) - len(line.lstrip(" "))
        out.append((n + 1, indent, line.strip()))
    return out


def _parse_block(items: list[tuple[int, int, str]], pos: int, indent: int, depth: int) -> tuple[FmValue, int]:
    """Parse the block starting at ``items[pos]`` whose lines sit at ``indent``."""
    first = items[pos][2]
    if first == "-" or first.startswith("- "):
        values: list[str] = []
        while pos < len(items) and items[pos][1] == indent:
            lineno, _, content = items[pos]
            if not (content == "-" or content.startswith("- ")):
                raise FrontmatterSyntax(f"line {lineno}: mixed list and mapping")
            item = content[1:].strip()
            if item.startswith(("[", "- ")) or _KEY_RE.match(item):
                raise FrontmatterSyntax(f"line {lineno}: only scalar list items are supported")
            values.append(decode_scalar(item))
            pos += 1
        return values, pos
    if depth >= 2:
        raise FrontmatterSyntax(f"line {items[pos][0]}: mappings nest at most one level")
    mapping: dict[str, FmValue] = {}
    while pos < len(items) and items[pos][1] == indent:
        lineno, _, content = items[pos]
        m = _KEY_RE.match(content)
        if not m:
            raise FrontmatterSyntax(f"line {lineno}: expected 'key: value'")
        key, raw = m.group(1), m.group(2)
        if key in mapping:
            raise FrontmatterSyntax(f"line {lineno}: duplicate key {key!r}")
        pos += 1
        if raw is None or raw.strip() == "" or raw.strip().startswith("#"):
            if pos < len(items) and items[pos][1] > indent:
                mapping[key], pos = _parse_block(items, pos, items[pos][1], depth + 1)
            else:
                mapping[key] = ""
        else:
            mapping[key] = _decode_value(raw)
    if pos < len(items) and items[pos][1] > indent:
        raise FrontmatterSyntax(f"line {items[pos][0]}: unexpected indentation")
    return mapping, pos


def parse_frontmatter(text: str) -> dict[str, FmValue]:
    items = _significant(text.split("\n"))
    if not items:
        return {}
    if items[0][1] != 0:
        raise FrontmatterSyntax("frontmatter must start at column 0")
    value, pos = _parse_block(items, 0, 0, 0)
    if pos != len(items) or not isinstance(value, dict):
        raise FrontmatterSyntax("frontmatter must be a mapping")
    return value


def _emit(key: str, value: FmValue, indent: int, lines: list[str], force_quotes: bool = False) -> None:
    pad = " " * indent
    if isinstance(value, dict):
        lines.append(f"{pad}{key}:")
        for k, v in value.items():
            _emit(k, v, indent + 2, lines)
    elif isinstance(value, (list, tuple)):
        if not value:
            lines.append(f"{pad}{key}: []")
            return
        lines.append(f"{pad}{key}:")
        for item in value:
            lines.append(f"{pad}  - {encode_scalar(str(item))}")
    else:
        lines.append(f"{pad}{key}: {encode_scalar(str(value), force_quotes)}")


def render_frontmatter(skill: Skill) -> str:
    lines = ["---"]
    _emit("name", skill.name, 0, lines)
    _emit("description", skill.description, 0, lines)
    md = skill.metadata
    if not md.is_empty:
        lines.append("metadata:")
        if md.domain is not None:
            _emit("domain", md.domain, 2, lines)
        if md.category is not None:
            _emit("category", md.category, 2, lines)
        if md.version is not None:
            _emit("version", md.version, 2, lines, force_quotes=True)
        for k, v in md.extra.items():
            _emit(k, v, 2, lines)
    for k, v in skill.extra.items():
        _emit(k, v, 0, lines)
    lines.append("---")
    return "\n".join(lines) + "\n"


# --- document ---------------------------------------------------------------


def normalize_newlines(text: str) -> str:
    text = text.replace("\r\n", "\n").replace("\r", "\n")
    if text.startswith("﻿"):
        text = text[1:]
    return text


def split_sections(body: str) -> tuple[str, tuple[Section, ...]]:
    """Split a markdown body into (preamble, sections) on ATX headings outside code fences."""
    if body and not body.endswith("\n"):
        body += "\n"
    preamble: list[str] = []
    sections: list[tuple[int, str, list[str]]] = []
    fence: str | None = None
    # split on "\n" only: str.splitlines would also break on form feeds and U+2028
    for line in re.findall(r"[^\n]*\n", body):
        stripped = line.rstrip("\n")
        m_fence = _FENCE_RE.match(stripped)
        if m_fence:
            marker = m_fence.group(1)
            if fence is None:
                fence = marker
            elif marker == fence:
                fence = None
        heading = _HEADING_RE.match(stripped) if fence is None and not m_fence else None
        if heading:
            sections.append((len(heading.group(1)), heading.group(2), []))
        elif sections:
            sections[-1][2].append(line)
        else:
            preamble.append(line)
    return "".join(preamble), tuple(Section(level, title, "".join(body)) for level, title, body in sections)


def _str_field(fm: dict, key: str, where: str) -> str:
    value = fm.get(key)
    if value is None or value == "":
        raise MissingField(key, where)
    if not isinstance(value, str):
        raise FrontmatterSyntax(f"{where}{key} must be a scalar")
    return value


def parse_skill(text: str) -> Skill:
    text = normalize_newlines(text)
    lines = text.split("\n")
    if not lines or lines[0].rstrip() != "---":
        raise MissingFrontmatter("document must start with a '---' line")
    try:
        close = next(i for i in range(1, len(lines)) if lines[i].rstrip() == "---")
    except StopIteration:
        raise MissingFrontmatter("frontmatter is not closed by a second '---' line") from None
    fm = parse_frontmatter("\n".join(lines[1:close]))
    name = _str_field(fm, "name", "")
    description = _str_field(fm, "description", "")
    raw_md = fm.get("metadata", {})
    if raw_md == "":
        raw_md = {}
    if not isinstance(raw_md, dict):
        raise FrontmatterSyntax("metadata must be a mapping")
    meta_vals: dict[str, str | None] = {}
    for key in ("domain", "category", "version"):
        value = raw_md.get(key)
        if value is not None and not isinstance(value, str):
            raise FrontmatterSyntax(f"metadata.{key} must be a scalar")
        meta_vals[key] = value
    if meta_vals["version"] is not None:
        parse_version(meta_vals["version"])
    metadata = SkillMetadata(
        domain=meta_vals["domain"],
        category=meta_vals["category"],
        version=meta_vals["version"],
        extra={k: v for k, v in raw_md.items() if k not in ("domain", "category", "version")},
    )
    body = "\n".join(lines[close + 1 :])
    preamble, sections = split_sections(body)
    return Skill(
        name=name,
        description=description,
        metadata=metadata,
        sections=sections,
        preamble=preamble,
        extra={k: v for k, v in fm.items() if k not in ("name", "description", "metadata")},
    )


def serialize_skill(skill: Skill) -> str:
    preamble = skill.preamble
    if preamble and not preamble.endswith("\n"):
        preamble += "\n"
    return render_frontmatter(skill) + preamble + "".join(s.render() for s in skill.sections)


# --- schema -------------------------------------------------------------------

# Each role is satisfied by any heading containing one of its keywords.
BANK_SCHEMA: dict[str, tuple[str, ...]] = {
    "overview": ("overview",),
    "activation": ("when to use", "activation", "trigger", "decision rule", "when "),
    "actions": ("recommended action", "operational step", "protocol", "principle", "workflow", "steps", "action"),
    "pitfalls": ("pitfall", "avoid", "anti-pattern", "failure mode", "mistake", "risk", "contrastive"),
    "examples": ("example", "scenario", "template"),
}

CREATE_SCHEMA: dict[str, tuple[str, ...]] = {
    "Technique Overview": ("overview",),
    "When to Use": ("when to use",),
    "Operational Steps": ("operational steps",),
    "Contrastive Examples": ("contrastive examples",),
    "Coordination with Other Skills": ("coordination",),
}


def missing_sections(skill: Skill, schema: dict[str, tuple[str, ...]] = BANK_SCHEMA) -> list[str]:
    titles = [s.title.lower() for s in skill.sections]
    return [role for role, kws in schema.items() if not any(k in t for t in titles for k in kws)]


def validate_skill(skill: Skill, schema: dict[str, tuple[str, ...]] = BANK_SCHEMA) -> list[str]:
    """Return human-readable schema problems; an empty list means the skill is valid."""
    problems = []
    if not _NAME_RE.match(skill.name):
        problems.append(f"name {skill.name!r} is not kebab-case")
    if "\n" in skill.description:
        problems.append("description must be a single paragraph line")
    md = skill.metadata
    if not md.domain:
        problems.append("metadata.domain missing")
    if md.category not in CATEGORIES:
        problems.append(f"metadata.category {md.category!r} not in {CATEGORIES}")
    if md.version is None:
        problems.append("metadata.version missing")
    problems += [f"missing section: {role}" for role in missing_sections(skill, schema)]
    return problems


def is_valid_name(name: str) -> bool:
    return bool(_NAME_RE.match(name))


def make_skill(
    name: str,
    description: str,
    category: str,
    version: str = "1.0",
    sections: Iterable[tuple[int, str, str]] = (),
    domain: str = DOMAIN,
    **metadata_extra: Any,
) -> Skill:
    return Skill(
        name=name,
        description=description,
        metadata=SkillMetadata(domain=domain, category=category, version=version, extra=dict(metadata_extra)),
        sections=tuple(Section(level, title, body) for level, title, body in sections),
    )
