"""Exception hierarchy shared across the package."""

from __future__ import annotations


class SupportSkillsError(Exception):
    """Base class for every error raised by this package."""


class UnknownLabel(SupportSkillsError, ValueError):
    def __init__(self, kind: str, raw: str) -> None:
        super().__init__(f"unknown {kind} label: {raw!r}")
        self.kind = kind
        self.raw = raw


class EmptyGroup(SupportSkillsError, ValueError):
    pass


class BackendError(SupportSkillsError):
    """Any failure talking to a chat backend."""


class ScriptExhausted(BackendError):
    def __init__(self, tag: str, index: int) -> None:
        super().__init__(f"no scripted response for tag {tag!r} at index {index}")
        self.tag = tag
        self.index = index


class HttpError(BackendError):
    def __init__(self, status: int, body: str = "") -> None:
        super().__init__(f"HTTP {status}: {body[:200]}")
        self.status = status
        self.body = body


class BackendTimeout(BackendError):
    pass


class ParseError(SupportSkillsError, ValueError):
    pass


class Unparseable(ParseError):
    pass


class BadStrategy(ParseError):
    pass


class InconsistentReport(ParseError):
    pass


class MissingSlot(SupportSkillsError, KeyError):
    def __init__(self, name: str) -> None:
        super().__init__(name)
        self.name = name

    def __str__(self) -> str:
        return f"missing slot: {self.name}"


class UnknownSlot(SupportSkillsError, KeyError):
    def __init__(self, name: str) -> None:
        super().__init__(name)
        self.name = name

    def __str__(self) -> str:
        return f"unknown slot: {self.name}"


class SkillFormatError(ParseError):
    pass


class MissingFrontmatter(SkillFormatError):
    pass


class MissingField(SkillFormatError):
    def __init__(self, field: str, where: str = "") -> None:
        super().__init__(f"missing field {field!r}" + (f" in {where}" if where else ""))
        self.field = field


class BadVersion(SkillFormatError):
    pass


class FrontmatterSyntax(SkillFormatError):
    pass


class BankError(SupportSkillsError):
    pass


class DuplicateSkill(BankError):
    def __init__(self, name: str) -> None:
        super().__init__(f"duplicate skill name: {name}")
        self.name = name


class UnknownSkill(BankError, KeyError):
    def __init__(self, name: str) -> None:
        super().__init__(name)
        self.name = name

    def __str__(self) -> str:
        return f"unknown skill: {self.name}"


class VersionRegression(BankError):
    pass


class NothingToRollback(BankError):
    pass


class NameCollision(BankError):
    pass


class EmptyInput(SupportSkillsError, ValueError):
    pass


class DegenerateInput(SupportSkillsError, ValueError):
    pass


class LengthMismatch(SupportSkillsError, ValueError):
    pass
