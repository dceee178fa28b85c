"""Vulnerability scenarios: a platform plus a trace that must be rejected.

A scenario file has three parts separated by lines holding only ``---``::

    name: too-large-map
    class: PolicyEnforcement
    expect: REJECTED 7 InsufficientRights
    guarded: yes
    ---
    <platform description>
    ---
    <trace>

Line numbers in ``expect`` count from the first line of the trace part.
``guarded: yes`` asserts that the rejection comes from a monitor guard, so
running with guards disabled must not reproduce it; ``no`` marks
rejections that happen before the monitor is involved (trace parsing).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from . import trace as tr
from .dsl import compile_text
from .errors import AddrmonError, CorpusFailure, TraceParseError

CLASSES = ("PolicyEnforcement", "Partitioning", "NameResolution")
_EXPECT = re.compile(r"^REJECTED (\d+) ([A-Za-z]+)$")


@dataclass(frozen=True)
class Scenario:
    name: str
    cls: str
    expect: str
    guarded: bool
    platform: str
    trace: str
    path: str = ""


def parse_scenario(text: str, path: str = "") -> Scenario:
    parts = re.split(r"^---[ \t]*$\n?", text, flags=re.M)
    if len(parts) != 3:
        raise CorpusFailure(f"{path}: expected header, platform and trace separated by '---'")
    header, platform, trace = parts
    fields = {}
    for line in header.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition(":")
        if not sep:
            raise CorpusFailure(f"{path}: malformed header line {line!r}")
        fields[key.strip()] = value.strip()
    for key in ("name", "class", "expect"):
        if key not in fields:
            raise CorpusFailure(f"{path}: missing header field {key!r}")
    if fields["class"] not in CLASSES:
        raise CorpusFailure(f"{path}: unknown class {fields['class']!r}")
    if not _EXPECT.match(fields["expect"]):
        raise CorpusFailure(f"{path}: expectation must read 'REJECTED <line> <code>'")
    guarded = fields.get("guarded", "yes").lower()
    if guarded not in ("yes", "no"):
        raise CorpusFailure(f"{path}: guarded must be yes or no")
    return Scenario(fields["name"], fields["class"], fields["expect"], guarded == "yes", platform, trace, path)


def load_scenario(path) -> Scenario:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise CorpusFailure(f"{p}: {e.strerror}") from None
    return parse_scenario(text, str(p))


def load_dir(directory) -> list[Scenario]:
    return [load_scenario(p) for p in sorted(Path(directory).glob("*.scn"))]


def builtin_dir() -> Path:
    return Path(str(resources.files("addrmon") / "data" / "corpus"))


def builtin_corpus() -> list[Scenario]:
    return load_dir(builtin_dir())


def verdict_line(sc: Scenario, unsafe_skip_guards: bool = False) -> str:
    """The verdict the monitor gives for ``sc`` as a ``VALID``/``REJECTED`` line."""
    try:
        net, conf = compile_text(sc.platform)
    except AddrmonError as e:
        raise CorpusFailure(f"{sc.name}: platform does not compile: {e}") from e
    try:
        v = tr.check_text(net, conf, sc.trace, unsafe_skip_guards)
    except TraceParseError as e:
        return f"REJECTED {e.line} {e.code}"
    return str(v)


@dataclass(frozen=True)
class Result:
    scenario: Scenario
    actual: str
    unguarded: str | None = None

    @property
    def rejected_as_expected(self) -> bool:
        return self.actual == self.scenario.expect

    @property
    def guard_demonstrated(self) -> bool:
        """Guarded scenarios must not reproduce the rejection without guards."""
        if self.unguarded is None:
            return True
        if self.scenario.guarded:
            return self.unguarded != self.scenario.expect
        return self.unguarded == self.scenario.expect

    @property
    def passed(self) -> bool:
        return self.rejected_as_expected and self.guard_demonstrated

    def diff(self) -> str:
        lines = []
        if not self.rejected_as_expected:
            lines.append(f"expected {self.scenario.expect!r}, got {self.actual!r}")
        if not self.guard_demonstrated:
            what = "still" if self.scenario.guarded else "no longer"
            lines.append(f"without guards the trace {what} gives {self.unguarded!r}")
        return "; ".join(lines)


def run_scenario(sc: Scenario, check_guards: bool = True) -> Result:
    actual = verdict_line(sc)
    unguarded = verdict_line(sc, unsafe_skip_guards=True) if check_guards else None
    return Result(sc, actual, unguarded)


def format_table(results: list[Result]) -> str:
    rows = [("scenario", "class", "expected", "actual", "unguarded", "result")]
    for r in results:
        rows.append(
            (
                r.scenario.name,
                r.scenario.cls,
                r.scenario.expect,
                r.actual,
                r.unguarded or "-",
                "pass" if r.passed else "FAIL",
            )
        )
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    out = ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in rows]
    passed = sum(r.passed for r in results)
    out.append(f"{passed}/{len(results)} scenarios pass")
    return "\n".join(out) + "\n"
