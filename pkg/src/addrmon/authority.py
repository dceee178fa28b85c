"""Subjects, rights and the access-control matrix.

The matrix maps (subject, object) pairs to sets of authorities.  An
authority is a plain :class:`Right` or a :class:`MetaAuthority`, the right
to hand a plain right on to another subject.  Missing entries mean no
rights.  Rows read as capability lists, columns as ACLs.

The matrix knows the kind of every object so that it can refuse, at
mutation time, to give any subject access to a translation structure.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Mapping, Union

from .errors import PartitioningViolation, UnknownObject, UnknownSubject

TRANSLATION_KIND = "TStructure"


class Right(enum.Enum):
    GRANT = "grant"
    MAP = "map"
    ACCESS = "access"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class MetaAuthority:
    """Right to copy ``inner`` to another subject.  Nesting depth is one."""

    inner: Right

    def __post_init__(self):
        if not isinstance(self.inner, Right):
            raise TypeError("meta-authority nests exactly one plain right")

    def __str__(self):
        return f"grant:{self.inner}"


Authority = Union[Right, MetaAuthority]


def parse_authority(text: str) -> Authority:
    text = text.strip().lower()
    if text.startswith("grant:"):
        return MetaAuthority(Right(text[len("grant:"):]))
    return Right(text)


def _sort_key(a: Authority):
    order = {Right.GRANT: 0, Right.MAP: 1, Right.ACCESS: 2}
    if isinstance(a, MetaAuthority):
        return (1, order[a.inner])
    return (0, order[a])


def sorted_rights(rights: Iterable[Authority]) -> list[Authority]:
    return sorted(rights, key=_sort_key)


def grants_access(a: Authority) -> bool:
    return a is Right.ACCESS or a == MetaAuthority(Right.ACCESS)


class AccessControlMatrix:
    """Immutable matrix; every mutator returns a new instance."""

    def __init__(
        self,
        subjects: Iterable[str] = (),
        objects: Mapping[str, str] | None = None,
        entries: Mapping[tuple[str, str], Iterable[Authority]] | None = None,
    ):
        self._subjects = frozenset(subjects)
        self._objects = dict(objects or {})
        self._entries = {k: frozenset(v) for k, v in (entries or {}).items() if v}

    @property
    def subjects(self) -> frozenset[str]:
        return self._subjects

    @property
    def objects(self) -> Mapping[str, str]:
        """Object id -> kind (``RAM``, ``Frame``, ``TStructure``, ``AddressSpace``)."""
        return self._objects

    def entries(self) -> dict[tuple[str, str], frozenset[Authority]]:
        return dict(self._entries)

    def __eq__(self, other):
        if not isinstance(other, AccessControlMatrix):
            return NotImplemented
        return (
            self._subjects == other._subjects
            and self._objects == other._objects
            and self._entries == other._entries
        )

    __hash__ = None

    def __repr__(self):
        return f"AccessControlMatrix({len(self._subjects)} subjects, {len(self._entries)} entries)"

    def _new(self, subjects=None, objects=None, entries=None):
        return AccessControlMatrix(
            self._subjects if subjects is None else subjects,
            self._objects if objects is None else objects,
            self._entries if entries is None else entries,
        )

    def with_subject(self, s: str) -> AccessControlMatrix:
        return self._new(subjects=self._subjects | {s})

    def with_object(self, o: str, kind: str) -> AccessControlMatrix:
        objects = dict(self._objects)
        objects[o] = kind
        return self._new(objects=objects)

    def without_objects(self, ids: Iterable[str]) -> AccessControlMatrix:
        gone = set(ids)
        objects = {o: k for o, k in self._objects.items() if o not in gone}
        entries = {k: v for k, v in self._entries.items() if k[1] not in gone}
        return self._new(objects=objects, entries=entries)

    def _validate(self, s, o, rights, enforce):
        if s not in self._subjects:
            raise UnknownSubject(f"unknown subject {s!r}")
        if o not in self._objects:
            raise UnknownObject(f"unknown object {o!r}")
        if enforce and self._objects[o] == TRANSLATION_KIND and any(map(grants_access, rights)):
            raise PartitioningViolation(f"access to translation object {o!r}")

    def set(self, s: str, o: str, rights: Iterable[Authority], enforce: bool = True):
        """Replace the entry for (s, o)."""
        rights = frozenset(rights)
        self._validate(s, o, rights, enforce)
        entries = dict(self._entries)
        if rights:
            entries[(s, o)] = rights
        else:
            entries.pop((s, o), None)
        return self._new(entries=entries)

    def add(self, s: str, o: str, rights: Iterable[Authority], enforce: bool = True):
        return self.set(s, o, self.rights(s, o) | frozenset(rights), enforce)

    def rights(self, s: str, o: str) -> frozenset[Authority]:
        return self._entries.get((s, o), frozenset())

    def check(self, s: str, o: str, r: Authority) -> bool:
        return r in self._entries.get((s, o), ())

    def rows(self, s: str) -> list[tuple[str, frozenset[Authority]]]:
        return sorted((o, v) for (s2, o), v in self._entries.items() if s2 == s)

    def columns(self, o: str) -> list[tuple[str, frozenset[Authority]]]:
        return sorted((s, v) for (s, o2), v in self._entries.items() if o2 == o)

    def dump(self) -> str:
        lines = []
        for (s, o), rights in sorted(self._entries.items()):
            names = ",".join(str(r) for r in sorted_rights(rights))
            lines.append(f"acm({s}, {o}, [{names}]).")
        return "".join(line + "\n" for line in lines)


def acm_set(acm: AccessControlMatrix, s: str, o: str, rights: Iterable[Authority]):
    return acm.set(s, o, rights)


def acm_check(acm: AccessControlMatrix, s: str, o: str, r: Authority) -> bool:
    return acm.check(s, o, r)


def rows(acm: AccessControlMatrix, s: str):
    return acm.rows(s)


def columns(acm: AccessControlMatrix, o: str):
    return acm.columns(o)
