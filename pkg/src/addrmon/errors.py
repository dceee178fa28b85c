"""Exception hierarchy.

Every error has a short ``code`` that appears in verdict lines
(``REJECTED <line> <code>``) and in corpus expectations.
"""

from __future__ import annotations


class AddrmonError(Exception):
    code = "Error"


# -- decoding nets -----------------------------------------------------------

class NetError(AddrmonError):
    code = "NetError"


class DuplicateNode(NetError):
    code = "DuplicateNode"

    def __init__(self, node_id):
        super().__init__(f"node {node_id!r} defined twice")
        self.node_id = node_id


class DanglingReference(NetError):
    code = "DanglingReference"

    def __init__(self, node_id, referrer=None):
        where = f" (from {referrer!r})" if referrer is not None else ""
        super().__init__(f"reference to unknown node {node_id!r}{where}")
        self.node_id = node_id
        self.referrer = referrer


class OverlappingRanges(NetError):
    code = "OverlappingRanges"

    def __init__(self, node_id, detail=""):
        super().__init__(f"overlapping ranges in node {node_id!r}: {detail}")
        self.node_id = node_id


class AddressOverflow(NetError, ValueError):
    code = "AddressOverflow"


class UnknownNode(NetError, KeyError):
    code = "UnknownNode"

    def __init__(self, node_id):
        super().__init__(node_id)
        self.node_id = node_id

    def __str__(self):
        return f"unknown node {self.node_id!r}"


class ResolutionError(NetError):
    """Raised when a name has no canonical form."""

    code = "ResolutionError"

    def __init__(self, name, path, msg=""):
        self.name = name
        self.path = tuple(path)
        trail = " -> ".join(str(p) for p in self.path)
        super().__init__(f"{msg or self.code} resolving {name}: {trail}")


class Undecodable(ResolutionError):
    code = "Undecodable"


class Loop(ResolutionError):
    code = "Loop"


class DestinationMismatch(ResolutionError):
    code = "DestinationMismatch"


# -- authority / reference monitor -------------------------------------------

class MonitorError(AddrmonError):
    code = "MonitorError"


class InsufficientRights(MonitorError):
    code = "InsufficientRights"

    def __init__(self, subject, obj, right, detail=""):
        msg = f"{subject} lacks {right} on {obj}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)
        self.subject = subject
        self.obj = obj
        self.right = right


class PartitioningViolation(MonitorError):
    code = "PartitioningViolation"


class IllegalRetype(MonitorError):
    code = "IllegalRetype"


class RangeConflict(MonitorError):
    code = "RangeConflict"


class AlreadyDerived(MonitorError):
    code = "AlreadyDerived"


class WrongType(MonitorError):
    code = "WrongType"


class Misaligned(MonitorError):
    code = "Misaligned"


class Overlap(MonitorError):
    code = "Overlap"


class StaticSpace(MonitorError):
    code = "StaticSpace"


class UnknownMapping(MonitorError):
    code = "UnknownMapping"


class UnknownObject(MonitorError):
    code = "UnknownObject"


class UnknownSubject(MonitorError):
    code = "UnknownSubject"


class DuplicateId(MonitorError):
    code = "DuplicateId"


class AddressSpaceMismatch(MonitorError):
    code = "AddressSpaceMismatch"


class NonCanonicalBase(MonitorError):
    code = "NonCanonicalBase"


class OverlappingRoots(MonitorError):
    code = "OverlappingRoots"


class InvalidArgument(MonitorError):
    code = "InvalidArgument"


class ProjectionLoop(MonitorError):
    code = "Loop"


# -- queries -----------------------------------------------------------------

class QueryError(AddrmonError):
    code = "QueryError"


class NoAllocatableMemory(QueryError):
    code = "NoAllocatableMemory"


class Unreachable(QueryError):
    code = "Unreachable"


# -- platform DSL ------------------------------------------------------------

class DslError(AddrmonError):
    code = "DslError"

    def __init__(self, msg, line=0, col=0):
        self.line = line
        self.col = col
        self.msg = msg
        super().__init__(f"{line}:{col}: {msg}" if line else msg)


class DslSyntaxError(DslError):
    code = "SyntaxError"

    def __init__(self, line, col, expected, found=""):
        msg = f"expected {expected}"
        if found:
            msg += f", found {found!r}"
        super().__init__(msg, line, col)
        self.expected = expected


class UnboundName(DslError):
    code = "UnboundName"


class DuplicateDefinition(DslError):
    code = "DuplicateDefinition"


class CompileError(DslError):
    code = "CompileError"


class BadParams(DslError):
    code = "BadParams"


# -- traces and corpus -------------------------------------------------------

class TraceParseError(AddrmonError):
    code = "ParseError"

    def __init__(self, line, msg):
        super().__init__(f"line {line}: {msg}")
        self.line = line


class CorpusFailure(AddrmonError):
    code = "CorpusFailure"
