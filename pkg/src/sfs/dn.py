"""Distinguished names: the hierarchical addresses of directory entries.

Implements the RFC 4514 subset the service needs: comma-separated RDNs,
leftmost most specific, attribute types restricted to dc/ou/uid/cn/o, and
backslash escaping of comma, plus and backslash inside values.  Two DNs are
equal iff their normalized forms (lowercased types, canonical escaping) are
equal.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import SfsError

ATTRIBUTE_TYPES = frozenset({"dc", "ou", "uid", "cn", "o"})

_ESCAPED = {",", "+", "\\"}


class MalformedDn(SfsError):
    code = "MALFORMED_DN"


@dataclass(frozen=True)
class DistinguishedName:
    """Ordered (attribute_type, value) pairs, leftmost = most specific."""

    rdns: tuple[tuple[str, str], ...]

    def __post_init__(self) -> None:
        if not self.rdns:
            raise MalformedDn("DN has no RDNs")
        normalized = []
        for attr_type, value in self.rdns:
            attr_type = attr_type.lower()
            if attr_type not in ATTRIBUTE_TYPES:
                raise MalformedDn(f"unknown attribute type {attr_type!r}")
            if not value:
                raise MalformedDn("empty attribute value")
            normalized.append((attr_type, value))
        object.__setattr__(self, "rdns", tuple(normalized))

    def render(self) -> str:
        """Normalized string form; ``parse_dn`` is its inverse."""
        return ",".join(f"{t}={_escape(v)}" for t, v in self.rdns)

    def __str__(self) -> str:
        return self.render()

    def parent(self) -> DistinguishedName | None:
        if len(self.rdns) == 1:
            return None
        return DistinguishedName(self.rdns[1:])

    def child(self, attr_type: str, value: str) -> DistinguishedName:
        return DistinguishedName(((attr_type, value),) + self.rdns)

    def is_under(self, base: DistinguishedName) -> bool:
        """True if this DN lies strictly below ``base`` in the tree."""
        n = len(base.rdns)
        return len(self.rdns) > n and self.rdns[-n:] == base.rdns

    def value_of(self, attr_type: str) -> str | None:
        """Value of the leftmost RDN with the given type, if any."""
        attr_type = attr_type.lower()
        for t, v in self.rdns:
            if t == attr_type:
                return v
        return None


def _escape(value: str) -> str:
    out = []
    for ch in value:
        if ch in _ESCAPED:
            out.append("\\")
        out.append(ch)
    return "".join(out)


def parse_dn(text: str) -> DistinguishedName:
    """Parse the RFC 4514 subset.

    Raises MalformedDn on empty input, unknown attribute types, RDNs without
    ``=``, unescaped ``+`` (multi-valued RDNs are unsupported) and dangling
    escapes.
    """
    if not text:
        raise MalformedDn("empty DN")
    rdns: list[tuple[str, str]] = []
    buf: list[str] = []
    attr_type: str | None = None
    it = iter(text)
    for ch in it:
        if ch == "\\":
            if attr_type is None:
                raise MalformedDn("escape inside attribute type")
            nxt = next(it, None)
            if nxt is None:
                raise MalformedDn("dangling escape")
            buf.append(nxt)
        elif ch == "=" and attr_type is None:
            attr_type = "".join(buf)
            buf = []
        elif ch == ",":
            if attr_type is None:
                raise MalformedDn("RDN missing '='")
            rdns.append((attr_type, "".join(buf)))
            attr_type, buf = None, []
        elif ch == "+":
            raise MalformedDn("multi-valued RDNs are not supported")
        else:
            buf.append(ch)
    if attr_type is None:
        raise MalformedDn("RDN missing '='")
    rdns.append((attr_type, "".join(buf)))
    return DistinguishedName(tuple(rdns))
