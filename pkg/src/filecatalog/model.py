"""Domain types: file identifiers, replicas, attribute schemas and tokens."""

from __future__ import annotations

import math
import re
import uuid
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Union

from .errors import InvalidArgumentError

GUID_RE = re.compile(r"^[0-9a-f]{8}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{12}$")
IDENT_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")

RESERVED_NAMES = frozenset({"guid", "pfname", "lfname"})
# predicate-language keywords cannot name attributes
KEYWORDS = frozenset({"and", "or", "not", "like", "true", "false"})
ATTRIBUTE_TYPES = ("string", "int", "float", "bool")

INT64_MIN = -(2**63)
INT64_MAX = 2**63 - 1

Value = Union[str, int, float, bool, None]


def generate_file_id() -> str:
    """Return a fresh random version-4 GUID in canonical lowercase form."""
    return str(uuid.uuid4())


def canonical_file_id(value: str) -> str:
    """Normalise a user-supplied FileID; input is case-insensitive."""
    if not isinstance(value, str):
        raise InvalidArgumentError(f"file id must be a string, got {type(value).__name__}")
    text = value.strip().lower()
    if len(text) != 36 or not GUID_RE.match(text):
        raise InvalidArgumentError(f"malformed file id: {value!r}")
    return text


def is_file_id(value: str) -> bool:
    try:
        canonical_file_id(value)
    except InvalidArgumentError:
        return False
    return True


def as_pfn(pfn: PFN | str, filetype: str | None = None) -> PFN:
    if isinstance(pfn, PFN):
        return pfn if filetype is None else PFN(pfn.name, filetype)
    return PFN(pfn, filetype)


# characters no XML 1.0 document can carry, even escaped
_UNSTORABLE_RE = re.compile("[\x00-\x08\x0b\x0c\x0e-\x1f\ud800-\udfff\ufffe\uffff]")


def check_text(value: str, what: str) -> str:
    m = _UNSTORABLE_RE.search(value)
    if m:
        raise InvalidArgumentError(f"{what} contains an unstorable character {m.group()!r}")
    return value


def check_name(value: str, what: str) -> str:
    if not isinstance(value, str) or not value:
        raise InvalidArgumentError(f"{what} must be a non-empty string")
    return check_text(value, what)


@dataclass(frozen=True)
class PFN:
    """A physical replica: its name (path or URL) and an optional storage tag."""

    name: str
    filetype: str | None = None

    def __post_init__(self) -> None:
        check_name(self.name, "PFN name")
        if self.filetype is not None:
            if not isinstance(self.filetype, str):
                raise InvalidArgumentError("PFN filetype must be a string")
            check_text(self.filetype, "PFN filetype")
        # empty tag and no tag are the same thing on every backend
        if self.filetype == "":
            object.__setattr__(self, "filetype", None)

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Attribute:
    name: str
    type: str


@dataclass(frozen=True)
class AttributeSchema:
    """Ordered, typed attribute definitions."""

    attributes: tuple[Attribute, ...] = ()

    def __post_init__(self) -> None:
        seen = set()
        for attr in self.attributes:
            if not isinstance(attr.name, str) or not IDENT_RE.match(attr.name):
                raise InvalidArgumentError(f"invalid attribute name: {attr.name!r}")
            if attr.name in RESERVED_NAMES or attr.name.lower() in KEYWORDS:
                raise InvalidArgumentError(f"attribute name {attr.name!r} is reserved")
            if attr.type not in ATTRIBUTE_TYPES:
                raise InvalidArgumentError(f"unsupported attribute type: {attr.type!r}")
            if attr.name in seen:
                raise InvalidArgumentError(f"duplicate attribute name: {attr.name!r}")
            seen.add(attr.name)

    @classmethod
    def of(cls, pairs: Iterable[tuple[str, str]] | AttributeSchema | None) -> AttributeSchema:
        if pairs is None:
            return cls()
        if isinstance(pairs, AttributeSchema):
            return pairs
        return cls(tuple(Attribute(n, t) for n, t in pairs))

    def pairs(self) -> list[tuple[str, str]]:
        return [(a.name, a.type) for a in self.attributes]

    def types(self) -> dict[str, str]:
        return {a.name: a.type for a in self.attributes}

    def names(self) -> list[str]:
        return [a.name for a in self.attributes]

    def __len__(self) -> int:
        return len(self.attributes)

    def __iter__(self):
        return iter(self.attributes)

    def __contains__(self, name: object) -> bool:
        return any(a.name == name for a in self.attributes)


def value_type(value: Any) -> str:
    """Name the attribute type a Python value belongs to."""
    if isinstance(value, bool):
        return "bool"
    if isinstance(value, int):
        return "int"
    if isinstance(value, float):
        return "float"
    if isinstance(value, str):
        return "string"
    raise InvalidArgumentError(f"unsupported value type: {type(value).__name__}")


def check_value(attr_type: str, value: Any, attr: str = "value") -> Value:
    """Validate ``value`` against ``attr_type``; returns the stored form."""
    if value is None:
        raise InvalidArgumentError(f"{attr}: null is not a settable value")
    actual = value_type(value)
    if attr_type == "float" and actual == "int":
        actual, value = "float", float(value)
    if actual != attr_type:
        raise InvalidArgumentError(f"type mismatch for {attr}: expected {attr_type}, got {actual}")
    if actual == "int" and not INT64_MIN <= value <= INT64_MAX:
        raise InvalidArgumentError(f"{attr}: integer out of 64-bit range")
    if actual == "float" and not math.isfinite(value):
        raise InvalidArgumentError(f"{attr}: non-finite floats are not storable")
    if actual == "string":
        check_text(value, attr)
    return value


def check_row(schema: AttributeSchema, values: Mapping[str, Any]) -> dict[str, Value]:
    types = schema.types()
    row = {}
    for name, value in values.items():
        if name not in types:
            raise InvalidArgumentError(f"unknown attribute: {name!r}")
        if value is not None:
            row[name] = check_value(types[name], value, name)
    return row


def full_row(schema: AttributeSchema, values: Mapping[str, Value]) -> dict[str, Value]:
    """Expand a sparse row to every schema attribute, unset ones as None."""
    return {a.name: values.get(a.name) for a in schema.attributes}


def encode_value(value: Value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def decode_value(attr_type: str, text: str) -> Value:
    try:
        if attr_type == "int":
            return int(text)
        if attr_type == "float":
            return float(text)
    except ValueError as exc:
        raise InvalidArgumentError(f"cannot decode {text!r} as {attr_type}") from exc
    if attr_type == "bool":
        if text not in ("true", "false"):
            raise InvalidArgumentError(f"cannot decode {text!r} as bool")
        return text == "true"
    return text


@dataclass(frozen=True)
class CatalogEntry:
    """One logical file: its replicas (master first), aliases and metadata row."""

    file_id: str
    pfns: tuple[PFN, ...]
    lfns: tuple[str, ...] = ()
    metadata: Mapping[str, Value] = field(default_factory=dict)

    @property
    def master(self) -> PFN:
        return self.pfns[0]

    def pfn_names(self) -> list[str]:
        return [p.name for p in self.pfns]

    def query_row(self) -> dict[str, Any]:
        """Metadata extended with the guid/pfname/lfname pseudo-attributes."""
        row: dict[str, Any] = dict(self.metadata)
        row["guid"] = self.file_id
        row["pfname"] = [p.name for p in self.pfns]
        row["lfname"] = list(self.lfns)
        return row


@dataclass(frozen=True, order=True)
class Token:
    """Reference to one persistent object: file, container, ordinal."""

    file_id: str
    container: str
    item: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "file_id", canonical_file_id(self.file_id))
        check_name(self.container, "token container")
        if isinstance(self.item, bool) or not isinstance(self.item, int) or self.item < 0:
            raise InvalidArgumentError(f"token item must be a non-negative integer: {self.item!r}")

    def __str__(self) -> str:
        return f"{self.file_id}/{self.container}/{self.item}"

    @classmethod
    def parse(cls, text: str) -> Token:
        guid, sep, rest = text.partition("/")
        container, sep2, item = rest.rpartition("/")
        if not sep or not sep2 or not item.isdigit() or not item.isascii():
            raise InvalidArgumentError(f"malformed token: {text!r}")
        return cls(guid, container, int(item))
