"""The 60-class tropical-timber taxonomy with family/genus grouping.

Taxonomy document format (bit-exact): UTF-8 JSON object with keys
``version`` (string) and ``classes`` (array of records in display order).
Each record carries ``class_id`` and ``trade_name``, plus optional
``genus``, ``family``, ``description``; absent optionals are omitted
entirely, never null or empty. Serialization is 2-space-indented JSON
with record keys in the order above and a trailing newline.

class_id = trade name lowercased with spaces replaced by hyphens.

Family and genus assignments ship in a separate curated file merged over
the name list by :func:`default_taxonomy`; they are display/configuration
data, not authoritative botany.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from importlib import resources

_OPTIONAL_FIELDS = ("genus", "family", "description")


class TaxonomyError(ValueError):
    """Malformed taxonomy document or invariant violation."""


class UnknownClassError(KeyError):
    """Lookup of a class_id absent from the taxonomy."""


@dataclass(frozen=True)
class TimberClass:
    class_id: str
    trade_name: str
    genus: str | None = None
    family: str | None = None
    description: str | None = None

    def to_dict(self) -> dict:
        d = {"class_id": self.class_id, "trade_name": self.trade_name}
        for key in _OPTIONAL_FIELDS:
            value = getattr(self, key)
            if value is not None:
                d[key] = value
        return d


@dataclass(frozen=True)
class Taxonomy:
    """Immutable after load; safe to share across threads."""

    classes: tuple[TimberClass, ...]
    version: str

    @cached_property
    def _by_id(self) -> dict[str, TimberClass]:
        return {c.class_id: c for c in self.classes}

    def __len__(self) -> int:
        return len(self.classes)

    def class_ids(self) -> list[str]:
        return [c.class_id for c in self.classes]

    def __contains__(self, class_id: str) -> bool:
        return class_id in self._by_id

    def get(self, class_id: str) -> TimberClass:
        try:
            return self._by_id[class_id]
        except KeyError:
            raise UnknownClassError(f"unknown class_id: {class_id!r}") from None


def class_id_for(trade_name: str) -> str:
    """Derive the stable identifier from a display name."""
    cid = trade_name.strip().lower().replace(" ", "-")
    if not cid.isascii():
        raise TaxonomyError(f"trade name {trade_name!r} is not ASCII")
    return cid


def _parse_record(entry: object, index: int) -> TimberClass:
    where = f"classes[{index}]"
    if not isinstance(entry, dict):
        raise TaxonomyError(f"{where}: record must be an object")
    class_id = entry.get("class_id")
    if not isinstance(class_id, str) or not class_id:
        raise TaxonomyError(f"{where}: missing or empty class_id")
    trade_name = entry.get("trade_name")
    if not isinstance(trade_name, str) or not trade_name:
        raise TaxonomyError(f"{where} ({class_id}): missing or empty trade_name")
    optional: dict[str, str | None] = {}
    for key in _OPTIONAL_FIELDS:
        if key in entry:
            value = entry[key]
            if not isinstance(value, str) or not value:
                raise TaxonomyError(f"{where} ({class_id}): {key} must be a non-empty string")
            optional[key] = value
    unknown = set(entry) - {"class_id", "trade_name", *_OPTIONAL_FIELDS}
    if unknown:
        raise TaxonomyError(f"{where} ({class_id}): unknown fields {sorted(unknown)}")
    return TimberClass(class_id=class_id, trade_name=trade_name, **optional)


def load_taxonomy(source: bytes | str) -> Taxonomy:
    """Parse a taxonomy document; raises TaxonomyError with entry context."""
    if isinstance(source, bytes):
        try:
            source = source.decode("utf-8")
        except UnicodeDecodeError as e:
            raise TaxonomyError(f"document is not UTF-8: {e}") from None
    try:
        doc = json.loads(source)
    except json.JSONDecodeError as e:
        raise TaxonomyError(f"document is not valid JSON: {e}") from None
    if not isinstance(doc, dict):
        raise TaxonomyError("document root must be an object")
    version = doc.get("version")
    if not isinstance(version, str) or not version:
        raise TaxonomyError("document must carry a non-empty version string")
    entries = doc.get("classes")
    if not isinstance(entries, list):
        raise TaxonomyError("document must carry a classes array")
    classes = [_parse_record(entry, i) for i, entry in enumerate(entries)]
    seen: dict[str, int] = {}
    for i, c in enumerate(classes):
        if c.class_id in seen:
            raise TaxonomyError(
                f"duplicate class_id {c.class_id!r} at classes[{seen[c.class_id]}] and classes[{i}]"
            )
        seen[c.class_id] = i
    return Taxonomy(classes=tuple(classes), version=version)


def serialize_taxonomy(taxonomy: Taxonomy) -> bytes:
    doc = {
        "version": taxonomy.version,
        "classes": [c.to_dict() for c in taxonomy.classes],
    }
    return (json.dumps(doc, ensure_ascii=False, indent=2) + "\n").encode("utf-8")


def family_of(taxonomy: Taxonomy, class_id: str) -> str | None:
    """Family name if assigned, else None. Raises UnknownClassError."""
    return taxonomy.get(class_id).family


def wood_info(taxonomy: Taxonomy, class_id: str) -> TimberClass:
    """Full record for the wood-information page. Raises UnknownClassError."""
    return taxonomy.get(class_id)


_default: Taxonomy | None = None


def default_taxonomy() -> Taxonomy:
    """The bundled 60-class taxonomy: the name list merged with the curated
    genus/family/description file. Cached after first load."""
    global _default
    if _default is None:
        data = resources.files("xylid").joinpath("data")
        tax = load_taxonomy(data.joinpath("taxonomy.json").read_bytes())
        curated = json.loads(data.joinpath("families.json").read_text("utf-8"))
        merged = []
        for c in tax.classes:
            extra = curated.get(c.class_id, {})
            merged.append(
                TimberClass(
                    class_id=c.class_id,
                    trade_name=c.trade_name,
                    genus=extra.get("genus"),
                    family=extra.get("family"),
                    description=extra.get("description"),
                )
            )
        _default = Taxonomy(classes=tuple(merged), version=tax.version)
    return _default
