# Flat "section.key = value" documents
import re
from typing import Any, Dict, List, Tuple

from exceptions import ConfigParseError

_KEY_PATTERN = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*(\.[A-Za-z_][A-Za-z0-9_]*)+$")


def format_float(value: float) -> str:
    """17 significant digits, '.' decimal, round-trip safe"""
    return format(float(value), ".17g")


def _parse_scalar(token: str) -> Any:
    text = token.strip()
    lowered = text.lower()
    if lowered in ("true", "yes", "on"):
        return True
    if lowered in ("false", "no", "off"):
        return False
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def _parse_value(raw: str, line_no: int, column: int) -> Any:
    if raw == "":
        raise ConfigParseError("missing value after '='", line_no, column)
    if "," in raw:
        items = raw.split(",")
        values = []
        offset = column
        for item in items:
            if item.strip() == "":
                raise ConfigParseError("empty item in comma list", line_no, offset)
            values.append(_parse_scalar(item))
            offset += len(item) + 1
        return values
    return _parse_scalar(raw)


def parse_flat_document(text: str) -> Tuple[Dict[str, Any], Dict[str, int]]:
    """
    Parse a flat key-value document into a nested dict

    Returns:
        (nested values, {dotted key: line number})
    """
    nested: Dict[str, Any] = {}
    lines: Dict[str, int] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#") or stripped.startswith(";"):
            continue
        if "=" not in line:
            raise ConfigParseError("expected 'section.key = value'", line_no, len(line) - len(line.lstrip()) + 1)
        eq = line.index("=")
        key = line[:eq].strip()
        key_col = len(line) - len(line.lstrip()) + 1
        if not key:
            raise ConfigParseError("missing key before '='", line_no, eq + 1)
        if not _KEY_PATTERN.match(key):
            raise ConfigParseError(f"invalid key '{key}' (expected section.key)", line_no, key_col)
        if key in lines:
            raise ConfigParseError(f"duplicate key '{key}' (first set on line {lines[key]})", line_no, key_col)
        raw = line[eq + 1:]
        # Inline comments
        hash_pos = raw.find(" #")
        if hash_pos >= 0:
            raw = raw[:hash_pos]
        value_col = eq + 2 + (len(raw) - len(raw.lstrip()))
        value = _parse_value(raw.strip(), line_no, value_col)

        node = nested
        parts = key.split(".")
        for part_index, part in enumerate(parts[:-1]):
            existing = node.get(part)
            if existing is None:
                existing = {}
                node[part] = existing
            elif not isinstance(existing, dict):
                prefix = ".".join(parts[:part_index + 1])
                raise ConfigParseError(f"key '{key}' conflicts with scalar '{prefix}'", line_no, key_col)
            node = existing
        if isinstance(node.get(parts[-1]), dict):
            raise ConfigParseError(f"key '{key}' conflicts with section '{key}.*'", line_no, key_col)
        node[parts[-1]] = value
        lines[key] = line_no
    return nested, lines


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return format_float(value)
    if isinstance(value, (list, tuple)):
        return ", ".join(_format_value(v) for v in value)
    return str(value)


def flatten(nested: Dict[str, Any], prefix: str = "") -> List[Tuple[str, Any]]:
    items: List[Tuple[str, Any]] = []
    for key in sorted(nested):
        value = nested[key]
        dotted = f"{prefix}.{key}" if prefix else key
        if isinstance(value, dict):
            items.extend(flatten(value, dotted))
        elif value is None:
            continue
        elif isinstance(value, (list, tuple)) and len(value) == 0:
            continue
        else:
            items.append((dotted, value))
    return items


def serialize_flat_document(nested: Dict[str, Any]) -> str:
    lines = [f"{key} = {_format_value(value)}" for key, value in flatten(nested)]
    return "\n".join(lines) + "\n"
