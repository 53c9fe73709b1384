"""Minimal flat-section config parser.

Reads the subset of TOML this tool needs: ``[section]`` headers, ``key =
value`` lines with quoted strings, integers, floats, booleans, and flat arrays
of those, plus ``#`` comments. Nested tables, dates, and multiline strings are
deliberately out of scope (the runtime here has no full TOML parser available).
"""

from __future__ import annotations

import re

_INT_RE = re.compile(r"^[+-]?\d+$")


class ConfigError(ValueError):
    """A config file line could not be parsed."""


def _parse_scalar(tok, where):
    tok = tok.strip()
    if not tok:
        raise ConfigError(f"{where}: empty value")
    if tok.startswith('"'):
        end = tok.find('"', 1)
        if end < 0:
            raise ConfigError(f"{where}: unterminated string")
        rest = tok[end + 1:].strip()
        if rest and not rest.startswith("#"):
            raise ConfigError(f"{where}: trailing characters after string: {rest!r}")
        return tok[1:end]
    tok = tok.split("#", 1)[0].strip()
    if tok in ("true", "false"):
        return tok == "true"
    if _INT_RE.match(tok):
        return int(tok)
    try:
        return float(tok)
    except ValueError:
        raise ConfigError(f"{where}: cannot parse value {tok!r}; strings need quotes") from None


def _split_items(body, where):
    items, depth, cur, in_str = [], 0, "", False
    for ch in body:
        if ch == '"':
            in_str = not in_str
        if ch == "," and not in_str:
            items.append(cur)
            cur = ""
        else:
            cur += ch
    if in_str:
        raise ConfigError(f"{where}: unterminated string in array")
    if cur.strip():
        items.append(cur)
    return [s for s in items if s.strip()]


def parse_config(path):
    """Parse a config file into {section: {key: value}}."""
    sections = {}
    current = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            where = f"{path}:{lineno}"
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("["):
                if not line.endswith("]") or line.count("[") != 1:
                    raise ConfigError(f"{where}: bad section header {line!r}")
                current = line[1:-1].strip()
                if not current:
                    raise ConfigError(f"{where}: empty section name")
                sections.setdefault(current, {})
                continue
            if "=" not in line:
                raise ConfigError(f"{where}: expected 'key = value', got {line!r}")
            if current is None:
                raise ConfigError(f"{where}: key outside any [section]")
            key, _, value = line.partition("=")
            key = key.strip()
            if key.startswith('"') and key.endswith('"') and len(key) >= 2:
                key = key[1:-1]
            if not key:
                raise ConfigError(f"{where}: empty key")
            value = value.strip()
            if value.startswith("["):
                if not value.rstrip().endswith("]"):
                    raise ConfigError(f"{where}: arrays must close on the same line")
                body = value.rstrip()[1:-1]
                sections[current][key] = [
                    _parse_scalar(tok, where) for tok in _split_items(body, where)]
            else:
                sections[current][key] = _parse_scalar(value, where)
    return sections
