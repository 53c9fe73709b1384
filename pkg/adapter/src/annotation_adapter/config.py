"""Adapter configuration: a flat-section TOML-subset file.

``[adapter]`` holds the pipeline/endpoint settings, ``[category_map]`` maps
NER labels onto the six entity categories. The parser reads the same minimal
TOML dialect as the main pipeline's config files (``[section]`` headers,
quoted strings, numbers, booleans, one-line arrays, ``#`` comments); it is a
deliberate copy, not an import, so the adapter stays installable on its own.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, fields

CATEGORIES = ("Organization", "Person", "Event", "Product", "Location", "Date")

_INT_RE = re.compile(r"^[+-]?\d+$")


class AdapterError(ValueError):
    """Input, config, pipeline or endpoint problem the caller must fix."""


class ConfigError(AdapterError):
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
    items, cur, in_str = [], "", False
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


@dataclass
class AdapterConfig:
    """Everything annotate() needs: NER backend, label map, embedding source.

    Embeddings come from `endpoint` (vendor HTTP API) and/or `cache_path`
    (JSONL read-through cache); leaving the endpoint empty selects cache-only
    mode, which errors on any cache miss.
    """

    ner_pipeline_name: str
    category_map: dict = field(default_factory=dict)
    endpoint: str = ""
    model: str = ""
    d: int = 8
    cache_path: str = ""
    batch_size: int = 32
    concurrency: int = 4
    max_retries: int = 3
    backoff: float = 0.2
    timeout: float = 30.0
    auth_env: str = "ADAPTER_EMBED_TOKEN"

    def __post_init__(self):
        if not self.ner_pipeline_name:
            raise AdapterError("ner_pipeline_name is required")
        bad = sorted(set(self.category_map.values()) - set(CATEGORIES))
        if bad:
            raise AdapterError(
                f"category_map values must be among {list(CATEGORIES)}; got {bad}")
        if not isinstance(self.d, int) or self.d < 2:
            raise AdapterError("d must be an integer >= 2")
        if not self.endpoint and not self.cache_path:
            raise AdapterError(
                "need an embedding endpoint or a cache_path (cache-only mode)")
        if self.batch_size < 1 or self.concurrency < 1:
            raise AdapterError("batch_size and concurrency must be >= 1")
        if self.max_retries < 0 or self.backoff < 0 or self.timeout <= 0:
            raise AdapterError("max_retries, backoff and timeout must be sensible")


def load_config(path):
    """AdapterConfig from a config file ([adapter] + [category_map])."""
    sections = parse_config(path)
    settings = dict(sections.get("adapter", {}))
    cmap = {str(k): str(v) for k, v in sections.get("category_map", {}).items()}
    known = {f.name for f in fields(AdapterConfig)} - {"category_map"}
    unknown = sorted(set(settings) - known)
    if unknown:
        raise ConfigError(f"{path}: unknown [adapter] keys {unknown}")
    if "ner_pipeline_name" not in settings:
        raise ConfigError(f"{path}: [adapter] needs ner_pipeline_name")
    return AdapterConfig(category_map=cmap, **settings)
