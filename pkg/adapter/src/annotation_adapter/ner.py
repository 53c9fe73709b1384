"""Pluggable named-entity recognizers.

The pipeline name picks the backend: ``spacy:<model>`` loads that spaCy
model (raising AdapterError when the runtime lacks it), ``gazetteer:<path>``
builds a deterministic longest-match recognizer from a JSON dictionary
``{label: [surface strings]}``. Both return (label, surface, start) mentions
in document order.
"""

from __future__ import annotations

import json
import re

from .config import AdapterError


class GazetteerNER:
    """Dictionary NER: exact, case-sensitive, longest match wins.

    Matching runs as one regex alternation ordered longest-first, so
    "New York City" is never shadowed by "New York"; matches are
    non-overlapping and come out in document order.
    """

    def __init__(self, path):
        try:
            with open(path, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise AdapterError(f"cannot load gazetteer {path!r}: {exc}") from exc
        if not isinstance(doc, dict) or not doc:
            raise AdapterError(
                f"{path}: gazetteer must be a non-empty object of label -> [terms]")
        by_term = {}
        for label, terms in doc.items():
            if (not isinstance(terms, list)
                    or any(not isinstance(t, str) or not t for t in terms)):
                raise AdapterError(
                    f"{path}: gazetteer[{label!r}] must be a list of non-empty strings")
            for t in terms:
                by_term.setdefault(t, label)        # first label wins on duplicates
        if not by_term:
            raise AdapterError(f"{path}: gazetteer holds no terms")
        ordered = sorted(by_term, key=len, reverse=True)
        self._labels = by_term
        self._rx = re.compile("|".join(re.escape(t) for t in ordered))

    def __call__(self, text):
        return [(self._labels[m.group(0)], m.group(0), m.start())
                for m in self._rx.finditer(text)]


class SpacyNER:
    def __init__(self, model):
        try:
            import spacy
            self._nlp = spacy.load(model)
        except Exception as exc:
            raise AdapterError(f"cannot load NER pipeline {model!r}: {exc}") from exc

    def __call__(self, text):
        return [(ent.label_, ent.text, ent.start_char)
                for ent in self._nlp(text).ents]


def load_ner(name):
    kind, _, arg = name.partition(":")
    if kind == "gazetteer" and arg:
        return GazetteerNER(arg)
    if kind == "spacy" and arg:
        return SpacyNER(arg)
    raise AdapterError(
        f"unknown NER pipeline {name!r}; use 'spacy:<model>' or 'gazetteer:<path>'")
