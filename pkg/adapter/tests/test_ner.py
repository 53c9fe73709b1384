"""NER backends: gazetteer matching rules and backend loading."""

import json

import pytest

from annotation_adapter.config import AdapterError
from annotation_adapter.ner import GazetteerNER, SpacyNER, load_ner


def write_terms(tmp_path, terms):
    path = tmp_path / "terms.json"
    path.write_text(json.dumps(terms))
    return str(path)


class TestGazetteer:
    def test_basic_matches_in_document_order(self, tmp_path):
        path = write_terms(tmp_path, {
            "ORG": ["Goldman Sachs", "Apple"],
            "GPE": ["London"],
        })
        ner = GazetteerNER(path)
        out = ner("Apple met Goldman Sachs in London.")
        assert out == [
            ("ORG", "Apple", 0),
            ("ORG", "Goldman Sachs", 10),
            ("GPE", "London", 27),
        ]

    def test_longest_match_wins(self, tmp_path):
        path = write_terms(tmp_path, {"ORG": ["Goldman", "Goldman Sachs"]})
        ner = GazetteerNER(path)
        out = ner("Goldman Sachs rose.")
        assert out == [("ORG", "Goldman Sachs", 0)]

    def test_first_label_wins_on_duplicate_term(self, tmp_path):
        path = write_terms(tmp_path, {"ORG": ["Amazon"], "GPE": ["Amazon"]})
        ner = GazetteerNER(path)
        assert ner("the Amazon basin") == [("ORG", "Amazon", 4)]

    def test_repeated_mentions_all_reported(self, tmp_path):
        path = write_terms(tmp_path, {"PERSON": ["Ada"]})
        out = GazetteerNER(path)("Ada spoke. Then Ada left.")
        assert [m[2] for m in out] == [0, 16]

    def test_no_matches(self, tmp_path):
        path = write_terms(tmp_path, {"ORG": ["Apple"]})
        assert GazetteerNER(path)("nothing here") == []

    def test_missing_file(self, tmp_path):
        with pytest.raises(AdapterError, match="cannot load gazetteer"):
            GazetteerNER(str(tmp_path / "nope.json"))

    def test_bad_json(self, tmp_path):
        path = tmp_path / "terms.json"
        path.write_text("{not json")
        with pytest.raises(AdapterError, match="cannot load gazetteer"):
            GazetteerNER(str(path))

    def test_bad_shape(self, tmp_path):
        path = write_terms(tmp_path, {"ORG": "Apple"})
        with pytest.raises(AdapterError):
            GazetteerNER(path)

    def test_empty_terms_rejected(self, tmp_path):
        path = write_terms(tmp_path, {"ORG": []})
        with pytest.raises(AdapterError):
            GazetteerNER(path)


class TestLoadNer:
    def test_gazetteer_scheme(self, tmp_path):
        path = write_terms(tmp_path, {"ORG": ["Apple"]})
        ner = load_ner(f"gazetteer:{path}")
        assert isinstance(ner, GazetteerNER)

    def test_unknown_scheme(self):
        with pytest.raises(AdapterError, match="unknown NER pipeline"):
            load_ner("regex:whatever")

    def test_spacy_load_failure_is_adapter_error(self):
        # no such model in this environment either way
        with pytest.raises(AdapterError, match="cannot load NER pipeline"):
            SpacyNER("definitely_not_a_model")
