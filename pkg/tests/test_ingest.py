"""Document parsing, path extraction, and annotation behavior."""

import pytest

from semjson.errors import ContractError, JsonParseError, StructureError
from semjson.ingest import (AnnotationMap, corpus_stats, extract_kv_pairs,
                            parse_document, parse_path, serialize_value)

EXAMPLE_TEXT = '{"user": {"id": 9171087, "id_str": "9171087", "name": "ud83c"}}'


def by_path(records):
    return {r.path.text: r for r in records}


class TestParseDocument:
    def test_numbers_parse_as_floats(self):
        doc = parse_document('{"id": 9171087}')
        assert isinstance(doc["id"], float)
        assert doc["id"] == 9171087.0

    def test_empty_object(self):
        assert parse_document("{}") == {}

    def test_nested_array(self):
        doc = parse_document('{"a": [1, 2]}')
        assert doc["a"] == [1.0, 2.0]

    def test_malformed_text_reports_byte_offset(self):
        with pytest.raises(JsonParseError) as info:
            parse_document('{"a": }')
        assert info.value.byte_offset == 6

    def test_offset_counts_utf8_bytes(self):
        # "π" is two bytes, so the byte offset exceeds the char offset
        with pytest.raises(JsonParseError) as info:
            parse_document('{"π": x}')
        assert info.value.byte_offset == 7


class TestSerializeValue:
    def test_integral_float_has_no_decimal_point(self):
        assert serialize_value(9171087.0) == "9171087"

    def test_string_unquoted(self):
        assert serialize_value("ud83c") == "ud83c"

    def test_fractional_float(self):
        assert serialize_value(2.5) == "2.5"

    def test_containers_render_compact_json(self):
        assert serialize_value({"a": 1.0}) == '{"a":1}'
        assert serialize_value([1.0, "x"]) == '[1,"x"]'

    def test_null_and_boolean_rejected(self):
        for bad in (None, True, False):
            with pytest.raises(ContractError):
                serialize_value(bad)


class TestExtraction:
    def test_example_document_yields_four_records(self):
        records = extract_kv_pairs(parse_document(EXAMPLE_TEXT), 0)
        assert len(records) == 4
        recs = by_path(records)
        assert recs["$.user"].column == ["9171087", "9171087", "ud83c"]
        assert recs["$.user.id"].column == ["9171087"]
        assert recs["$.user.id_str"].column == ["9171087"]
        assert recs["$.user.name"].column == ["ud83c"]
        assert {r.label for r in records} == {"user", "id", "id_str", "name"}
        assert recs["$.user"].depth == 1
        assert recs["$.user.id"].depth == 2

    def test_null_and_boolean_keys_ignored(self):
        doc = parse_document('{"ok": true, "x": null}')
        assert extract_kv_pairs(doc, 0) == []

    def test_filtered_members_leave_parent_columns(self):
        doc = parse_document('{"a": {"b": true, "c": null, "d": 1}}')
        recs = by_path(extract_kv_pairs(doc, 0))
        assert set(recs) == {"$.a", "$.a.d"}
        assert recs["$.a"].column == ["1"]

    def test_annotation_rule_overrides_key_label(self):
        doc = parse_document('{"profile_link_color": "FF0000"}')
        annotations = AnnotationMap([("$.profile_link_color", "color")])
        records = extract_kv_pairs(doc, 0, annotations)
        assert len(records) == 1
        assert records[0].label == "color"

    def test_first_matching_rule_wins(self):
        annotations = AnnotationMap([("$.k", "first"), ("$.k", "second")])
        records = extract_kv_pairs(parse_document('{"k": "v"}'), 0, annotations)
        assert records[0].label == "first"

    def test_final_key_wildcard_rule(self):
        annotations = AnnotationMap([("$.user.*", "member")])
        recs = by_path(extract_kv_pairs(parse_document(EXAMPLE_TEXT), 0,
                                        annotations))
        assert recs["$.user.id"].label == "member"
        assert recs["$.user"].label == "user"

    def test_array_elements_merge_under_wildcard(self):
        doc = parse_document('{"tags": [{"t": "x"}, {"t": "y"}]}')
        recs = by_path(extract_kv_pairs(doc, 0))
        assert set(recs) == {"$.tags", "$.tags[*].t"}
        assert recs["$.tags[*].t"].column == ["x", "y"]
        assert recs["$.tags"].column == ['{"t":"x"}', '{"t":"y"}']
        assert recs["$.tags[*].t"].depth == 2

    def test_scalar_array_column(self):
        doc = parse_document('{"xs": [1, 2.5]}')
        recs = by_path(extract_kv_pairs(doc, 0))
        assert recs["$.xs"].column == ["1", "2.5"]

    def test_empty_columns_yield_no_record(self):
        assert extract_kv_pairs(parse_document('{"a": [null, true]}'), 0) == []
        assert extract_kv_pairs(parse_document('{"a": {"b": null}}'), 0) == []

    def test_empty_string_values_are_kept(self):
        records = extract_kv_pairs(parse_document('{"a": ""}'), 0)
        assert records[0].column == [""]

    def test_root_must_be_object(self):
        with pytest.raises(StructureError):
            extract_kv_pairs(parse_document("[1, 2]"), 0)

    def test_extraction_is_deterministic(self):
        doc = parse_document(EXAMPLE_TEXT)
        first = [(r.path.text, r.column) for r in extract_kv_pairs(doc, 0)]
        second = [(r.path.text, r.column) for r in extract_kv_pairs(doc, 0)]
        assert first == second

    def test_every_path_resolves_into_source_tree(self):
        doc = parse_document('{"a": {"b": [{"c": 1}, {"c": 2}]}, "d": "x"}')
        for record in extract_kv_pairs(doc, 0):
            assert list(record.path.resolve(doc))


class TestRecordCountOracle:
    """Extraction count matches an independent recount on random trees."""

    @staticmethod
    def _count_keepable(value):
        # Mirrors the documented rule: one record per key whose value is
        # not null/boolean and whose merged column is non-empty.
        def keeps_column(v):
            if isinstance(v, dict):
                return any(not isinstance(m, bool) and m is not None
                           for m in v.values())
            return True

        total = 0
        if isinstance(value, dict):
            for child in value.values():
                if child is None or isinstance(child, bool):
                    continue
                total += keeps_column(child) + TestRecordCountOracle._count_keepable(child)
        return total

    def test_random_object_trees(self):
        import numpy as np
        rng = np.random.default_rng(11)

        def random_tree(depth):
            node = {}
            for i in range(int(rng.integers(1, 5))):
                roll = rng.random()
                if depth < 3 and roll < 0.3:
                    node[f"k{depth}{i}"] = random_tree(depth + 1)
                elif roll < 0.45:
                    node[f"k{depth}{i}"] = bool(rng.integers(0, 2))
                elif roll < 0.55:
                    node[f"k{depth}{i}"] = None
                elif roll < 0.8:
                    node[f"k{depth}{i}"] = float(rng.integers(0, 100))
                else:
                    node[f"k{depth}{i}"] = f"v{int(rng.integers(0, 10))}"
            return node

        for _ in range(50):
            doc = random_tree(0)
            records = extract_kv_pairs(doc, 0)
            assert len(records) == self._count_keepable(doc)


class TestJsonPath:
    def test_text_round_trips_through_parse_path(self):
        records = extract_kv_pairs(
            parse_document('{"a": {"b": [{"c": 1}]}}'), 0)
        for record in records:
            assert parse_path(record.path.text) == record.path

    def test_wildcard_text_form(self):
        path = parse_path("$.a[*].b")
        assert path.text == "$.a[*].b"
        assert path.depth == 2
        assert path.final_key == "b"

    @pytest.mark.parametrize("bad", ["", "user", "$x", "$.", "$.a[1]"])
    def test_malformed_text_rejected(self, bad):
        with pytest.raises(ContractError):
            parse_path(bad)


class TestAnnotationMap:
    def test_round_trip_preserves_rule_order(self, tmp_path):
        annotations = AnnotationMap([("$.k", "first"), ("$.*", "fallback")])
        target = tmp_path / "rules.jsonl"
        annotations.save(target)
        loaded = AnnotationMap.load(target)
        records = extract_kv_pairs(parse_document('{"k": 1, "z": 2}'), 0, loaded)
        labels = {r.path.text: r.label for r in records}
        assert labels == {"$.k": "first", "$.z": "fallback"}


class TestCorpusStats:
    def test_example_document_histogram(self):
        records = extract_kv_pairs(parse_document(EXAMPLE_TEXT), 0)
        stats = corpus_stats(records)
        assert stats.depth_counts == {1: 1, 2: 3}
        assert sum(stats.label_counts.values()) == 4

    def test_mixed_depths(self):
        doc = parse_document('{"a": {"b": 1, "c": {"d": 2}}}')
        stats = corpus_stats(extract_kv_pairs(doc, 0))
        assert stats.depth_counts == {1: 1, 2: 2, 3: 1}

    def test_empty_input(self):
        stats = corpus_stats([])
        assert stats.depth_counts == {}
        assert stats.label_counts == {}
