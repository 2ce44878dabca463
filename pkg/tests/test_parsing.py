from __future__ import annotations

import pytest

from panct.boxes import NormalizedBox
from panct.parsing import ParsedBox, ParseFailure, parse_box, parse_output, parse_yesno


class TestBoxGrammar:
    def test_exact_match(self):
        parsed = parse_output("{<38><46><46><51>}", "bbox")
        assert parsed == ParsedBox(NormalizedBox(38, 46, 46, 51))

    def test_surrounding_prose(self):
        parsed = parse_box("Sure, the region is {<10><20><30><40>} as requested.")
        assert isinstance(parsed, ParsedBox)
        assert parsed.box == NormalizedBox(10, 20, 30, 40)

    def test_missing_braces(self):
        parsed = parse_box("<0><0><100><100>")
        assert isinstance(parsed, ParsedBox)
        assert parsed.box == NormalizedBox(0, 0, 100, 100)

    def test_internal_whitespace(self):
        parsed = parse_box("{ <5> <6> <7> <8> }")
        assert isinstance(parsed, ParsedBox)
        assert parsed.box == NormalizedBox(5, 6, 7, 8)

    def test_swapped_corners_repaired(self):
        parsed = parse_box("{<46><51><38><46>}")
        assert isinstance(parsed, ParsedBox)
        assert parsed.repaired
        assert parsed.box == NormalizedBox(38, 46, 46, 51)

    def test_out_of_range_coordinate(self):
        assert isinstance(parse_box("{<38><46><146><51>}"), ParseFailure)

    def test_natural_language_answer_fails(self):
        parsed = parse_output("It sits behind the stomach, near the spine.", "bbox")
        assert isinstance(parsed, ParseFailure)

    def test_wrong_arity_fails(self):
        assert isinstance(parse_box("{<1><2><3>}"), ParseFailure)


class TestYesNoGrammar:
    def test_bare_tokens(self):
        assert parse_yesno("yes") == "yes"
        assert parse_yesno("no") == "no"

    def test_case_insensitive_with_prose(self):
        assert parse_output("Yes, the pancreas in the image presents a tumor", "yesno") == "yes"
        assert parse_yesno("NO tumor is visible.") == "no"

    def test_both_tokens_rejected(self):
        assert isinstance(parse_yesno("yes... or no, hard to say"), ParseFailure)

    def test_no_token_rejected(self):
        assert isinstance(parse_yesno("there may be something there"), ParseFailure)

    def test_substring_does_not_count(self):
        # "no" inside other words must not match
        assert isinstance(parse_yesno("the nodule is noticeable"), ParseFailure)


def test_expected_selector_validated():
    with pytest.raises(ValueError):
        parse_output("yes", "maybe")
