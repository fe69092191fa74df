import random

import pytest
from hypothesis import given, settings, strategies as st

from clozefix.factors import Category, FactualFactor, SourceDocument, extract_factors
from clozefix.masking import (
    SEPARATOR,
    CorrectionMode,
    FillResult,
    MaskError,
    MergeError,
    align_full_sequence,
    build_masked,
    merge_fills,
    parse_rendered,
    render_input,
)

from gen import random_case, random_selection

FULL = CorrectionMode.FULL_SEQUENCE
SLOT = CorrectionMode.SLOT_FILL
HYP = "Templeton Templeton, one of the UK's most famous 66, has died at the age of 74."


def fills(*xs, ok=True, mode=SLOT):
    return FillResult(tuple(xs), "\n".join(xs), mode, ok)


def test_obit_masking():
    m = build_masked(HYP, extract_factors(HYP))
    assert m.template == "⟨M0⟩, one of the ⟨M1⟩'s most famous ⟨M2⟩, has died at the age of ⟨M3⟩."
    assert m.slot_count == 4


def test_empty_selection_is_identity():
    m = build_masked(HYP, extract_factors(HYP), [])
    assert m.template == HYP


def test_factor_at_start():
    s = "66 people died."
    m = build_masked(s, extract_factors(s))
    assert m.template == "⟨M0⟩ people died."


def test_partial_selection_keeps_literals():
    fs = extract_factors(HYP)
    m = build_masked(HYP, fs, [3])
    assert m.template == "Templeton Templeton, one of the UK's most famous 66, has died at the age of ⟨M0⟩."
    assert [f.surface for f in m.factors] == ["74"]


def test_overlapping_factors_rejected():
    fs = [FactualFactor("ab", 0, 2, Category.OTHER), FactualFactor("bc", 1, 3, Category.OTHER)]
    with pytest.raises(MaskError):
        build_masked("abcd", fs)


def test_placeholder_markup_in_sentence_rejected():
    with pytest.raises(MaskError):
        build_masked("a ⟨M0⟩ b", [])


def test_render_truncates_document_at_word_boundary():
    assert render_input("A B C", "⟨M0⟩ sat", 3) == f"A B\n{SEPARATOR}\n⟨M0⟩ sat"
    assert render_input("Alpha Beta", "⟨M0⟩", 8) == f"Alpha\n{SEPARATOR}\n⟨M0⟩"


def test_render_untruncated_and_empty():
    assert render_input("A B C", "x", 100) == f"A B C\n{SEPARATOR}\nx"
    assert render_input("", "⟨M0⟩ sat", 10) == f"\n{SEPARATOR}\n⟨M0⟩ sat"
    assert render_input(SourceDocument("d", ""), "t", 5).endswith("t")


def test_render_rejects_nonpositive_budget():
    with pytest.raises(ValueError):
        render_input("doc", "t", 0)


def test_parse_rendered_roundtrip():
    assert parse_rendered(render_input("doc text", "⟨M0⟩ x", 50)) == ("doc text", "⟨M0⟩ x")


def test_merge_obit():
    s = "Rod Temperton has died at the age of 66."
    m = build_masked("Xx Yy has died at the age of 74.", extract_factors("Xx Yy has died at the age of 74."))
    assert m.template == "⟨M0⟩ has died at the age of ⟨M1⟩."
    corrected, changes = merge_fills(m, fills("Rod Temperton", "66"))
    assert corrected == s
    assert [c.changed for c in changes] == [True, True]


def test_merge_identity_and_case_insensitive_change():
    fs = extract_factors(HYP)
    m = build_masked(HYP, fs)
    corrected, changes = merge_fills(m, fills("Templeton  templeton", "uk", "66", "74"))
    assert [c.changed for c in changes] == [False, False, False, False]
    corrected, _ = merge_fills(m, fills(*(f.surface for f in fs)))
    assert corrected == HYP


def test_merge_unk():
    s = "Rod Temperton has died at the age of 66."
    m = build_masked(s, extract_factors(s))
    corrected, changes = merge_fills(m, fills("<unk>", "66"))
    assert corrected == "<unk> has died at the age of 66."
    assert [c.changed for c in changes] == [True, False]


def test_merge_count_mismatch():
    m = build_masked(HYP, extract_factors(HYP))
    with pytest.raises(MergeError, match="expected 4 fills, got 2"):
        merge_fills(m, fills("a", "b"))


def test_align_obit():
    m = build_masked(HYP.replace("74.", "74 ."), extract_factors(HYP.replace("74.", "74 .")), mode=FULL)
    assert m.template == "⟨M0⟩, one of the ⟨M1⟩'s most famous ⟨M2⟩, has died at the age of ⟨M3⟩ ."
    r = align_full_sequence(m, "Rod Temperton, one of the UK's most famous songwriters, has died at the age of 66 .")
    assert r.alignment_ok
    assert r.fills == ("Rod Temperton", "UK", "songwriters", "66")


def test_align_identity():
    m = build_masked(HYP, extract_factors(HYP), mode=FULL)
    r = align_full_sequence(m, HYP)
    assert r.fills == ("Templeton Templeton", "UK", "66", "74")


def test_align_tolerates_case_and_whitespace():
    m = build_masked(HYP, extract_factors(HYP), mode=FULL)
    r = align_full_sequence(m, "Rod  Temperton , ONE of the UK's   most famous songwriters, has died at the age of 66.")
    # fills are verbatim slices of the regenerated text
    assert r.fills == ("Rod  Temperton", "UK", "songwriters", "66")
    r = align_full_sequence(m, "Rod Temperton, ONE of  the UK's most\tfamous songwriters, has died at the age of 66.")
    assert r.fills == ("Rod Temperton", "UK", "songwriters", "66")


def test_align_unrelated_sentence_fails():
    m = build_masked(HYP, extract_factors(HYP), mode=FULL)
    r = align_full_sequence(m, "Mercedes boss Toto Wolff said the car was pretty damaged.")
    assert not r.alignment_ok
    assert r.raw_output == "Mercedes boss Toto Wolff said the car was pretty damaged."
    assert r.fills == ()


def test_align_requires_full_mode():
    m = build_masked(HYP, extract_factors(HYP), mode=SLOT)
    with pytest.raises(ValueError):
        align_full_sequence(m, HYP)


def test_align_does_not_split_words():
    s = "Rod Smith died at 66 in the city"
    m = build_masked(s, extract_factors(s), mode=FULL)
    assert m.template == "⟨M0⟩ died at ⟨M1⟩ in the city"
    # "died" inside "Tindied" must not anchor the context segment
    r = align_full_sequence(m, "Rod Tindied died at 70 in the city")
    assert r.fills == ("Rod Tindied", "70")


@st.composite
def text_with_spans(draw):
    alphabet = st.characters(blacklist_characters="⟨⟩", blacklist_categories=("Cs",))
    text = draw(st.text(alphabet=alphabet, min_size=1, max_size=50))
    cuts = sorted(set(draw(st.lists(st.integers(0, len(text)), max_size=10))))
    factors = []
    for a, b in zip(cuts[::2], cuts[1::2]):
        if a < b:
            factors.append(FactualFactor(text[a:b], a, b, Category.OTHER, len(factors)))
    sel = draw(st.lists(st.integers(0, max(len(factors) - 1, 0)), max_size=len(factors))) if factors else []
    return text, factors, sel


@given(text_with_spans())
@settings(max_examples=400)
def test_round_trip_property(case):
    text, factors, sel = case
    m = build_masked(text, factors, sel)
    assert m.template.count("⟨M") == m.slot_count == len(set(sel))
    corrected, changes = merge_fills(m, fills(*(f.surface for f in m.factors)))
    assert corrected == text
    assert not any(c.changed for c in changes)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=300)
def test_alignment_recovers_original_surfaces(seed):
    rng = random.Random(seed)
    sentence, factors = random_case(rng)
    m = build_masked(sentence, factors, random_selection(rng, len(factors)), FULL)
    if m.slot_count == 0:
        return
    r = align_full_sequence(m, sentence)
    assert r.alignment_ok
    assert r.fills == tuple(f.surface for f in m.factors)


@given(st.text(max_size=40), st.text(max_size=40), st.integers(1, 60))
def test_render_never_touches_template(doc, template, budget):
    out = render_input(doc, template.replace("\n", " "), budget)
    d, t = parse_rendered(out)
    assert t == template.replace("\n", " ")
    assert len(d) <= budget
