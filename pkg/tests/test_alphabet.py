"""Alphabet construction, encoding, and diacritic handling."""

import pytest
from hypothesis import given, strategies as st

from oracles import nfd_strip
from tinyasr.alphabet import (
    AlphabetError,
    CZECH_LETTERS,
    ENGLISH_LETTERS,
    build_alphabet,
    decode_labels,
    encode_transcript,
    simplification_map,
    simplify_alphabet,
    strip_diacritics,
)

CZECH_TEXT = st.text(alphabet=sorted(CZECH_LETTERS) + [" ", "'"], max_size=40)


def test_preset_sizes():
    cz = build_alphabet("czech")
    en = build_alphabet("english")
    simple = build_alphabet("czech_simplified")
    assert cz.size == 43 and cz.n_logits == 44
    assert en.size == 28 and en.n_logits == 29
    assert simple.symbols == en.symbols
    # blank is the extra class after every real symbol
    assert cz.blank_id == cz.size == len(cz.symbols)


def test_symbol_order_is_sorted_letters_then_structural():
    en = build_alphabet("english")
    assert en.symbols == tuple("abcdefghijklmnopqrstuvwxyz") + (" ", "'")
    cz = build_alphabet("czech")
    assert cz.symbols[-2:] == (" ", "'")
    assert list(cz.symbols[:-2]) == sorted(cz.symbols[:-2])


def test_hyphen_and_underscore_preset_names():
    assert build_alphabet("czech-simplified") == build_alphabet("czech_simplified")


def test_unknown_preset():
    with pytest.raises(AlphabetError):
        build_alphabet("klingon")


def test_custom_symbols_appends_structural():
    ab = build_alphabet(["b", "a", "c"])
    assert ab.symbols == ("a", "b", "c", " ", "'")
    with pytest.raises(AlphabetError):
        build_alphabet(["a", "a"])


def test_aligned_czech_keeps_english_ids():
    en = build_alphabet("english")
    al = build_alphabet("czech", aligned=True)
    for sym in en.symbols:
        assert al.id_of(sym) == en.id_of(sym)
    assert set(al.symbols) == set(build_alphabet("czech").symbols)


def test_encode_decode_hand_case():
    en = build_alphabet("english")
    assert encode_transcript("ab a", en) == [0, 1, 26, 0]
    assert decode_labels([0, 1, 26, 0], en) == "ab a"


def test_encode_rejects_foreign_characters():
    en = build_alphabet("english")
    with pytest.raises(AlphabetError, match="'!'"):
        encode_transcript("a!", en)
    with pytest.raises(AlphabetError):
        encode_transcript("č", en)


def test_decode_rejects_out_of_range_ids():
    en = build_alphabet("english")
    with pytest.raises(AlphabetError):
        decode_labels([0, en.n_logits], en)


@given(CZECH_TEXT)
def test_encode_decode_round_trip(text):
    cz = build_alphabet("czech")
    assert decode_labels(encode_transcript(text, cz), cz) == text


@given(CZECH_TEXT)
def test_strip_diacritics_matches_nfd_oracle(text):
    assert strip_diacritics(text) == nfd_strip(text)


@given(st.text(max_size=40))
def test_strip_diacritics_total_and_idempotent(text):
    once = strip_diacritics(text)
    assert strip_diacritics(once) == once


def test_strip_diacritics_hand_cases():
    assert strip_diacritics("čárka") == "carka"
    assert strip_diacritics("příliš žluťoučký kůň") == "prilis zlutoucky kun"
    assert strip_diacritics("plain ascii") == "plain ascii"


def test_simplification_map_covers_whole_alphabet():
    cz = build_alphabet("czech")
    m = simplification_map(cz)
    assert set(m) == set(cz.symbols)
    assert m["č"] == "c" and m["ř"] == "r" and m["ů"] == "u" and m["a"] == "a"
    en = set(ENGLISH_LETTERS) | {" ", "'"}
    assert set(m.values()) <= en


def test_simplify_alphabet_collapses_to_english_set():
    cz = build_alphabet("czech")
    assert simplify_alphabet(cz) == build_alphabet("czech_simplified")
