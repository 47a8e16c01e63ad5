"""Symbol inventories, transcript encoding, and diacritics stripping.

An :class:`Alphabet` is an ordered list of single-character symbols plus the
convention that the CTC blank sits at index ``len(symbols)`` (the last logit,
outside the symbol table).  Ordering is deterministic: letters sorted by
codepoint, then space, then apostrophe.
"""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass, field

SPACE = " "
APOSTROPHE = "'"

# 41 lowercase Czech letters (the c-h digraph is always written as the two
# letters c and h, so it is not a symbol of its own).
CZECH_LETTERS = "aábcčdďeéěfghiíjklmnňoópqrřsštťuúůvwxyýzž"
ENGLISH_LETTERS = "abcdefghijklmnopqrstuvwxyz"


class AlphabetError(ValueError):
    pass


@dataclass(frozen=True)
class Alphabet:
    """Ordered symbol inventory; blank is implicitly the last logit index."""

    symbols: tuple[str, ...]
    _index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(self.symbols)})

    @property
    def size(self) -> int:
        return len(self.symbols)

    @property
    def blank_id(self) -> int:
        return len(self.symbols)

    @property
    def n_logits(self) -> int:
        return len(self.symbols) + 1

    def __contains__(self, ch: str) -> bool:
        return ch in self._index

    def id_of(self, ch: str) -> int:
        return self._index[ch]

    def encode(self, text: str) -> list[int]:
        """Label ids for ``text`` (lowercased internally). Fails loudly on
        any character outside the alphabet, naming it and its UTF-8 offset."""
        text = text.lower()
        ids = []
        for pos, ch in enumerate(text):
            idx = self._index.get(ch)
            if idx is None:
                byte_off = len(text[:pos].encode("utf-8"))
                raise AlphabetError(
                    f"character {ch!r} at position {pos} (byte offset {byte_off}) "
                    f"is not in the alphabet"
                )
            ids.append(idx)
        return ids

    def decode(self, ids) -> str:
        """Inverse of :meth:`encode` on valid label sequences."""
        out = []
        for i in ids:
            i = int(i)
            if not 0 <= i < len(self.symbols):
                raise AlphabetError(f"label id {i} out of range (blank_id={self.blank_id})")
            out.append(self.symbols[i])
        return "".join(out)


def _validate_symbol(s: str) -> str:
    if unicodedata.normalize("NFC", s) != s or len(s) != 1:
        raise AlphabetError(f"symbol {s!r} is not a single NFC codepoint")
    return s


def build_alphabet(name_or_symbols, aligned: bool = False) -> Alphabet:
    """Build a preset ("english", "czech", "czech_simplified") or custom alphabet.

    Custom alphabets are given as an iterable of letters; space and apostrophe
    are structural and appended automatically.  ``aligned`` orders the Czech
    alphabet so its 28 English-compatible symbols keep the English ids
    (accented letters appended after); by default no cross-alphabet id
    compatibility is promised.
    """
    if isinstance(name_or_symbols, str):
        name = name_or_symbols.replace("-", "_")
        if name == "english" or name == "czech_simplified":
            letters = list(ENGLISH_LETTERS)
        elif name == "czech":
            letters = list(CZECH_LETTERS)
        else:
            raise AlphabetError(f"unknown alphabet preset {name_or_symbols!r}")
    else:
        letters = [_validate_symbol(s) for s in name_or_symbols]
        if not letters:
            raise AlphabetError("custom alphabet must be nonempty")
        seen = set()
        for s in letters:
            if s in seen:
                raise AlphabetError(f"duplicate symbol {s!r}")
            seen.add(s)
        aligned = False
        letters = [s for s in letters if s not in (SPACE, APOSTROPHE)]

    if aligned:
        ascii_part = sorted(s for s in letters if s in ENGLISH_LETTERS)
        rest = sorted(s for s in letters if s not in ENGLISH_LETTERS)
        symbols = ascii_part + [SPACE, APOSTROPHE] + rest
    else:
        symbols = sorted(letters) + [SPACE, APOSTROPHE]
    return Alphabet(tuple(symbols))


def strip_diacritics(text: str) -> str:
    """Remove combining marks: NFD-decompose, drop marks, recompose to NFC.

    Total on any Unicode input; maps every accented Czech letter to its base
    letter (including the ring on u) and leaves unaccented text unchanged.
    """
    decomposed = unicodedata.normalize("NFD", text)
    kept = "".join(ch for ch in decomposed if not unicodedata.combining(ch))
    return unicodedata.normalize("NFC", kept)


def simplification_map(alphabet: Alphabet) -> dict[str, str]:
    """Per-symbol diacritics-stripping map over an alphabet (identity on
    unaccented symbols). Idempotent by construction."""
    return {s: strip_diacritics(s) for s in alphabet.symbols}


def simplify_alphabet(alphabet: Alphabet) -> Alphabet:
    """The alphabet of stripped symbols (the coarse-task inventory)."""
    letters = {strip_diacritics(s) for s in alphabet.symbols if s not in (SPACE, APOSTROPHE)}
    return build_alphabet(sorted(letters))


def encode_transcript(text: str, alphabet: Alphabet) -> list[int]:
    return alphabet.encode(text)


def decode_labels(ids, alphabet: Alphabet) -> str:
    return alphabet.decode(ids)
