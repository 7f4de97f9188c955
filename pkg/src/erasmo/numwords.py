"""English verbalization of decimal numerals, and its exact inverse.

Scheme: short scale up to (but excluding) 10**15, hyphenated tens
("forty-two"), no "and". Decimals are read as the integer part, "point",
then one word per fraction digit. Negative numbers take a "minus" prefix.
Words that are not plain signed decimal literals pass through unchanged.
"""

from __future__ import annotations

import re

VERBALIZE_LIMIT = 10**15

_DECIMAL_LITERAL = re.compile(r"[+-]?(?:\d+(?:\.\d+)?|\.\d+)")

_UNITS = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight",
    "nine", "ten", "eleven", "twelve", "thirteen", "fourteen", "fifteen",
    "sixteen", "seventeen", "eighteen", "nineteen",
]
_TENS = [
    "", "", "twenty", "thirty", "forty", "fifty", "sixty", "seventy",
    "eighty", "ninety",
]
_SCALES = [
    (10**12, "trillion"),
    (10**9, "billion"),
    (10**6, "million"),
    (10**3, "thousand"),
]

_UNIT_VALUES = {w: i for i, w in enumerate(_UNITS)}
_TEN_VALUES = {w: 10 * i for i, w in enumerate(_TENS) if w}
_SCALE_VALUES = {w: v for v, w in _SCALES}
_DIGIT_WORDS = _UNITS[:10]
_DIGIT_VALUES = {w: str(i) for i, w in enumerate(_DIGIT_WORDS)}


class NumberParseError(ValueError):
    """Raised when a word sequence is not a valid verbalized number."""


def is_decimal_literal(word: str) -> bool:
    """True when the whole word is an optionally signed decimal literal."""
    return bool(_DECIMAL_LITERAL.fullmatch(word))


def _below_thousand(n: int) -> list[str]:
    words = []
    if n >= 100:
        words.append(_UNITS[n // 100])
        words.append("hundred")
        n %= 100
    if n >= 20:
        tens_word = _TENS[n // 10]
        if n % 10:
            words.append(f"{tens_word}-{_UNITS[n % 10]}")
        else:
            words.append(tens_word)
    elif n > 0:
        words.append(_UNITS[n])
    return words


def integer_to_words(n: int) -> str:
    """Spell a non-negative integer below 10**15 in short-scale English."""
    if n < 0 or n >= VERBALIZE_LIMIT:
        raise ValueError(f"integer out of verbalizable range: {n}")
    if n == 0:
        return "zero"
    words: list[str] = []
    for scale_value, scale_word in _SCALES:
        group = n // scale_value
        if group:
            words.extend(_below_thousand(group))
            words.append(scale_word)
            n %= scale_value
    words.extend(_below_thousand(n))
    return " ".join(words)


def verbalize_word(word: str) -> str:
    """Apply the numeral-to-words map to one word; identity on non-numerals.

    Literals whose integer part is at or above 10**15 stay untouched, so
    the result is always re-parseable.
    """
    if not is_decimal_literal(word):
        return word
    body = word
    sign = ""
    if body[0] in "+-":
        sign = "minus " if body[0] == "-" else ""
        body = body[1:]
    if "." in body:
        int_part, frac_part = body.split(".", 1)
    else:
        int_part, frac_part = body, ""
    int_value = int(int_part) if int_part else 0
    if int_value >= VERBALIZE_LIMIT:
        return word
    words = integer_to_words(int_value)
    if frac_part:
        words += " point " + " ".join(_DIGIT_WORDS[int(d)] for d in frac_part)
    return sign + words


def _parse_integer_words(tokens: list[str]) -> int:
    if not tokens:
        raise NumberParseError("empty integer part")
    total = 0
    current = 0
    for token in tokens:
        for piece in token.split("-"):
            if piece in _UNIT_VALUES:
                current += _UNIT_VALUES[piece]
            elif piece in _TEN_VALUES:
                current += _TEN_VALUES[piece]
            elif piece == "hundred":
                current *= 100
            elif piece in _SCALE_VALUES:
                total += current * _SCALE_VALUES[piece]
                current = 0
            else:
                raise NumberParseError(f"unrecognized number word: {piece!r}")
    return total + current


def parse_number_words(text: str):
    """Invert `verbalize_word`: words back to an int or float.

    Raises NumberParseError on anything the verbalizer cannot have
    produced. The float path rebuilds the decimal string digit by digit,
    so parse(verbalize(x)) == x bitwise for every representable x.
    """
    tokens = text.split()
    if not tokens:
        raise NumberParseError("empty input")
    negative = False
    if tokens[0] == "minus":
        negative = True
        tokens = tokens[1:]
    if "point" in tokens:
        split_at = tokens.index("point")
        int_tokens, frac_tokens = tokens[:split_at], tokens[split_at + 1:]
        if not frac_tokens:
            raise NumberParseError("missing digits after 'point'")
        digits = []
        for token in frac_tokens:
            if token not in _DIGIT_VALUES:
                raise NumberParseError(f"unrecognized digit word: {token!r}")
            digits.append(_DIGIT_VALUES[token])
        int_value = _parse_integer_words(int_tokens)
        literal = f"{'-' if negative else ''}{int_value}.{''.join(digits)}"
        return float(literal)
    value = _parse_integer_words(tokens)
    return -value if negative else value
