"""Word model and primitive operations."""

import random

import pytest

from bilcheck.core import (
    BINOPS,
    LOGIC_OPS,
    DivisionByZero,
    Imm,
    Mem,
    Storage,
    Unknown,
    Word,
    WordError,
    add,
    concat,
    eval_binop,
    eval_cast,
    eval_unop,
    extract,
    succ,
    to_signed,
    type_of,
)


def test_word_invariants():
    with pytest.raises(WordError):
        Word(-1, 8)
    with pytest.raises(WordError):
        Word(256, 8)
    with pytest.raises(WordError):
        Word(0, 0)
    assert Word(255, 8).value == 255


def test_type_of():
    assert type_of(Word(3076, 64)) == Imm(64)
    assert type_of(Unknown("x", Mem(64, 8))) == Mem(64, 8)
    root = Unknown("m", Mem(64, 8))
    assert type_of(Storage(root, Word(5, 64), Word(7, 8), 8)) == Mem(64, 8)


def test_succ():
    assert succ(Word(1, 64)) == Word(2, 64)
    assert succ(Word(255, 8)) == Word(0, 8)
    assert succ(Word(0x105DC, 64)) == Word(0x105DD, 64)


def test_extract_worked_example():
    # w[01001011][5:2] is 0010
    assert extract(Word(0b01001011, 8), 5, 2) == Word(0b0010, 4)


def test_extract_full_width_is_identity():
    rng = random.Random(7)
    for _ in range(200):
        width = rng.randint(1, 80)
        w = Word(rng.getrandbits(width), width)
        assert extract(w, width - 1, 0) == w


def test_extract_against_shift_and_mask():
    # independent oracle: value >> lo, masked to the slice width
    assert extract(Word(0xABCD, 16), 15, 8) == Word((0xABCD >> 8) & 0xFF, 8)
    rng = random.Random(8)
    for _ in range(500):
        width = rng.randint(1, 64)
        w = Word(rng.getrandbits(width), width)
        lo = rng.randint(0, width - 1)
        hi = rng.randint(lo, width - 1)
        expected = (w.value >> lo) & ((1 << (hi - lo + 1)) - 1)
        assert extract(w, hi, lo) == Word(expected, hi - lo + 1)


def test_extract_bounds_errors():
    with pytest.raises(WordError):
        extract(Word(0, 8), 8, 0)
    with pytest.raises(WordError):
        extract(Word(0, 8), 2, 3)
    with pytest.raises(WordError):
        extract(Word(0, 8), 3, -1)


def test_concat():
    # shift-and-or oracle
    assert concat(Word(0xAB, 8), Word(0xCD, 8)) == Word(0xABCD, 16)
    assert concat(Word(0, 1), Word(1, 1)) == Word(1, 2)


def test_extract_concat_roundtrip():
    rng = random.Random(9)
    for _ in range(300):
        width = rng.randint(2, 96)
        w = Word(rng.getrandbits(width), width)
        k = rng.randint(1, width - 1)
        assert concat(extract(w, width - 1, k), extract(w, k - 1, 0)) == w


def _oracle_binop(op: str, a: Word, b: Word):
    """Independent wide-integer model, reduced modulo 2**width."""
    w = a.width
    m = (1 << w) - 1
    sx, sy = to_signed(a), to_signed(b)
    x, y = a.value, b.value
    if op in ("divide", "mod", "sdivide", "smod") and y == 0:
        return None
    table = {
        "plus": x + y,
        "minus": x - y,
        "times": x * y,
        "divide": x // y if y else 0,
        "mod": x % y if y else 0,
        "and": x & y,
        "or": x | y,
        "xor": x ^ y,
        "lshift": x << y if y < 512 else 0,
        "rshift": x >> y,
        "arshift": sx >> min(y, 511),
    }
    if op == "sdivide":
        q, r = divmod(abs(sx), abs(sy))
        table["sdivide"] = -q if (sx < 0) != (sy < 0) else q
    if op == "smod":
        r = abs(sx) % abs(sy)
        table["smod"] = -r if sx < 0 else r
    if op in table:
        return Word(table[op] & m, w)
    truth = {
        "eq": x == y, "neq": x != y,
        "lt": x < y, "le": x <= y,
        "slt": sx < sy, "sle": sx <= sy,
    }[op]
    return Word(1 if truth else 0, 1)


def test_binop_exhaustive_small_widths():
    ops = sorted(BINOPS)
    for width in range(1, 9):
        words = [Word(v, width) for v in range(1 << width)]
        for a in words:
            for b in words:
                for op in ops:
                    expected = _oracle_binop(op, a, b)
                    if expected is None:
                        with pytest.raises(DivisionByZero):
                            eval_binop(op, a, b)
                    else:
                        assert eval_binop(op, a, b) == expected, (op, a, b)


def test_binop_closure_random_widths():
    rng = random.Random(10)
    for _ in range(2000):
        width = rng.randint(1, 128)
        a = Word(rng.getrandbits(width), width)
        b = Word(rng.getrandbits(width), width)
        op = rng.choice(sorted(BINOPS))
        try:
            r = eval_binop(op, a, b)
        except DivisionByZero:
            continue
        assert 0 <= r.value < (1 << r.width)
        assert r.width == (1 if op in LOGIC_OPS else width)


def test_binop_worked_examples():
    assert eval_binop("plus", Word(12, 64), Word(1, 64)) == Word(13, 64)
    assert eval_binop("minus", Word(0, 8), Word(1, 8)) == Word(255, 8)
    assert eval_binop("slt", Word(255, 8), Word(0, 8)) == Word(1, 1)


def test_binop_width_mismatch():
    with pytest.raises(WordError):
        eval_binop("plus", Word(1, 8), Word(1, 16))


def test_succ_is_plus_one():
    rng = random.Random(11)
    for _ in range(500):
        width = rng.randint(1, 96)
        w = Word(rng.getrandbits(width), width)
        assert succ(w) == eval_binop("plus", w, Word(1, width))


def test_unops():
    assert eval_unop("not", Word(0b1010, 4)) == Word(0b0101, 4)
    assert eval_unop("neg", Word(1, 8)) == Word(255, 8)
    assert eval_unop("neg", Word(0, 8)) == Word(0, 8)
    with pytest.raises(WordError):
        eval_unop("abs", Word(1, 8))


def test_casts():
    assert eval_cast("low", 4, Word(0b01001011, 8)) == Word(0b1011, 4)
    assert eval_cast("high", 4, Word(0b01001011, 8)) == Word(0b0100, 4)
    assert eval_cast("unsigned", 16, Word(0xFF, 8)) == Word(0x00FF, 16)
    # sign-extension oracle: reinterpret signed, re-encode at the new width
    signed = to_signed(Word(0xFF, 8))
    assert eval_cast("signed", 16, Word(0xFF, 8)) == Word(signed & 0xFFFF, 16)
    assert eval_cast("signed", 16, Word(0x7F, 8)) == Word(0x7F, 16)


def test_cast_width_preconditions():
    with pytest.raises(WordError):
        eval_cast("low", 9, Word(0, 8))
    with pytest.raises(WordError):
        eval_cast("signed", 4, Word(0, 8))
    with pytest.raises(WordError):
        eval_cast("unsigned", 4, Word(0, 8))


def test_add_helper_wraps():
    assert add(Word(0, 8), -1) == Word(255, 8)
    assert add(Word(255, 8), 1) == Word(0, 8)


def test_storage_width_validation():
    root = Unknown("m", Mem(64, 8))
    with pytest.raises(WordError):
        Storage(root, Word(0, 64), Word(256, 16), 8)
