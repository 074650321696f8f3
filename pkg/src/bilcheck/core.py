"""Core BIL syntax: bit-precise words, values, expressions and statements.

Everything here is immutable and hashable, so syntax trees and machine
states can be shared freely. Word arithmetic is exact: a word is a natural
below 2**width, and every operation reduces modulo 2**width.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum


class BilError(Exception):
    """Base class for all errors raised by this package."""


class WordError(BilError):
    """A word operation was applied outside its domain (bad width/slice)."""


class DivisionByZero(BilError):
    """Unsigned or signed division/remainder with a zero divisor."""

    def __init__(self, width: int):
        super().__init__(f"division by zero on {width}-bit words")
        self.width = width


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class Imm:
    width: int

    def __repr__(self):
        return f"Imm({self.width})"


@dataclass(frozen=True, slots=True)
class Mem:
    addr_width: int
    val_width: int

    def __repr__(self):
        return f"Mem({self.addr_width},{self.val_width})"


BilType = Imm | Mem


# ---------------------------------------------------------------------------
# Values
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class Word:
    """A machine word: natural `value` of exactly `width` bits."""

    value: int
    width: int

    def __post_init__(self):
        if self.width < 1:
            raise WordError(f"word width must be positive, got {self.width}")
        if not 0 <= self.value < (1 << self.width):
            raise WordError(
                f"value {self.value} out of range for {self.width}-bit word"
            )

    def __repr__(self):
        return f"{self.value}:{self.width}"


@dataclass(frozen=True, slots=True)
class Unknown:
    """BIL's undefined-behaviour carrier: an opaque value of a known type."""

    label: str
    type: BilType

    def __repr__(self):
        return f"unknown[{self.label}]:{self.type!r}"


@dataclass(frozen=True, slots=True)
class Storage:
    """One mapping `base[key <- stored, val_width]` in a memory chain.

    `base` is either another Storage or the Unknown root of the chain.
    """

    base: "Value"
    key: Word
    stored: "Value"
    val_width: int

    def __post_init__(self):
        if isinstance(self.stored, Word) and self.stored.width != self.val_width:
            raise WordError(
                f"stored word has width {self.stored.width}, expected {self.val_width}"
            )

    def __repr__(self):
        return f"{self.base!r}[{self.key!r} <- {self.stored!r}, {self.val_width}]"


Value = Word | Storage | Unknown


def type_of(v: Value) -> BilType:
    """Type of a value: words are Imm, storages Mem, unknowns carry theirs."""
    match v:
        case Word(_, width):
            return Imm(width)
        case Storage(_, key, _, val_width):
            return Mem(key.width, val_width)
        case Unknown(_, t):
            return t
    raise WordError(f"not a value: {v!r}")


# ---------------------------------------------------------------------------
# Expressions
# ---------------------------------------------------------------------------


class Endian(Enum):
    LITTLE = "el"
    BIG = "be"

    def __repr__(self):
        return self.value


EL = Endian.LITTLE
BE = Endian.BIG


@dataclass(frozen=True, slots=True)
class Var:
    name: str
    type: BilType

    def __post_init__(self):
        if not self.name:
            raise WordError("variable name must be non-empty")

    def __repr__(self):
        return f"{self.name}:{self.type!r}"


@dataclass(frozen=True, slots=True)
class Load:
    mem: "Exp"
    addr: "Exp"
    endian: Endian
    size: int


@dataclass(frozen=True, slots=True)
class Store:
    mem: "Exp"
    addr: "Exp"
    endian: Endian
    size: int
    value: "Exp"


@dataclass(frozen=True, slots=True)
class BinOp:
    lhs: "Exp"
    op: str
    rhs: "Exp"


@dataclass(frozen=True, slots=True)
class UnOp:
    op: str
    exp: "Exp"


@dataclass(frozen=True, slots=True)
class Cast:
    kind: str
    width: int
    exp: "Exp"


@dataclass(frozen=True, slots=True)
class Let:
    var: Var
    bound: "Exp"
    body: "Exp"


@dataclass(frozen=True, slots=True)
class Ite:
    cond: "Exp"
    then: "Exp"
    other: "Exp"


@dataclass(frozen=True, slots=True)
class Concat:
    high: "Exp"
    low: "Exp"


@dataclass(frozen=True, slots=True)
class Extract:
    high: int
    low: int
    exp: "Exp"

    def __post_init__(self):
        if self.high < self.low:
            raise WordError(f"extract with high {self.high} < low {self.low}")


Exp = Value | Var | Load | Store | BinOp | UnOp | Cast | Let | Ite | Concat | Extract


def is_value(e: Exp) -> bool:
    return isinstance(e, (Word, Storage, Unknown))


# ---------------------------------------------------------------------------
# Statements
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class Move:
    var: Var
    exp: Exp


@dataclass(frozen=True, slots=True)
class Jmp:
    target: Exp


@dataclass(frozen=True, slots=True)
class CpuExn:
    number: int


@dataclass(frozen=True, slots=True)
class Special:
    text: str


@dataclass(frozen=True, slots=True)
class While:
    guard: Exp
    body: "Seq"


@dataclass(frozen=True, slots=True)
class IfThen:
    guard: Exp
    then: "Seq"


@dataclass(frozen=True, slots=True)
class IfThenElse:
    guard: Exp
    then: "Seq"
    other: "Seq"


Stmt = Move | Jmp | CpuExn | Special | While | IfThen | IfThenElse
Seq = tuple  # tuple[Stmt, ...]


# ---------------------------------------------------------------------------
# Instructions and programs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Insn:
    """A decoded instruction: address, byte size, and its BIL statements."""

    addr: Word
    size: Word
    code: Seq
    asm: str | None = None

    def __post_init__(self):
        if self.addr.width != self.size.width:
            raise WordError("instruction addr and size widths differ")


@dataclass(frozen=True, eq=False)
class Program:
    """An address-keyed instruction map plus the binary's symbol table.

    Symbols whose target carries no instruction are external: they name
    code outside the lifted image (PLT targets, stubbed library calls).
    """

    insns: dict  # Word -> Insn
    sym_table: dict  # str -> Word

    def __post_init__(self):
        for addr, insn in self.insns.items():
            if insn.addr != addr:
                raise WordError(f"instruction keyed at {addr!r} has addr {insn.addr!r}")

    @property
    def addr_set(self) -> frozenset:
        return frozenset(self.insns)

    @property
    def external_symbols(self) -> frozenset:
        in_image = self.addr_set
        return frozenset(n for n, a in self.sym_table.items() if a not in in_image)

    def symbols_at(self, addr: Word) -> tuple:
        return tuple(sorted(n for n, a in self.sym_table.items() if a == addr))

    def __eq__(self, other):
        if not isinstance(other, Program):
            return NotImplemented
        return self.insns == other.insns and self.sym_table == other.sym_table


# ---------------------------------------------------------------------------
# Word operations
# ---------------------------------------------------------------------------

ARITH_OPS = frozenset(
    {
        "plus", "minus", "times", "divide", "sdivide", "mod", "smod",
        "and", "or", "xor", "lshift", "rshift", "arshift",
    }
)
LOGIC_OPS = frozenset({"eq", "neq", "lt", "le", "slt", "sle"})
BINOPS = ARITH_OPS | LOGIC_OPS
UNOPS = frozenset({"neg", "not"})
CASTS = frozenset({"low", "high", "signed", "unsigned"})


def _mask(width: int) -> int:
    return (1 << width) - 1


def to_signed(w: Word) -> int:
    """Two's-complement reading of a word."""
    if w.value >> (w.width - 1):
        return w.value - (1 << w.width)
    return w.value


def add(w: Word, n: int) -> Word:
    """w + n modulo 2**width; n may be negative."""
    return Word((w.value + n) & _mask(w.width), w.width)


def succ(w: Word) -> Word:
    """Successor modulo 2**width."""
    return Word((w.value + 1) & _mask(w.width), w.width)


def extract(w: Word, high: int, low: int) -> Word:
    """Bits high..low inclusive of w, as a word of width high-low+1."""
    if low < 0 or high < low:
        raise WordError(f"bad slice [{high}:{low}]")
    if high >= w.width:
        raise WordError(f"slice [{high}:{low}] exceeds width {w.width}")
    width = high - low + 1
    return Word((w.value >> low) & _mask(width), width)


def concat(high: Word, low: Word) -> Word:
    """Join two words, `high` becoming the most significant bits."""
    return Word((high.value << low.width) | low.value, high.width + low.width)


def eval_binop(op: str, a: Word, b: Word) -> Word:
    """Apply a binary operation to same-width words.

    Arithmetic operations return a word of the operand width (modulo
    2**width); comparisons return a 1-bit word with true = 1. Division
    or remainder by zero raises DivisionByZero.
    """
    if a.width != b.width:
        raise WordError(f"binop {op} on widths {a.width} and {b.width}")
    w = a.width
    m = _mask(w)
    x, y = a.value, b.value
    match op:
        case "plus":
            return Word((x + y) & m, w)
        case "minus":
            return Word((x - y) & m, w)
        case "times":
            return Word((x * y) & m, w)
        case "divide":
            if y == 0:
                raise DivisionByZero(w)
            return Word((x // y) & m, w)
        case "mod":
            if y == 0:
                raise DivisionByZero(w)
            return Word((x % y) & m, w)
        case "sdivide":
            if y == 0:
                raise DivisionByZero(w)
            sx, sy = to_signed(a), to_signed(b)
            q = abs(sx) // abs(sy)
            if (sx < 0) != (sy < 0):
                q = -q
            return Word(q & m, w)
        case "smod":
            if y == 0:
                raise DivisionByZero(w)
            sx, sy = to_signed(a), to_signed(b)
            r = abs(sx) % abs(sy)
            if sx < 0:
                r = -r
            return Word(r & m, w)
        case "and":
            return Word(x & y, w)
        case "or":
            return Word(x | y, w)
        case "xor":
            return Word(x ^ y, w)
        case "lshift":
            if y >= w:
                return Word(0, w)
            return Word((x << y) & m, w)
        case "rshift":
            if y >= w:
                return Word(0, w)
            return Word(x >> y, w)
        case "arshift":
            s = min(y, w)
            return Word((to_signed(a) >> s) & m, w)
        case "eq":
            return Word(1 if x == y else 0, 1)
        case "neq":
            return Word(1 if x != y else 0, 1)
        case "lt":
            return Word(1 if x < y else 0, 1)
        case "le":
            return Word(1 if x <= y else 0, 1)
        case "slt":
            return Word(1 if to_signed(a) < to_signed(b) else 0, 1)
        case "sle":
            return Word(1 if to_signed(a) <= to_signed(b) else 0, 1)
    raise WordError(f"unknown binop {op!r}")


def eval_unop(op: str, w: Word) -> Word:
    match op:
        case "neg":
            return Word(-w.value & _mask(w.width), w.width)
        case "not":
            return Word(~w.value & _mask(w.width), w.width)
    raise WordError(f"unknown unop {op!r}")


def eval_cast(kind: str, width: int, w: Word) -> Word:
    """Narrow (low/high) or extend (signed/unsigned) a word to `width` bits."""
    if width < 1:
        raise WordError(f"cast to non-positive width {width}")
    match kind:
        case "low":
            if width > w.width:
                raise WordError(f"low cast widens {w.width} to {width}")
            return extract(w, width - 1, 0)
        case "high":
            if width > w.width:
                raise WordError(f"high cast widens {w.width} to {width}")
            return extract(w, w.width - 1, w.width - width)
        case "unsigned":
            if width < w.width:
                raise WordError(f"unsigned cast narrows {w.width} to {width}")
            return Word(w.value, width)
        case "signed":
            if width < w.width:
                raise WordError(f"signed cast narrows {w.width} to {width}")
            return Word(to_signed(w) & _mask(width), width)
    raise WordError(f"unknown cast {kind!r}")


# Result type of a binop, usable without evaluating operands.
def binop_result_width(op: str, operand_width: int) -> int:
    if op in LOGIC_OPS:
        return 1
    if op in ARITH_OPS:
        return operand_width
    raise WordError(f"unknown binop {op!r}")
