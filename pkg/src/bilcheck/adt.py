"""Two-phase frontend for BIL programs dumped in BAP's ADT text form.

Phase one lexes the text into tokens; header lines (addresses, symbol
markers, echoed assembly) become metadata tokens rather than being
thrown away. Phase two parses each instruction's constructor application
into an AST by recursive descent and lowers it onto the core syntax.

The accepted shape of a dump:

    105dc: <test>                     symbol marker
    105dc: 02010413	addi s0,sp,32    instruction header
    (Move(Var("X8",Imm(64)),PLUS(Var("X2",Imm(64)),Int(32,64))))

An instruction header starts with a hex address; an even-length hex run
(with at least one decimal digit, at least four characters) directly
after the colon is read as the instruction encoding and fixes the byte
size. Without one the size falls back to the delta to the next header,
and a lone trailing instruction without either is an error. A symbol
marker at an address that never receives instructions declares an
external symbol (a stub target).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .core import (
    BE,
    EL,
    BilError,
    BinOp,
    Cast,
    Concat,
    CpuExn,
    Endian,
    Exp,
    Extract,
    IfThen,
    IfThenElse,
    Imm,
    Insn,
    Ite,
    Jmp,
    Let,
    Load,
    Mem,
    Move,
    Program,
    Seq,
    Special,
    Stmt,
    Storage,
    Store,
    UnOp,
    Unknown,
    Var,
    While,
    Word,
)
from .machine import StubBehavior, StubConfig

ADDR_WIDTH = 64


class AdtError(BilError):
    """Lexical, syntactic or lowering failure, with a byte offset."""

    def __init__(self, message: str, offset: int | None = None):
        super().__init__(message)
        self.offset = offset

    def __str__(self):
        base = self.args[0]
        if self.offset is not None:
            return f"{base} (offset {self.offset})"
        return base


# ---------------------------------------------------------------------------
# Phase 1: lexer
# ---------------------------------------------------------------------------

TOKEN_KINDS = (
    "ident", "string", "int", "lparen", "rparen", "comma",
    "lbracket", "rbracket", "metadata",
)


@dataclass(frozen=True)
class AdtToken:
    kind: str
    lexeme: str
    offset: int


_HEADER_RE = re.compile(r"^([0-9a-fA-F]+):\s*(.*)$")
_ENCODING_RE = re.compile(r"^([0-9a-f]+)(?:\s+|$)")
_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_INT_RE = re.compile(r"-?(0[xX][0-9a-fA-F]+|[0-9]+)")

_PUNCT = {"(": "lparen", ")": "rparen", ",": "comma", "[": "lbracket", "]": "rbracket"}


def lex(text: str) -> list[AdtToken]:
    """Tokenize a dump; raises AdtError with a byte offset on bad input."""
    tokens: list[AdtToken] = []
    offset = 0
    for line in text.splitlines(keepends=True):
        stripped = line.strip()
        start = offset + line.index(stripped) if stripped else offset
        if not stripped or stripped.startswith(("#", ";", "//")):
            if stripped:
                tokens.append(AdtToken("metadata", stripped, start))
        elif _HEADER_RE.match(stripped):
            tokens.append(AdtToken("metadata", stripped, start))
        else:
            tokens.extend(_lex_code_line(stripped, start))
        offset += len(line)
    return tokens


def _lex_code_line(line: str, base: int) -> list[AdtToken]:
    tokens = []
    i = 0
    while i < len(line):
        c = line[i]
        if c.isspace():
            i += 1
            continue
        if c in _PUNCT:
            tokens.append(AdtToken(_PUNCT[c], c, base + i))
            i += 1
            continue
        if c == '"':
            j = i + 1
            chars = []
            while j < len(line):
                if line[j] == "\\" and j + 1 < len(line):
                    chars.append(line[j + 1])
                    j += 2
                    continue
                if line[j] == '"':
                    break
                chars.append(line[j])
                j += 1
            else:
                raise AdtError("unterminated string literal", base + i)
            tokens.append(AdtToken("string", "".join(chars), base + i))
            i = j + 1
            continue
        m = _INT_RE.match(line, i)
        if m and (c.isdigit() or (c == "-" and len(m.group(0)) > 1)):
            tokens.append(AdtToken("int", m.group(0), base + i))
            i = m.end()
            continue
        m = _IDENT_RE.match(line, i)
        if m:
            tokens.append(AdtToken("ident", m.group(0), base + i))
            i = m.end()
            continue
        raise AdtError(f"invalid character {c!r}", base + i)
    return tokens


# ---------------------------------------------------------------------------
# Phase 2a: recursive-descent parse into an AST
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AdtNode:
    """A constructor application; the anonymous constructor '' is a bare
    parenthesized group. Leaves are Python str or int."""

    name: str
    children: tuple
    offset: int = 0


class _TokenStream:
    def __init__(self, tokens):
        self.tokens = [t for t in tokens if t.kind != "metadata"]
        self.pos = 0

    def peek(self) -> AdtToken | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def next(self) -> AdtToken:
        tok = self.peek()
        if tok is None:
            last = self.tokens[-1].offset if self.tokens else 0
            raise AdtError("unexpected end of input", last)
        self.pos += 1
        return tok

    def expect(self, kind: str) -> AdtToken:
        tok = self.next()
        if tok.kind != kind:
            raise AdtError(f"expected {kind}, found {tok.kind} {tok.lexeme!r}", tok.offset)
        return tok


def parse_ast(tokens) -> AdtNode:
    """Parse one top-level constructor application (or bare group)."""
    stream = _TokenStream(tokens)
    node = _parse_node(stream)
    extra = stream.peek()
    if extra is not None:
        raise AdtError(f"trailing input {extra.lexeme!r}", extra.offset)
    if not isinstance(node, AdtNode):
        raise AdtError("expected a constructor application, found a literal")
    return node


def _parse_node(stream: _TokenStream):
    tok = stream.next()
    if tok.kind == "string":
        return tok.lexeme
    if tok.kind == "int":
        return int(tok.lexeme, 0)
    if tok.kind == "lparen":
        children = _parse_args(stream, tok.offset)
        return AdtNode("", children, tok.offset)
    if tok.kind == "ident":
        nxt = stream.peek()
        if nxt is not None and nxt.kind == "lparen":
            stream.next()
            children = _parse_args(stream, nxt.offset)
            return AdtNode(tok.lexeme, children, tok.offset)
        return AdtNode(tok.lexeme, (), tok.offset)
    raise AdtError(f"unexpected token {tok.lexeme!r} (expected a constructor, "
                   "literal, or '(')", tok.offset)


def _parse_args(stream: _TokenStream, open_offset: int) -> tuple:
    children = []
    nxt = stream.peek()
    if nxt is not None and nxt.kind == "rparen":
        stream.next()
        return ()
    while True:
        children.append(_parse_node(stream))
        tok = stream.next()
        if tok.kind == "rparen":
            return tuple(children)
        if tok.kind != "comma":
            raise AdtError(f"expected ',' or ')', found {tok.lexeme!r}", tok.offset)


# ---------------------------------------------------------------------------
# Phase 2b: lowering the AST onto core syntax
# ---------------------------------------------------------------------------

_BINOP_NAMES = {
    "PLUS": "plus", "MINUS": "minus", "TIMES": "times", "DIVIDE": "divide",
    "SDIVIDE": "sdivide", "MOD": "mod", "SMOD": "smod", "LSHIFT": "lshift",
    "RSHIFT": "rshift", "ARSHIFT": "arshift", "AND": "and", "OR": "or",
    "XOR": "xor", "EQ": "eq", "NEQ": "neq", "LT": "lt", "LE": "le",
    "SLT": "slt", "SLE": "sle",
}
_CAST_NAMES = {"LOW": "low", "HIGH": "high", "SIGNED": "signed", "UNSIGNED": "unsigned"}
_UNOP_NAMES = {"NOT": "not", "NEG": "neg"}

# Transparent wrappers some BAP versions emit around the statement stream.
_WRAPPER_NAMES = frozenset({"Program", "Subs", "Sub", "Blks", "Blk", "Stmts"})


def _expect_arity(node: AdtNode, n: int):
    if len(node.children) != n:
        raise AdtError(
            f"{node.name or '(group)'} expects {n} argument(s), found "
            f"{len(node.children)}", node.offset,
        )


def _leaf_int(node: AdtNode, i: int) -> int:
    child = node.children[i]
    if not isinstance(child, int):
        raise AdtError(f"{node.name} argument {i + 1} must be an integer", node.offset)
    return child


def _leaf_str(node: AdtNode, i: int) -> str:
    child = node.children[i]
    if not isinstance(child, str):
        raise AdtError(f"{node.name} argument {i + 1} must be a string", node.offset)
    return child


def _child_node(node: AdtNode, i: int) -> AdtNode:
    child = node.children[i]
    if not isinstance(child, AdtNode):
        raise AdtError(f"{node.name} argument {i + 1} must be a constructor", node.offset)
    return child


def lower_type(node: AdtNode):
    match node.name:
        case "Imm":
            _expect_arity(node, 1)
            return Imm(_leaf_int(node, 0))
        case "Mem":
            _expect_arity(node, 2)
            return Mem(_leaf_int(node, 0), _leaf_int(node, 1))
    raise AdtError(f"unknown type constructor {node.name!r}", node.offset)


def lower_endian(node: AdtNode) -> Endian:
    match node.name:
        case "LittleEndian":
            return EL
        case "BigEndian":
            return BE
    raise AdtError(f"unknown endianness {node.name!r}", node.offset)


def _word(value: int, width: int) -> Word:
    return Word(value % (1 << width), width)


def lower_exp(node: AdtNode) -> Exp:
    name = node.name
    if name in _BINOP_NAMES:
        _expect_arity(node, 2)
        return BinOp(lower_exp(_child_node(node, 0)), _BINOP_NAMES[name],
                     lower_exp(_child_node(node, 1)))
    if name in _CAST_NAMES:
        _expect_arity(node, 2)
        return Cast(_CAST_NAMES[name], _leaf_int(node, 0), lower_exp(_child_node(node, 1)))
    if name in _UNOP_NAMES:
        _expect_arity(node, 1)
        return UnOp(_UNOP_NAMES[name], lower_exp(_child_node(node, 0)))
    match name:
        case "Var":
            _expect_arity(node, 2)
            return Var(_leaf_str(node, 0), lower_type(_child_node(node, 1)))
        case "Int":
            _expect_arity(node, 2)
            width = _leaf_int(node, 1)
            if width < 1:
                raise AdtError("Int width must be positive", node.offset)
            return _word(_leaf_int(node, 0), width)
        case "Unknown":
            _expect_arity(node, 2)
            return Unknown(_leaf_str(node, 0), lower_type(_child_node(node, 1)))
        case "Storage":
            _expect_arity(node, 4)
            key = lower_exp(_child_node(node, 1))
            if not isinstance(key, Word):
                raise AdtError("Storage key must be a word", node.offset)
            return Storage(lower_exp(_child_node(node, 0)), key,
                           lower_exp(_child_node(node, 2)), _leaf_int(node, 3))
        case "Load":
            _expect_arity(node, 4)
            return Load(lower_exp(_child_node(node, 0)), lower_exp(_child_node(node, 1)),
                        lower_endian(_child_node(node, 2)), _leaf_int(node, 3))
        case "Store":
            _expect_arity(node, 5)
            return Store(lower_exp(_child_node(node, 0)), lower_exp(_child_node(node, 1)),
                         lower_endian(_child_node(node, 2)), _leaf_int(node, 3),
                         lower_exp(_child_node(node, 4)))
        case "Let":
            _expect_arity(node, 3)
            var = lower_exp(_child_node(node, 0))
            if not isinstance(var, Var):
                raise AdtError("Let binder must be a Var", node.offset)
            return Let(var, lower_exp(_child_node(node, 1)), lower_exp(_child_node(node, 2)))
        case "Ite":
            _expect_arity(node, 3)
            return Ite(lower_exp(_child_node(node, 0)), lower_exp(_child_node(node, 1)),
                       lower_exp(_child_node(node, 2)))
        case "Extract":
            _expect_arity(node, 3)
            return Extract(_leaf_int(node, 0), _leaf_int(node, 1),
                           lower_exp(_child_node(node, 2)))
        case "Concat":
            _expect_arity(node, 2)
            return Concat(lower_exp(_child_node(node, 0)), lower_exp(_child_node(node, 1)))
    raise AdtError(f"unknown expression constructor {name!r}", node.offset)


def lower_stmt(node: AdtNode) -> Stmt:
    match node.name:
        case "Move":
            _expect_arity(node, 2)
            var = lower_exp(_child_node(node, 0))
            if not isinstance(var, Var):
                raise AdtError("Move target must be a Var", node.offset)
            return Move(var, lower_exp(_child_node(node, 1)))
        case "Jmp":
            _expect_arity(node, 1)
            return Jmp(lower_exp(_child_node(node, 0)))
        case "CpuExn":
            _expect_arity(node, 1)
            return CpuExn(_leaf_int(node, 0))
        case "Special":
            _expect_arity(node, 1)
            return Special(_leaf_str(node, 0))
        case "While":
            _expect_arity(node, 2)
            return While(lower_exp(_child_node(node, 0)), lower_seq(_child_node(node, 1)))
        case "If":
            if len(node.children) == 2:
                return IfThen(lower_exp(_child_node(node, 0)),
                              lower_seq(_child_node(node, 1)))
            _expect_arity(node, 3)
            other = lower_seq(_child_node(node, 2))
            guard = lower_exp(_child_node(node, 0))
            then = lower_seq(_child_node(node, 1))
            if not other:
                return IfThen(guard, then)
            return IfThenElse(guard, then, other)
    raise AdtError(f"unknown statement constructor {node.name!r}", node.offset)


def lower_seq(node: AdtNode) -> Seq:
    """A bare group (or transparent wrapper) of statements."""
    if node.name in _WRAPPER_NAMES:
        if len(node.children) == 1 and isinstance(node.children[0], AdtNode):
            return lower_seq(node.children[0])
        return tuple(lower_stmt(_as_node(c, node)) for c in node.children)
    if node.name == "":
        out = []
        for child in node.children:
            child = _as_node(child, node)
            if child.name in _WRAPPER_NAMES:
                out.extend(lower_seq(child))
            else:
                out.append(lower_stmt(child))
        return tuple(out)
    return (lower_stmt(node),)


def _as_node(child, parent: AdtNode) -> AdtNode:
    if not isinstance(child, AdtNode):
        raise AdtError(f"expected a statement, found literal {child!r}", parent.offset)
    return child


# ---------------------------------------------------------------------------
# Assembling whole programs from dumps
# ---------------------------------------------------------------------------


@dataclass
class _PendingInsn:
    addr: int
    size: int | None
    asm: str | None
    offset: int
    code_tokens: list = field(default_factory=list)


def load_program(text: str, addr_width: int = ADDR_WIDTH) -> Program:
    """lex + parse + lower a dump into a Program."""
    tokens = lex(text)
    pending: list[_PendingInsn] = []
    symbols: dict[str, int] = {}
    current: _PendingInsn | None = None

    for token in tokens:
        if token.kind == "metadata":
            m = _HEADER_RE.match(token.lexeme)
            if m is None:
                continue  # comment line
            addr = int(m.group(1), 16)
            rest = m.group(2).strip()
            sym = re.fullmatch(r"<([^<>]+)>", rest)
            if sym:
                name = sym.group(1)
                if name in symbols and symbols[name] != addr:
                    raise AdtError(f"symbol {name!r} declared twice", token.offset)
                symbols[name] = addr
                continue
            size, asm = _split_encoding(rest)
            current = _PendingInsn(addr, size, asm, token.offset)
            pending.append(current)
        else:
            if current is None:
                raise AdtError("statement group before any instruction header",
                               token.offset)
            current.code_tokens.append(token)

    insns: dict[Word, Insn] = {}
    for i, item in enumerate(pending):
        if not item.code_tokens:
            raise AdtError(f"instruction at {item.addr:#x} has no statements",
                           item.offset)
        size = item.size
        if size is None:
            if i + 1 < len(pending):
                size = pending[i + 1].addr - item.addr
            if size is None or size <= 0:
                raise AdtError(
                    f"cannot determine size of instruction at {item.addr:#x} "
                    "(no encoding and no following instruction)", item.offset)
        ast = parse_ast(item.code_tokens)
        code = lower_seq(ast)
        addr = Word(item.addr, addr_width)
        if addr in insns:
            raise AdtError(f"duplicate instruction address {item.addr:#x}", item.offset)
        insns[addr] = Insn(addr, Word(size, addr_width), code, asm=item.asm)

    sym_table = {name: Word(a, addr_width) for name, a in symbols.items()}
    return Program(insns, sym_table)


def _split_encoding(rest: str) -> tuple[int | None, str | None]:
    """Split 'ENCODING  asm text' headers; see the module docstring."""
    m = _ENCODING_RE.match(rest)
    if m:
        enc = m.group(1)
        if len(enc) >= 4 and len(enc) % 2 == 0 and any(c.isdigit() for c in enc):
            asm = rest[m.end():].strip() or None
            return len(enc) // 2, asm
    return None, (rest or None)


def load_program_file(path, addr_width: int = ADDR_WIDTH) -> Program:
    with open(path, encoding="utf-8") as fh:
        return load_program(fh.read(), addr_width)


# ---------------------------------------------------------------------------
# Canonical rendering (the inverse of load_program)
# ---------------------------------------------------------------------------


def render_program(program: Program) -> str:
    """Canonical dump: re-parsing it yields a structurally equal Program."""
    lines = []
    by_addr: dict[int, list[str]] = {}
    for name, addr in program.sym_table.items():
        by_addr.setdefault(addr.value, []).append(name)

    insn_by_value = {a.value: insn for a, insn in program.insns.items()}
    for addr_value in sorted(set(by_addr) | set(insn_by_value)):
        for name in sorted(by_addr.get(addr_value, ())):
            lines.append(f"{addr_value:x}: <{name}>")
        insn = insn_by_value.get(addr_value)
        if insn is None:
            continue
        encoding = "00" * insn.size.value
        header = f"{addr_value:x}: {encoding}"
        if insn.asm:
            header += f"\t{insn.asm}"
        lines.append(header)
        lines.append("(" + ", ".join(render_stmt(s) for s in insn.code) + ")")
    return "\n".join(lines) + "\n"


_BINOP_RENDER = {v: k for k, v in _BINOP_NAMES.items()}
_CAST_RENDER = {v: k for k, v in _CAST_NAMES.items()}
_UNOP_RENDER = {v: k for k, v in _UNOP_NAMES.items()}


def render_type(t) -> str:
    match t:
        case Imm(width):
            return f"Imm({width})"
        case Mem(aw, vw):
            return f"Mem({aw},{vw})"
    raise AdtError(f"cannot render type {t!r}")


def _render_str(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def render_exp(e: Exp) -> str:
    match e:
        case Word(value, width):
            return f"Int({value},{width})"
        case Unknown(label, t):
            return f"Unknown({_render_str(label)},{render_type(t)})"
        case Storage(base, key, stored, vw):
            return (f"Storage({render_exp(base)},{render_exp(key)},"
                    f"{render_exp(stored)},{vw})")
        case Var(name, t):
            return f"Var({_render_str(name)},{render_type(t)})"
        case Load(mem, addr, endian, size):
            return (f"Load({render_exp(mem)},{render_exp(addr)},"
                    f"{_render_endian(endian)},{size})")
        case Store(mem, addr, endian, size, value):
            return (f"Store({render_exp(mem)},{render_exp(addr)},"
                    f"{_render_endian(endian)},{size},{render_exp(value)})")
        case BinOp(lhs, op, rhs):
            return f"{_BINOP_RENDER[op]}({render_exp(lhs)},{render_exp(rhs)})"
        case UnOp(op, x):
            return f"{_UNOP_RENDER[op]}({render_exp(x)})"
        case Cast(kind, width, x):
            return f"{_CAST_RENDER[kind]}({width},{render_exp(x)})"
        case Let(var, bound, body):
            return f"Let({render_exp(var)},{render_exp(bound)},{render_exp(body)})"
        case Ite(cond, then, other):
            return f"Ite({render_exp(cond)},{render_exp(then)},{render_exp(other)})"
        case Concat(high, low):
            return f"Concat({render_exp(high)},{render_exp(low)})"
        case Extract(hi, lo, x):
            return f"Extract({hi},{lo},{render_exp(x)})"
    raise AdtError(f"cannot render expression {e!r}")


def _render_endian(endian: Endian) -> str:
    return "LittleEndian()" if endian is EL else "BigEndian()"


def render_stmt(s: Stmt) -> str:
    match s:
        case Move(var, exp):
            return f"Move({render_exp(var)},{render_exp(exp)})"
        case Jmp(target):
            return f"Jmp({render_exp(target)})"
        case CpuExn(number):
            return f"CpuExn({number})"
        case Special(text):
            return f"Special({_render_str(text)})"
        case While(guard, body):
            return f"While({render_exp(guard)},{_render_seq(body)})"
        case IfThen(guard, then):
            return f"If({render_exp(guard)},{_render_seq(then)})"
        case IfThenElse(guard, then, other):
            return (f"If({render_exp(guard)},{_render_seq(then)},"
                    f"{_render_seq(other)})")
    raise AdtError(f"cannot render statement {s!r}")


def _render_seq(seq: Seq) -> str:
    return "(" + ", ".join(render_stmt(s) for s in seq) + ")"


# ---------------------------------------------------------------------------
# Subroutine slicing
# ---------------------------------------------------------------------------


def _subroutine_extents(program: Program) -> list[tuple[int, int, str]]:
    """(start, end, name) triples for the lifted subroutines, by convention
    each running from its entry symbol to the next symbol's address."""
    insn_addrs = sorted(a.value for a in program.insns)
    if not insn_addrs:
        return []
    entries = sorted(
        (addr.value, name)
        for name, addr in program.sym_table.items()
        if addr in program.insns
    )
    out = []
    for i, (start, name) in enumerate(entries):
        end = entries[i + 1][0] if i + 1 < len(entries) else insn_addrs[-1] + 1
        out.append((start, end, name))
    return out


def _owner(extents, addr_value: int):
    for start, end, name in extents:
        if start <= addr_value < end:
            return name, start
    return None


def _in_plt_window(program: Program, at: int, riscv) -> bool:
    """Is the instruction at `at` covered by a PLT-stub window? The stub's
    jalr sits 8 bytes past the window start."""
    for start in (at, at - 4, at - 8):
        if start < 0:
            continue
        window = riscv.match_window(program, Word(start, ADDR_WIDTH))
        if window is not None and window.kind == "plt_stub":
            if start <= at < start + 12:
                return True
    return False


def _jump_targets(seq: Seq, offset: int, collect: list):
    for s in seq:
        match s:
            case Jmp(target):
                collect.append((target, offset))
            case While(_, body):
                _jump_targets(body, offset, collect)
            case IfThen(_, body):
                _jump_targets(body, offset, collect)
            case IfThenElse(_, then, other):
                _jump_targets(then, offset, collect)
                _jump_targets(other, offset, collect)
            case _:
                pass


def slice_program(program: Program, roots: list[str]) -> Program:
    """Restrict the program to the named subroutines, everything they
    statically call through direct jumps, and the external symbols those
    calls reference.

    Jumps through the return-address register are returns, not edges. A
    dynamic jump inside a PLT-stub-shaped window resolves at load time
    and contributes no edge either; any other indirect jump aborts the
    slice rather than guessing.
    """
    from . import riscv

    extents = _subroutine_extents(program)
    by_name = {name: (start, end) for start, end, name in extents}
    for root in roots:
        if root not in program.sym_table:
            raise AdtError(f"unknown root symbol {root!r}")
        if root not in by_name:
            raise AdtError(f"root symbol {root!r} is external, nothing to slice")

    keep_subs: set[str] = set()
    keep_external: set[str] = set()
    worklist = list(dict.fromkeys(roots))
    external_by_addr = {
        addr: name for name, addr in program.sym_table.items()
        if addr not in program.insns
    }

    while worklist:
        name = worklist.pop()
        if name in keep_subs:
            continue
        keep_subs.add(name)
        start, end = by_name[name]
        for addr, insn in program.insns.items():
            if not start <= addr.value < end:
                continue
            targets: list = []
            _jump_targets(insn.code, addr.value, targets)
            for target, at in targets:
                if isinstance(target, Word):
                    owner = _owner(extents, target.value)
                    if owner is not None:
                        if owner[0] not in keep_subs:
                            worklist.append(owner[0])
                    elif target in external_by_addr:
                        keep_external.add(external_by_addr[target])
                    continue
                if isinstance(target, Var) and target.name == "X1":
                    continue  # return through the link register
                if _in_plt_window(program, at, riscv):
                    continue  # PLT stub's dynamically resolved jump
                raise AdtError(
                    f"indirect jump at {at:#x} in {name!r}; refusing to slice "
                    "past a target that cannot be resolved statically"
                )

    new_insns = {}
    for name in keep_subs:
        start, end = by_name[name]
        for addr, insn in program.insns.items():
            if start <= addr.value < end:
                new_insns[addr] = insn
    new_syms = {
        name: program.sym_table[name]
        for name in sorted(keep_subs | keep_external)
    }
    return Program(new_insns, new_syms)


# ---------------------------------------------------------------------------
# Stub configuration files
# ---------------------------------------------------------------------------

_STUB_LINE_RE = re.compile(
    r"^(?P<name>[A-Za-z_][A-Za-z0-9_@.]*)\s*=\s*(?P<kind>[a-z_]+)"
    r"(?:\((?P<args>[^)]*)\))?$"
)


def parse_stub_config(text: str) -> StubConfig:
    """Parse `symbol = behavior` lines into a stub configuration.

    Behaviors: malloc_stub, free_stub, realloc_stub, and
    generic_return(REG, ...) whose named registers are clobbered with
    unknowns (no registers means the call preserves everything).
    """
    stubs: StubConfig = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _STUB_LINE_RE.match(line)
        if m is None:
            raise AdtError(f"bad stub line {lineno}: {raw.strip()!r}")
        kind = m.group("kind")
        args = m.group("args")
        clobbers = tuple(a.strip() for a in args.split(",") if a.strip()) if args else ()
        if kind != "generic_return" and clobbers:
            raise AdtError(f"stub kind {kind} takes no arguments (line {lineno})")
        try:
            stubs[m.group("name")] = StubBehavior(kind, clobbers)
        except BilError as err:
            raise AdtError(f"{err} (line {lineno})") from None
    return stubs


def load_stub_config(path) -> StubConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_stub_config(fh.read())
