"""RISC-V instruction shapes, gadget windows, and macro-step fast paths.

A pattern match is a structural equality check against the lifted BIL
template of an instruction (or a short window of instructions, for PLT
stubs and stack frames). Because the match premise pins the template
exactly, a successful macro step is the same function of the
configuration as iterated plain stepping; the differential tests assert
this bit for bit. Any missing premise (an unbound register, a load that
does not reduce to a word) makes macro_step decline rather than guess.
"""

from __future__ import annotations

from dataclasses import dataclass

from .core import (
    EL,
    BinOp,
    Imm,
    Insn,
    Jmp,
    Load,
    Move,
    Program,
    Store,
    Var,
    Word,
    add,
    to_signed,
)
from .exprs import FastPathUnavailable, fast_load, fast_store
from .machine import MEM_VAR, MachineConfig

# The riscv64 register file: X0..X31, all 64-bit immediates.
REGISTERS = {f"X{i}": Var(f"X{i}", Imm(64)) for i in range(32)}

ALIASES = {
    "ra": "X1",
    "sp": "X2",
    "t1": "X6",
    "s0": "X8",
    "a0": "X10",
    "a1": "X11",
    "t3": "X28",
}

RA = REGISTERS["X1"]
SP = REGISTERS["X2"]
T1 = REGISTERS["X6"]
S0 = REGISTERS["X8"]
T3 = REGISTERS["X28"]

# x86_64 register name/width registry, shipped as data only (no patterns).
X86_REGISTER_WIDTHS = {
    **{name: 64 for name in ("rax", "rbx", "rcx", "rdx", "rsp", "rbp", "rsi", "rdi")},
    **{f"r{i}": 64 for i in range(8, 16)},
    **{f"xmm{i}": 128 for i in range(8)},
    **{f"ymm{i}": 256 for i in range(8)},
    **{f"zmm{i}": 512 for i in range(8)},
    **{flag: 1 for flag in ("cf", "of", "af", "pf", "sf", "zf")},
}


def register(name: str) -> Var:
    """Register variable by X-name or ABI alias."""
    return REGISTERS[ALIASES.get(name, name)]


@dataclass(frozen=True)
class RiscvPattern:
    """A recognized instruction or gadget window starting at `addr`."""

    kind: str  # auipc | jalr | ld | sd | addi | ret | plt_stub | stack_alloc | stack_dealloc
    addr: Word
    length: int  # instructions in the window
    rd: Var | None = None
    rs1: Var | None = None
    rs2: Var | None = None
    imm: Word | None = None
    offset: Word | None = None
    target: Word | None = None  # literal jump target, when the lifter folded it
    space: int | None = None  # stack frame size for stack_alloc/stack_dealloc


def _is_reg(v) -> bool:
    return isinstance(v, Var) and v.name in REGISTERS and v.type == Imm(64)


def _split_reg_offset(e):
    """Match `rs1 + offset` address forms: Var, or BinOp(Var, plus, Word)."""
    if _is_reg(e):
        return e, Word(0, 64)
    if isinstance(e, BinOp) and e.op == "plus" and _is_reg(e.lhs) and isinstance(e.rhs, Word):
        return e.lhs, e.rhs
    return None, None


# ---------------------------------------------------------------------------
# Single-instruction templates
# ---------------------------------------------------------------------------


def _match_shape(insn: Insn) -> RiscvPattern | None:
    """Match the statement shape of one instruction, ignoring its size."""
    code = insn.code
    addr = insn.addr

    if len(code) == 1:
        match code[0]:
            # auipc rd, imm lifts to a literal move of pc + imm.
            case Move(rd, Word() as w) if _is_reg(rd):
                imm = add(w, -addr.value)
                return RiscvPattern("auipc", addr, 1, rd=rd, imm=imm, target=w)
            # ld rd, offset(rs1)
            case Move(rd, Load(Var() as mem, a, endian, 64)) if (
                _is_reg(rd) and mem == MEM_VAR and endian is EL
            ):
                rs1, off = _split_reg_offset(a)
                if rs1 is not None:
                    return RiscvPattern("ld", addr, 1, rd=rd, rs1=rs1, offset=off)
            # addi rd, rs1, imm
            case Move(rd, BinOp(Var() as rs1, "plus", Word() as imm)) if (
                _is_reg(rd) and _is_reg(rs1)
            ):
                return RiscvPattern("addi", addr, 1, rd=rd, rs1=rs1, imm=imm)
            # sd rs2, offset(rs1)
            case Move(Var() as mem, Store(Var() as mem2, a, endian, 64, Var() as rs2)) if (
                mem == MEM_VAR and mem2 == MEM_VAR and endian is EL and _is_reg(rs2)
            ):
                rs1, off = _split_reg_offset(a)
                if rs1 is not None:
                    return RiscvPattern("sd", addr, 1, rs1=rs1, rs2=rs2, offset=off)
            # ret (jump through the return address)
            case Jmp(Var() as ra) if ra == RA:
                return RiscvPattern("ret", addr, 1)

    if len(code) == 2:
        # jalr rd, rs1, offset: link then jump. The link write precedes the
        # jump in the lifted code, so rd = rs1 would clobber the jump base;
        # that shape is outside the template.
        match code:
            case (Move(rd, Word() as link), Jmp(t)) if (
                _is_reg(rd) and link == add(addr, 4)
            ):
                if isinstance(t, Word):
                    return RiscvPattern("jalr", addr, 1, rd=rd, target=t)
                rs1, off = _split_reg_offset(t)
                if rs1 is not None and rs1 != rd:
                    return RiscvPattern("jalr", addr, 1, rd=rd, rs1=rs1, offset=off)
    return None


_CANONICAL_SIZES = {
    "auipc": 4, "jalr": 4, "ld": 4,
    "addi": 2, "sd": 2, "ret": 2,
}


def match_insn(insn: Insn) -> RiscvPattern | None:
    """Match one instruction against the canonical templates (shape and size)."""
    shape = _match_shape(insn)
    if shape is None or insn.size.value != _CANONICAL_SIZES[shape.kind]:
        return None
    return shape


# ---------------------------------------------------------------------------
# Windows: PLT stubs and stack frames
# ---------------------------------------------------------------------------


def _shape_at(program: Program, pc: Word) -> tuple[RiscvPattern | None, Word | None]:
    """Shape of the instruction at pc (sizes not enforced) and the next pc.

    Stack epilogues in real dumps use compressed 2-byte loads even though
    the canonical ld template is 4 bytes, so window matching checks the
    statement shapes and walks by the actual instruction sizes.
    """
    insn = program.insns.get(pc)
    if insn is None:
        return None, None
    return _match_shape(insn), add(pc, insn.size.value)


def _insn_pattern_at(program: Program, pc: Word) -> RiscvPattern | None:
    insn = program.insns.get(pc)
    return match_insn(insn) if insn is not None else None


def match_window(program: Program, pc: Word) -> RiscvPattern | None:
    """Match the multi-instruction gadget windows starting at pc."""
    first = _insn_pattern_at(program, pc)

    # PLT stub: auipc t3, imm / ld t3, off(t3) / jalr t1, t3, 0
    if first is not None and first.kind == "auipc" and first.rd == T3:
        second = _insn_pattern_at(program, add(pc, 4))
        third = _insn_pattern_at(program, add(pc, 8))
        if (
            second is not None
            and second.kind == "ld"
            and second.rd == T3
            and second.rs1 == T3
            and third is not None
            and third.kind == "jalr"
            and third.rd == T1
            and third.rs1 == T3
            and third.offset == Word(0, 64)
        ):
            return RiscvPattern(
                "plt_stub", pc, 3, imm=first.imm, offset=second.offset
            )

    shapes = []
    cursor = pc
    for _ in range(4):
        shape, nxt = _shape_at(program, cursor)
        if shape is None:
            break
        shapes.append(shape)
        cursor = nxt
    if len(shapes) < 4:
        return None
    w1, w2, w3, w4 = shapes

    # Stack allocation: addi sp,sp,-space / sd ra,space-8(sp) /
    #                   sd s0,space-16(sp) / addi s0,sp,space
    if w1.kind == "addi" and w1.rd == SP and w1.rs1 == SP:
        space = -to_signed(w1.imm)
        if (
            space >= 16
            and w2.kind == "sd" and w2.rs2 == RA
            and w2.rs1 == SP and w2.offset == Word(space - 8, 64)
            and w3.kind == "sd" and w3.rs2 == S0
            and w3.rs1 == SP and w3.offset == Word(space - 16, 64)
            and w4.kind == "addi" and w4.rd == S0
            and w4.rs1 == SP and w4.imm == Word(space, 64)
        ):
            return RiscvPattern("stack_alloc", pc, 4, space=space)

    # Stack deallocation: ld ra,space-8(sp) / ld s0,space-16(sp) /
    #                     addi sp,sp,space / ret
    if w1.kind == "ld" and w1.rd == RA and w1.rs1 == SP:
        if (
            w2.kind == "ld" and w2.rd == S0 and w2.rs1 == SP
            and w3.kind == "addi" and w3.rd == SP and w3.rs1 == SP
            and w4.kind == "ret"
        ):
            space = w3.imm.value
            if (
                16 <= space < 1 << 63
                and w1.offset == Word(space - 8, 64)
                and w2.offset == Word(space - 16, 64)
            ):
                return RiscvPattern("stack_dealloc", pc, 4, space=space)
    return None


def match_pattern(program: Program, pc: Word) -> RiscvPattern | None:
    """Pattern starting at pc; gadget windows win over single instructions."""
    window = match_window(program, pc)
    if window is not None:
        return window
    return _insn_pattern_at(program, pc)


# ---------------------------------------------------------------------------
# Macro stepping
# ---------------------------------------------------------------------------


def _reg_value(config: MachineConfig, var: Var) -> Word | None:
    value = config.store.get(var.name)
    return value if isinstance(value, Word) else None


def _mem_value(config: MachineConfig):
    return config.store.get(config.mem_var.name)


def _load64(config: MachineConfig, addr: Word) -> Word | None:
    mem = _mem_value(config)
    if mem is None:
        return None
    try:
        value = fast_load(mem, addr, EL, 64)
    except FastPathUnavailable:
        return None
    return value if isinstance(value, Word) else None


def _window_pcs(program: Program, pc: Word, count: int) -> list[Word]:
    """The count+1 pc values a window of `count` instructions visits."""
    pcs = [pc]
    for _ in range(count):
        pcs.append(add(pcs[-1], program.insns[pcs[-1]].size.value))
    return pcs


def macro_step(program: Program, config: MachineConfig) -> list[MachineConfig] | None:
    """Apply the matched pattern's big-step conclusion at config.pc.

    Returns the full chain of configurations the window visits, ending in
    the post-window configuration, so callers can still observe every
    intermediate machine state. None means no pattern matched or a
    premise failed; fall back to plain stepping.
    """
    pattern = match_pattern(program, config.pc)
    if pattern is None:
        return None
    store, pc = config.store, config.pc
    out = [config]

    def push(new_store, new_pc):
        cfg = MachineConfig(new_store, new_pc, config.mem_var)
        out.append(cfg)
        return cfg

    match pattern.kind:
        case "auipc":
            push(store.bind(pattern.rd, pattern.target), add(pc, 4))
        case "jalr":
            if pattern.target is not None:
                dest = pattern.target
            else:
                base = _reg_value(config, pattern.rs1)
                if base is None:
                    return None
                dest = add(base, pattern.offset.value)
            push(store.bind(pattern.rd, add(pc, 4)), dest)
        case "ld":
            base = _reg_value(config, pattern.rs1)
            if base is None:
                return None
            value = _load64(config, add(base, pattern.offset.value))
            if value is None:
                return None
            push(store.bind(pattern.rd, value), add(pc, 4))
        case "addi":
            base = _reg_value(config, pattern.rs1)
            if base is None:
                return None
            push(store.bind(pattern.rd, add(base, pattern.imm.value)), add(pc, 2))
        case "sd":
            base = _reg_value(config, pattern.rs1)
            value = _reg_value(config, pattern.rs2)
            mem = _mem_value(config)
            if base is None or value is None or mem is None:
                return None
            try:
                chained = fast_store(mem, add(base, pattern.offset.value), EL, 64, value)
            except FastPathUnavailable:
                return None
            push(store.bind(config.mem_var, chained), add(pc, 2))
        case "ret":
            dest = _reg_value(config, RA)
            if dest is None:
                return None
            push(store, dest)
        case "plt_stub":
            cfg = push(store.bind(T3, add(pc, pattern.imm.value)), add(pc, 4))
            loaded = _load64(cfg, add(pc, pattern.imm.value + pattern.offset.value))
            if loaded is None:
                return None
            cfg = push(cfg.store.bind(T3, loaded), add(pc, 8))
            push(cfg.store.bind(T1, add(pc, 12)), loaded)
        case "stack_alloc":
            space = pattern.space
            stack = _reg_value(config, SP)
            ret = _reg_value(config, RA)
            frame = _reg_value(config, S0)
            mem = _mem_value(config)
            if None in (stack, ret, frame) or mem is None:
                return None
            pcs = _window_pcs(program, pc, 4)
            cfg = push(store.bind(SP, add(stack, -space)), pcs[1])
            try:
                v1 = fast_store(mem, add(stack, -8), EL, 64, ret)
                cfg = push(cfg.store.bind(config.mem_var, v1), pcs[2])
                v2 = fast_store(v1, add(stack, -16), EL, 64, frame)
                cfg = push(cfg.store.bind(config.mem_var, v2), pcs[3])
            except FastPathUnavailable:
                return None
            push(cfg.store.bind(S0, stack), pcs[4])
        case "stack_dealloc":
            space = pattern.space
            stack = _reg_value(config, SP)
            mem = _mem_value(config)
            if stack is None or mem is None:
                return None
            ret = _load64(config, add(stack, space - 8))
            frame = _load64(config, add(stack, space - 16))
            if ret is None or frame is None:
                return None
            pcs = _window_pcs(program, pc, 4)
            cfg = push(store.bind(RA, ret), pcs[1])
            cfg = push(cfg.store.bind(S0, frame), pcs[2])
            cfg = push(cfg.store.bind(SP, add(stack, space)), pcs[3])
            push(cfg.store, ret)
        case _:
            return None
    return out
