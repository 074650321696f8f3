"""Statement and instruction execution over machine configurations.

A configuration is (variable store, program counter, memory variable).
`step_insn` decodes the instruction at the pc, advances the pc by the
instruction size, then runs the instruction's statements, which may move
the pc again. Decode failures are values (they drive termination), all
other failure modes raise StuckError.

External calls are modelled by stubs: when the pc carries no lifted
instruction but names a stubbed symbol, decode synthesizes a small
instruction for it. The malloc stub moves a fresh-pointer placeholder
into X10; the placeholder is the unknown value below and is resolved by
whoever owns an allocator (the runner) at step time. Without one it
simply evaluates to an unknown, which is the honest meaning of calling
an allocator nobody is modelling.
"""

from __future__ import annotations

from dataclasses import dataclass

from .core import (
    BilError,
    CpuExn,
    IfThen,
    IfThenElse,
    Imm,
    Insn,
    Jmp,
    Mem,
    Move,
    Program,
    Seq,
    Special,
    Stmt,
    Storage,
    Unknown,
    Var,
    While,
    Word,
    add,
)
from .exprs import Cost, EvalError, VarStore, eval_exp

DEFAULT_WHILE_FUEL = 1_000_000

MEM_VAR = Var("mem", Mem(64, 8))

# Placeholder moved into X10 by the malloc stub; see module docstring.
ALLOC_PLACEHOLDER = Unknown("alloc", Imm(64))

_X1 = Var("X1", Imm(64))
_X10 = Var("X10", Imm(64))


class StuckError(BilError):
    """Execution reached a state with no applicable rule."""

    def __init__(self, reason: str, stmt_index: int | None = None, addr: Word | None = None):
        super().__init__(reason)
        self.reason = reason
        self.stmt_index = stmt_index
        self.addr = addr

    def __str__(self):
        where = ""
        if self.addr is not None:
            where += f" at {self.addr.value:#x}"
        if self.stmt_index is not None:
            where += f" (statement {self.stmt_index})"
        return self.reason + where


@dataclass(frozen=True)
class MachineConfig:
    store: VarStore
    pc: Word
    mem_var: Var = MEM_VAR


# ---------------------------------------------------------------------------
# Statement execution
# ---------------------------------------------------------------------------


def exec_stmt(
    store: VarStore,
    pc: Word,
    stmt: Stmt,
    events: list | None = None,
    cost: Cost | None = None,
    while_fuel: int = DEFAULT_WHILE_FUEL,
) -> tuple[VarStore, Word]:
    """Run one statement from (store, pc) to (store', pc')."""
    if cost is not None:
        cost.add(1)
    try:
        match stmt:
            case Move(var, exp):
                value = eval_exp(store, exp, cost)
                return store.bind(var, value), pc
            case Jmp(target):
                value = eval_exp(store, target, cost)
                if isinstance(value, Unknown):
                    raise StuckError("unknown jump target")
                if isinstance(value, Storage):
                    raise StuckError("jump target is a storage")
                return store, value
            case CpuExn(number):
                if events is not None:
                    events.append(("cpuexn", number, pc.value))
                return store, pc
            case Special(text):
                if events is not None:
                    events.append(("special", text, pc.value))
                return store, pc
            case IfThen(guard, then):
                taken = _eval_guard(store, guard, cost)
                if taken:
                    return exec_seq(store, pc, then, events, cost, while_fuel)
                return store, pc
            case IfThenElse(guard, then, other):
                taken = _eval_guard(store, guard, cost)
                body = then if taken else other
                return exec_seq(store, pc, body, events, cost, while_fuel)
            case While(guard, body):
                fuel = while_fuel
                while _eval_guard(store, guard, cost):
                    store, pc = exec_seq(store, pc, body, events, cost, while_fuel)
                    fuel -= 1
                    if fuel <= 0:
                        raise StuckError("while loop exceeded its fuel")
                return store, pc
    except EvalError as err:
        raise StuckError(str(err)) from err
    raise StuckError(f"not a statement: {stmt!r}")


def _eval_guard(store: VarStore, guard, cost) -> bool:
    value = eval_exp(store, guard, cost)
    if isinstance(value, Unknown):
        raise StuckError("unknown branch guard")
    if not isinstance(value, Word) or value.width != 1:
        raise StuckError("branch guard is not a 1-bit word")
    return value.value == 1


def exec_seq(
    store: VarStore,
    pc: Word,
    seq: Seq,
    events: list | None = None,
    cost: Cost | None = None,
    while_fuel: int = DEFAULT_WHILE_FUEL,
) -> tuple[VarStore, Word]:
    """Left fold of exec_stmt; the empty sequence is the identity."""
    if cost is not None:
        cost.add(1)  # seq_nil closes every fold
    for i, stmt in enumerate(seq):
        if cost is not None and i > 0:
            cost.add(1)  # seq_rec
        try:
            store, pc = exec_stmt(store, pc, stmt, events, cost, while_fuel)
        except StuckError as err:
            if err.stmt_index is None:
                err.stmt_index = i
            raise
    return store, pc


# ---------------------------------------------------------------------------
# Stubs for external symbols
# ---------------------------------------------------------------------------

STUB_KINDS = ("malloc_stub", "free_stub", "realloc_stub", "generic_return")


@dataclass(frozen=True)
class StubBehavior:
    kind: str
    clobbers: tuple = ()

    def __post_init__(self):
        if self.kind not in STUB_KINDS:
            raise BilError(f"unknown stub kind {self.kind!r}")


# A stub configuration maps symbol names to behaviors.
StubConfig = dict


def stub_insn(behavior: StubBehavior, addr: Word) -> Insn:
    """Synthesize the instruction executed at a stubbed symbol's address."""
    ret = Jmp(_X1)
    match behavior.kind:
        case "malloc_stub":
            code = (Move(_X10, ALLOC_PLACEHOLDER), ret)
        case "free_stub" | "realloc_stub":
            code = (ret,)
        case "generic_return":
            moves = tuple(
                Move(Var(name, Imm(64)), Unknown("external", Imm(64)))
                for name in behavior.clobbers
            )
            code = moves + (ret,)
        case _:
            raise BilError(f"unknown stub kind {behavior.kind!r}")
    size = Word(4, addr.width)
    return Insn(addr, size, code, asm=f"<stub {behavior.kind}>")


def resolve_stub_addrs(program: Program, stubs: StubConfig | None) -> dict:
    """Map stub addresses to behaviors, refusing stubs on lifted symbols."""
    if not stubs:
        return {}
    out = {}
    for name, behavior in stubs.items():
        addr = program.sym_table.get(name)
        if addr is None:
            continue  # configured stub not present in this binary
        if addr in program.insns:
            raise BilError(
                f"stub symbol {name!r} names lifted code at {addr.value:#x}"
            )
        out[addr] = behavior
    return out


# ---------------------------------------------------------------------------
# Decode and the step relation
# ---------------------------------------------------------------------------


def decode(program: Program, config: MachineConfig, stubs: StubConfig | None = None) -> Insn | None:
    """Instruction at the pc: lifted code first, then stubs, else None."""
    insn = program.insns.get(config.pc)
    if insn is not None:
        return insn
    if stubs:
        behavior = resolve_stub_addrs(program, stubs).get(config.pc)
        if behavior is not None:
            return stub_insn(behavior, config.pc)
    return None


def _resolve_placeholder(code: Seq, fresh_ptr: Word) -> Seq:
    return tuple(
        Move(s.var, fresh_ptr)
        if isinstance(s, Move) and s.exp == ALLOC_PLACEHOLDER
        else s
        for s in code
    )


def step_insn(
    program: Program,
    config: MachineConfig,
    stubs: StubConfig | None = None,
    fresh_ptr: Word | None = None,
    events: list | None = None,
    cost: Cost | None = None,
) -> MachineConfig:
    """One step of the machine: decode, advance pc by size, run the code."""
    insn = decode(program, config, stubs)
    if insn is None:
        raise StuckError("no instruction to decode", addr=config.pc)
    if cost is not None:
        cost.add(1)  # step_prog
    code = insn.code
    if fresh_ptr is not None:
        code = _resolve_placeholder(code, fresh_ptr)
    try:
        store, pc = exec_seq(config.store, add(config.pc, insn.size.value), code, events, cost)
    except StuckError as err:
        if err.addr is None:
            err.addr = config.pc
        raise
    return MachineConfig(store, pc, config.mem_var)
