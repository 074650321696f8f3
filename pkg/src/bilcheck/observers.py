"""Auxiliary transition systems run in lockstep with machine steps.

An observer watches the configuration about to be stepped and folds it
into its own state: the symbol tracer collects visited program counters,
the allocation observer collects a trace of alloc/free memory operations,
and the reallocation observer extends it with realloc handling (a
zero-sized reallocation is recorded as a free). Observers never touch the
machine state except through their binding's getters, so composing one
cannot change the machine trace.

The vulnerability predicates at the bottom are pure functions of observer
state: double_free_vuln over allocation traces, and the forbidden-symbol
rule checks over visited-address sets.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from typing import Callable

from .core import BilError, Word, type_of
from .machine import MachineConfig


class ObserverError(BilError):
    """An observer could not read what its binding promised (for example a
    pointer register holding an unknown)."""


# ---------------------------------------------------------------------------
# Memory-operation traces
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Alloc:
    ptr: Word
    size: Word

    def __repr__(self):
        return f"alloc({self.ptr!r},{self.size!r})"


@dataclass(frozen=True)
class Free:
    ptr: Word

    def __repr__(self):
        return f"free({self.ptr!r})"


MemOp = Alloc | Free
AllocTrace = tuple  # tuple[MemOp, ...]

# Visited-address traces are sets of pc words.
AddrTrace = frozenset


# ---------------------------------------------------------------------------
# Bindings: how a concrete ABI exposes allocation to the observer
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ObserverBinding:
    is_alloc: Callable[[MachineConfig], bool]
    is_free: Callable[[MachineConfig], bool]
    is_realloc: Callable[[MachineConfig], bool]
    get_ptr: Callable[[MachineConfig], Word]
    get_sz: Callable[[MachineConfig], Word]
    next_ptr: Callable[[AllocTrace], Word]

    def classify(self, config: MachineConfig) -> str | None:
        """One of 'alloc', 'free', 'realloc' or None; enforces that the
        three predicates are mutually exclusive per configuration."""
        hits = [
            name
            for name, pred in (
                ("alloc", self.is_alloc),
                ("free", self.is_free),
                ("realloc", self.is_realloc),
            )
            if pred(config)
        ]
        if len(hits) > 1:
            raise ObserverError(f"binding classifies config as {hits}")
        return hits[0] if hits else None


class BumpAllocator:
    """Fresh pointers by bumping past every prior allocation, never reusing.

    Never reusing addresses satisfies the freshness requirement (every
    previously allocated copy of a returned pointer has been freed)
    vacuously. Deterministic in the trace.
    """

    def __init__(self, base: int = 0x20000, align: int = 8, width: int = 64):
        self.base = base
        self.align = align
        self.width = width

    def __call__(self, trace: AllocTrace) -> Word:
        ptr = self.base
        for op in trace:
            if isinstance(op, Alloc):
                end = op.ptr.value + max(op.size.value, 1)
                ptr = max(ptr, _round_up(end, self.align))
        if ptr >= 1 << self.width:
            raise ObserverError(f"allocator exhausted the {self.width}-bit address space")
        return Word(ptr, self.width)


def _round_up(n: int, align: int) -> int:
    return (n + align - 1) // align * align


def next_ptr(trace: AllocTrace, base: int = 0x20000, align: int = 8, width: int = 64) -> Word:
    """Default fresh-pointer choice: the bump allocator above."""
    return BumpAllocator(base, align, width)(trace)


def _reg_word(config: MachineConfig, name: str, what: str) -> Word:
    value = config.store.get(name)
    if value is None:
        raise ObserverError(f"{what}: register {name} is unbound")
    if not isinstance(value, Word):
        raise ObserverError(f"{what}: register {name} holds {type_of(value)!r}, not a word")
    return value


def standard_binding(sym_table: dict, allocator: Callable[[AllocTrace], Word] | None = None) -> ObserverBinding:
    """RISC-V calling-convention binding over a program's symbol table.

    An allocation site is the address of `malloc`, a free site that of
    `free`, a reallocation site that of `realloc`. The first argument
    lives in X10; a reallocation's size (its second argument) in X11.
    """
    malloc_at = sym_table.get("malloc")
    free_at = sym_table.get("free")
    realloc_at = sym_table.get("realloc")

    def get_sz(config: MachineConfig) -> Word:
        if realloc_at is not None and config.pc == realloc_at:
            return _reg_word(config, "X11", "get_sz")
        return _reg_word(config, "X10", "get_sz")

    return ObserverBinding(
        is_alloc=lambda c: c.pc == malloc_at,
        is_free=lambda c: c.pc == free_at,
        is_realloc=lambda c: c.pc == realloc_at,
        get_ptr=lambda c: _reg_word(c, "X10", "get_ptr"),
        get_sz=get_sz,
        next_ptr=allocator or BumpAllocator(),
    )


# ---------------------------------------------------------------------------
# Observer steps
# ---------------------------------------------------------------------------


def find_symbol_step(config: MachineConfig, visited: AddrTrace) -> AddrTrace:
    """Record the pc about to execute."""
    return visited | {config.pc}


def is_symbol(name: str, visited: AddrTrace, sym_table: dict) -> bool:
    """Did execution reach the named symbol's address?"""
    if name not in sym_table:
        raise ObserverError(f"unknown symbol {name!r}")
    return sym_table[name] in visited


def alloc_step(binding: ObserverBinding, config: MachineConfig, trace: AllocTrace) -> AllocTrace:
    """Allocation semantics: record allocs and frees, skip the rest."""
    match binding.classify(config):
        case "alloc":
            ptr = binding.next_ptr(trace)
            return trace + (Alloc(ptr, binding.get_sz(config)),)
        case "free":
            return trace + (Free(binding.get_ptr(config)),)
        case _:
            return trace


def realloc_step(binding: ObserverBinding, config: MachineConfig, trace: AllocTrace) -> AllocTrace:
    """Reallocation semantics: allocs and frees as above; a reallocation
    records an alloc of the resized pointer, except a zero-sized one is
    recorded as a free (the root of the zero-reallocation bug class)."""
    kind = binding.classify(config)
    if kind == "realloc":
        ptr = binding.get_ptr(config)
        size = binding.get_sz(config)
        if size.value == 0:
            return trace + (Free(ptr),)
        return trace + (Alloc(ptr, size),)
    return alloc_step(binding, config, trace)


# ---------------------------------------------------------------------------
# Observer objects for the runner
# ---------------------------------------------------------------------------


class NullObserver:
    """Identity observer; composing it must not change anything."""

    def initial(self):
        return None

    def step(self, config: MachineConfig, state):
        return state

    def fresh_ptr(self, config: MachineConfig, state) -> Word | None:
        return None


class FindSymbolObserver(NullObserver):
    def initial(self) -> AddrTrace:
        return frozenset()

    def step(self, config: MachineConfig, state: AddrTrace) -> AddrTrace:
        return find_symbol_step(config, state)


class AllocationObserver(NullObserver):
    def __init__(self, binding: ObserverBinding):
        self.binding = binding

    def initial(self) -> AllocTrace:
        return ()

    def step(self, config: MachineConfig, state: AllocTrace) -> AllocTrace:
        return alloc_step(self.binding, config, state)

    def fresh_ptr(self, config: MachineConfig, state: AllocTrace) -> Word | None:
        if self.binding.is_alloc(config):
            return self.binding.next_ptr(state)
        return None


class ReallocationObserver(AllocationObserver):
    def step(self, config: MachineConfig, state: AllocTrace) -> AllocTrace:
        return realloc_step(self.binding, config, state)


# ---------------------------------------------------------------------------
# Vulnerability predicates
# ---------------------------------------------------------------------------


def double_free_vuln(trace: AllocTrace) -> bool:
    """Two frees of one pointer with no intervening alloc of it."""
    for i, op in enumerate(trace):
        if not isinstance(op, Free):
            continue
        for j in range(i + 1, len(trace)):
            later = trace[j]
            if isinstance(later, Alloc) and later.ptr == op.ptr:
                break  # reallocated before any second free
            if isinstance(later, Free) and later.ptr == op.ptr:
                return True
    return False


AV_RULES = (17, 19, 20, 21, 23, 24, 25)

_SYMBOL_SET_CACHE: dict = {}


def load_symbol_set(rule: int, path=None) -> frozenset:
    """Forbidden symbols for an AV rule, from the packaged data file or an
    override path (one symbol per line, '#' comments)."""
    if rule not in AV_RULES:
        raise ObserverError(f"unknown AV rule {rule}")
    if path is not None:
        text = open(path, encoding="utf-8").read()
        return _parse_symbol_set(text)
    if rule not in _SYMBOL_SET_CACHE:
        data = resources.files("bilcheck").joinpath(f"data/av_rule_{rule}.txt")
        _SYMBOL_SET_CACHE[rule] = _parse_symbol_set(data.read_text(encoding="utf-8"))
    return _SYMBOL_SET_CACHE[rule]


def _parse_symbol_set(text: str) -> frozenset:
    out = set()
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            out.add(line)
    return frozenset(out)


def av_violation(
    rule: int, visited: AddrTrace, sym_table: dict, symbols: frozenset | None = None
) -> bool:
    """Did execution reach any of the rule's forbidden symbols?

    Symbols absent from the program's symbol table cannot have been
    reached and contribute false.
    """
    names = symbols if symbols is not None else load_symbol_set(rule)
    return any(
        is_symbol(name, visited, sym_table) for name in names if name in sym_table
    )
