"""Small-step expression evaluation and its verified-equivalent fast paths.

`step_exp` applies exactly one reduction rule using a leftmost-innermost
strategy (addresses before memories before stored values); `eval_exp` is
its reflexive-transitive closure. `fast_load`/`fast_store` shortcut the
byte-at-a-time recursion for storages whose value width is 8, and must
agree with the small-step closure bit for bit (differential-tested).

Rule accounting: a `Cost` counter tallies every rule application in the
derivation, including the context rule wrapping each inner step, which is
how derivation sizes are usually quoted. A plain redex count would be far
smaller and is also available from `eval_exp_counted`.
"""

from __future__ import annotations

from .core import (
    BE,
    EL,
    BilError,
    BinOp,
    Cast,
    Concat,
    DivisionByZero,
    Endian,
    Exp,
    Extract,
    Imm,
    Ite,
    Let,
    Load,
    Mem,
    Store,
    Storage,
    UnOp,
    Unknown,
    Value,
    Var,
    Word,
    WordError,
    binop_result_width,
    concat,
    eval_binop,
    eval_cast,
    eval_unop,
    extract,
    is_value,
    succ,
    type_of,
)

DEFAULT_STEP_BUDGET = 1_000_000


class EvalError(BilError):
    """The expression relation has no applicable rule (stuck expression)."""

    def __init__(self, message: str, exp: Exp | None = None):
        super().__init__(message)
        self.exp = exp


class UnboundVariable(EvalError):
    pass


class DivergenceError(EvalError):
    """Step budget exhausted; expressions are strongly normalizing, so this
    signals an implementation bug rather than a program property."""


class FastPathUnavailable(BilError):
    """The storage shape is outside the fast-path fragment (callers fall
    back to the small-step closure)."""


class Cost:
    """Mutable counter of rule applications threaded through evaluation."""

    __slots__ = ("rule_applications",)

    def __init__(self):
        self.rule_applications = 0

    def add(self, n: int):
        self.rule_applications += n


# ---------------------------------------------------------------------------
# Variable store
# ---------------------------------------------------------------------------


class VarStore:
    """Immutable map from variables to values, keyed by variable name."""

    __slots__ = ("_bindings",)

    def __init__(self, bindings=None):
        if bindings is None:
            self._bindings = {}
        elif isinstance(bindings, VarStore):
            self._bindings = bindings._bindings
        elif isinstance(bindings, dict):
            self._bindings = dict(bindings)
        else:
            self._bindings = {var.name: (var, value) for var, value in bindings}

    def bind(self, var: Var, value: Value) -> "VarStore":
        new = dict(self._bindings)
        new[var.name] = (var, value)
        return VarStore(new)

    def lookup(self, var: Var) -> Value:
        try:
            return self._bindings[var.name][1]
        except KeyError:
            raise UnboundVariable(f"variable {var.name!r} is not bound") from None

    def get(self, name: str):
        entry = self._bindings.get(name)
        return entry[1] if entry else None

    def __contains__(self, key) -> bool:
        name = key.name if isinstance(key, Var) else key
        return name in self._bindings

    def items(self):
        return self._bindings.values()

    def names(self):
        return self._bindings.keys()

    def __eq__(self, other):
        if not isinstance(other, VarStore):
            return NotImplemented
        return self._bindings == other._bindings

    def __repr__(self):
        inner = ", ".join(f"{v!r} -> {val!r}" for v, val in self.items())
        return f"VarStore({inner})"


# ---------------------------------------------------------------------------
# Helpers shared by the small-step rules
# ---------------------------------------------------------------------------


def _imm_width(v: Value, context: str) -> int:
    t = type_of(v)
    if not isinstance(t, Imm):
        raise EvalError(f"{context}: operand is not an immediate", v)
    return t.width


def _mem_val_width(v: Value) -> int:
    t = type_of(v)
    if not isinstance(t, Mem):
        raise EvalError("memory operand is not storage-typed", v)
    return t.val_width


def _subst(e: Exp, var: Var, value: Value) -> Exp:
    """Capture-avoiding substitution; inner Lets binding the same name shadow."""
    match e:
        case Var(name, _):
            return value if name == var.name else e
        case Load(m, a, ed, sz):
            return Load(_subst(m, var, value), _subst(a, var, value), ed, sz)
        case Store(m, a, ed, sz, val):
            return Store(
                _subst(m, var, value), _subst(a, var, value), ed, sz,
                _subst(val, var, value),
            )
        case BinOp(l, op, r):
            return BinOp(_subst(l, var, value), op, _subst(r, var, value))
        case UnOp(op, x):
            return UnOp(op, _subst(x, var, value))
        case Cast(kind, w, x):
            return Cast(kind, w, _subst(x, var, value))
        case Let(v2, bound, body):
            bound2 = _subst(bound, var, value)
            body2 = body if v2.name == var.name else _subst(body, var, value)
            return Let(v2, bound2, body2)
        case Ite(c, t, o):
            return Ite(_subst(c, var, value), _subst(t, var, value), _subst(o, var, value))
        case Concat(h, l):
            return Concat(_subst(h, var, value), _subst(l, var, value))
        case Extract(hi, lo, x):
            return Extract(hi, lo, _subst(x, var, value))
        case _:
            return e  # values are closed


# ---------------------------------------------------------------------------
# Small-step relation
# ---------------------------------------------------------------------------


def _step(delta: VarStore, e: Exp) -> tuple[Exp, int]:
    """One reduction of `e`; returns (e', rule applications used)."""
    match e:
        case Var():
            return delta.lookup(e), 1  # var_in

        case Load(mem, addr, ed, sz):
            if not is_value(addr):
                addr2, n = _step(delta, addr)
                return Load(mem, addr2, ed, sz), n + 1  # load_step_addr
            if not is_value(mem):
                mem2, n = _step(delta, mem)
                return Load(mem2, addr, ed, sz), n + 1  # load_step_mem
            if isinstance(mem, Unknown):
                return Unknown(mem.label, Imm(sz)), 1  # load_un_mem
            if isinstance(mem, Word):
                raise EvalError("load from a word, not a memory", e)
            if isinstance(addr, Unknown):
                return Unknown(addr.label, Imm(sz)), 1  # load_un_addr
            if isinstance(addr, Storage):
                raise EvalError("load address is a storage", e)
            sz_mem = _mem_val_width(mem)
            if sz == sz_mem:
                if mem.key == addr:
                    return mem.stored, 1  # load_byte
                return Load(mem.base, addr, ed, sz), 1  # load_byte_from_next
            if sz > sz_mem:
                rest = sz - sz_mem
                if ed is BE:  # load_word_be
                    return (
                        Concat(Load(mem, addr, BE, sz_mem), Load(mem, succ(addr), BE, rest)),
                        1,
                    )
                return (  # load_word_el
                    Concat(Load(mem, succ(addr), EL, rest), Load(mem, addr, EL, sz_mem)),
                    1,
                )
            raise EvalError(f"load of {sz} bits from {sz_mem}-bit cells", e)

        case Store(mem, addr, ed, sz, val):
            if not is_value(addr):
                addr2, n = _step(delta, addr)
                return Store(mem, addr2, ed, sz, val), n + 1  # store_step_addr
            if not is_value(mem):
                mem2, n = _step(delta, mem)
                return Store(mem2, addr, ed, sz, val), n + 1  # store_step_mem
            if not is_value(val):
                val2, n = _step(delta, val)
                return Store(mem, addr, ed, sz, val2), n + 1  # store_step_val
            if isinstance(mem, Word):
                raise EvalError("store into a word, not a memory", e)
            if isinstance(addr, Unknown):
                return Unknown(addr.label, type_of(mem)), 1  # store_un_addr
            if isinstance(addr, Storage):
                raise EvalError("store address is a storage", e)
            sz_mem = _mem_val_width(mem)
            if sz == sz_mem:
                if isinstance(val, Word) and val.width != sz:
                    raise EvalError(f"storing {val.width}-bit word as {sz} bits", e)
                if isinstance(val, Storage):
                    raise EvalError("stored value is a storage", e)
                return Storage(mem, addr, val, sz), 1  # store_val
            if sz > sz_mem:
                rest = sz - sz_mem
                if ed is BE:  # store_word_be
                    inner = Store(mem, addr, BE, sz_mem, Extract(sz - 1, sz - sz_mem, val))
                    return Store(inner, succ(addr), BE, rest, Extract(rest - 1, 0, val)), 1
                # store_word_el
                inner = Store(mem, addr, EL, sz_mem, Extract(sz_mem - 1, 0, val))
                return Store(inner, succ(addr), EL, rest, Extract(sz - 1, sz_mem, val)), 1
            raise EvalError(f"store of {sz} bits into {sz_mem}-bit cells", e)

        case BinOp(lhs, op, rhs):
            if not is_value(lhs):
                lhs2, n = _step(delta, lhs)
                return BinOp(lhs2, op, rhs), n + 1  # bop_lhs
            if not is_value(rhs):
                rhs2, n = _step(delta, rhs)
                return BinOp(lhs, op, rhs2), n + 1  # bop_rhs
            lw = _imm_width(lhs, f"binop {op}")
            rw = _imm_width(rhs, f"binop {op}")
            if lw != rw:
                raise EvalError(f"binop {op} on widths {lw} and {rw}", e)
            if isinstance(lhs, Word) and isinstance(rhs, Word):
                try:
                    return eval_binop(op, lhs, rhs), 1
                except DivisionByZero:
                    return Unknown("div0", Imm(binop_result_width(op, lw))), 1
            label = lhs.label if isinstance(lhs, Unknown) else rhs.label
            return Unknown(label, Imm(binop_result_width(op, lw))), 1

        case UnOp(op, x):
            if not is_value(x):
                x2, n = _step(delta, x)
                return UnOp(op, x2), n + 1
            width = _imm_width(x, f"unop {op}")
            if isinstance(x, Word):
                return eval_unop(op, x), 1
            return Unknown(x.label, Imm(width)), 1

        case Cast(kind, width, x):
            if not is_value(x):
                x2, n = _step(delta, x)
                return Cast(kind, width, x2), n + 1
            if isinstance(x, Word):
                try:
                    return eval_cast(kind, width, x), 1
                except BilError as err:
                    raise EvalError(str(err), e) from None
            _imm_width(x, f"cast {kind}")
            return Unknown(x.label, Imm(width)), 1

        case Let(var, bound, body):
            if not is_value(bound):
                bound2, n = _step(delta, bound)
                return Let(var, bound2, body), n + 1
            return _subst(body, var, bound), 1  # let substitution

        case Ite(cond, then, other):
            if not is_value(cond):
                cond2, n = _step(delta, cond)
                return Ite(cond2, then, other), n + 1
            if isinstance(cond, Word):
                if cond.width != 1:
                    raise EvalError("ite condition is not 1-bit", e)
                return (then if cond.value == 1 else other), 1
            if isinstance(cond, Unknown):
                # Unknown guard: the result is unknown at the branch type.
                if not is_value(then):
                    then2, n = _step(delta, then)
                    return Ite(cond, then2, other), n + 1
                return Unknown(cond.label, type_of(then)), 1
            raise EvalError("ite condition is a storage", e)

        case Concat(high, low):
            if not is_value(high):
                high2, n = _step(delta, high)
                return Concat(high2, low), n + 1
            if not is_value(low):
                low2, n = _step(delta, low)
                return Concat(high, low2), n + 1
            hw = _imm_width(high, "concat")
            lw = _imm_width(low, "concat")
            if isinstance(high, Word) and isinstance(low, Word):
                return concat(high, low), 1
            label = high.label if isinstance(high, Unknown) else low.label
            return Unknown(label, Imm(hw + lw)), 1

        case Extract(hi, lo, x):
            if not is_value(x):
                x2, n = _step(delta, x)
                return Extract(hi, lo, x2), n + 1
            if isinstance(x, Word):
                try:
                    return extract(x, hi, lo), 1
                except BilError as err:
                    raise EvalError(str(err), e) from None
            _imm_width(x, "extract")
            return Unknown(x.label, Imm(hi - lo + 1)), 1

    raise EvalError(f"no rule applies to {e!r}", e)


def step_exp(delta: VarStore, e: Exp, cost: Cost | None = None) -> Exp:
    """Apply exactly one small-step reduction. `e` must not be a value."""
    if is_value(e):
        raise EvalError("cannot step a value", e)
    e2, n = _step(delta, e)
    if cost is not None:
        cost.add(n)
    return e2


def eval_exp_counted(
    delta: VarStore, e: Exp, max_steps: int = DEFAULT_STEP_BUDGET
) -> tuple[Value, int, int]:
    """Evaluate to a value; returns (value, redex steps, rule applications)."""
    steps = 0
    applications = 0
    while not is_value(e):
        if steps >= max_steps:
            raise DivergenceError(f"no normal form within {max_steps} steps", e)
        e, n = _step(delta, e)
        steps += 1
        applications += n
    return e, steps, applications


def eval_exp(
    delta: VarStore, e: Exp, cost: Cost | None = None,
    max_steps: int = DEFAULT_STEP_BUDGET,
) -> Value:
    """Reflexive-transitive closure of step_exp down to a value."""
    value, _, applications = eval_exp_counted(delta, e, max_steps)
    if cost is not None:
        cost.add(applications)
    return value


def possible_steps(delta: VarStore, e: Exp) -> list[Exp]:
    """All single-step successors of `e` under a liberal reduction order.

    Used to check confluence at desk scale: unlike `step_exp`, sub-terms of
    an application may reduce in any order. Rules that need a sub-term to be
    a value still require it.
    """
    if is_value(e):
        return []
    out: list[Exp] = []

    def sub(build, child):
        for child2 in possible_steps(delta, child):
            out.append(build(child2))

    def local():
        try:
            e2, _ = _step(delta, e)
        except EvalError:
            return
        # Only record if the chosen redex is the node itself (all relevant
        # children already values), otherwise sub() covers it.
        out.append(e2)

    match e:
        case Var():
            local()
        case Load(m, a, ed, sz):
            sub(lambda c: Load(m, c, ed, sz), a)
            sub(lambda c: Load(c, a, ed, sz), m)
            if is_value(m) and is_value(a):
                local()
        case Store(m, a, ed, sz, v):
            sub(lambda c: Store(m, c, ed, sz, v), a)
            sub(lambda c: Store(c, a, ed, sz, v), m)
            sub(lambda c: Store(m, a, ed, sz, c), v)
            if is_value(m) and is_value(a) and is_value(v):
                local()
        case BinOp(l, op, r):
            sub(lambda c: BinOp(c, op, r), l)
            sub(lambda c: BinOp(l, op, c), r)
            if is_value(l) and is_value(r):
                local()
        case UnOp(op, x):
            sub(lambda c: UnOp(op, c), x)
            if is_value(x):
                local()
        case Cast(kind, w, x):
            sub(lambda c: Cast(kind, w, c), x)
            if is_value(x):
                local()
        case Let(var, bound, body):
            sub(lambda c: Let(var, c, body), bound)
            if is_value(bound):
                local()
        case Ite(c0, t, o):
            sub(lambda c: Ite(c, t, o), c0)
            if isinstance(c0, Unknown):
                sub(lambda c: Ite(c0, c, o), t)
            if is_value(c0) and (isinstance(c0, Word) or is_value(t)):
                local()
        case Concat(h, l):
            sub(lambda c: Concat(c, l), h)
            sub(lambda c: Concat(h, c), l)
            if is_value(h) and is_value(l):
                local()
        case Extract(hi, lo, x):
            sub(lambda c: Extract(hi, lo, c), x)
            if is_value(x):
                local()
    return out


# ---------------------------------------------------------------------------
# Contiguous storages and the fast load/store paths
# ---------------------------------------------------------------------------


def refl_storage(endian: Endian, base: Value, addr: Word, payload: Word, n: int) -> Value:
    """Contiguous storage of an n-bit payload at `addr` over `base`.

    Little endian lays the low byte down first; big endian the high byte.
    n must be a positive multiple of 8 and equal the payload width.
    """
    if n <= 0 or n % 8 != 0:
        raise WordError(f"storage size {n} is not a positive multiple of 8")
    if payload.width != n:
        raise WordError(f"payload width {payload.width} differs from size {n}")
    cur = base
    w = addr
    rest = payload
    remaining = n
    while remaining > 8:
        if endian is EL:
            byte = extract(rest, 7, 0)
            rest = extract(rest, remaining - 1, 8)
        else:
            byte = extract(rest, remaining - 1, remaining - 8)
            rest = extract(rest, remaining - 9, 0)
        cur = Storage(cur, w, byte, 8)
        w = succ(w)
        remaining -= 8
    return Storage(cur, w, rest, 8)


def _chain_byte(storage: Value, addr: Word) -> Value:
    """Most recent 8-bit mapping for `addr`, or the root unknown's byte."""
    node = storage
    while isinstance(node, Storage):
        if node.val_width != 8:
            raise FastPathUnavailable(
                f"chain cell width {node.val_width} is not 8"
            )
        if node.key == addr:
            return node.stored
        node = node.base
    if isinstance(node, Unknown):
        return Unknown(node.label, Imm(8))
    raise FastPathUnavailable("storage chain is rooted in a word")


def fast_load(storage: Value, addr: Word, endian: Endian, sz: int) -> Value:
    """Load sz bits at `addr`, equivalent to the small-step closure.

    Replicates the closure's unknown propagation exactly: if any byte in
    the span is unknown, the result is unknown and carries the label of
    the byte the small-step concat spine would surface first.
    """
    if sz <= 0 or sz % 8 != 0:
        raise FastPathUnavailable(f"load size {sz} is not a positive multiple of 8")
    t = type_of(storage)
    if not isinstance(t, Mem) or t.val_width != 8:
        raise FastPathUnavailable("fast path needs an 8-bit-celled memory")
    count = sz // 8
    if isinstance(storage, Unknown):
        return Unknown(storage.label, Imm(sz))
    bytes_ = []
    w = addr
    for _ in range(count):
        bytes_.append(_chain_byte(storage, w))
        w = succ(w)
    # The small-step spine reduces high-address bytes first under el and
    # low-address bytes first under be; the first unknown met wins.
    order = range(count - 1, -1, -1) if endian is EL else range(count)
    for i in order:
        if isinstance(bytes_[i], Unknown):
            return Unknown(bytes_[i].label, Imm(sz))
    value = 0
    for i in range(count):
        shift = 8 * i if endian is EL else 8 * (count - 1 - i)
        value |= bytes_[i].value << shift
    return Word(value, sz)


def fast_store(
    storage: Value, addr: Word, endian: Endian, sz: int, payload: Value
) -> Value:
    """Store sz bits at `addr`, equivalent to the small-step closure."""
    if sz <= 0 or sz % 8 != 0:
        raise FastPathUnavailable(f"store size {sz} is not a positive multiple of 8")
    t = type_of(storage)
    if not isinstance(t, Mem) or t.val_width != 8:
        raise FastPathUnavailable("fast path needs an 8-bit-celled memory")
    if isinstance(payload, Word):
        if payload.width != sz:
            raise FastPathUnavailable(
                f"payload width {payload.width} differs from store size {sz}"
            )
        return refl_storage(endian, storage, addr, payload, sz)
    if isinstance(payload, Unknown):
        # Extracts of an unknown payload store unknown bytes with its label.
        cur = storage
        w = addr
        for _ in range(sz // 8):
            cur = Storage(cur, w, Unknown(payload.label, Imm(8)), 8)
            w = succ(w)
        return cur
    raise FastPathUnavailable("stored payload is a storage")


def exp_size(e: Exp) -> int:
    """Node count of an expression (values count as one node)."""
    match e:
        case Load(m, a, _, _):
            return 1 + exp_size(m) + exp_size(a)
        case Store(m, a, _, _, v):
            return 1 + exp_size(m) + exp_size(a) + exp_size(v)
        case BinOp(l, _, r) | Concat(l, r):
            return 1 + exp_size(l) + exp_size(r)
        case UnOp(_, x) | Cast(_, _, x) | Extract(_, _, x):
            return 1 + exp_size(x)
        case Let(_, b, body):
            return 1 + exp_size(b) + exp_size(body)
        case Ite(c, t, o):
            return 1 + exp_size(c) + exp_size(t) + exp_size(o)
        case _:
            return 1
