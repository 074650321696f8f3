"""Typing judgments for types, contexts, expressions, statements and sequences.

Verdicts are values, not exceptions: a failing check names the violated
rule and carries the path to the offending sub-term, so frontends can
report positions. The empty sequence is well-typed under any well-formed
context (the sequencing rules need this to bottom out).
"""

from __future__ import annotations

from dataclasses import dataclass

from .core import (
    ARITH_OPS,
    BINOPS,
    CASTS,
    UNOPS,
    BilType,
    BinOp,
    Cast,
    Concat,
    CpuExn,
    Exp,
    Extract,
    IfThen,
    IfThenElse,
    Imm,
    Ite,
    Jmp,
    Let,
    Load,
    Mem,
    Move,
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
    type_of,
)
from .exprs import VarStore


@dataclass(frozen=True)
class Verdict:
    """Outcome of a well-formedness or typing check."""

    ok: bool
    rule: str | None = None
    detail: str = ""
    path: tuple = ()

    def __bool__(self) -> bool:
        return self.ok

    def at(self, step) -> "Verdict":
        if self.ok:
            return self
        return Verdict(False, self.rule, self.detail, (step,) + self.path)


OK = Verdict(True)


def fail(rule: str, detail: str, path: tuple = ()) -> Verdict:
    return Verdict(False, rule, detail, path)


@dataclass(frozen=True)
class Inferred:
    """Either an inferred type or a failing verdict."""

    type: BilType | None
    verdict: Verdict

    @property
    def ok(self) -> bool:
        return self.verdict.ok


def _typed(t: BilType) -> Inferred:
    return Inferred(t, OK)


def _bad(rule: str, detail: str, path: tuple = ()) -> Inferred:
    return Inferred(None, fail(rule, detail, path))


# ---------------------------------------------------------------------------
# Types and contexts
# ---------------------------------------------------------------------------


def check_type_wf(t: BilType) -> Verdict:
    """Well-formedness of a type: all widths strictly positive."""
    match t:
        case Imm(width):
            if width > 0:
                return OK
            return fail("twf_imm", f"immediate width {width} is not positive")
        case Mem(aw, vw):
            if aw > 0 and vw > 0:
                return OK
            return fail("twf_mem", f"memory widths {aw}/{vw} must be positive")
    return fail("twf", f"not a type: {t!r}")


def check_context_wf(gamma: list[Var]) -> Verdict:
    """Contexts are well-formed when names are distinct and types are."""
    seen = set()
    for var in gamma:
        if var.name in seen:
            return fail("tg_cons", f"duplicate variable {var.name!r}")
        seen.add(var.name)
        v = check_type_wf(var.type)
        if not v:
            return fail(v.rule, f"variable {var.name!r}: {v.detail}")
    return OK


def _lookup(gamma: list[Var], name: str) -> Var | None:
    # Innermost binding wins, matching Let extension below.
    for var in reversed(gamma):
        if var.name == name:
            return var
    return None


def conforms(delta: VarStore, gamma: list[Var]) -> Verdict:
    """A store conforms to a context when every binding's value has the
    declared type. The semantics rules assume this implicitly."""
    for var, value in delta.items():
        declared = _lookup(gamma, var.name)
        if declared is None:
            return fail("conform", f"store binds {var.name!r} outside the context")
        if declared.type != var.type:
            return fail(
                "conform",
                f"{var.name!r} bound at {var.type!r}, declared {declared.type!r}",
            )
        if type_of(value) != declared.type:
            return fail(
                "conform",
                f"{var.name!r} holds {type_of(value)!r}, declared {declared.type!r}",
            )
    return OK


# ---------------------------------------------------------------------------
# Expressions
# ---------------------------------------------------------------------------


def _infer_value(v) -> Inferred:
    match v:
        case Word():
            return _typed(type_of(v))
        case Unknown(_, t):
            wf = check_type_wf(t)
            return _typed(t) if wf else Inferred(None, wf)
        case Storage(base, key, stored, vw):
            bt = _infer_value(base)
            if not bt.ok:
                return Inferred(None, bt.verdict.at("base"))
            if not isinstance(bt.type, Mem):
                return _bad("t_storage", "chain base is not memory-typed", ("base",))
            if bt.type != Mem(key.width, vw):
                return _bad(
                    "t_storage",
                    f"mapping [{key.width}<-{vw}] disagrees with base {bt.type!r}",
                )
            st = _infer_value(stored)
            if not st.ok:
                return Inferred(None, st.verdict.at("stored"))
            if st.type != Imm(vw):
                return _bad("t_storage", f"stored value is {st.type!r}, expected Imm({vw})")
            return _typed(Mem(key.width, vw))
    return _bad("t_value", f"not a value: {v!r}")


def infer_exp_type(gamma: list[Var], e: Exp) -> Inferred:
    """Infer the unique type of an expression, or a failure with a path."""
    match e:
        case Word() | Unknown() | Storage():
            return _infer_value(e)

        case Var(name, t):
            declared = _lookup(gamma, name)
            if declared is None:
                return _bad("t_var", f"variable {name!r} not in context")
            if declared.type != t:
                return _bad(
                    "t_var",
                    f"variable {name!r} used at {t!r}, declared {declared.type!r}",
                )
            wf = check_type_wf(t)
            return _typed(t) if wf else Inferred(None, wf)

        case Load(mem, addr, _, sz):
            mt = infer_exp_type(gamma, mem)
            if not mt.ok:
                return Inferred(None, mt.verdict.at("mem"))
            if not isinstance(mt.type, Mem):
                return _bad("t_load", f"loading from {mt.type!r}", ("mem",))
            at = infer_exp_type(gamma, addr)
            if not at.ok:
                return Inferred(None, at.verdict.at("addr"))
            if at.type != Imm(mt.type.addr_width):
                return _bad(
                    "t_load",
                    f"address is {at.type!r}, memory wants Imm({mt.type.addr_width})",
                    ("addr",),
                )
            if sz <= 0 or sz % mt.type.val_width != 0:
                return _bad(
                    "t_load",
                    f"size {sz} is not a positive multiple of cell width "
                    f"{mt.type.val_width}",
                )
            return _typed(Imm(sz))

        case Store(mem, addr, _, sz, value):
            mt = infer_exp_type(gamma, mem)
            if not mt.ok:
                return Inferred(None, mt.verdict.at("mem"))
            if not isinstance(mt.type, Mem):
                return _bad("t_store", f"storing into {mt.type!r}", ("mem",))
            at = infer_exp_type(gamma, addr)
            if not at.ok:
                return Inferred(None, at.verdict.at("addr"))
            if at.type != Imm(mt.type.addr_width):
                return _bad(
                    "t_store",
                    f"address is {at.type!r}, memory wants Imm({mt.type.addr_width})",
                    ("addr",),
                )
            vt = infer_exp_type(gamma, value)
            if not vt.ok:
                return Inferred(None, vt.verdict.at("value"))
            if vt.type != Imm(sz):
                return _bad("t_store", f"stored value is {vt.type!r}, expected Imm({sz})")
            if sz <= 0 or sz % mt.type.val_width != 0:
                return _bad(
                    "t_store",
                    f"size {sz} is not a positive multiple of cell width "
                    f"{mt.type.val_width}",
                )
            return _typed(mt.type)

        case BinOp(lhs, op, rhs):
            if op not in BINOPS:
                return _bad("t_binop", f"unknown operator {op!r}")
            lt = infer_exp_type(gamma, lhs)
            if not lt.ok:
                return Inferred(None, lt.verdict.at("lhs"))
            rt = infer_exp_type(gamma, rhs)
            if not rt.ok:
                return Inferred(None, rt.verdict.at("rhs"))
            if not isinstance(lt.type, Imm) or not isinstance(rt.type, Imm):
                return _bad("t_binop", f"{op} over {lt.type!r} and {rt.type!r}")
            if lt.type != rt.type:
                return _bad(
                    "t_binop",
                    f"width mismatch: {lt.type!r} {op} {rt.type!r}",
                )
            return _typed(lt.type if op in ARITH_OPS else Imm(1))

        case UnOp(op, x):
            if op not in UNOPS:
                return _bad("t_unop", f"unknown operator {op!r}")
            xt = infer_exp_type(gamma, x)
            if not xt.ok:
                return Inferred(None, xt.verdict.at("exp"))
            if not isinstance(xt.type, Imm):
                return _bad("t_unop", f"{op} over {xt.type!r}")
            return _typed(xt.type)

        case Cast(kind, width, x):
            if kind not in CASTS:
                return _bad("t_cast", f"unknown cast {kind!r}")
            if width <= 0:
                return _bad("t_cast", f"cast to non-positive width {width}")
            xt = infer_exp_type(gamma, x)
            if not xt.ok:
                return Inferred(None, xt.verdict.at("exp"))
            if not isinstance(xt.type, Imm):
                return _bad("t_cast", f"cast of {xt.type!r}")
            if kind in ("low", "high") and width > xt.type.width:
                return _bad("t_cast", f"{kind} cast widens {xt.type.width} to {width}")
            if kind in ("signed", "unsigned") and width < xt.type.width:
                return _bad("t_cast", f"{kind} cast narrows {xt.type.width} to {width}")
            return _typed(Imm(width))

        case Let(var, bound, body):
            wf = check_type_wf(var.type)
            if not wf:
                return Inferred(None, wf.at("let"))
            bt = infer_exp_type(gamma, bound)
            if not bt.ok:
                return Inferred(None, bt.verdict.at("bound"))
            if bt.type != var.type:
                return _bad(
                    "t_let",
                    f"{var.name!r} declared {var.type!r}, bound to {bt.type!r}",
                )
            return infer_exp_type(gamma + [var], body)

        case Ite(cond, then, other):
            ct = infer_exp_type(gamma, cond)
            if not ct.ok:
                return Inferred(None, ct.verdict.at("cond"))
            if ct.type != Imm(1):
                return _bad("t_ite", f"condition is {ct.type!r}, expected Imm(1)")
            tt = infer_exp_type(gamma, then)
            if not tt.ok:
                return Inferred(None, tt.verdict.at("then"))
            ot = infer_exp_type(gamma, other)
            if not ot.ok:
                return Inferred(None, ot.verdict.at("else"))
            if tt.type != ot.type:
                return _bad("t_ite", f"branch types differ: {tt.type!r} vs {ot.type!r}")
            return _typed(tt.type)

        case Concat(high, low):
            ht = infer_exp_type(gamma, high)
            if not ht.ok:
                return Inferred(None, ht.verdict.at("high"))
            lt = infer_exp_type(gamma, low)
            if not lt.ok:
                return Inferred(None, lt.verdict.at("low"))
            if not isinstance(ht.type, Imm) or not isinstance(lt.type, Imm):
                return _bad("t_concat", f"concat of {ht.type!r} and {lt.type!r}")
            return _typed(Imm(ht.type.width + lt.type.width))

        case Extract(hi, lo, x):
            xt = infer_exp_type(gamma, x)
            if not xt.ok:
                return Inferred(None, xt.verdict.at("exp"))
            if not isinstance(xt.type, Imm):
                return _bad("t_extract", f"extract from {xt.type!r}")
            if lo < 0 or hi < lo:
                return _bad("t_extract", f"bad slice [{hi}:{lo}]")
            if hi >= xt.type.width:
                return _bad(
                    "t_extract", f"slice [{hi}:{lo}] exceeds width {xt.type.width}"
                )
            return _typed(Imm(hi - lo + 1))

    return _bad("t_exp", f"not an expression: {e!r}")


# ---------------------------------------------------------------------------
# Statements and sequences
# ---------------------------------------------------------------------------


def check_stmt(gamma: list[Var], s: Stmt) -> Verdict:
    match s:
        case Move(var, exp):
            wf = check_type_wf(var.type)
            if not wf:
                return wf.at("move")
            it = infer_exp_type(gamma, exp)
            if not it.ok:
                return it.verdict.at("move")
            if it.type != var.type:
                return fail(
                    "t_move",
                    f"assigning {it.type!r} to {var.name!r} of type {var.type!r}",
                )
            return OK
        case Jmp(target):
            it = infer_exp_type(gamma, target)
            if not it.ok:
                return it.verdict.at("jmp")
            if not isinstance(it.type, Imm):
                return fail("t_jmp", f"jump target is {it.type!r}")
            return OK
        case CpuExn() | Special():
            return OK
        case While(guard, body):
            return _check_guarded(gamma, guard, body, None, "while")
        case IfThen(guard, body):
            return _check_guarded(gamma, guard, body, None, "if")
        case IfThenElse(guard, then, other):
            return _check_guarded(gamma, guard, then, other, "if")
    return fail("t_stmt", f"not a statement: {s!r}")


def _check_guarded(gamma, guard, then, other, what) -> Verdict:
    it = infer_exp_type(gamma, guard)
    if not it.ok:
        return it.verdict.at(f"{what} guard")
    if it.type != Imm(1):
        return fail(f"t_{what}", f"guard is {it.type!r}, expected Imm(1)")
    v = check_seq(gamma, then)
    if not v:
        return v.at(f"{what} body")
    if other is not None:
        v = check_seq(gamma, other)
        if not v:
            return v.at(f"{what} else")
    return OK


def check_seq(gamma: list[Var], seq: Seq) -> Verdict:
    """Sequences check statement-wise; the empty sequence is well-typed."""
    wf = check_context_wf(gamma)
    if not wf:
        return wf
    for i, s in enumerate(seq):
        v = check_stmt(gamma, s)
        if not v:
            return v.at(i)
    return OK
