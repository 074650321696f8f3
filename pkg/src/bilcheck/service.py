"""Analysis service: the pipeline operations behind HTTP endpoints.

The handler functions below are plain request-model to response-model
functions; the FastAPI app wires them to POST endpoints, and the CLI
calls them in-process (or over HTTP against a running service). All
state lives in the request, so instances can be load-balanced freely.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from . import adt, observers, riscv, runner, typecheck
from .core import BilError, Word
from .machine import MEM_VAR
from .models import (
    CheckRequest,
    CheckResponse,
    InsnVerdict,
    ParseRequest,
    ParseResponse,
    RunRequest,
    RunResponse,
    SliceRequest,
    SliceResponse,
    TypecheckRequest,
    TypecheckResponse,
)


class RequestError(BilError):
    """A request that cannot be served (bad input, unknown names)."""


def _hex(word: Word) -> str:
    return f"{word.value:#x}"


def _load(text: str):
    return adt.load_program(text)


def _stubs(req_stubs: str | None):
    return adt.parse_stub_config(req_stubs) if req_stubs else {}


# ---------------------------------------------------------------------------
# Handlers
# ---------------------------------------------------------------------------


def handle_parse(req: ParseRequest) -> ParseResponse:
    program = _load(req.text)
    return ParseResponse(
        instructions=len(program.insns),
        addresses=sorted(_hex(a) for a in program.addr_set),
        symbols={n: _hex(a) for n, a in sorted(program.sym_table.items())},
        externals=sorted(program.external_symbols),
        canonical=adt.render_program(program),
    )


_TYPING_CONTEXT = list(riscv.REGISTERS.values()) + [MEM_VAR]


def handle_typecheck(req: TypecheckRequest) -> TypecheckResponse:
    program = _load(req.text)
    results = []
    all_ok = True
    for addr in sorted(program.insns, key=lambda w: w.value):
        verdict = typecheck.check_seq(_TYPING_CONTEXT, program.insns[addr].code)
        all_ok &= verdict.ok
        results.append(
            InsnVerdict(
                addr=_hex(addr),
                ok=verdict.ok,
                rule=verdict.rule,
                detail=verdict.detail or None,
                path=[str(p) for p in verdict.path],
            )
        )
    return TypecheckResponse(ok=all_ok, results=results)


def _entry_pc(program, entry: str | None, pc: str | None) -> Word:
    if pc is not None:
        return Word(int(pc, 0), adt.ADDR_WIDTH)
    name = entry or "main"
    if name not in program.sym_table:
        raise RequestError(f"entry symbol {name!r} not in the symbol table")
    return program.sym_table[name]


def _observer_for(kind: str, program):
    match kind:
        case "none":
            return observers.NullObserver()
        case "symbols":
            return observers.FindSymbolObserver()
        case "alloc":
            return observers.AllocationObserver(
                observers.standard_binding(program.sym_table))
        case "realloc":
            return observers.ReallocationObserver(
                observers.standard_binding(program.sym_table))
    raise RequestError(f"unknown observer {kind!r}")


def _parse_registers(specs: dict) -> dict:
    return {name: runner.parse_reg_spec(spec) for name, spec in specs.items()}


def _parse_ranges(specs: dict) -> runner.GeneratorRanges:
    defaults = runner.GeneratorRanges()
    fields = {"stack", "frame", "ret", "global"}
    unknown = set(specs) - fields
    if unknown:
        raise RequestError(f"unknown runtime parameter(s) {sorted(unknown)}")
    out = {}
    for name in fields:
        if name in specs:
            lo, _, hi = specs[name].partition("..")
            if not hi:
                raise RequestError(f"range for {name} must be LO..HI")
            out[name] = (int(lo, 0), int(hi, 0))
    return runner.GeneratorRanges(
        stack=out.get("stack", defaults.stack),
        frame=out.get("frame", defaults.frame),
        ret=out.get("ret", defaults.ret),
        global_ptr=out.get("global", defaults.global_ptr),
    )


def handle_run(req: RunRequest) -> RunResponse:
    program = _load(req.text)
    stubs = _stubs(req.stubs)
    entry = _entry_pc(program, req.entry, req.pc)
    observer = _observer_for(req.observer, program)
    pre = runner.generate_pre_states(
        program, entry, 1, req.seed, observer.initial(),
        registers=_parse_registers(req.registers),
        ranges=_parse_ranges(req.ranges), stubs=stubs,
    )[0]
    outcome = runner.run(
        program, observer, pre.config, pre.observer_state, req.max_steps,
        stubs=stubs, fast_paths=req.fast_paths, record_trace=True,
    )
    report = runner.outcome_to_dict(outcome)
    report["pre_state"] = {"params": pre.params, "entry_pc": _hex(entry)}
    return RunResponse(
        outcome=outcome.kind, steps=outcome.steps,
        final_pc=_hex(outcome.config.pc), report=report,
    )


def _parse_property(prop: str) -> tuple[str, int | None]:
    if prop == "double-free":
        return "double-free", None
    if prop.startswith("av-rule="):
        rule = int(prop.split("=", 1)[1])
        if rule not in observers.AV_RULES:
            raise RequestError(f"unknown AV rule {rule}")
        return "av-rule", rule
    raise RequestError(f"unknown property {prop!r} "
                       "(expected 'double-free' or 'av-rule=N')")


def handle_check(req: CheckRequest) -> CheckResponse:
    program = _load(req.text)
    stubs = _stubs(req.stubs)
    entry = _entry_pc(program, req.entry, None)
    kind, rule = _parse_property(req.property)
    if req.mode not in ("correct", "incorrect"):
        raise RequestError(f"unknown mode {req.mode!r}")

    if kind == "double-free":
        has_realloc = "realloc" in program.sym_table
        observer = _observer_for("realloc" if has_realloc else "alloc", program)
        def bad(state, config):
            return observers.double_free_vuln(state)
    else:
        observer = _observer_for("symbols", program)
        symbols = frozenset(req.symbol_set) if req.symbol_set else None
        def bad(state, config):
            return observers.av_violation(rule, state, program.sym_table, symbols)

    pre_states = runner.generate_pre_states(
        program, entry, req.pre_states, req.seed, observer.initial(),
        registers=_parse_registers(req.registers),
        ranges=_parse_ranges(req.ranges), stubs=stubs,
    )
    good = lambda state, config: not bad(state, config)
    if req.mode == "correct":
        spec = runner.TripleSpec(pre=good, post=good,
                                 pre_states=pre_states, bound=req.bound)
        report = runner.check_correct(program, observer, spec, stubs=stubs,
                                      fast_paths=req.fast_paths)
        data = runner.correctness_to_dict(report)
        verdict = data["verdict"]
    else:
        spec = runner.TripleSpec(pre=good, post=bad,
                                 pre_states=pre_states, bound=req.bound)
        report = runner.find_incorrect_witness(program, observer, spec,
                                               stubs=stubs,
                                               fast_paths=req.fast_paths)
        data = runner.incorrectness_to_dict(report)
        verdict = data["verdict"]
        if report.witness is not None and kind == "av-rule":
            rule_set = symbols if symbols is not None else observers.load_symbol_set(rule)
            tau = report.witness.outcome.observer_state
            data["witness"]["matched_symbols"] = sorted(
                name for name in rule_set
                if name in program.sym_table and program.sym_table[name] in tau
            )
    data["property"] = req.property
    data["seed"] = req.seed
    data["bound"] = req.bound
    return CheckResponse(verdict=verdict, property=req.property,
                         mode=req.mode, report=data)


def handle_slice(req: SliceRequest) -> SliceResponse:
    program = _load(req.text)
    sliced = adt.slice_program(program, req.subroutines)
    return SliceResponse(
        instructions_before=len(program.insns),
        instructions_after=len(sliced.insns),
        symbols={n: _hex(a) for n, a in sorted(sliced.sym_table.items())},
        canonical=adt.render_program(sliced),
    )


# ---------------------------------------------------------------------------
# FastAPI application
# ---------------------------------------------------------------------------

app = FastAPI(
    title="bilcheck",
    description="Run and check lifted BIL programs (BAP ADT form).",
)


def _wrap(handler, req):
    try:
        return handler(req)
    except adt.AdtError as err:
        raise HTTPException(status_code=422, detail={
            "error": str(err), "offset": err.offset}) from err
    except BilError as err:
        raise HTTPException(status_code=400, detail={"error": str(err)}) from err


@app.get("/health")
def health() -> dict:
    return {"status": "ok"}


@app.post("/parse", response_model=ParseResponse)
def parse_endpoint(req: ParseRequest) -> ParseResponse:
    return _wrap(handle_parse, req)


@app.post("/typecheck", response_model=TypecheckResponse)
def typecheck_endpoint(req: TypecheckRequest) -> TypecheckResponse:
    return _wrap(handle_typecheck, req)


@app.post("/run", response_model=RunResponse)
def run_endpoint(req: RunRequest) -> RunResponse:
    return _wrap(handle_run, req)


@app.post("/check", response_model=CheckResponse)
def check_endpoint(req: CheckRequest) -> CheckResponse:
    return _wrap(handle_check, req)


@app.post("/slice", response_model=SliceResponse)
def slice_endpoint(req: SliceRequest) -> SliceResponse:
    return _wrap(handle_slice, req)
