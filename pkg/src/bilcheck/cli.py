"""Command-line client for the analysis service.

Every subcommand builds the same request model the HTTP endpoint takes
and calls the handler in-process, so a single invocation needs no
server; pass --server to send the request to a running instance
instead. Exit codes: 0 success or property holds, 1 witness found or
property fails, 2 usage or parse errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .adt import AdtError
from .core import BilError
from .models import (
    CheckRequest,
    ParseRequest,
    RunRequest,
    SliceRequest,
    TypecheckRequest,
)

STUB_CONFIG_ENV = "BILCHECK_STUB_CONFIG"


def _read_input(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def _read_stubs(args) -> str | None:
    path = args.stub_config or os.environ.get(STUB_CONFIG_ENV)
    if not path:
        return None
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def _keyed_specs(specs: list[str], flag: str) -> dict:
    out = {}
    for spec in specs:
        if "=" not in spec:
            raise AdtError(f"bad {flag} {spec!r}, expected NAME=VALUES")
        name, values = spec.split("=", 1)
        out[name.strip()] = values.strip()
    return out


def _emit(args, payload: dict, text_lines: list[str]):
    if args.format == "json":
        print(json.dumps(payload, sort_keys=True, indent=2))
    else:
        for line in text_lines:
            print(line)


def _dispatch(args, endpoint: str, request):
    """In-process call, or POST to --server when given."""
    if args.server:
        import httpx

        response = httpx.post(
            args.server.rstrip("/") + endpoint,
            json=request.model_dump(),
            timeout=300.0,
        )
        if response.status_code >= 400:
            detail = response.json().get("detail", {})
            raise AdtError(detail.get("error", response.text),
                           detail.get("offset"))
        return response.json()
    from . import service

    handler = {
        "/parse": service.handle_parse,
        "/typecheck": service.handle_typecheck,
        "/run": service.handle_run,
        "/check": service.handle_check,
        "/slice": service.handle_slice,
    }[endpoint]
    return handler(request).model_dump(by_alias=True)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_parse(args) -> int:
    req = ParseRequest(text=_read_input(args.file))
    data = _dispatch(args, "/parse", req)
    lines = [
        f"instructions: {data['instructions']}",
        "addresses: " + " ".join(data["addresses"]),
        "symbols: " + " ".join(f"{n}={a}" for n, a in data["symbols"].items()),
    ]
    if data["externals"]:
        lines.append("externals: " + " ".join(data["externals"]))
    lines.append(data["canonical"].rstrip("\n"))
    _emit(args, data, lines)
    return 0


def cmd_typecheck(args) -> int:
    req = TypecheckRequest(text=_read_input(args.file))
    data = _dispatch(args, "/typecheck", req)
    lines = []
    for result in data["results"]:
        if result["ok"]:
            lines.append(f"{result['addr']}: ok")
        else:
            where = "/".join(result["path"]) or "-"
            lines.append(
                f"{result['addr']}: fail({result['rule']}) at {where}: "
                f"{result['detail']}"
            )
    lines.append("all ok" if data["ok"] else "type errors found")
    _emit(args, data, lines)
    return 0 if data["ok"] else 1


def cmd_run(args) -> int:
    req = RunRequest(
        text=_read_input(args.file),
        entry=args.entry,
        pc=args.pc,
        max_steps=args.max_steps,
        seed=args.seed,
        stubs=_read_stubs(args),
        registers=_keyed_specs(args.reg, "--reg"),
        ranges=_keyed_specs(args.range, "--range"),
        observer=args.observer,
        fast_paths=args.fast_paths,
    )
    data = _dispatch(args, "/run", req)
    lines = [
        f"outcome: {data['outcome']}",
        f"steps: {data['steps']}",
        f"final pc: {data['final_pc']}",
    ]
    report = data["report"]
    if report.get("reason"):
        lines.append(f"reason: {report['reason']}")
    if report.get("observer") is not None:
        lines.append(f"observer: {report['observer']}")
    if report.get("events"):
        lines.append(f"events: {report['events']}")
    _emit(args, data, lines)
    return 0 if data["outcome"] == "terminated" else 1


def cmd_check(args) -> int:
    symbol_set = None
    if args.symbol_set:
        with open(args.symbol_set, encoding="utf-8") as fh:
            symbol_set = [
                line.strip() for line in fh
                if line.strip() and not line.strip().startswith("#")
            ]
    req = CheckRequest(
        text=_read_input(args.file),
        property=args.property,
        mode=args.mode,
        entry=args.entry,
        pre_states=args.pre_states,
        bound=args.max_steps,
        seed=args.seed,
        stubs=_read_stubs(args),
        registers=_keyed_specs(args.reg, "--reg"),
        ranges=_keyed_specs(args.range, "--range"),
        symbol_set=symbol_set,
        fast_paths=args.fast_paths,
    )
    data = _dispatch(args, "/check", req)
    report = data["report"]
    lines = [
        f"property: {data['property']}  mode: {data['mode']}",
        f"verdict: {data['verdict']} ({report['note']})",
        f"pre-states: {report['stats']['pre_states']} "
        f"checked: {report['stats']['checked']} "
        f"stuck: {report['stats']['stuck']} "
        f"budget-exceeded: {report['stats']['budget_exceeded']}",
    ]
    hit = report.get("witness") or report.get("counterexample")
    if hit:
        lines.append(f"witness pre-state #{hit['pre_index']}: {hit['pre_state']['params']}")
        lines.append(f"observer: {hit['run']['observer']}")
        if hit.get("matched_symbols"):
            lines.append("forbidden symbols reached: " + " ".join(hit["matched_symbols"]))
        lines.append(f"final pc: {hit['run']['final_pc']} after {hit['run']['steps']} steps")
    _emit(args, data, lines)
    return 0 if data["verdict"] in ("HOLDS", "NO_WITNESS") else 1


def cmd_slice(args) -> int:
    subroutines = [s.strip() for s in args.subroutines.split(",") if s.strip()]
    req = SliceRequest(text=_read_input(args.file), subroutines=subroutines)
    data = _dispatch(args, "/slice", req)
    lines = [
        f"instructions: {data['instructions_before']} -> {data['instructions_after']}",
        "symbols: " + " ".join(f"{n}={a}" for n, a in data["symbols"].items()),
        data["canonical"].rstrip("\n"),
    ]
    _emit(args, data, lines)
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import app

    uvicorn.run(app, host=args.host, port=args.port)
    return 0


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _common(sub):
    sub.add_argument("--format", choices=("text", "json"), default="text")
    sub.add_argument("--server", help="base URL of a running service; "
                     "otherwise handlers run in-process")


def _run_flags(sub):
    sub.add_argument("--stub-config", help="stub configuration file "
                     f"(default from ${STUB_CONFIG_ENV})")
    sub.add_argument("--max-steps", type=int, default=10_000)
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--reg", action="append", default=[],
                     metavar="NAME=SPEC",
                     help="initial register values: a number, a comma list, "
                     "or LO..HI to sample (repeatable)")
    sub.add_argument("--range", action="append", default=[],
                     metavar="PARAM=LO..HI",
                     help="runtime-parameter range for stack, frame, ret or "
                     "global (repeatable)")
    sub.add_argument("--fast-paths", action="store_true",
                     help="use the pattern-matched macro steps")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bilcheck",
        description="Parse, run and check lifted BIL programs in ADT form.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("parse", help="parse a dump and print its canonical form")
    p.add_argument("file", help="dump path, or - for stdin")
    _common(p)
    p.set_defaults(func=cmd_parse)

    p = subs.add_parser("typecheck", help="typing verdict per instruction")
    p.add_argument("file")
    _common(p)
    p.set_defaults(func=cmd_typecheck)

    p = subs.add_parser("run", help="execute from an entry symbol")
    p.add_argument("file")
    p.add_argument("--entry", help="entry symbol (default main)")
    p.add_argument("--pc", help="entry address, overriding --entry")
    p.add_argument("--observer", choices=("none", "symbols", "alloc", "realloc"),
                   default="none")
    _run_flags(p)
    _common(p)
    p.set_defaults(func=cmd_run)

    p = subs.add_parser("check", help="check a property over generated pre-states")
    p.add_argument("file")
    p.add_argument("--property", required=True,
                   help="double-free or av-rule=N (N in 17,19,20,21,23,24,25)")
    p.add_argument("--mode", choices=("correct", "incorrect"), required=True)
    p.add_argument("--entry", default="main")
    p.add_argument("--pre-states", type=int, default=100)
    p.add_argument("--symbol-set", help="file overriding the AV rule's "
                   "forbidden symbols (one per line)")
    _run_flags(p)
    _common(p)
    p.set_defaults(func=cmd_check)

    p = subs.add_parser("slice", help="restrict a dump to named subroutines")
    p.add_argument("file")
    p.add_argument("--subroutines", required=True,
                   help="comma-separated root symbols")
    _common(p)
    p.set_defaults(func=cmd_slice)

    p = subs.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except AdtError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except (BilError, OSError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
