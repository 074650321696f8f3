"""Request/response models for the analysis service (and the CLI client)."""

from __future__ import annotations

from pydantic import BaseModel, Field


class ParseRequest(BaseModel):
    text: str


class ParseResponse(BaseModel):
    schema_version: int = Field(1, serialization_alias="schema")
    instructions: int
    addresses: list[str]
    symbols: dict[str, str]
    externals: list[str]
    canonical: str


class TypecheckRequest(BaseModel):
    text: str


class InsnVerdict(BaseModel):
    addr: str
    ok: bool
    rule: str | None = None
    detail: str | None = None
    path: list[str] = []


class TypecheckResponse(BaseModel):
    schema_version: int = Field(1, serialization_alias="schema")
    ok: bool
    results: list[InsnVerdict]


class RunRequest(BaseModel):
    text: str
    entry: str | None = None
    pc: str | None = None
    max_steps: int = 10_000
    seed: int = 0
    stubs: str | None = None  # stub configuration text
    registers: dict[str, str] = {}
    ranges: dict[str, str] = {}  # stack/frame/ret/global -> "LO..HI"
    observer: str = "none"  # none | symbols | alloc | realloc
    fast_paths: bool = False


class RunResponse(BaseModel):
    schema_version: int = Field(1, serialization_alias="schema")
    outcome: str
    steps: int
    final_pc: str
    report: dict


class CheckRequest(BaseModel):
    text: str
    property: str  # "double-free" or "av-rule=N"
    mode: str  # "correct" | "incorrect"
    entry: str = "main"
    pre_states: int = 100
    bound: int = 10_000
    seed: int = 0
    stubs: str | None = None
    registers: dict[str, str] = {}
    ranges: dict[str, str] = {}  # stack/frame/ret/global -> "LO..HI"
    symbol_set: list[str] | None = None  # overrides the av rule's set
    fast_paths: bool = False


class CheckResponse(BaseModel):
    schema_version: int = Field(1, serialization_alias="schema")
    verdict: str  # HOLDS | FAILS | WITNESS | NO_WITNESS
    property: str
    mode: str
    report: dict


class SliceRequest(BaseModel):
    text: str
    subroutines: list[str]


class SliceResponse(BaseModel):
    schema_version: int = Field(1, serialization_alias="schema")
    instructions_before: int
    instructions_after: int
    symbols: dict[str, str]
    canonical: str


class ErrorResponse(BaseModel):
    error: str
    offset: int | None = None
