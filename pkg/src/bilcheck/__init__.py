"""bilcheck: run and check lifted BIL programs in BAP's ADT text form.

The package is layered bottom-up: `core` (words, values, syntax),
`exprs` (expression evaluation and fast paths), `typecheck`, `machine`
(statement and instruction stepping), `observers` (allocation and symbol
tracing), `runner` (bounded runs and triple checking), `riscv`
(instruction patterns and macro steps), `adt` (the text frontend), and a
FastAPI `service` the `cli` fronts.
"""

from .core import (
    BE,
    EL,
    BilError,
    BilType,
    Endian,
    Exp,
    Imm,
    Insn,
    Mem,
    Program,
    Stmt,
    Storage,
    Unknown,
    Value,
    Var,
    Word,
)

__version__ = "0.1.0"

__all__ = [
    "BE",
    "EL",
    "BilError",
    "BilType",
    "Endian",
    "Exp",
    "Imm",
    "Insn",
    "Mem",
    "Program",
    "Stmt",
    "Storage",
    "Unknown",
    "Value",
    "Var",
    "Word",
    "__version__",
]
