"""Bounded program execution composed with observers, and triple checking.

A run steps the machine while the program counter stays inside the
program's address set (or on a stubbed symbol), folding an observer state
along in lockstep; leaving the set terminates the run. Stuck machine
states and exhausted budgets are outcome values, never exceptions.

Triple verdicts are bounded: correctness is checked over an explicit set
of pre-states within a step budget (stuck and out-of-budget runs count
vacuously, but are surfaced in the report so they cannot masquerade as
verification), and incorrectness witnesses are searched for the same way.
The generic agreement/denial and decomposition rules are validated
separately by brute force over random finite transition systems.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .core import Imm, Program, Unknown, Word
from .exprs import VarStore
from .machine import MachineConfig, MEM_VAR, StubConfig, StuckError, resolve_stub_addrs, step_insn
from .observers import Alloc, Free, NullObserver, ObserverError
from . import riscv

REPORT_SCHEMA = 1


# ---------------------------------------------------------------------------
# Run outcomes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Terminated:
    config: MachineConfig
    observer_state: object
    steps: int
    events: tuple = ()
    pc_trace: tuple = ()

    kind = "terminated"


@dataclass(frozen=True)
class Stuck:
    reason: str
    config: MachineConfig
    observer_state: object
    steps: int
    events: tuple = ()
    pc_trace: tuple = ()

    kind = "stuck"


@dataclass(frozen=True)
class BudgetExceeded:
    config: MachineConfig
    observer_state: object
    steps: int
    events: tuple = ()
    pc_trace: tuple = ()

    kind = "budget_exceeded"


RunOutcome = Terminated | Stuck | BudgetExceeded


def run(
    program: Program,
    observer,
    config0: MachineConfig,
    sigma0,
    bound: int,
    stubs: StubConfig | None = None,
    fast_paths: bool = False,
    record_trace: bool = False,
) -> RunOutcome:
    """Execute from config0 until the pc leaves the program, observing."""
    if observer is None:
        observer = NullObserver()
    stub_addrs = resolve_stub_addrs(program, stubs)
    executable = program.addr_set | frozenset(stub_addrs)
    config, sigma = config0, sigma0
    events: list = []
    trace: list = []
    steps = 0
    while True:
        if config.pc not in executable:
            return Terminated(config, sigma, steps, tuple(events), tuple(trace))
        if steps >= bound:
            return BudgetExceeded(config, sigma, steps, tuple(events), tuple(trace))
        if fast_paths and config.pc in program.insns:
            window = riscv.macro_step(program, config)
            if window is not None and steps + len(window) - 1 <= bound:
                try:
                    for intermediate in window[:-1]:
                        if record_trace:
                            trace.append(intermediate.pc)
                        sigma = observer.step(intermediate, sigma)
                except ObserverError as err:
                    return Stuck(str(err), config, sigma, steps, tuple(events), tuple(trace))
                config = window[-1]
                steps += len(window) - 1
                continue
        if record_trace:
            trace.append(config.pc)
        try:
            fresh = observer.fresh_ptr(config, sigma)
            next_sigma = observer.step(config, sigma)
            config = step_insn(program, config, stubs, fresh_ptr=fresh, events=events)
            sigma = next_sigma
        except (StuckError, ObserverError) as err:
            return Stuck(str(err), config, sigma, steps, tuple(events), tuple(trace))
        steps += 1


# ---------------------------------------------------------------------------
# Triple specifications and bounded checking
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PreState:
    """One concrete starting point plus the drawn parameters behind it."""

    config: MachineConfig
    observer_state: object
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class TripleSpec:
    """Pre/post predicates over (observer state, machine config), a set of
    concrete pre-states, and a step bound."""

    pre: Callable
    post: Callable
    pre_states: Sequence[PreState]
    bound: int

    def __post_init__(self):
        if self.bound < 1:
            raise ValueError("step bound must be at least 1")
        if not self.pre_states:
            raise ValueError("at least one pre-state is required")


@dataclass(frozen=True)
class CheckStats:
    pre_states: int
    checked: int
    vacuous_pre: int
    stuck: int
    budget_exceeded: int
    terminated: int


@dataclass(frozen=True)
class Counterexample:
    pre_index: int
    pre_state: PreState
    outcome: Terminated


@dataclass(frozen=True)
class CorrectnessReport:
    holds: bool
    counterexample: Counterexample | None
    stats: CheckStats


@dataclass(frozen=True)
class Witness:
    pre_index: int
    pre_state: PreState
    outcome: Terminated  # carries tau and the replayable trace


@dataclass(frozen=True)
class IncorrectnessReport:
    witness: Witness | None
    stats: CheckStats


def _scan(program, observer, spec, stubs, fast_paths, stop):
    """Shared pre-state sweep; `stop(outcome)` may end the scan early."""
    vacuous = stuck = budget = terminated = checked = 0
    hit = None
    for index, pre in enumerate(spec.pre_states):
        if not spec.pre(pre.observer_state, pre.config):
            vacuous += 1
            continue
        checked += 1
        outcome = run(
            program, observer, pre.config, pre.observer_state, spec.bound,
            stubs=stubs, fast_paths=fast_paths, record_trace=True,
        )
        if isinstance(outcome, Stuck):
            stuck += 1
            continue
        if isinstance(outcome, BudgetExceeded):
            budget += 1
            continue
        terminated += 1
        if stop(outcome):
            hit = (index, pre, outcome)
            break
    stats = CheckStats(len(spec.pre_states), checked, vacuous, stuck, budget, terminated)
    return hit, stats


def check_correct(
    program: Program,
    observer,
    spec: TripleSpec,
    stubs: StubConfig | None = None,
    fast_paths: bool = False,
) -> CorrectnessReport:
    """Partial correctness over the supplied pre-states, within the bound.

    Every terminating run from a pre-state satisfying `pre` must satisfy
    `post`; stuck and out-of-budget runs are vacuously correct but counted.
    """
    hit, stats = _scan(
        program, observer, spec, stubs, fast_paths,
        stop=lambda out: not spec.post(out.observer_state, out.config),
    )
    if hit is None:
        return CorrectnessReport(True, None, stats)
    index, pre, outcome = hit
    return CorrectnessReport(False, Counterexample(index, pre, outcome), stats)


def find_incorrect_witness(
    program: Program,
    observer,
    spec: TripleSpec,
    stubs: StubConfig | None = None,
    fast_paths: bool = False,
) -> IncorrectnessReport:
    """Search the pre-states for a terminating run whose final state
    satisfies `post`. A witness proves the incorrectness triple and the
    non-triviality of the post in one stroke; absence of one within the
    budget proves nothing."""
    hit, stats = _scan(
        program, observer, spec, stubs, fast_paths,
        stop=lambda out: spec.post(out.observer_state, out.config),
    )
    if hit is None:
        return IncorrectnessReport(None, stats)
    index, pre, outcome = hit
    return IncorrectnessReport(Witness(index, pre, outcome), stats)


# ---------------------------------------------------------------------------
# Pre-state generation (seed-driven, deterministic)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GeneratorRanges:
    """Ranges the runtime parameters are drawn from (inclusive bounds)."""

    stack: tuple = (0x8000, 0xF000)
    frame: tuple = (0x8000, 0xF000)
    ret: tuple = (0x100000, 0x10F000)
    global_ptr: tuple = (0x18000, 0x18F00)


def parse_reg_spec(spec: str) -> list[int] | tuple[int, int]:
    """Register value spec: 'lo..hi' samples a range, 'a,b,c' cycles a list,
    a single integer pins the value. Integers may be hex (0x...)."""
    spec = spec.strip()
    if ".." in spec:
        lo, hi = spec.split("..", 1)
        return (int(lo, 0), int(hi, 0))
    if "," in spec:
        return [int(part, 0) for part in spec.split(",") if part.strip()]
    return [int(spec, 0)]


def generate_pre_states(
    program: Program,
    entry: Word,
    count: int,
    seed: int,
    observer_initial,
    registers: dict | None = None,
    ranges: GeneratorRanges = GeneratorRanges(),
    stubs: StubConfig | None = None,
    mem_var=MEM_VAR,
) -> list[PreState]:
    """Deterministic pre-states: stack/frame/return/global parameters drawn
    from the configured ranges (the return address is forced outside the
    executable addresses so runs can terminate), every register bound, and
    caller-chosen registers drawn from their specs."""
    rng = random.Random(seed)
    executable = {a.value for a in program.addr_set}
    executable |= {a.value for a in resolve_stub_addrs(program, stubs)}
    registers = registers or {}
    out = []
    for i in range(count):
        params = {
            "stack": _draw_aligned(rng, ranges.stack, 16),
            "frame": _draw_aligned(rng, ranges.frame, 16),
            "global": _draw_aligned(rng, ranges.global_ptr, 8),
        }
        ret = _draw_aligned(rng, ranges.ret, 2)
        while ret in executable:
            ret = _draw_aligned(rng, ranges.ret, 2)
        params["ret"] = ret

        store = VarStore()
        for name, var in riscv.REGISTERS.items():
            store = store.bind(var, Unknown(f"init_{name}", Imm(64)))
        store = store.bind(riscv.REGISTERS["X0"], Word(0, 64))
        store = store.bind(riscv.SP, Word(params["stack"], 64))
        store = store.bind(riscv.S0, Word(params["frame"], 64))
        store = store.bind(riscv.RA, Word(ret, 64))
        store = store.bind(riscv.REGISTERS["X3"], Word(params["global"], 64))
        store = store.bind(mem_var, Unknown("mem0", mem_var.type))

        for name, spec in registers.items():
            reg = riscv.register(name)
            if isinstance(spec, tuple):
                value = rng.randint(spec[0], spec[1])
            else:
                value = spec[i % len(spec)]
            params[reg.name] = value
            store = store.bind(reg, Word(value % (1 << 64), 64))

        config = MachineConfig(store, entry, mem_var)
        out.append(PreState(config, observer_initial, dict(sorted(params.items()))))
    return out


def _draw_aligned(rng: random.Random, bounds: tuple, align: int) -> int:
    value = rng.randint(bounds[0], bounds[1])
    return value - value % align


# ---------------------------------------------------------------------------
# Logic-rule validation over finite transition systems
# ---------------------------------------------------------------------------

LOGIC_RULES = (
    "agreement",
    "denial",
    "post_conj_corr",
    "pre_disj_corr",
    "strengthen_weaken_corr",
    "post_disj_incorr",
    "pre_disj_incorr",
    "strengthen_weaken_incorr",
)


@dataclass(frozen=True)
class FiniteSystem:
    """A big-step relation over states 0..states-1, as (pre, post) pairs."""

    states: int
    relation: tuple

    def images(self) -> list[int]:
        out = [0] * self.states
        for s, t in self.relation:
            out[s] |= 1 << t
        return out

    def preimages(self) -> list[int]:
        out = [0] * self.states
        for s, t in self.relation:
            out[t] |= 1 << s
        return out


def random_system(rng: random.Random, max_states: int = 16) -> FiniteSystem:
    n = rng.randint(2, max_states)
    density = rng.uniform(0.05, 0.5)
    pairs = tuple(
        (s, t)
        for s in range(n)
        for t in range(n)
        if rng.random() < density
    )
    return FiniteSystem(n, pairs)


def hoare_holds(system: FiniteSystem, images: list[int], p: int, q: int) -> bool:
    """{p} c {q}: every transition from a p-state lands in q."""
    for s in range(system.states):
        if (p >> s) & 1 and images[s] & ~q:
            return False
    return True


def ohearn_holds(system: FiniteSystem, preimages: list[int], p: int, q: int) -> bool:
    """[p] c [q]: every q-state is reachable from some p-state."""
    for t in range(system.states):
        if (q >> t) & 1 and not (preimages[t] & p):
            return False
    return True


def _image_of(images: list[int], p: int, n: int) -> int:
    out = 0
    for s in range(n):
        if (p >> s) & 1:
            out |= images[s]
    return out


def _subset(rng: random.Random, mask: int) -> int:
    return mask & rng.getrandbits(64)


def check_logic_rules(
    system: FiniteSystem, rng: random.Random | None = None
) -> dict:
    """Exercise each inference rule once on premise-satisfying predicate
    draws; returns per-rule booleans (conclusion held or rule was vacuous)."""
    rng = rng or random.Random(0)
    n = system.states
    full = (1 << n) - 1
    images = system.images()
    pres = system.preimages()
    image_of = lambda p: _image_of(images, p, n)
    results = {}

    # agreement: [U]c[U'], U => O, {O}c{O'}  |-  U' => O'
    u = rng.getrandbits(n)
    u_post = _subset(rng, image_of(u))
    o = u | rng.getrandbits(n)
    o_post = image_of(o) | _subset(rng, full)
    assert ohearn_holds(system, pres, u, u_post)
    assert hoare_holds(system, images, o, o_post)
    results["agreement"] = not (u_post & ~o_post)

    # denial: [U]c[U'], U => O, not (U' => O')  |-  not {O}c{O'}
    if u_post:
        bit = 1 << rng.choice([t for t in range(n) if (u_post >> t) & 1])
        o_bad = rng.getrandbits(n) & ~bit
        assert u_post & ~o_bad  # the non-implication premise holds by choice
        results["denial"] = not hoare_holds(system, images, o, o_bad)
    else:
        results["denial"] = True  # vacuous draw

    # post_conj_corr
    p = rng.getrandbits(n)
    q1 = image_of(p) | _subset(rng, full)
    q2 = image_of(p) | _subset(rng, full)
    results["post_conj_corr"] = hoare_holds(system, images, p, q1 & q2)

    # pre_disj_corr
    p1, p2 = rng.getrandbits(n), rng.getrandbits(n)
    q = image_of(p1) | image_of(p2) | _subset(rng, full)
    results["pre_disj_corr"] = hoare_holds(system, images, p1 | p2, q)

    # strengthen_weaken_corr: P' => P, {P}c{Q}, Q => Q'  |-  {P'}c{Q'}
    q0 = image_of(p) | _subset(rng, full)
    results["strengthen_weaken_corr"] = hoare_holds(
        system, images, _subset(rng, p), q0 | _subset(rng, full)
    )

    # post_disj_incorr
    qa = _subset(rng, image_of(p))
    qb = _subset(rng, image_of(p))
    results["post_disj_incorr"] = ohearn_holds(system, pres, p, qa | qb)

    # pre_disj_incorr
    shared = _subset(rng, image_of(p1) & image_of(p2))
    results["pre_disj_incorr"] = ohearn_holds(system, pres, p1 | p2, shared)

    # strengthen_weaken_incorr: P => P', [P]c[Q], Q' => Q  |-  [P']c[Q']
    q_in = _subset(rng, image_of(p))
    results["strengthen_weaken_incorr"] = ohearn_holds(
        system, pres, p | rng.getrandbits(n), _subset(rng, q_in)
    )
    return results


@dataclass(frozen=True)
class LogicSuiteReport:
    systems: int
    exercised: dict
    violations: tuple


def run_logic_suite(systems: int = 10_000, max_states: int = 16, seed: int = 0) -> LogicSuiteReport:
    """Brute-force validation of all eight rules over random systems."""
    rng = random.Random(seed)
    exercised = {name: 0 for name in LOGIC_RULES}
    violations = []
    for i in range(systems):
        system = random_system(rng, max_states)
        results = check_logic_rules(system, rng)
        for name, ok in results.items():
            exercised[name] += 1
            if not ok:
                violations.append({"system": i, "rule": name,
                                   "states": system.states,
                                   "relation": system.relation})
    return LogicSuiteReport(systems, exercised, tuple(violations))


# ---------------------------------------------------------------------------
# JSON rendering (stable across runs for a fixed seed)
# ---------------------------------------------------------------------------


def _hex(word: Word) -> str:
    return f"{word.value:#x}"


def render_observer_state(state) -> object:
    if state is None:
        return None
    if isinstance(state, frozenset):
        return sorted(_hex(w) for w in state)
    if isinstance(state, tuple):
        out = []
        for op in state:
            if isinstance(op, Alloc):
                out.append({"op": "alloc", "ptr": _hex(op.ptr), "size": op.size.value})
            elif isinstance(op, Free):
                out.append({"op": "free", "ptr": _hex(op.ptr)})
            else:
                out.append(repr(op))
        return out
    return repr(state)


def outcome_to_dict(outcome: RunOutcome) -> dict:
    data = {
        "schema": REPORT_SCHEMA,
        "outcome": outcome.kind,
        "steps": outcome.steps,
        "final_pc": _hex(outcome.config.pc),
        "observer": render_observer_state(outcome.observer_state),
        "events": [list(e) for e in outcome.events],
    }
    if isinstance(outcome, Stuck):
        data["reason"] = outcome.reason
    if outcome.pc_trace:
        data["pc_trace"] = [_hex(pc) for pc in outcome.pc_trace]
    return data


def _pre_state_to_dict(pre: PreState) -> dict:
    return {"params": pre.params, "entry_pc": _hex(pre.config.pc)}


def stats_to_dict(stats: CheckStats) -> dict:
    return {
        "pre_states": stats.pre_states,
        "checked": stats.checked,
        "vacuous_pre": stats.vacuous_pre,
        "stuck": stats.stuck,
        "budget_exceeded": stats.budget_exceeded,
        "terminated": stats.terminated,
    }


def correctness_to_dict(report: CorrectnessReport) -> dict:
    data = {
        "schema": REPORT_SCHEMA,
        "mode": "correct",
        "verdict": "HOLDS" if report.holds else "FAILS",
        "note": "over supplied pre-states, within step bound",
        "stats": stats_to_dict(report.stats),
        "counterexample": None,
    }
    if report.counterexample is not None:
        ce = report.counterexample
        data["counterexample"] = {
            "pre_index": ce.pre_index,
            "pre_state": _pre_state_to_dict(ce.pre_state),
            "run": outcome_to_dict(ce.outcome),
        }
    return data


def incorrectness_to_dict(report: IncorrectnessReport) -> dict:
    data = {
        "schema": REPORT_SCHEMA,
        "mode": "incorrect",
        "verdict": "WITNESS" if report.witness else "NO_WITNESS",
        "note": "over supplied pre-states, within step bound",
        "stats": stats_to_dict(report.stats),
        "witness": None,
    }
    if report.witness is not None:
        w = report.witness
        data["witness"] = {
            "pre_index": w.pre_index,
            "pre_state": _pre_state_to_dict(w.pre_state),
            "run": outcome_to_dict(w.outcome),
        }
    return data
