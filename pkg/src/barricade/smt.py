"""Stage-two verification: prove obligations with external SMT solvers.

Each obligation `forall x in A. claim(x)` is encoded as a quantifier-free
QF_NRA script asserting `A(x) and not claim(x)`; `unsat` proves the
obligation, `sat` yields a counterexample model.

Transcendental claims (the Lie derivative of a system with sin/cos/exp/
tanh dynamics) are handled by the Taylor policy: each transcendental node
is replaced by a Taylor polynomial, and the claim is strengthened by the
accumulated Lagrange remainder so that `unsat` of the polynomial script
remains a sound proof of the original condition.  This requires a bounded
assumption region; the bound comes from the region itself or, for the
level-set invariance condition, from the sublevel structure of a coercive
diagonal quadratic barrier.  If no bound can be derived the obligation is
reported as not formally verifiable (sample-verified only).

Solvers are external processes (z3, cvc5, yices-smt2) discovered on PATH
or via the BARRICADE_Z3 / BARRICADE_CVC5 / BARRICADE_YICES environment
variables, fed scripts on stdin, and killed on timeout.
"""

from __future__ import annotations

import enum
import math
import os
import shutil
import subprocess
import time
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Mapping, Protocol, Sequence

from . import expr as ex
from .conditions import (
    BarrierCandidate,
    ObligationKind,
    ProofObligation,
    Relation,
    build_obligations,
)
from .expr import (
    Expression,
    classify,
    evaluate,
    functions_used,
    monomial_map,
    taylor_polynomial,
    to_string,
    variables,
)
from .system import (
    All,
    Ball,
    ComplementOfBall,
    DynamicalSystem,
    Rect,
    Region,
    UnionOfRects,
    region_bounding_box,
)

__all__ = [
    "SolverChoice",
    "SolverStatus",
    "SolverResult",
    "FormalReport",
    "TranscendentalPolicy",
    "EncodingError",
    "SolverError",
    "region_to_formula",
    "encode_obligation",
    "SolverRegistry",
    "get_registry",
    "run_solver",
    "SolverHooks",
    "StaticHooks",
    "FormalConfig",
    "formal_check",
    "violation_margin",
    "SOLVER_NAMES",
]

SOLVER_NAMES = ("z3", "cvc5", "yices")

# Generous enough for the degree-8 polynomialized invariance obligations
# that the Taylor policy produces; cheap obligations return in seconds.
DEFAULT_TIMEOUT_MS = 120_000
MAX_TIMEOUT_RETRIES = 2
TIMEOUT_MULTIPLIER_CAP = 4.0


class EncodingError(Exception):
    """Obligation cannot be soundly encoded in QF_NRA."""


class SolverError(Exception):
    """Solver process management failure."""


@dataclass(frozen=True)
class SolverChoice:
    name: str
    timeout_ms: int = DEFAULT_TIMEOUT_MS

    def __post_init__(self):
        if self.name not in SOLVER_NAMES:
            raise ValueError(f"unknown solver {self.name!r}")
        if self.timeout_ms <= 0:
            raise ValueError("timeout must be positive")


class SolverStatus(enum.Enum):
    PROVED = "proved"
    COUNTEREXAMPLE = "counterexample"
    TIMEOUT = "timeout"
    ERROR = "error"


@dataclass(frozen=True)
class SolverResult:
    status: SolverStatus
    solver: str
    model: dict[str, float] | None = None
    stderr: str = ""
    wall_time: float = 0.0

    def __post_init__(self):
        assert (self.model is not None) == (self.status == SolverStatus.COUNTEREXAMPLE)


@dataclass(frozen=True)
class FormalReport:
    results: Mapping[ObligationKind, SolverResult]
    valid: bool
    feedback: str

    def counterexamples(self) -> dict[ObligationKind, dict[str, float]]:
        return {
            kind: r.model
            for kind, r in self.results.items()
            if r.status == SolverStatus.COUNTEREXAMPLE and r.model is not None
        }


@dataclass(frozen=True)
class TranscendentalPolicy:
    """How to treat sin/cos/exp/tanh in obligations.

    mode "reject" refuses non-polynomial claims; mode "taylor" replaces
    them by Taylor polynomials of the given order padded with the Lagrange
    remainder (sound, possibly incomplete).
    """

    mode: str = "taylor"
    order: int = 7

    def __post_init__(self):
        if self.mode not in ("reject", "taylor"):
            raise ValueError(f"unknown transcendental policy {self.mode!r}")
        if self.order < 1:
            raise ValueError("taylor order must be >= 1")


# ---------------------------------------------------------------------------
# SMT-LIB printing
# ---------------------------------------------------------------------------


def _fmt_real(v: float) -> str:
    """A float as an SMT-LIB Real literal: positional decimal, no exponent.

    Uses the shortest representation that round-trips to the same double,
    so equal inputs always print identically.
    """
    if not math.isfinite(v):
        raise EncodingError(f"cannot encode non-finite constant {v}")
    if v < 0:
        return f"(- {_fmt_real(-v)})"
    if v == int(v) and abs(v) < 1e16:
        return f"{int(v)}.0"
    text = repr(v)
    if "e" in text or "E" in text:
        text = format(Decimal(text), "f")
    return text


def _expr_to_smt(e: Expression, guards: list[str]) -> str:
    match e:
        case ex.Const(value):
            return _fmt_real(value)
        case ex.Var(name):
            return name
        case ex.Neg(arg):
            return f"(- {_expr_to_smt(arg, guards)})"
        case ex.Add(left, right):
            return f"(+ {_expr_to_smt(left, guards)} {_expr_to_smt(right, guards)})"
        case ex.Sub(left, right):
            return f"(- {_expr_to_smt(left, guards)} {_expr_to_smt(right, guards)})"
        case ex.Mul(left, right):
            return f"(* {_expr_to_smt(left, guards)} {_expr_to_smt(right, guards)})"
        case ex.Div(left, right):
            denom = _expr_to_smt(right, guards)
            guards.append(f"(not (= {denom} 0.0))")
            return f"(/ {_expr_to_smt(left, guards)} {denom})"
        case ex.Pow(base, exponent):
            if exponent == 0:
                return "1.0"
            b = _expr_to_smt(base, guards)
            return b if exponent == 1 else f"(* {' '.join([b] * exponent)})"
        case ex.Func(name, arg):
            raise EncodingError(
                f"function '{name}' has no QF_NRA encoding; "
                "use the taylor policy for smooth transcendentals"
            )
    raise TypeError(f"not an expression node: {e!r}")


def region_to_formula(r: Region, vars: Sequence[str]) -> str:
    """Quantifier-free membership formula; balls via squared norms."""

    def ball_norm(center) -> str:
        terms = [
            f"(* {d} {d})"
            for v, c in zip(vars, center)
            for d in [v if c == 0 else f"(- {v} {_fmt_real(c)})"]
        ]
        return terms[0] if len(terms) == 1 else f"(+ {' '.join(terms)})"

    match r:
        case Ball(center, radius):
            rr = _fmt_real(radius)
            return f"(<= {ball_norm(center)} (* {rr} {rr}))"
        case ComplementOfBall(center, radius):
            rr = _fmt_real(radius)
            return f"(>= {ball_norm(center)} (* {rr} {rr}))"
        case Rect(lo, hi):
            parts = []
            for v, l, h in zip(vars, lo, hi):
                parts.append(f"(<= {_fmt_real(l)} {v})")
                parts.append(f"(<= {v} {_fmt_real(h)})")
            return f"(and {' '.join(parts)})"
        case UnionOfRects(members):
            inner = " ".join(region_to_formula(m, vars) for m in members)
            return f"(or {inner})" if len(members) > 1 else inner
        case All(_):
            return "true"
    raise TypeError(f"not a region: {r!r}")


# ---------------------------------------------------------------------------
# Bounded boxes for the Taylor policy
# ---------------------------------------------------------------------------


def _coercive_levelset_box(B: Expression, vars: Sequence[str]) -> dict[str, tuple[float, float]]:
    """Per-variable bounds implied by B(x) = 0 for coercive diagonal quadratics.

    Requires B = sum_i a_i*x_i^2 + d_i*x_i + c with every a_i > 0 and no
    cross terms; then the level set lies in a product of intervals.
    Variables B does not mention stay unbounded.
    """
    mm = monomial_map(B, vars)
    if mm is None:
        return {}
    quad: dict[int, float] = {}
    lin: dict[int, float] = {}
    const = 0.0
    for exponents, coeff in mm.items():
        nz = [(i, k) for i, k in enumerate(exponents) if k != 0]
        if not nz:
            const = coeff
        elif len(nz) == 1 and nz[0][1] == 1:
            lin[nz[0][0]] = coeff
        elif len(nz) == 1 and nz[0][1] == 2:
            quad[nz[0][0]] = coeff
        else:
            return {}  # cross term or degree > 2
    if not quad or any(a <= 0 for a in quad.values()):
        return {}
    if set(lin) - set(quad):
        return {}  # a linear-only variable is unbounded on the level set
    c0 = const - sum(lin.get(i, 0.0) ** 2 / (4 * quad[i]) for i in quad)
    budget = max(-c0, 0.0)
    box = {}
    for i, a in quad.items():
        mid = -lin.get(i, 0.0) / (2 * a)
        half = math.sqrt(budget / a)
        box[vars[i]] = (mid - half, mid + half)
    return box


def _intersect(a: tuple[float, float], b: tuple[float, float]) -> tuple[float, float]:
    return (max(a[0], b[0]), min(a[1], b[1]))


def _obligation_box(o: ProofObligation) -> dict[str, tuple[float, float]]:
    box: dict[str, tuple[float, float]] = {}
    rect = region_bounding_box(o.region)
    if rect is not None:
        box = {v: (l, h) for v, l, h in zip(o.vars, rect.lo, rect.hi)}
    if o.level_set is not None:
        for v, iv in _coercive_levelset_box(o.level_set, o.vars).items():
            box[v] = _intersect(box[v], iv) if v in box else iv
    return box


def _polynomialize(
    e: Expression, o: ProofObligation, order: int
) -> tuple[Expression, float, dict[str, tuple[float, float]]]:
    """Taylor-expand every transcendental node of `e` over the obligation box."""
    box = _obligation_box(o)
    needed = sorted(
        {v for node in ex.transcendental_nodes(e) for v in variables(node.arg)}
    )
    for v in needed:
        lo, hi = box.get(v, (-math.inf, math.inf))
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise EncodingError(
                f"variable '{v}' is unbounded on the assumption region; the "
                "transcendental obligation cannot be soundly polynomialized "
                "(sample-verified only)"
            )
    total = 0.0
    for v in needed:
        lo, hi = box[v]
        center = (lo + hi) / 2
        radius = max((hi - lo) / 2, 1e-9)
        e, pad = taylor_polynomial(e, v, center, order, radius, other_bounds=box)
        if not math.isfinite(pad):
            raise EncodingError(
                "Taylor remainder cannot be propagated: some factor of a "
                "transcendental term is unbounded on the assumption region"
            )
        total += pad
    return e, total, box


# ---------------------------------------------------------------------------
# Obligation encoding
# ---------------------------------------------------------------------------

_NEGATED = {
    Relation.LE_ZERO: ">",   # not (E <= 0)  ==  E > 0
    Relation.GT_ZERO: "<=",  # not (E > 0)   ==  E <= 0
    Relation.LT_ZERO: ">=",  # not (E < 0)   ==  E >= 0
}


def encode_obligation(o: ProofObligation, policy: TranscendentalPolicy) -> str:
    """SMT-LIB 2 script whose unsatisfiability proves the obligation.

    Asserts region membership (plus the level-set equation for continuous
    invariance) together with the negated claim.  Under the taylor policy
    the negated claim is weakened by the remainder pad, which strengthens
    what `unsat` proves; the pad is recorded in a script comment.
    Deterministic: equal (obligation, policy) yield byte-identical text.
    """
    claim = o.claim
    pad = 0.0
    box: dict[str, tuple[float, float]] = {}
    if not classify(claim).is_polynomial:
        hard = functions_used(claim) - set(ex.SMOOTH_FUNCTIONS)
        if hard - {"sqrt", "abs", "sign"} == set() and hard:
            raise EncodingError(
                f"function(s) {sorted(hard)} in the claim have no sound "
                "polynomial approximation here"
            )
        if functions_used(claim) & set(ex.SMOOTH_FUNCTIONS):
            if policy.mode == "reject":
                raise EncodingError(
                    "claim is not polynomial and the transcendental policy is 'reject'"
                )
            claim, pad, box = _polynomialize(claim, o, policy.order)
    if o.level_set is not None and not classify(o.level_set).is_polynomial:
        raise EncodingError("level-set expression must be polynomial")

    guards: list[str] = []
    lines = [
        f"; obligation: {o.kind.value}",
        f"; claim: {to_string(o.claim)} {o.relation.value}",
    ]
    if pad:
        lines.append(f"; taylor pad: {_fmt_real(pad)}")
    lines.append("(set-option :produce-models true)")
    lines.append("(set-logic QF_NRA)")
    for v in o.vars:
        lines.append(f"(declare-const {v} Real)")
    region = region_to_formula(o.region, o.vars)
    if region != "true":
        lines.append(f"(assert {region})")
    if o.level_set is not None:
        lines.append(f"(assert (= {_expr_to_smt(o.level_set, guards)} 0.0))")
    if box:
        # Bounds implied by the assumptions, made explicit because the
        # Taylor pad is only valid inside them (and they help the solver).
        for v in sorted(box):
            lo, hi = box[v]
            if math.isfinite(lo) and math.isfinite(hi):
                lines.append(
                    f"(assert (and (<= {_fmt_real(lo)} {v}) (<= {v} {_fmt_real(hi)})))"
                )
    term = _expr_to_smt(claim, guards)
    op = _NEGATED[o.relation]
    if pad:
        bound = _fmt_real(pad)
        negated = {
            Relation.LE_ZERO: f"(> {term} (- {bound}))",
            Relation.GT_ZERO: f"(<= {term} {bound})",
            Relation.LT_ZERO: f"(>= {term} (- {bound}))",
        }[o.relation]
    else:
        negated = f"({op} {term} 0.0)"
    for g in dict.fromkeys(guards):
        lines.append(f"(assert {g})")
    lines.append(f"(assert {negated})")
    lines.append("(check-sat)")
    lines.append("(get-model)")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Solver processes
# ---------------------------------------------------------------------------

_ENV_OVERRIDES = {
    "z3": "BARRICADE_Z3",
    "cvc5": "BARRICADE_CVC5",
    "yices": "BARRICADE_YICES",
}

_DEFAULT_BINARIES = {"z3": "z3", "cvc5": "cvc5", "yices": "yices-smt2"}

_PROBE_SCRIPT = (
    "(set-logic QF_NRA)\n(declare-const x Real)\n(assert (> x 0.0))\n(check-sat)\n"
)


def _argv(name: str, binary: str) -> list[str]:
    if name == "z3":
        # Decimal model printing avoids unparseable algebraic root objects.
        return [binary, "-in", "pp.decimal=true", "pp.decimal_precision=50"]
    if name == "cvc5":
        return [binary, "--lang", "smt2"]
    return [binary]  # yices-smt2 reads SMT-LIB 2 from stdin


class SolverRegistry:
    """Probed solver binaries; read-only after construction."""

    def __init__(self, paths: Mapping[str, str] | None = None, probe: bool = True):
        self._binaries: dict[str, str] = {}
        for name in SOLVER_NAMES:
            binary = (paths or {}).get(name) or os.environ.get(
                _ENV_OVERRIDES[name]
            ) or shutil.which(_DEFAULT_BINARIES[name])
            if binary is None:
                continue
            if probe and not self._probe(name, binary):
                continue
            self._binaries[name] = binary

    @staticmethod
    def _probe(name: str, binary: str) -> bool:
        try:
            proc = subprocess.run(
                _argv(name, binary),
                input=_PROBE_SCRIPT,
                capture_output=True,
                text=True,
                timeout=30,
            )
        except (OSError, subprocess.TimeoutExpired):
            return False
        return proc.stdout.strip().startswith("sat")

    @property
    def available(self) -> tuple[str, ...]:
        return tuple(n for n in SOLVER_NAMES if n in self._binaries)

    def binary(self, name: str) -> str:
        try:
            return self._binaries[name]
        except KeyError:
            raise SolverError(f"solver '{name}' is not available") from None

    def __contains__(self, name: str) -> bool:
        return name in self._binaries


_registry: SolverRegistry | None = None


def get_registry(refresh: bool = False) -> SolverRegistry:
    global _registry
    if _registry is None or refresh:
        _registry = SolverRegistry()
    return _registry


def run_solver(
    script: str, choice: SolverChoice, registry: SolverRegistry | None = None
) -> SolverResult:
    """Feed `script` to the chosen solver process and interpret the verdict.

    The process is killed when the timeout elapses.  `unknown` verdicts map
    to ERROR with a diagnostic so callers can switch solvers.
    """
    registry = registry or get_registry()
    binary = registry.binary(choice.name)
    start = time.monotonic()
    try:
        proc = subprocess.Popen(
            _argv(choice.name, binary),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            text=True,
        )
        stdout, stderr = proc.communicate(script, timeout=choice.timeout_ms / 1000.0)
    except subprocess.TimeoutExpired:
        proc.kill()
        proc.communicate()
        return SolverResult(
            status=SolverStatus.TIMEOUT,
            solver=choice.name,
            wall_time=time.monotonic() - start,
        )
    except OSError as exc:
        return SolverResult(
            status=SolverStatus.ERROR,
            solver=choice.name,
            stderr=f"failed to spawn {binary}: {exc}",
            wall_time=time.monotonic() - start,
        )
    wall = time.monotonic() - start
    verdict = _first_verdict(stdout)
    excerpt = (stderr or "").strip()[:500]
    if verdict == "unsat":
        return SolverResult(SolverStatus.PROVED, choice.name, stderr=excerpt, wall_time=wall)
    if verdict == "sat":
        try:
            model = _parse_model(stdout)
        except ValueError as exc:
            return SolverResult(
                SolverStatus.ERROR,
                choice.name,
                stderr=f"malformed model: {exc}",
                wall_time=wall,
            )
        return SolverResult(
            SolverStatus.COUNTEREXAMPLE, choice.name, model=model, stderr=excerpt, wall_time=wall
        )
    if verdict == "unknown":
        return SolverResult(
            SolverStatus.ERROR, choice.name, stderr="solver returned unknown", wall_time=wall
        )
    detail = excerpt or stdout.strip()[:500] or f"exit code {proc.returncode}"
    return SolverResult(SolverStatus.ERROR, choice.name, stderr=detail, wall_time=wall)


def _first_verdict(stdout: str) -> str | None:
    for line in stdout.splitlines():
        token = line.strip()
        if token in ("sat", "unsat", "unknown"):
            return token
    return None


# --- model parsing ---------------------------------------------------------


def _tokenize_sexpr(text: str) -> list[str]:
    return text.replace("(", " ( ").replace(")", " ) ").split()


def _read_sexprs(tokens: list[str]) -> list:
    out = []
    stack: list[list] = []
    for tok in tokens:
        if tok == "(":
            stack.append([])
        elif tok == ")":
            if not stack:
                raise ValueError("unbalanced model s-expression")
            done = stack.pop()
            (stack[-1] if stack else out).append(done)
        else:
            (stack[-1] if stack else out).append(tok)
    if stack:
        raise ValueError("unbalanced model s-expression")
    return out


def _atom_to_float(atom) -> float:
    if isinstance(atom, str):
        text = atom.rstrip("?")  # z3 decimal approximations end in '?'
        if "/" in text:
            num, den = text.split("/")
            return float(num) / float(den)
        return float(text)
    if isinstance(atom, list) and atom:
        if atom[0] == "-" and len(atom) == 2:
            return -_atom_to_float(atom[1])
        if atom[0] == "/" and len(atom) == 3:
            return _atom_to_float(atom[1]) / _atom_to_float(atom[2])
    raise ValueError(f"cannot interpret model value {atom!r}")


def _parse_model(stdout: str) -> dict[str, float]:
    body = stdout.split("sat", 1)[1]
    forms = _read_sexprs(_tokenize_sexpr(body))
    model: dict[str, float] = {}

    def visit(form):
        if not isinstance(form, list):
            return
        if len(form) >= 2 and form[0] == "define-fun":
            model[form[1]] = _atom_to_float(form[-1])
        elif len(form) == 3 and form[0] == "=" and isinstance(form[1], str):
            model[form[1]] = _atom_to_float(form[2])
        else:
            for sub in form:
                visit(sub)

    for form in forms:
        visit(form)
    if not model:
        raise ValueError("no assignments found in model output")
    return model


# ---------------------------------------------------------------------------
# Formal check with hook-driven solver management
# ---------------------------------------------------------------------------


class SolverHooks(Protocol):
    """Decisions the verifier defers to a (possibly LLM-backed) advisor."""

    def select_solver(
        self, system_text: str, barrier_text: str, available: Sequence[str]
    ) -> str: ...

    def timeout_retry(
        self, solver: str, timeout_ms: int, system_text: str, barrier_text: str
    ) -> tuple[bool, float]: ...

    def next_solver(
        self,
        failed: str,
        error_type: str,
        error_message: str,
        remaining: Sequence[str],
        system_text: str,
        barrier_text: str,
    ) -> str: ...


class StaticHooks:
    """LLM-free defaults: first available solver, no timeout retries."""

    def select_solver(self, system_text, barrier_text, available):
        return available[0]

    def timeout_retry(self, solver, timeout_ms, system_text, barrier_text):
        return (False, 1.0)

    def next_solver(self, failed, error_type, error_message, remaining, system_text, barrier_text):
        return remaining[0]


@dataclass(frozen=True)
class FormalConfig:
    timeout_ms: int = DEFAULT_TIMEOUT_MS
    policy: TranscendentalPolicy = field(default_factory=TranscendentalPolicy)
    solvers: tuple[str, ...] | None = None  # None: all probed solvers
    strengthened_invariance: bool = False


def _check_obligation(
    o: ProofObligation,
    config: FormalConfig,
    hooks: SolverHooks,
    registry: SolverRegistry,
    system_text: str,
    barrier_text: str,
    on_solver_run=None,
) -> SolverResult:
    try:
        script = encode_obligation(o, config.policy)
    except EncodingError as exc:
        return SolverResult(SolverStatus.ERROR, solver="none", stderr=str(exc))

    available = [
        n for n in (config.solvers or registry.available) if n in registry
    ]
    if not available:
        return SolverResult(
            SolverStatus.ERROR, solver="none", stderr="no SMT solver is available"
        )

    chosen = hooks.select_solver(system_text, barrier_text, available)
    if chosen not in available:
        chosen = "z3" if "z3" in available else available[0]
    remaining = [n for n in available if n != chosen]

    timeout = config.timeout_ms
    retries = 0
    last: SolverResult | None = None
    while True:
        result = run_solver(script, SolverChoice(chosen, timeout), registry)
        if on_solver_run is not None:
            on_solver_run(o.kind, result)
        last = result
        if result.status in (SolverStatus.PROVED, SolverStatus.COUNTEREXAMPLE):
            return result
        if result.status == SolverStatus.TIMEOUT:
            if retries >= MAX_TIMEOUT_RETRIES:
                return result
            retry, multiplier = hooks.timeout_retry(
                chosen, timeout, system_text, barrier_text
            )
            if not retry:
                return result
            timeout = int(timeout * min(max(multiplier, 1.0), TIMEOUT_MULTIPLIER_CAP))
            retries += 1
            continue
        # error: switch solver if any remain
        if not remaining:
            return result
        pick = hooks.next_solver(
            chosen, result.status.value, result.stderr, remaining, system_text, barrier_text
        )
        chosen = pick if pick in remaining else remaining[0]
        remaining = [n for n in remaining if n != chosen]
        timeout = config.timeout_ms
        retries = 0


def _format_point(model: Mapping[str, float], vars: Sequence[str]) -> str:
    return "(" + ", ".join(f"{v} = {model.get(v, 0.0):.6g}" for v in vars) + ")"


def formal_check(
    s: DynamicalSystem,
    c: BarrierCandidate,
    hooks: SolverHooks | None = None,
    config: FormalConfig | None = None,
    registry: SolverRegistry | None = None,
    on_solver_run=None,
) -> FormalReport:
    """Prove (or refute) all three obligations of candidate `c`.

    Solver selection, timeout retries (at most 2, multiplier capped at 4x)
    and switching on errors are delegated to `hooks`.  `on_solver_run` is
    called after every solver invocation, for accounting.
    """
    hooks = hooks or StaticHooks()
    config = config or FormalConfig()
    registry = registry or get_registry()
    obligations = build_obligations(s, c, strengthened=config.strengthened_invariance)
    system_text = s.dynamics_text()
    barrier_text = c.barrier_text()

    results: dict[ObligationKind, SolverResult] = {}
    for o in obligations:
        results[o.kind] = _check_obligation(
            o, config, hooks, registry, system_text, barrier_text, on_solver_run
        )

    valid = all(r.status == SolverStatus.PROVED for r in results.values())
    lines = []
    for o in obligations:
        r = results[o.kind]
        if r.status == SolverStatus.PROVED:
            continue
        if r.status == SolverStatus.COUNTEREXAMPLE and r.model is not None:
            lines.append(
                f"{o.kind.value} condition fails: counterexample at "
                f"{_format_point(r.model, o.vars)}"
            )
        elif r.status == SolverStatus.TIMEOUT:
            lines.append(f"{o.kind.value} condition not proved: solver timeout")
        else:
            lines.append(f"{o.kind.value} condition not proved: {r.stderr or 'error'}")
    return FormalReport(results=results, valid=valid, feedback="\n".join(lines))


def violation_margin(o: ProofObligation, point: Mapping[str, float]) -> float:
    """How strongly `point` witnesses the negated claim (>= 0: violation).

    For claim E <= 0 the margin is E(point); for E > 0 it is -E(point);
    for E < 0 it is E(point).
    """
    value = evaluate(o.claim, dict(point))
    return -value if o.relation == Relation.GT_ZERO else value
