"""The three cooperating agents: retrieval, synthesis, and verification.

Retrieval keeps a persistent database of solved problems (an append-only
JSON-lines file with an in-memory index), shortlists records whose
extracted features equal the query's, and asks the model to rank when
more than one candidate survives the filter.

Synthesis renders the phase-appropriate prompt (first try, structural
retry, coefficient refinement, structural refinement — controller
variants when the system has inputs), calls the model, and parses the
reply into a candidate.  Coefficient refinements must preserve the
barrier's term skeleton; a reply that changes structure is a protocol
violation, retried once.

Verification gates every candidate through sampling before any solver
runs, then drives the SMT stage and condenses the outcome into feedback
for the next synthesis round.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .conditions import BarrierCandidate, CandidateOrigin, build_obligations
from .expr import (
    Expression,
    Var,
    monomial_map,
    parse_expression,
    replace_nodes,
    to_string,
    transcendental_nodes,
)
from .llm import LLMSession, ResponseParseError, parse_candidate, parse_scalar_reply
from .prompts import (
    condition_3,
    context_block,
    failed_attempts_block,
    failed_info,
    refinement_history_block,
    render,
)
from .sampler import SampleReport, sample_check
from .smt import FormalConfig, FormalReport, SolverStatus, formal_check, get_registry
from .system import (
    DynamicalSystem,
    ProblemFeatures,
    Rect,
    describe_region,
    extract_features,
)

__all__ = [
    "SolvedRecord",
    "RetrievalDatabase",
    "Feedback",
    "ProtocolViolation",
    "retrieve",
    "AttemptRecord",
    "synthesize_candidate",
    "VerifyOutcome",
    "verify_candidate",
    "LlmSolverHooks",
    "system_prompt_fields",
]


@dataclass(frozen=True)
class SolvedRecord:
    features: ProblemFeatures
    system_summary: str
    barrier: str
    controllers: tuple[str, ...] = ()
    timestamp: float = 0.0

    def to_dict(self) -> dict:
        return {
            "features": {
                "dimension": self.features.dimension,
                "time_domain": self.features.time_domain,
                "is_linear": self.features.is_linear,
                "controlled": self.features.controlled,
                "init_topology": self.features.init_topology,
                "unsafe_topology": self.features.unsafe_topology,
            },
            "system_summary": self.system_summary,
            "barrier": self.barrier,
            "controllers": list(self.controllers),
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SolvedRecord":
        f = d["features"]
        return cls(
            features=ProblemFeatures(
                dimension=f["dimension"],
                time_domain=f["time_domain"],
                is_linear=f["is_linear"],
                controlled=f["controlled"],
                init_topology=f["init_topology"],
                unsafe_topology=f["unsafe_topology"],
            ),
            system_summary=d["system_summary"],
            barrier=d["barrier"],
            controllers=tuple(d.get("controllers", ())),
            timestamp=d.get("timestamp", 0.0),
        )


class RetrievalDatabase:
    """Append-only JSONL store of solved problems, indexed by feature key.

    Reads are lock-free over immutable snapshots; writes append to the
    file under a lock and update the index.
    """

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path else None
        self._records: list[SolvedRecord] = []
        self._index: dict[tuple, list[int]] = {}
        self._lock = threading.Lock()
        if self.path and self.path.exists():
            for line in self.path.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    self._admit(SolvedRecord.from_dict(json.loads(line)))

    def _admit(self, record: SolvedRecord) -> None:
        self._index.setdefault(record.features.key(), []).append(len(self._records))
        self._records.append(record)

    def store(self, record: SolvedRecord) -> None:
        with self._lock:
            if self.path:
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(record.to_dict()) + "\n")
            self._admit(record)

    def lookup(self, features: ProblemFeatures) -> list[SolvedRecord]:
        with self._lock:
            return [self._records[i] for i in self._index.get(features.key(), [])]

    def __len__(self) -> int:
        return len(self._records)

    @property
    def records(self) -> tuple[SolvedRecord, ...]:
        with self._lock:
            return tuple(self._records)


@dataclass(frozen=True)
class Feedback:
    """What went wrong with a candidate, for the next synthesis prompt."""

    phase: str  # "sample" | "formal" | "parse"
    failed_conditions: tuple[str, ...]
    counterexamples: tuple[tuple[tuple[float, ...], float], ...]
    score: float
    detail: str = ""

    @property
    def empty(self) -> bool:
        return not self.failed_conditions and self.phase != "parse"

    def info_line(self) -> str:
        return failed_info(self.failed_conditions, len(self.counterexamples))


class ProtocolViolation(ResponseParseError):
    """Refinement reply broke the phase contract (changed structure)."""


def system_prompt_fields(s: DynamicalSystem) -> dict[str, str]:
    return {
        "SYSTEM_DYNAMICS": s.dynamics_text(),
        "INITIAL_SET": describe_region(s.initial_set),
        "UNSAFE_SET": describe_region(s.unsafe_set),
        "CONDITION_3": condition_3(s.time_domain),
        "CONTROLLER_PARAMETERS": ", ".join(s.control_vars),
    }


# ---------------------------------------------------------------------------
# Retrieval agent
# ---------------------------------------------------------------------------


def _candidates_text(records: Sequence[SolvedRecord]) -> str:
    lines = []
    for i, r in enumerate(records, 1):
        line = f"{i}. {r.system_summary} | B(x): {r.barrier}"
        if r.controllers:
            line += f" | u(x): {', '.join(r.controllers)}"
        lines.append(line)
    return "\n".join(lines)


def retrieve(
    s: DynamicalSystem, db: RetrievalDatabase, llm: LLMSession | None
) -> tuple[SolvedRecord, str] | None:
    """The most similar solved record with matching features, if any.

    Zero matches: None (synthesis proceeds fresh).  One match: returned
    without a model call.  Several: the model ranks them; an unusable
    reply falls back to the first match.
    """
    matches = db.lookup(extract_features(s))
    if not matches:
        return None
    if len(matches) == 1:
        return matches[0], "only feature-equal record"
    fields = system_prompt_fields(s)
    prompt = render(
        "similarity_select",
        {
            "SYSTEM_DYNAMICS": fields["SYSTEM_DYNAMICS"],
            "INITIAL_SET": fields["INITIAL_SET"],
            "UNSAFE_SET": fields["UNSAFE_SET"],
            "CANDIDATES_TEXT": _candidates_text(matches),
        },
    )
    if llm is None:
        return matches[0], "no ranking model; first feature-equal record"
    reply = llm.complete(prompt)
    try:
        number = parse_scalar_reply(reply, "candidate_number")
        if number > len(matches):
            raise ResponseParseError(f"candidate number {number} out of range")
        return matches[number - 1], f"model ranked candidate {number} most similar"
    except ResponseParseError:
        return matches[0], "unusable ranking reply; fell back to first record"


# ---------------------------------------------------------------------------
# Synthesis agent
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AttemptRecord:
    barrier_text: str
    controller_text: str | None
    feedback: Feedback


def barrier_skeleton(e: Expression, vars: Sequence[str]):
    """Structure of a barrier up to coefficients.

    The skeleton is (set of monomial exponent vectors, set of function
    calls by name and argument skeleton); each distinct function call is
    treated as one extra variable in the monomial expansion.  Coefficient
    refinements must preserve it exactly.
    """
    nodes = sorted(transcendental_nodes(e), key=to_string)
    call_keys: dict = {}
    for node in nodes:
        key = (node.name, barrier_skeleton(node.arg, vars))
        call_keys.setdefault(key, []).append(node)
    marker_of = {}
    ordered = sorted(call_keys, key=repr)
    for i, key in enumerate(ordered):
        for node in call_keys[key]:
            marker_of[node] = Var(f"__t{i}")
    flattened = replace_nodes(e, marker_of) if marker_of else e
    extended = list(vars) + [f"__t{i}" for i in range(len(ordered))]
    mm = monomial_map(flattened, extended)
    monomial_part = frozenset(mm.keys()) if mm is not None else None
    return (monomial_part, frozenset(call_keys.keys()))


def _phase_template(phase: str, controlled: bool) -> str:
    base = {
        "first": "synth_first",
        "next": "synth_next",
        "refine_coeff": "refine_coeff",
        "refine_struct": "refine_struct",
    }[phase]
    return base + ("_ctrl" if controlled else "")


def synthesize_candidate(
    s: DynamicalSystem,
    phase: str,
    llm: LLMSession,
    context: tuple[SolvedRecord, str] | None = None,
    attempts: Sequence[AttemptRecord] = (),
    refinement_history: Sequence[AttemptRecord] = (),
    origin: CandidateOrigin | None = None,
) -> BarrierCandidate:
    """Render the phase prompt, call the model, parse the candidate.

    `attempts` feeds the later-iteration failure list; `refinement_history`
    feeds the refinement prompts (its first entry is the candidate being
    refined).  Parse failures and protocol violations are retried once and
    then surfaced to the caller.
    """
    fields = system_prompt_fields(s)
    template = _phase_template(phase, s.controlled)
    refined = phase in ("refine_coeff", "refine_struct")

    if phase == "first":
        record = context[0] if context else None
        fields["CONTEXT"] = context_block(
            record.system_summary if record else None,
            (
                record.barrier
                + (f" with controllers {', '.join(record.controllers)}" if record.controllers else "")
            )
            if record
            else None,
        )
    elif phase == "next":
        fields["FAILED_ATTEMPTS"] = failed_attempts_block(
            [(a.barrier_text, a.controller_text, a.feedback.info_line()) for a in attempts]
        )
    else:
        if not refinement_history:
            raise ValueError("refinement phases need the candidate being refined")
        original = refinement_history[0]
        fields["BARRIER"] = original.barrier_text
        if s.controlled:
            fields["CONTROLLER"] = original.controller_text or ""
        fields["FAILED_INFO"] = original.feedback.info_line()
        fields["REFINEMENT_HISTORY"] = refinement_history_block(
            [(a.barrier_text, a.feedback.info_line()) for a in refinement_history[1:]]
        )

    prompt = render(template, fields)

    last_error: ResponseParseError | None = None
    for attempt in range(2):
        reply = llm.complete(prompt)
        try:
            candidate = parse_candidate(
                reply,
                s.state_vars,
                s.control_vars,
                refined=refined,
                origin=origin,
            )
        except ResponseParseError as exc:
            last_error = exc
            continue
        if phase == "refine_coeff" and refinement_history:
            original_expr = parse_expression(
                refinement_history[0].barrier_text, s.state_vars
            )
            if barrier_skeleton(candidate.barrier, s.state_vars) != barrier_skeleton(
                original_expr, s.state_vars
            ):
                last_error = ProtocolViolation(
                    "coefficient refinement changed the barrier's term structure"
                )
                continue
        return candidate
    assert last_error is not None
    raise last_error


# ---------------------------------------------------------------------------
# Verifier agent
# ---------------------------------------------------------------------------


class LlmSolverHooks:
    """Prompt-backed solver management decisions with safe fallbacks."""

    def __init__(self, llm: LLMSession):
        self.llm = llm

    def _ask(self, template, fields, kind, names):
        reply = self.llm.complete(render(template, fields))
        return parse_scalar_reply(reply, kind, names)

    def select_solver(self, system_text, barrier_text, available):
        fields = {"SYSTEM_DYNAMICS": system_text, "BARRIER_EXPRESSION": barrier_text}
        try:
            return self._ask("solver_select", fields, "solver_name", available)
        except ResponseParseError:
            return "z3" if "z3" in available else available[0]

    def timeout_retry(self, solver, timeout_ms, system_text, barrier_text):
        fields = {
            "SOLVER_NAME": solver,
            "TIMEOUT_MS": str(timeout_ms),
            "SYSTEM_DYNAMICS": system_text,
            "BARRIER_EXPRESSION": barrier_text,
        }
        try:
            return self._ask("timeout_retry", fields, "retry_decision", ())
        except ResponseParseError:
            return (False, 1.0)

    def next_solver(self, failed, error_type, error_message, remaining, system_text, barrier_text):
        fields = {
            "SOLVER_NAME": failed,
            "ERROR_TYPE": error_type,
            "ERROR_MESSAGE": error_message or "unknown",
            "SYSTEM_DYNAMICS": system_text,
            "BARRIER_EXPRESSION": barrier_text,
            "REMAINING_SOLVERS_LIST": "\n".join(f"- {n}" for n in remaining),
        }
        try:
            return self._ask("solver_error", fields, "solver_name", remaining)
        except ResponseParseError:
            return remaining[0]


@dataclass(frozen=True)
class VerifyOutcome:
    sample_report: SampleReport
    formal_report: FormalReport | None
    feedback: Feedback


def _sample_feedback(report: SampleReport) -> Feedback:
    failed = [o for o in report.obligations if not o.passed]
    cex = tuple(v for o in failed for v in o.violations)
    return Feedback(
        phase="sample",
        failed_conditions=tuple(o.kind.value for o in failed),
        counterexamples=cex,
        score=report.score,
    )


def _formal_feedback(s: DynamicalSystem, c: BarrierCandidate, report: FormalReport) -> Feedback:
    obligations = {o.kind: o for o in build_obligations(s, c)}
    failed = []
    cex = []
    for kind, result in report.results.items():
        if result.status == SolverStatus.PROVED:
            continue
        failed.append(kind.value)
        if result.model is not None:
            o = obligations[kind]
            point = tuple(result.model.get(v, 0.0) for v in o.vars)
            try:
                from .expr import evaluate

                value = evaluate(o.claim, dict(zip(o.vars, point)))
            except Exception:
                value = float("nan")
            cex.append((point, value))
    proved = sum(
        r.status == SolverStatus.PROVED for r in report.results.values()
    )
    return Feedback(
        phase="formal",
        failed_conditions=tuple(failed),
        counterexamples=tuple(cex),
        score=proved / max(len(report.results), 1),
        detail=report.feedback,
    )


def verify_candidate(
    s: DynamicalSystem,
    c: BarrierCandidate,
    n_samples: int = 5000,
    seed: int = 0,
    hooks=None,
    formal_config: FormalConfig | None = None,
    registry=None,
    fallback_box: Rect | None = None,
    on_solver_run=None,
) -> VerifyOutcome:
    """Two-stage verification: sample gate, then SMT.

    A candidate that fails sampling never reaches a solver; its feedback
    carries the sampled counterexamples.  Otherwise the formal report's
    verdicts drive the feedback.
    """
    report = sample_check(s, c, n=n_samples, seed=seed, fallback_box=fallback_box)
    if not report.passed:
        return VerifyOutcome(report, None, _sample_feedback(report))
    formal = formal_check(
        s,
        c,
        hooks=hooks,
        config=formal_config,
        registry=registry,
        on_solver_run=on_solver_run,
    )
    if formal.valid:
        feedback = Feedback(
            phase="formal", failed_conditions=(), counterexamples=(), score=1.0
        )
    else:
        feedback = _formal_feedback(s, c, formal)
    return VerifyOutcome(report, formal, feedback)


def record_for(s: DynamicalSystem, c: BarrierCandidate) -> SolvedRecord:
    return SolvedRecord(
        features=extract_features(s),
        system_summary=(
            f"{s.dynamics_text()}; initial set {describe_region(s.initial_set)}; "
            f"unsafe set {describe_region(s.unsafe_set)}"
        ),
        barrier=c.barrier_text(),
        controllers=(
            tuple(to_string(c.controllers[u]) for u in s.control_vars)
            if c.controllers
            else ()
        ),
        timestamp=time.time(),
    )
