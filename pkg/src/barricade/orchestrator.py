"""The main synthesis loop.

Per main iteration: retrieve a similar solved problem (first iteration
only), synthesize a candidate, gate it through sampling (failures skip
straight to the next iteration), then verify formally.  A failed formal
check enters the refinement loop: coefficient adjustments for the first
two refinements, structural changes afterwards, each refinement gated and
verified the same way.  The first fully proved candidate is stored in the
retrieval database and returned; otherwise the best-scoring attempt wins,
earliest attempt breaking ties.

Run logs are deterministic JSON-lines event streams (no wall-clock data),
so a replayed run is byte-identical to the run that recorded it.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO

from .agents import (
    AttemptRecord,
    Feedback,
    LlmSolverHooks,
    RetrievalDatabase,
    VerifyOutcome,
    record_for,
    retrieve,
    synthesize_candidate,
    verify_candidate,
)
from .conditions import BarrierCandidate, CandidateOrigin
from .llm import LLMSession, ResponseParseError
from .sampler import SampleReport
from .smt import FormalConfig, FormalReport, SolverStatus, TranscendentalPolicy
from .system import DynamicalSystem, Rect

__all__ = [
    "SynthesisConfig",
    "Counters",
    "SynthesisOutcome",
    "RunLogger",
    "score",
    "run",
]


@dataclass(frozen=True)
class SynthesisConfig:
    k: int = 5                 # main iterations
    r: int = 4                 # refinements per iteration
    n_samples: int = 5000
    seed: int = 0
    solver_timeout_ms: int = 120_000
    taylor_order: int = 7
    solvers: tuple[str, ...] | None = None
    global_timeout_s: float = 1200.0
    strengthened_invariance: bool = False
    fallback_box: Rect | None = None

    def __post_init__(self):
        if self.k < 1 or self.r < 0:
            raise ValueError("need k >= 1 and r >= 0")

    def formal(self) -> FormalConfig:
        return FormalConfig(
            timeout_ms=self.solver_timeout_ms,
            policy=TranscendentalPolicy("taylor", self.taylor_order),
            solvers=self.solvers,
            strengthened_invariance=self.strengthened_invariance,
        )


@dataclass
class Counters:
    llm_calls: int = 0
    synthesis_calls: int = 0
    retrieval_calls: int = 0
    smt_calls: int = 0
    formal_checks: int = 0
    sample_checks: int = 0

    def to_dict(self) -> dict:
        return {
            "llm_calls": self.llm_calls,
            "synthesis_calls": self.synthesis_calls,
            "retrieval_calls": self.retrieval_calls,
            "smt_calls": self.smt_calls,
            "formal_checks": self.formal_checks,
            "sample_checks": self.sample_checks,
        }


@dataclass(frozen=True)
class SynthesisOutcome:
    status: str  # "valid" | "best_partial" | "exhausted_no_candidate"
    candidate: BarrierCandidate | None
    score: float
    iteration: int
    refinement: int
    counters: Counters
    wall_time: float
    feedback: str = ""

    def to_dict(self) -> dict:
        """Serializable form; excludes wall time so result files replay
        byte-identically."""
        d = {
            "status": self.status,
            "score": self.score,
            "iteration": self.iteration,
            "refinement": self.refinement,
            "counters": self.counters.to_dict(),
        }
        if self.candidate is not None:
            d["barrier"] = self.candidate.barrier_text()
            if self.candidate.controllers:
                d["controllers"] = {
                    u: str(e) for u, e in sorted(self.candidate.controllers.items())
                }
        if self.feedback:
            d["feedback"] = self.feedback
        return d


class RunLogger:
    """Deterministic JSONL event stream (no timestamps, no wall times)."""

    def __init__(self, sink: IO[str] | None = None, path: str | Path | None = None):
        self._own = None
        if path is not None:
            self._own = open(path, "w", encoding="utf-8")
        self._sink = sink if sink is not None else self._own

    def event(self, kind: str, **payload) -> None:
        if self._sink is None:
            return
        record = {"event": kind, **payload}
        self._sink.write(json.dumps(record, sort_keys=True) + "\n")
        self._sink.flush()

    def close(self) -> None:
        if self._own is not None:
            self._own.close()


def score(sample_report: SampleReport | None, formal_report: FormalReport | None) -> float:
    """Fraction of obligations satisfied at the deepest phase reached.

    Formal verdicts override sample verdicts per obligation; timeouts and
    errors count as unsatisfied.
    """
    if formal_report is not None:
        results = formal_report.results
        return sum(r.status == SolverStatus.PROVED for r in results.values()) / max(
            len(results), 1
        )
    if sample_report is None:
        return 0.0
    return sample_report.score


def _verdict_payload(outcome: VerifyOutcome) -> dict:
    payload: dict = {
        "sample": {
            o.kind.value: {"passed": o.passed, "checked": o.n_checked}
            for o in outcome.sample_report.obligations
        }
    }
    if outcome.formal_report is not None:
        payload["formal"] = {
            kind.value: result.status.value
            for kind, result in outcome.formal_report.results.items()
        }
    return payload


def run(
    s: DynamicalSystem,
    llm: LLMSession,
    db: RetrievalDatabase | None = None,
    config: SynthesisConfig | None = None,
    logger: RunLogger | None = None,
    registry=None,
) -> SynthesisOutcome:
    """Search for a valid barrier (and controller) for system `s`."""
    config = config or SynthesisConfig()
    db = db if db is not None else RetrievalDatabase()
    logger = logger or RunLogger()
    hooks = LlmSolverHooks(llm)
    counters = Counters()
    started = time.monotonic()
    deadline = started + config.global_timeout_s

    def out_of_time() -> bool:
        return time.monotonic() > deadline

    def on_solver_run(kind, result):
        counters.smt_calls += 1

    # Best-so-far tracking: strictly better score wins; ties keep the
    # earliest attempt.
    best: tuple[float, int, int, BarrierCandidate, str] | None = None

    def consider(cand: BarrierCandidate, value: float, k: int, r: int, feedback: str):
        nonlocal best
        if best is None or value > best[0]:
            best = (value, k, r, cand, feedback)

    all_attempts: list[AttemptRecord] = []

    def evaluate_candidate(cand: BarrierCandidate, k: int, r: int):
        """Sample-gate and (if passed) formally check one candidate.

        Returns (outcome, valid).
        """
        counters.sample_checks += 1
        outcome = verify_candidate(
            s,
            cand,
            n_samples=config.n_samples,
            seed=config.seed,
            hooks=hooks,
            formal_config=config.formal(),
            registry=registry,
            fallback_box=config.fallback_box,
            on_solver_run=on_solver_run,
        )
        if outcome.formal_report is not None:
            counters.formal_checks += 1
        logger.event(
            "verdict",
            k=k,
            r=r,
            barrier=cand.barrier_text(),
            controllers=cand.controller_text(),
            **_verdict_payload(outcome),
        )
        if outcome.feedback and not outcome.feedback.empty:
            logger.event("feedback", k=k, r=r, text=outcome.feedback.info_line())
        value = score(outcome.sample_report, outcome.formal_report)
        consider(cand, value, k, r, outcome.feedback.info_line())
        all_attempts.append(
            AttemptRecord(
                barrier_text=cand.barrier_text(),
                controller_text=cand.controller_text(),
                feedback=outcome.feedback,
            )
        )
        valid = outcome.formal_report is not None and outcome.formal_report.valid
        return outcome, valid

    def finish(status: str, cand, value, k, r, feedback="") -> SynthesisOutcome:
        counters.llm_calls = len(llm.transcript)
        outcome = SynthesisOutcome(
            status=status,
            candidate=cand,
            score=value,
            iteration=k,
            refinement=r,
            counters=counters,
            wall_time=time.monotonic() - started,
            feedback=feedback,
        )
        logger.event("outcome", **outcome.to_dict())
        return outcome

    def synthesize(phase: str, k: int, r: int, **kwargs) -> BarrierCandidate | None:
        counters.synthesis_calls += 1
        try:
            cand = synthesize_candidate(s, phase, llm, origin=CandidateOrigin(k, r), **kwargs)
        except ResponseParseError as exc:
            logger.event("unparseable", k=k, r=r, error=str(exc))
            all_attempts.append(
                AttemptRecord(
                    barrier_text="(unparseable)",
                    controller_text=None,
                    feedback=Feedback(
                        phase="parse",
                        failed_conditions=("unparseable",),
                        counterexamples=(),
                        score=0.0,
                        detail=str(exc),
                    ),
                )
            )
            return None
        logger.event(
            "candidate",
            k=k,
            r=r,
            barrier=cand.barrier_text(),
            controllers=cand.controller_text(),
            source=cand.origin.source,
        )
        return cand

    for k in range(1, config.k + 1):
        if out_of_time():
            break
        if k == 1:
            calls_before = len(llm.transcript)
            context = retrieve(s, db, llm)
            counters.retrieval_calls += len(llm.transcript) - calls_before
            if context is not None:
                logger.event("retrieved", k=k, barrier=context[0].barrier, why=context[1])
            candidate = synthesize("first", k, 0, context=context)
        else:
            candidate = synthesize("next", k, 0, attempts=tuple(all_attempts))
        if candidate is None:
            continue

        outcome, valid = evaluate_candidate(candidate, k, 0)
        if valid:
            db.store(record_for(s, candidate))
            return finish("valid", candidate, 1.0, k, 0)
        if outcome.formal_report is None:
            # Failed the sample gate: move on to a fresh template.
            continue

        refinement_history: list[AttemptRecord] = [all_attempts[-1]]
        for r in range(1, config.r + 1):
            if out_of_time():
                break
            phase = "refine_coeff" if r <= 2 else "refine_struct"
            refined = synthesize(
                phase, k, r, refinement_history=tuple(refinement_history)
            )
            if refined is None:
                continue
            outcome, valid = evaluate_candidate(refined, k, r)
            if valid:
                db.store(record_for(s, refined))
                return finish("valid", refined, 1.0, k, r)
            refinement_history.append(all_attempts[-1])

    if best is None:
        return finish("exhausted_no_candidate", None, 0.0, config.k, config.r)
    value, k, r, cand, feedback = best
    return finish("best_partial", cand, value, k, r, feedback)
