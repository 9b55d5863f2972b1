"""Barrier proof obligations.

A candidate barrier B must satisfy three conditions (the claims below are
stated over the closed-loop system, i.e. after any controller has been
substituted into the dynamics):

    init:        B(x) <= 0                 for all x in X_I
    unsafe:      B(x) > 0                  for all x in X_U
    invariance:  grad B(x) . f(x) < 0      for all x in X with B(x) = 0   (continuous)
                 B(f(x)) - B(x) <= 0       for all x in X                 (discrete)

The continuous invariance condition is checked exactly on the zero level
set; `strengthened=True` drops the level-set restriction and demands the
Lie derivative be negative on all of X, which is more conservative but
often easier on solvers.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping

from .expr import (
    Expression,
    differentiate,
    functions_used,
    substitute,
    to_string,
    variables,
)
from .system import CONTINUOUS, DISCRETE, DynamicalSystem, Region

__all__ = [
    "CandidateOrigin",
    "BarrierCandidate",
    "ObligationKind",
    "Relation",
    "ProofObligation",
    "ConditionError",
    "close_loop",
    "lie_derivative",
    "discrete_difference",
    "build_obligations",
]


class ConditionError(Exception):
    """Candidate/system mismatch when constructing obligations."""


@dataclass(frozen=True)
class CandidateOrigin:
    iteration: int
    refinement: int
    source: str = "fresh"  # retrieval | fresh | refined


@dataclass(frozen=True)
class BarrierCandidate:
    barrier: Expression
    controllers: Mapping[str, Expression] | None = None
    origin: CandidateOrigin = field(default_factory=lambda: CandidateOrigin(1, 0))

    def barrier_text(self) -> str:
        return to_string(self.barrier)

    def controller_text(self) -> str | None:
        if not self.controllers:
            return None
        return ", ".join(to_string(self.controllers[u]) for u in sorted(self.controllers))


class ObligationKind(enum.Enum):
    INIT = "init"
    UNSAFE = "unsafe"
    INVARIANCE = "invariance"


class Relation(enum.Enum):
    """Claimed sign of the obligation expression over the assumption set."""

    LE_ZERO = "<= 0"
    LT_ZERO = "< 0"
    GT_ZERO = "> 0"


@dataclass(frozen=True)
class ProofObligation:
    kind: ObligationKind
    vars: tuple[str, ...]
    region: Region
    claim: Expression
    relation: Relation
    level_set: Expression | None = None  # extra assumption `level_set = 0`

    def describe(self) -> str:
        side = f" on {{B = 0}}" if self.level_set is not None else ""
        return f"{self.kind.value}: {to_string(self.claim)} {self.relation.value}{side}"


def close_loop(s: DynamicalSystem, c: BarrierCandidate) -> DynamicalSystem:
    """Substitute the candidate's controllers into the dynamics.

    Returns an autonomous system over the state variables only.  A system
    without control inputs passes through unchanged.
    """
    if not s.control_vars:
        return s
    controllers = c.controllers or {}
    missing = [u for u in s.control_vars if u not in controllers]
    if missing:
        raise ConditionError(f"no controller given for input(s) {', '.join(missing)}")
    for u, e in controllers.items():
        extra = variables(e) - set(s.state_vars)
        if extra:
            raise ConditionError(
                f"controller for {u} references non-state variable(s) {sorted(extra)}"
            )
    bindings = {u: controllers[u] for u in s.control_vars}
    return DynamicalSystem(
        name=s.name,
        time_domain=s.time_domain,
        state_vars=s.state_vars,
        control_vars=(),
        dynamics=tuple(substitute(f, bindings) for f in s.dynamics),
        state_space=s.state_space,
        initial_set=s.initial_set,
        unsafe_set=s.unsafe_set,
    )


def lie_derivative(B: Expression, s: DynamicalSystem) -> Expression:
    """grad B . f for a continuous-time autonomous system."""
    if s.time_domain != CONTINUOUS:
        raise ConditionError("Lie derivative requires a continuous-time system")
    if s.control_vars:
        raise ConditionError("Lie derivative requires an autonomous (closed-loop) system")
    total: Expression | None = None
    for var, f_i in zip(s.state_vars, s.dynamics):
        term = differentiate(B, var) * f_i
        total = term if total is None else total + term
    assert total is not None
    return total


def discrete_difference(B: Expression, s: DynamicalSystem) -> Expression:
    """B(f(x)) - B(x) for a discrete-time autonomous system."""
    if s.time_domain != DISCRETE:
        raise ConditionError("discrete difference requires a discrete-time system")
    if s.control_vars:
        raise ConditionError(
            "discrete difference requires an autonomous (closed-loop) system"
        )
    step = {var: f_i for var, f_i in zip(s.state_vars, s.dynamics)}
    return substitute(B, step) - B


def build_obligations(
    s: DynamicalSystem, c: BarrierCandidate, strengthened: bool = False
) -> list[ProofObligation]:
    """The three proof obligations for candidate `c` on system `s`.

    Controlled systems are closed first, so the obligations never mention
    control variables.
    """
    closed = close_loop(s, c)
    B = c.barrier
    extra = variables(B) - set(closed.state_vars)
    if extra:
        raise ConditionError(f"barrier references non-state variable(s) {sorted(extra)}")

    obligations = [
        ProofObligation(
            kind=ObligationKind.INIT,
            vars=closed.state_vars,
            region=closed.initial_set,
            claim=B,
            relation=Relation.LE_ZERO,
        ),
        ProofObligation(
            kind=ObligationKind.UNSAFE,
            vars=closed.state_vars,
            region=closed.unsafe_set,
            claim=B,
            relation=Relation.GT_ZERO,
        ),
    ]
    if closed.time_domain == CONTINUOUS:
        if "abs" in functions_used(B) or "sign" in functions_used(B):
            raise ConditionError(
                "continuous-time invariance needs a differentiable barrier; "
                "abs is only supported for discrete-time systems"
            )
        obligations.append(
            ProofObligation(
                kind=ObligationKind.INVARIANCE,
                vars=closed.state_vars,
                region=closed.state_space,
                claim=lie_derivative(B, closed),
                relation=Relation.LT_ZERO,
                level_set=None if strengthened else B,
            )
        )
    else:
        obligations.append(
            ProofObligation(
                kind=ObligationKind.INVARIANCE,
                vars=closed.state_vars,
                region=closed.state_space,
                claim=discrete_difference(B, closed),
                relation=Relation.LE_ZERO,
            )
        )
    return obligations
