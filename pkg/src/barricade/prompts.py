"""Prompt templates and rendering.

Every exchange with the language model goes through one of the fixed
templates below.  Rendering is pure textual substitution of the
`{PLACEHOLDER}` sites; nothing else in the template text may change, and
a rendered prompt must not contain any leftover placeholder.

Template ids:

    similarity_select                  pick the most similar solved problem
    synth_first / synth_first_ctrl     first-iteration synthesis
    synth_next / synth_next_ctrl       later-iteration synthesis from failures
    refine_coeff / refine_coeff_ctrl   coefficient-only refinement (r <= 2)
    refine_struct / refine_struct_ctrl structural refinement (r >= 3)
    solver_select                      choose an SMT solver
    timeout_retry                      retry after a solver timeout?
    solver_error                       pick an alternative solver
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping, Sequence

__all__ = [
    "PromptInstance",
    "TemplateError",
    "TEMPLATES",
    "render",
    "condition_3",
    "context_block",
    "failed_info",
    "failed_attempts_block",
    "refinement_history_block",
    "CONTEXT_NO_MATCH",
]


class TemplateError(Exception):
    """Unknown template or incomplete variable set."""


@dataclass(frozen=True)
class PromptInstance:
    template_id: str
    text: str
    variables: Mapping[str, str]


_PROBLEM = """Main Problem:
- Dynamics: {SYSTEM_DYNAMICS}
- Initial set: {INITIAL_SET}
- Unsafe set: {UNSAFE_SET}"""

_CONDITIONS = """Design a barrier certificate B(x) that satisfies:
1. B(x) <= 0 in initial set
2. B(x) > 0 in unsafe set
3. {CONDITION_3}"""

_REQUIREMENTS = """Requirements:
1. B(x) <= 0 in initial set
2. B(x) > 0 in unsafe set
3. {CONDITION_3}"""

_CONCISE = "Analyze carefully but be concise. Give precise answer without long explanations."

_FORMAT = "Format your response as (don't make it bold):"

_CTRL_SYNTH = """CONTROLLER SYNTHESIS: This system has control inputs {CONTROLLER_PARAMETERS}.

You need to design BOTH:
1. Barrier certificate B(x)
2. Controller expressions for {CONTROLLER_PARAMETERS}

The controller u(x) will be substituted into dynamics to create closed-loop system."""

_CTRL_CRITICAL = """CRITICAL:
- Use ONLY real numbers in both barrier and controller expressions.
  No variables like 'c' or 'ε'.
- Solve specifically for THIS problem with appropriate coefficients.
- Controller must be implementable with realistic actuators
- Ensure controller bounds are reasonable (avoid extremely large values)"""

_CTRL_CONSTRAINTS = """CONTROLLER SYNTHESIS CONSTRAINTS:
1. Controller parameters: {CONTROLLER_PARAMETERS}
2. Use smooth, bounded functions (avoid extremely large values)
3. Controller must work harmoniously with the barrier
4. Ensure closed-loop stability"""


TEMPLATES: dict[str, str] = {
    "similarity_select": """TARGET PROBLEM:
Dynamics: {SYSTEM_DYNAMICS}
Initial set: {INITIAL_SET}
Unsafe set: {UNSAFE_SET}

COMPATIBLE CANDIDATES (all are fundamentally similar):
{CANDIDATES_TEXT}

Which candidate has the most similar problem type and structure to the target problem?

Focus on: system structure, problem type, and mathematical pattern similarity.

Answer with only the candidate number (1, 2, 3, etc.):""",
    # ------------------------------------------------------------------
    "synth_first": f"""{{CONTEXT}}

{_PROBLEM}

{_CONDITIONS}

Be very careful - don't make it more complex than needed.

CRITICAL: Use ONLY real numbers in the barrier expression. No variables like
'c' or 'ε'.

Solve specifically for THIS problem with appropriate coefficients.

{_CONCISE}

{_FORMAT}

BARRIER: [expression with numbers only]""",
    # ------------------------------------------------------------------
    "synth_first_ctrl": f"""{{CONTEXT}}

{_PROBLEM}

{_CTRL_SYNTH}

{_CONDITIONS}

Be very careful - don't make it more complex than needed.

Design both barrier certificate B(x) AND controller expressions that work
together to satisfy all conditions.

{_CTRL_CRITICAL}

{_CONCISE}

{_FORMAT}

BARRIER: [barrier expression with numbers only]
CONTROLLER: [controller expressions for each parameter, comma-separated]""",
    # ------------------------------------------------------------------
    "synth_next": f"""Previous attempts failed:
{{FAILED_ATTEMPTS}}

Improve the barrier structure to satisfy all conditions.

{_PROBLEM}

{_CONDITIONS}

Learn from previous failures. You can change structure of TEMPLATE if needed. In this step, the goal is to improve the structure of the templates, not refine the parameters.

CRITICAL: Use ONLY real numbers in the barrier expression. No variables like 'c' or 'ε'. Solve specifically for THIS problem with appropriate coefficients.

{_CONCISE}

{_FORMAT}

BARRIER: [expression with numbers only]""",
    # ------------------------------------------------------------------
    "synth_next_ctrl": f"""Previous barrier + controller attempts failed:
{{FAILED_ATTEMPTS}}

Improve the barrier + controller structure to satisfy all conditions.

{_PROBLEM}

{_CTRL_SYNTH}

{_CONDITIONS}

Learn from previous failures. You can change structure of TEMPLATE if needed. In this step, the goal is to improve the structure of the templates, not refine the parameters.

Design both barrier certificate B(x) AND controller expressions that work
together to satisfy all conditions.

{_CTRL_CRITICAL}

{_CONCISE}

{_FORMAT}

BARRIER: [barrier expression with numbers only]
CONTROLLER: [controller expressions for each parameter, comma-separated]""",
    # ------------------------------------------------------------------
    "refine_coeff": f"""Original barrier: {{BARRIER}} {{FAILED_INFO}}

{{REFINEMENT_HISTORY}}

Problem:
- Dynamics: {{SYSTEM_DYNAMICS}}
- Initial set: {{INITIAL_SET}}
- Unsafe set: {{UNSAFE_SET}}

Try a different coefficient distribution. You can redistribute the coefficients
between ALL terms (sometimes it is necessary for all terms to have different
coefficients), but DO NOT change structure

{_REQUIREMENTS}

{_CONCISE}

{_FORMAT}

REFINED_BARRIER: [expression with numbers only]""",
    # ------------------------------------------------------------------
    "refine_coeff_ctrl": f"""Original barrier: {{BARRIER}}, Original controller: {{CONTROLLER}}, {{FAILED_INFO}}

{{REFINEMENT_HISTORY}}

Problem:
- Dynamics: {{SYSTEM_DYNAMICS}}
- Initial set: {{INITIAL_SET}}
- Unsafe set: {{UNSAFE_SET}}

Try a different coefficient distribution for both barrier and controller. You can
redistribute the coefficients between ALL terms, but DO NOT change structure

{_CTRL_CONSTRAINTS}

{_REQUIREMENTS}

{_CONCISE}

{_FORMAT}

REFINED_BARRIER: [barrier expression with numbers only]
REFINED_CONTROLLER: [controller expressions for each parameter, comma-separated]""",
    # ------------------------------------------------------------------
    "refine_struct": f"""Original barrier: {{BARRIER}} {{FAILED_INFO}}

{{REFINEMENT_HISTORY}}

Problem:
- Dynamics: {{SYSTEM_DYNAMICS}}
- Initial set: {{INITIAL_SET}}
- Unsafe set: {{UNSAFE_SET}}

Previous coefficient adjustments failed. Consider changing the barrier structure
if needed while keeping the same polynomial degree. You can modify the terms or
their combinations.

{_REQUIREMENTS}

{_CONCISE}

{_FORMAT}

REFINED_BARRIER: [expression with numbers only]""",
    # ------------------------------------------------------------------
    "refine_struct_ctrl": f"""Original barrier: {{BARRIER}}, Original controller: {{CONTROLLER}}, {{FAILED_INFO}}

{{REFINEMENT_HISTORY}}

Problem:
- Dynamics: {{SYSTEM_DYNAMICS}}
- Initial set: {{INITIAL_SET}}
- Unsafe set: {{UNSAFE_SET}}

Previous coefficient adjustments failed. Consider changing the barrier and/or
controller structure if needed while keeping the same polynomial degree. You can
modify the terms or their combinations.

{_CTRL_CONSTRAINTS}

{_REQUIREMENTS}

{_CONCISE}

{_FORMAT}

REFINED_BARRIER: [barrier expression with numbers only]
REFINED_CONTROLLER: [controller expressions for each parameter, comma-separated]""",
    # ------------------------------------------------------------------
    "solver_select": """Select the best SMT solver based on barrier expression and the dynamical system.

PROBLEM:
Dynamics: {SYSTEM_DYNAMICS}
Barrier: {BARRIER_EXPRESSION}

AVAILABLE SOLVERS:
- cvc5
- z3
- yices

Without long explanations, give a short and precise answer.

Format your response as:

SOLVER: [solver name]""",
    # ------------------------------------------------------------------
    "timeout_retry": """Solver {SOLVER_NAME} timed out after {TIMEOUT_MS}ms.

PROBLEM:
Dynamics: {SYSTEM_DYNAMICS}
Barrier: {BARRIER_EXPRESSION}

Given the above information, should we attempt again with more time, or is this
barrier too complex to verify?

Without long explanations, give a short and precise answer.

Format your response as:

RETRY: yes or no
TIMEOUT_MULTIPLIER: [number] (only if RETRY is yes, e.g., 1.5 or 2.0)""",
    # ------------------------------------------------------------------
    "solver_error": """Solver {SOLVER_NAME} failed during verification.

ERROR: {ERROR_TYPE}
MESSAGE: {ERROR_MESSAGE}

PROBLEM:
Dynamics: {SYSTEM_DYNAMICS}
Barrier: {BARRIER_EXPRESSION}

REMAINING SOLVERS:
{REMAINING_SOLVERS_LIST}

Select a different solver to try.

Without long explanations, give a short and precise answer.

Format your response as:

NEXT_SOLVER: [solver name]""",
}


CONTEXT_NO_MATCH = "No similar problems found. Analyze this problem fresh."

_CONTEXT_MATCH = """Related problem found:
EXAMPLE: {SIMILAR_PROBLEM}
B(x): {SIMILAR_BARRIER}

WARNING: This is just an example - your solution may be
completely different NOT ONLY in terms of coefficients,
BUT ALSO in format and structure. You may make mistakes,
so do not consider this as a solution. Please don't copy it."""


def context_block(similar_problem: str | None, similar_barrier: str | None) -> str:
    """The retrieval context block for first-iteration synthesis."""
    if similar_problem is None:
        return CONTEXT_NO_MATCH
    return _CONTEXT_MATCH.replace("{SIMILAR_PROBLEM}", similar_problem).replace(
        "{SIMILAR_BARRIER}", similar_barrier or ""
    )


def condition_3(time_domain: str) -> str:
    if time_domain == "discrete":
        return "B(f(x)) - B(x) <= 0 for all x in the state space"
    return "∇B(x) · f(x) < 0 on the boundary"


def failed_info(failed_conditions: Sequence[str], n_counterexamples: int) -> str:
    names = ", ".join(failed_conditions) if failed_conditions else "none"
    return f"failed: {names} ({n_counterexamples} counter-examples)"


def failed_attempts_block(attempts: Sequence[tuple[str, str | None, str]]) -> str:
    """Lines for the synth_next history: (barrier, controller or None, failed info)."""
    lines = []
    for barrier, controller, info in attempts:
        if controller is not None:
            lines.append(f"- Barrier: {barrier}, Controller: {controller}, {info}")
        else:
            lines.append(f"- Tried: {barrier} {info}")
    return "\n".join(lines)


def refinement_history_block(history: Sequence[tuple[str, str]]) -> str:
    """Lines "Refinement k: <barrier> <failed info>" for refine prompts."""
    return "\n".join(
        f"Refinement {i}: {barrier} {info}" for i, (barrier, info) in enumerate(history, 1)
    )


_PLACEHOLDER_RE = re.compile(r"\{([A-Z][A-Z_0-9]*)\}")


def placeholders(template_id: str) -> frozenset[str]:
    try:
        template = TEMPLATES[template_id]
    except KeyError:
        raise TemplateError(f"unknown template {template_id!r}") from None
    return frozenset(_PLACEHOLDER_RE.findall(template))


def render(template_id: str, variables: Mapping[str, str]) -> PromptInstance:
    """Instantiate a template by exact textual substitution.

    Raises :class:`TemplateError` when a placeholder has no value (extra
    variables are ignored).  The rendered text is guaranteed to contain no
    unreplaced placeholder token.
    """
    needed = placeholders(template_id)
    missing = needed - set(variables)
    if missing:
        raise TemplateError(
            f"template {template_id!r} is missing value(s) for {sorted(missing)}"
        )
    # Single pass, so placeholder-shaped text inside a value is never
    # itself substituted.
    text = _PLACEHOLDER_RE.sub(
        lambda m: str(variables[m.group(1)]), TEMPLATES[template_id]
    )
    return PromptInstance(
        template_id=template_id,
        text=text,
        variables={k: str(v) for k, v in variables.items() if k in needed},
    )
