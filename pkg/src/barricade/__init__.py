"""barricade: barrier-certificate synthesis and verification.

A propose-check-refine loop for safety certificates of continuous- and
discrete-time dynamical systems.  Candidates come from a language model
guided by retrieval over previously solved problems; every candidate is
screened on sampled points and then proved (or refuted) by an external
SMT solver on the negated barrier conditions.  Controlled systems get a
feedback law co-synthesized with the certificate.
"""

from .conditions import (
    BarrierCandidate,
    CandidateOrigin,
    ProofObligation,
    build_obligations,
    close_loop,
    discrete_difference,
    lie_derivative,
)
from .expr import (
    Expression,
    classify,
    differentiate,
    evaluate,
    parse_expression,
    substitute,
    taylor_polynomial,
    to_string,
)
from .orchestrator import SynthesisConfig, SynthesisOutcome, run
from .sampler import SampleReport, sample_check, sample_region
from .smt import FormalReport, formal_check, get_registry
from .system import (
    DynamicalSystem,
    ProblemFeatures,
    extract_features,
    load_system,
    parse_system,
    region_contains,
    save_system,
)

__version__ = "0.1.0"
