"""Stage-one verification: falsify candidates on sampled points.

Cheap numeric screening that runs before any SMT solver is spawned.  Each
obligation is checked on N points drawn from its region; the continuous
invariance condition, which lives on the measure-zero level set B = 0, is
checked on a band of near-boundary samples and on points bisected onto
the level set along sign-changing segments.

Non-strict inequalities get a 1e-9 slack so float noise cannot fail a
mathematically tight candidate; strict inequalities are checked strictly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .conditions import (
    BarrierCandidate,
    ObligationKind,
    ProofObligation,
    Relation,
    build_obligations,
    close_loop,
)
from .expr import to_callable
from .system import (
    All,
    Ball,
    ComplementOfBall,
    DynamicalSystem,
    Rect,
    Region,
    UnionOfRects,
    region_bounding_box,
    region_contains,
    region_dim,
)

__all__ = [
    "SLACK",
    "SampleError",
    "ObligationSample",
    "SampleReport",
    "sample_region",
    "default_fallback_box",
    "sample_check",
]

#: Tolerance absorbed on non-strict inequality checks.
SLACK = 1e-9

#: Stored counterexamples are capped at this many per obligation.
MAX_STORED_VIOLATIONS = 10

#: Band width factor and bisection budget for the continuous boundary check.
BAND_FRACTION = 0.05
BISECTION_SEGMENTS = 50
_REJECTION_FACTOR = 200


class SampleError(Exception):
    """Sampling could not produce the requested points."""


@dataclass(frozen=True)
class ObligationSample:
    kind: ObligationKind
    passed: bool
    violations: tuple[tuple[tuple[float, ...], float], ...]
    n_checked: int
    vacuous: bool = False  # continuous invariance with no boundary point found

    def __post_init__(self):
        assert self.passed == (len(self.violations) == 0)


@dataclass(frozen=True)
class SampleReport:
    obligations: tuple[ObligationSample, ...]
    seed: int
    n_points: int

    @property
    def passed(self) -> bool:
        return all(o.passed for o in self.obligations)

    @property
    def score(self) -> float:
        return sum(o.passed for o in self.obligations) / len(self.obligations)

    def failed_kinds(self) -> list[ObligationKind]:
        return [o.kind for o in self.obligations if not o.passed]


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, stream])))


def _sample_ball(center, radius, n, rng) -> np.ndarray:
    dim = len(center)
    directions = rng.standard_normal((n, dim))
    norms = np.linalg.norm(directions, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    radii = radius * rng.random((n, 1)) ** (1.0 / dim)
    return np.asarray(center) + directions / norms * radii


def _sample_rect(lo, hi, n, rng) -> np.ndarray:
    lo = np.asarray(lo)
    hi = np.asarray(hi)
    return lo + rng.random((n, len(lo))) * (hi - lo)


def sample_region(
    r: Region, n: int, seed: int, fallback_box: Rect, stream: int = 0
) -> np.ndarray:
    """n points of region `r`, deterministic for a fixed (seed, stream).

    Balls are sampled uniformly by norm rescaling, rects per-axis,
    unions by volume-weighted member choice.  Unbounded regions
    (complement-of-ball and the whole space) are sampled inside
    `fallback_box`, by rejection where needed.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = _rng(seed, stream)
    match r:
        case Ball(center, radius):
            return _sample_ball(center, radius, n, rng)
        case Rect(lo, hi):
            return _sample_rect(lo, hi, n, rng)
        case UnionOfRects(members):
            volumes = np.array(
                [math.prod(h - l for l, h in zip(m.lo, m.hi)) for m in members]
            )
            if volumes.sum() == 0:
                volumes = np.ones(len(members))
            choice = rng.choice(len(members), size=n, p=volumes / volumes.sum())
            points = np.empty((n, region_dim(r)))
            for i, m in enumerate(members):
                mask = choice == i
                if mask.any():
                    points[mask] = _sample_rect(m.lo, m.hi, int(mask.sum()), rng)
            return points
        case All(_):
            return _sample_rect(fallback_box.lo, fallback_box.hi, n, rng)
        case ComplementOfBall(center, radius):
            collected = []
            remaining = n
            attempts = 0
            while remaining > 0:
                attempts += 1
                if attempts > _REJECTION_FACTOR:
                    raise SampleError(
                        "rejection sampling failed: region barely intersects the "
                        f"fallback box {fallback_box.lo} .. {fallback_box.hi}"
                    )
                batch = _sample_rect(fallback_box.lo, fallback_box.hi, n, rng)
                dist2 = ((batch - np.asarray(center)) ** 2).sum(axis=1)
                keep = batch[dist2 >= radius * radius]
                collected.append(keep[:remaining])
                remaining -= len(keep[:remaining])
            return np.concatenate(collected)
    raise TypeError(f"not a region: {r!r}")


def default_fallback_box(s: DynamicalSystem, inflate: float = 2.0) -> Rect:
    """Bounding box of X_I and X_U, inflated about its center.

    Used to sample unbounded state spaces; override via configuration when
    the interesting dynamics live elsewhere.
    """
    boxes = []
    for region in (s.initial_set, s.unsafe_set):
        if isinstance(region, ComplementOfBall):
            # The complement itself is unbounded; its inner ball sets the
            # scale at which the set becomes relevant.
            region = Ball(region.center, region.radius)
        box = region_bounding_box(region)
        if box is not None:
            boxes.append(box)
    if not boxes:
        raise SampleError(
            f"system '{s.name}' has no bounded initial/unsafe set to derive a "
            "sampling box from; supply one explicitly"
        )
    lo = np.min([b.lo for b in boxes], axis=0)
    hi = np.max([b.hi for b in boxes], axis=0)
    center = (lo + hi) / 2
    half = (hi - lo) / 2
    half[half == 0] = 1.0
    return Rect(tuple(center - inflate * half), tuple(center + inflate * half))


def _collect(
    kind: ObligationKind,
    points: np.ndarray,
    values: np.ndarray,
    ok_mask: np.ndarray,
    vacuous: bool = False,
) -> ObligationSample:
    bad = np.flatnonzero(~ok_mask)
    violations = tuple(
        (tuple(float(v) for v in points[i]), float(values[i]))
        for i in bad[:MAX_STORED_VIOLATIONS]
    )
    return ObligationSample(
        kind=kind,
        passed=len(bad) == 0,
        violations=violations,
        n_checked=len(points),
        vacuous=vacuous,
    )


def _finite_ok(values: np.ndarray, ok: np.ndarray) -> np.ndarray:
    # Evaluation faults (NaN/inf) count as violations at that point.
    return ok & np.isfinite(values)


def _check_invariance_continuous(
    obligation: ProofObligation,
    X: np.ndarray,
    seed: int,
) -> ObligationSample:
    assert obligation.level_set is not None
    b_fn = to_callable(obligation.level_set, obligation.vars)
    lie_fn = to_callable(obligation.claim, obligation.vars)

    b_vals = b_fn(X)
    finite = np.isfinite(b_vals)
    scale = np.abs(b_vals[finite]).max() if finite.any() else 1.0
    band = BAND_FRACTION * (scale if scale > 0 else 1.0)
    near = finite & (np.abs(b_vals) <= band)

    boundary_points = X[near]
    if not near.any():
        segments = _bisect_to_level_set(b_fn, X, b_vals, finite, seed)
        if segments is None:
            # No sign change anywhere: the level set does not meet the
            # sampled region, so the condition holds vacuously here.
            return ObligationSample(
                kind=obligation.kind,
                passed=True,
                violations=(),
                n_checked=0,
                vacuous=True,
            )
        boundary_points = segments

    lie_vals = lie_fn(boundary_points)
    ok = _finite_ok(lie_vals, lie_vals < 0.0)
    return _collect(obligation.kind, boundary_points, lie_vals, ok)


def _bisect_to_level_set(b_fn, X, b_vals, finite, seed) -> np.ndarray | None:
    neg = np.flatnonzero(finite & (b_vals < 0))
    pos = np.flatnonzero(finite & (b_vals > 0))
    if len(neg) == 0 or len(pos) == 0:
        return None
    rng = _rng(seed, 99)
    k = min(BISECTION_SEGMENTS, len(neg), len(pos))
    lo_pts = X[rng.choice(neg, size=k, replace=len(neg) < k)]
    hi_pts = X[rng.choice(pos, size=k, replace=len(pos) < k)]
    for _ in range(80):
        mid = (lo_pts + hi_pts) / 2
        mid_vals = b_fn(mid)
        below = mid_vals < 0
        lo_pts = np.where(below[:, None], mid, lo_pts)
        hi_pts = np.where(below[:, None], hi_pts, mid)
    return (lo_pts + hi_pts) / 2


def sample_check(
    s: DynamicalSystem,
    c: BarrierCandidate,
    n: int = 5000,
    seed: int = 0,
    fallback_box: Rect | None = None,
) -> SampleReport:
    """Check all three obligations of candidate `c` on n points per set.

    Deterministic for fixed (s, c, n, seed).  Points violating an
    obligation are recorded with the offending left-hand-side value,
    at most :data:`MAX_STORED_VIOLATIONS` per obligation, in sample order.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    closed = close_loop(s, c)
    obligations = build_obligations(s, c)
    box = fallback_box or default_fallback_box(closed)

    results = []
    for stream, obligation in enumerate(obligations):
        points = sample_region(obligation.region, n, seed, box, stream=stream)
        if obligation.kind == ObligationKind.INVARIANCE and obligation.level_set is not None:
            results.append(_check_invariance_continuous(obligation, points, seed))
            continue
        values = to_callable(obligation.claim, obligation.vars)(points)
        if obligation.relation == Relation.LE_ZERO:
            ok = values <= SLACK
        elif obligation.relation == Relation.GT_ZERO:
            ok = values > -SLACK
        else:
            ok = values < 0.0
        results.append(_collect(obligation.kind, points, values, _finite_ok(values, ok)))

    return SampleReport(obligations=tuple(results), seed=seed, n_points=n)
