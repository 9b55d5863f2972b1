"""Benchmark harness: run a directory of problems, aggregate the results.

The aggregate view is the iteration x refinement matrix: how many
problems were solved at main iteration 1, 2, or 3+, needing zero
refinements, one or two (coefficient), or three or four (structural).
Row and column totals plus the overall success rate come along for free
and are checked for mutual consistency.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

__all__ = [
    "ITERATION_BANDS",
    "REFINEMENT_BANDS",
    "BenchRow",
    "BenchReport",
    "build_bench_report",
    "render_text_table",
    "run_directory",
]

ITERATION_BANDS = ("I1", "I2", "I3+")
REFINEMENT_BANDS = ("R0", "R1-2", "R3-4")


@dataclass(frozen=True)
class BenchRow:
    name: str
    status: str
    score: float
    iteration: int
    refinement: int

    @property
    def solved(self) -> bool:
        return self.status == "valid"

    def iteration_band(self) -> str:
        return "I1" if self.iteration == 1 else ("I2" if self.iteration == 2 else "I3+")

    def refinement_band(self) -> str:
        if self.refinement == 0:
            return "R0"
        return "R1-2" if self.refinement <= 2 else "R3-4"


@dataclass(frozen=True)
class BenchReport:
    rows: tuple[BenchRow, ...]
    matrix: dict[str, dict[str, int]]

    @property
    def total(self) -> int:
        return len(self.rows)

    @property
    def solved(self) -> int:
        return sum(r.solved for r in self.rows)

    @property
    def success_rate(self) -> float:
        return self.solved / self.total if self.total else 0.0

    def row_totals(self) -> dict[str, int]:
        return {i: sum(self.matrix[i].values()) for i in ITERATION_BANDS}

    def column_totals(self) -> dict[str, int]:
        return {
            r: sum(self.matrix[i][r] for i in ITERATION_BANDS) for r in REFINEMENT_BANDS
        }

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "solved": self.solved,
            "success_rate": self.success_rate,
            "matrix": self.matrix,
            "row_totals": self.row_totals(),
            "column_totals": self.column_totals(),
            "problems": [
                {
                    "name": r.name,
                    "status": r.status,
                    "score": r.score,
                    "iteration": r.iteration,
                    "refinement": r.refinement,
                }
                for r in self.rows
            ],
        }


def build_bench_report(rows: Sequence[BenchRow]) -> BenchReport:
    matrix = {i: {r: 0 for r in REFINEMENT_BANDS} for i in ITERATION_BANDS}
    for row in rows:
        if row.solved:
            matrix[row.iteration_band()][row.refinement_band()] += 1
    report = BenchReport(rows=tuple(rows), matrix=matrix)
    assert sum(report.row_totals().values()) == report.solved
    assert sum(report.column_totals().values()) == report.solved
    return report


def render_text_table(report: BenchReport) -> str:
    """Plain-text iteration x refinement table with totals."""

    def pct(n: int) -> str:
        return f"{100.0 * n / report.solved:.1f}%" if report.solved else "-"

    header = ["", *REFINEMENT_BANDS, "Total"]
    lines = [" | ".join(f"{h:>8}" for h in header)]
    lines.append("-" * len(lines[0]))
    for i in ITERATION_BANDS:
        row_total = sum(report.matrix[i].values())
        cells = [i, *(str(report.matrix[i][r]) for r in REFINEMENT_BANDS)]
        cells.append(f"{row_total} ({pct(row_total)})")
        lines.append(" | ".join(f"{c:>8}" for c in cells))
    lines.append("-" * len(lines[0]))
    col_totals = report.column_totals()
    cells = ["Total", *(f"{col_totals[r]} ({pct(col_totals[r])})" for r in REFINEMENT_BANDS)]
    cells.append(str(report.solved))
    lines.append(" | ".join(f"{c:>8}" for c in cells))
    lines.append("")
    lines.append(
        f"Solved {report.solved}/{report.total} "
        f"(success rate {100.0 * report.success_rate:.1f}%)"
    )
    return "\n".join(lines)


def rows_from_results(results: Sequence[dict], names: Sequence[str]) -> list[BenchRow]:
    return [
        BenchRow(
            name=name,
            status=res["status"],
            score=res.get("score", 0.0),
            iteration=res.get("iteration", 0),
            refinement=res.get("refinement", 0),
        )
        for name, res in zip(names, results)
    ]


def run_directory(
    directory: str | Path,
    run_one,
    jobs: int = 1,
) -> BenchReport:
    """Apply `run_one(spec_path) -> result dict` to every problem file.

    Problems are the *.json files of `directory`, in sorted order.  A
    crashing problem is contained and recorded as a failure row.
    """
    directory = Path(directory)
    spec_paths = sorted(directory.glob("*.json"))
    if not spec_paths:
        raise FileNotFoundError(f"no spec files (*.json) found in {directory}")

    def safe(path: Path) -> dict:
        try:
            return run_one(path)
        except Exception as exc:  # contained: one bad problem must not kill the run
            return {
                "status": "error",
                "score": 0.0,
                "iteration": 0,
                "refinement": 0,
                "error": f"{type(exc).__name__}: {exc}",
            }

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(safe, spec_paths))
    else:
        results = [safe(p) for p in spec_paths]

    return build_bench_report(rows_from_results(results, [p.stem for p in spec_paths]))
