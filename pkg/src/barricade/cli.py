"""Command-line entry points.

    barricade verify SPEC --barrier EXPR [--controllers "e0, e1, ..."]
    barricade synthesize SPEC --cassette replay:PATH [--out FILE] [...]
    barricade bench DIR [--db FILE] [--out DIR] [--jobs N] [...]
    barricade db {list | add | seed} --db FILE [...]

Exit status 0 means a fully proved certificate (verify/synthesize); any
failure, partial result, or error exits nonzero.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import agents, bench, llm, orchestrator, smt
from .conditions import BarrierCandidate
from .expr import parse_expression
from .llm import split_top_level
from .sampler import default_fallback_box
from .smt import SolverStatus
from .system import Rect, load_system

__all__ = ["main"]


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--k", type=int, default=5, help="max main iterations (default 5)")
    p.add_argument("--r", type=int, default=4, help="max refinements per iteration (default 4)")
    p.add_argument("--samples", type=int, default=5000, help="sample points per set (default 5000)")
    p.add_argument("--seed", type=int, default=0, help="sampling seed (default 0)")
    p.add_argument("--timeout", type=int, default=120_000, help="per-obligation solver timeout in ms")
    p.add_argument("--taylor-order", type=int, default=7, help="Taylor order for transcendental claims")
    p.add_argument(
        "--solvers",
        default=None,
        help="comma-separated solver preference subset (of z3,cvc5,yices)",
    )
    p.add_argument(
        "--box",
        default=None,
        help="fallback sampling box for unbounded state spaces, as lo:hi[,lo:hi...] per dimension",
    )
    p.add_argument("--global-timeout", type=float, default=1200.0, help="whole-problem budget in seconds")


def _parse_box(text: str | None, dim: int) -> Rect | None:
    if text is None:
        return None
    parts = text.split(",")
    if len(parts) == 1:
        parts = parts * dim
    if len(parts) != dim:
        raise SystemExit(f"--box needs 1 or {dim} lo:hi ranges, got {len(parts)}")
    lo, hi = [], []
    for part in parts:
        try:
            l, h = part.split(":")
            lo.append(float(l))
            hi.append(float(h))
        except ValueError:
            raise SystemExit(f"bad --box range {part!r}; expected lo:hi") from None
    return Rect(tuple(lo), tuple(hi))


def _solver_tuple(text: str | None) -> tuple[str, ...] | None:
    if text is None:
        return None
    names = tuple(n.strip() for n in text.split(",") if n.strip())
    for n in names:
        if n not in smt.SOLVER_NAMES:
            raise SystemExit(f"unknown solver {n!r} (choose from {', '.join(smt.SOLVER_NAMES)})")
    return names


def _config_from_args(args) -> orchestrator.SynthesisConfig:
    return orchestrator.SynthesisConfig(
        k=args.k,
        r=args.r,
        n_samples=args.samples,
        seed=args.seed,
        solver_timeout_ms=args.timeout,
        taylor_order=args.taylor_order,
        solvers=_solver_tuple(args.solvers),
        global_timeout_s=args.global_timeout,
        fallback_box=None,  # filled per system below
    )


def _session_from_args(args) -> llm.LLMSession:
    spec = args.cassette
    if spec is None:
        config = llm.LLMConfig.from_env()
        if not config.endpoint:
            raise SystemExit(
                "no LLM configured: set BARRICADE_LLM_ENDPOINT (and _API_KEY, _MODEL) "
                "or pass --cassette replay:PATH"
            )
        return llm.LLMSession("live", client=llm.HttpChatClient(config))
    if spec.startswith("replay:"):
        return llm.LLMSession("replay", cassette_path=spec[len("replay:"):])
    if spec.startswith("record:"):
        config = llm.LLMConfig.from_env()
        if not config.endpoint:
            raise SystemExit("record mode needs a live LLM endpoint configured")
        return llm.LLMSession(
            "record", client=llm.HttpChatClient(config), cassette_path=spec[len("record:"):]
        )
    raise SystemExit("--cassette must be record:PATH or replay:PATH")


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------


def cmd_verify(args) -> int:
    try:
        s = load_system(args.spec)
    except OSError as exc:
        print(f"error: cannot read spec: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    try:
        barrier = parse_expression(args.barrier, s.state_vars)
        controllers = None
        if args.controllers:
            pieces = split_top_level(args.controllers)
            if len(pieces) != len(s.control_vars):
                print(
                    f"error: system has {len(s.control_vars)} control input(s), "
                    f"got {len(pieces)} controller expression(s)",
                    file=sys.stderr,
                )
                return 2
            controllers = {
                u: parse_expression(text, s.state_vars)
                for u, text in zip(s.control_vars, pieces)
            }
        candidate = BarrierCandidate(barrier, controllers)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    config = smt.FormalConfig(
        timeout_ms=args.timeout,
        policy=smt.TranscendentalPolicy("taylor", args.taylor_order),
        solvers=_solver_tuple(args.solvers),
    )
    registry = smt.get_registry()
    if not registry.available:
        print("error: no SMT solver found (need z3, cvc5, or yices-smt2 on PATH)", file=sys.stderr)
        return 2
    report = smt.formal_check(s, candidate, config=config, registry=registry)
    for kind, result in report.results.items():
        line = f"{kind.value:<11} {result.status.value}"
        if result.status == SolverStatus.COUNTEREXAMPLE and result.model:
            point = ", ".join(f"{v}={result.model.get(v, 0.0):.6g}" for v in s.state_vars)
            line += f"  at ({point})"
        elif result.status == SolverStatus.ERROR and result.stderr:
            line += f"  ({result.stderr})"
        print(line)
    print("valid" if report.valid else "not valid")
    return 0 if report.valid else 1


# ---------------------------------------------------------------------------
# synthesize
# ---------------------------------------------------------------------------


def _run_problem(spec_path, session, db, args):
    import dataclasses

    s = load_system(spec_path)
    config = _config_from_args(args)
    box = _parse_box(args.box, s.n)
    if box is not None:
        config = dataclasses.replace(config, fallback_box=box)
    log_path = Path(args.out).with_suffix(".log.jsonl") if args.out else None
    logger = orchestrator.RunLogger(path=log_path) if log_path else orchestrator.RunLogger()
    try:
        outcome = orchestrator.run(s, session, db=db, config=config, logger=logger)
    finally:
        logger.close()
    return outcome


def cmd_synthesize(args) -> int:
    try:
        session = _session_from_args(args)
        db = agents.RetrievalDatabase(args.db)
        outcome = _run_problem(args.spec, session, db, args)
    except (llm.LLMError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    doc = outcome.to_dict()
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    print(f"status: {outcome.status} (score {outcome.score:.3f})", file=sys.stderr)
    return 0 if outcome.status == "valid" else 1


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------


def cmd_bench(args) -> int:
    directory = Path(args.directory)
    db = agents.RetrievalDatabase(args.db)
    out_dir = Path(args.out) if args.out else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)

    def run_one(spec_path: Path) -> dict:
        if args.cassette_dir:
            cassette = Path(args.cassette_dir) / f"{spec_path.stem}.jsonl"
            session = llm.LLMSession("replay", cassette_path=cassette)
        else:
            session = _session_from_args(args)
        outcome = _run_problem(spec_path, session, db, args)
        doc = outcome.to_dict()
        if out_dir:
            (out_dir / f"{spec_path.stem}.json").write_text(
                json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8"
            )
        return doc

    try:
        report = bench.run_directory(directory, run_one, jobs=args.jobs)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    table = bench.render_text_table(report)
    print(table)
    if out_dir:
        (out_dir / "report.json").write_text(
            json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        (out_dir / "report.txt").write_text(table + "\n", encoding="utf-8")
    return 0 if report.solved == report.total else 1


# ---------------------------------------------------------------------------
# db
# ---------------------------------------------------------------------------


def cmd_db(args) -> int:
    db = agents.RetrievalDatabase(args.db)
    if args.action == "list":
        for i, record in enumerate(db.records, 1):
            controllers = f" | u(x): {', '.join(record.controllers)}" if record.controllers else ""
            print(f"{i}. [{record.features.key()}] B(x): {record.barrier}{controllers}")
        print(f"{len(db)} record(s)")
        return 0
    if args.action == "add":
        if not (args.spec and args.barrier):
            print("error: db add needs --spec and --barrier", file=sys.stderr)
            return 2
        s = load_system(args.spec)
        barrier = parse_expression(args.barrier, s.state_vars)
        controllers = None
        if args.controllers:
            pieces = split_top_level(args.controllers)
            controllers = {
                u: parse_expression(t, s.state_vars)
                for u, t in zip(s.control_vars, pieces)
            }
        db.store(agents.record_for(s, BarrierCandidate(barrier, controllers)))
        print(f"stored; database now holds {len(db)} record(s)")
        return 0
    if args.action == "seed":
        if not args.results:
            print("error: db seed needs --results DIR of result files", file=sys.stderr)
            return 2
        added = 0
        for result_path in sorted(Path(args.results).glob("*.json")):
            doc = json.loads(result_path.read_text(encoding="utf-8"))
            if doc.get("status") != "valid" or "barrier" not in doc:
                continue
            spec_path = Path(args.specs or ".") / f"{result_path.stem}.json"
            if not spec_path.exists():
                continue
            s = load_system(spec_path)
            barrier = parse_expression(doc["barrier"], s.state_vars)
            controllers = None
            if doc.get("controllers"):
                controllers = {
                    u: parse_expression(t, s.state_vars)
                    for u, t in doc["controllers"].items()
                }
            db.store(agents.record_for(s, BarrierCandidate(barrier, controllers)))
            added += 1
        print(f"seeded {added} record(s); database now holds {len(db)}")
        return 0
    print(f"error: unknown db action {args.action!r}", file=sys.stderr)
    return 2


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="barricade",
        description="Barrier-certificate synthesis and verification for dynamical systems",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="formally verify a given barrier/controller pair")
    p.add_argument("spec", help="system spec file (JSON)")
    p.add_argument("--barrier", required=True, help="barrier expression")
    p.add_argument("--controllers", default=None, help="comma-separated controller expressions")
    p.add_argument("--timeout", type=int, default=120_000)
    p.add_argument("--taylor-order", type=int, default=7)
    p.add_argument("--solvers", default=None)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("synthesize", help="search for a certificate with the full loop")
    p.add_argument("spec", help="system spec file (JSON)")
    p.add_argument("--cassette", default=None, help="record:PATH or replay:PATH")
    p.add_argument("--db", default=None, help="retrieval database file (JSONL)")
    p.add_argument("--out", default=None, help="result file path")
    _add_common_flags(p)
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("bench", help="run every problem in a directory")
    p.add_argument("directory", help="directory of *.json system specs")
    p.add_argument("--cassette-dir", default=None, help="per-problem replay cassettes NAME.jsonl")
    p.add_argument("--cassette", default=None, help="shared record:/replay: cassette")
    p.add_argument("--db", default=None, help="retrieval database file (shared across problems)")
    p.add_argument("--out", default=None, help="output directory for results and the report")
    p.add_argument("--jobs", type=int, default=1, help="parallel workers (default 1)")
    _add_common_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("db", help="inspect or seed the retrieval database")
    p.add_argument("action", choices=["list", "add", "seed"])
    p.add_argument("--db", required=True)
    p.add_argument("--spec", default=None)
    p.add_argument("--barrier", default=None)
    p.add_argument("--controllers", default=None)
    p.add_argument("--results", default=None, help="directory of result files (seed)")
    p.add_argument("--specs", default=None, help="directory of spec files (seed)")
    p.set_defaults(func=cmd_db)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
