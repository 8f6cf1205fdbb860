"""Command line entry points.

Subcommands:
- run: start a research run in a fresh run directory
- resume: continue an interrupted run from its last checkpoint
- inspect-kg / inspect-og: human-readable views of checkpointed state
- chains: show the gap chains proposed and selected at an iteration
- simulate: paired variant comparison on synthetic corpora

Exit codes: 0 success, 1 usage or configuration error, 2 provider failure,
3 internal error. Credentials for live providers are read from environment
variables only; they are never accepted as flags.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from importlib import resources
from pathlib import Path

from .evidence import citation_token
from .kg import KnowledgeGraph
from .orchestrator import ConfigError, RunConfig, Runner, STATE_FILE
from .providers.base import ProviderError, Providers
from .providers.mock import Fixture, load_fixture
from .providers.parsers import ParseError
from .simulate import run_ablation

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_PROVIDER = 2
EXIT_INTERNAL = 3

_LIVE_ENV_VARS = ("DUALGRAPH_CHAT_API_KEY", "DUALGRAPH_SEARCH_API_KEY")


class _UsageError(Exception):
    pass


class _ArgumentParser(argparse.ArgumentParser):
    # argparse exits 2 on bad flags; this project reserves 2 for provider
    # failures, so usage problems are rerouted through _UsageError.
    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _ArgumentParser:
    parser = _ArgumentParser(prog="dualgraph", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_ArgumentParser)

    run_p = sub.add_parser("run", help="start a research run")
    run_p.add_argument("--query", help="root research question (defaults to the fixture's)")
    run_p.add_argument("--run-dir", required=True, help="directory for checkpoints and outputs")
    run_p.add_argument("--providers", choices=("mock", "live"), default="mock")
    run_p.add_argument("--fixture", help="fixture JSON path (default: bundled demo)")
    run_p.add_argument("--config", help="JSON file with run configuration keys")
    run_p.add_argument("--variant", choices=("dualgraph", "outline-only"))
    run_p.add_argument("--seed", type=int)
    run_p.add_argument("--max-iter", type=int)
    run_p.add_argument("--force", action="store_true", help="overwrite an existing run directory")

    res_p = sub.add_parser("resume", help="continue an interrupted run")
    res_p.add_argument("--run-dir", required=True)
    res_p.add_argument("--providers", choices=("mock", "live"), default="mock")
    res_p.add_argument("--fixture", help="fixture JSON path (default: bundled demo)")

    kg_p = sub.add_parser("inspect-kg", help="print the knowledge graph of a run")
    kg_p.add_argument("--run-dir", required=True)
    kg_p.add_argument("--iter", type=int, dest="iteration")
    kg_p.add_argument("--json", action="store_true", help="print the raw checkpoint file")

    og_p = sub.add_parser("inspect-og", help="print the outline of a run")
    og_p.add_argument("--run-dir", required=True)
    og_p.add_argument("--iter", type=int, dest="iteration")

    ch_p = sub.add_parser("chains", help="print the gap chains of an iteration")
    ch_p.add_argument("--run-dir", required=True)
    ch_p.add_argument("--iter", type=int, dest="iteration")

    sim_p = sub.add_parser("simulate", help="run the paired variant comparison")
    sim_p.add_argument("--seeds", type=int, default=10, help="number of paired seeds")
    sim_p.add_argument("--out", help="directory for ablation.csv and ablation.json")
    sim_p.add_argument("--communities", type=int, default=3)
    sim_p.add_argument("--cores", type=int, default=2)
    sim_p.add_argument("--concepts", type=int, default=4)
    sim_p.add_argument("--max-iter", type=int, default=12)
    return parser


def _demo_fixture() -> Fixture:
    ref = resources.files("dualgraph") / "fixtures" / "demo" / "fixture.json"
    with resources.as_file(ref) as path:
        return load_fixture(path)


def _load_fixture_arg(fixture_path: str | None) -> Fixture:
    if fixture_path is None:
        return _demo_fixture()
    path = Path(fixture_path)
    if not path.exists():
        raise _UsageError(f"fixture not found: {path}")
    return load_fixture(path)


def _live_providers() -> Providers:
    missing = [v for v in _LIVE_ENV_VARS if not os.environ.get(v)]
    if missing:
        raise _UsageError(
            "live providers need credentials in environment variables: "
            + ", ".join(missing)
        )
    raise ProviderError(
        "no live provider adapter is bundled with this build; "
        "run with --providers mock and a fixture"
    )


def _resolve_config(fixture: Fixture, args) -> RunConfig:
    merged = dict(fixture.config)
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise _UsageError(f"config file not found: {path}")
        try:
            overrides = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise _UsageError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(overrides, dict):
            raise _UsageError("config file must hold a JSON object")
        merged.update(overrides)
    if args.variant is not None:
        merged["variant"] = args.variant
    if args.seed is not None:
        merged["seed"] = args.seed
    if args.max_iter is not None:
        merged["max_iter"] = args.max_iter
    config = RunConfig.from_dict(merged)
    if config.variant.value != fixture.variant:
        raise _UsageError(
            f"fixture was recorded for variant {fixture.variant!r}, "
            f"requested {config.variant.value!r}"
        )
    return config


def _cmd_run(args) -> int:
    if args.providers == "live":
        _live_providers()
    fixture = _load_fixture_arg(args.fixture)
    config = _resolve_config(fixture, args)
    query = args.query or fixture.root_query
    run_dir = Path(args.run_dir)
    if (run_dir / STATE_FILE).exists() and not args.force:
        raise _UsageError(
            f"run directory {run_dir} already holds a run; pass --force to overwrite"
        )
    runner = Runner(config, fixture.providers(), run_dir)
    state = runner.start(query)
    print(f"run complete: {state.iteration} iteration(s), stopped={state.stopped}")
    print(f"report: {run_dir / 'report.md'}")
    return EXIT_OK


def _cmd_resume(args) -> int:
    if args.providers == "live":
        _live_providers()
    run_dir = Path(args.run_dir)
    if not (run_dir / STATE_FILE).exists():
        raise _UsageError(f"no run to resume in {run_dir}")
    fixture = _load_fixture_arg(args.fixture)
    runner = Runner(RunConfig(), fixture.providers(), run_dir)
    state = runner.resume()
    print(f"run complete: {state.iteration} iteration(s), stopped={state.stopped}")
    print(f"report: {run_dir / 'report.md'}")
    return EXIT_OK


def _checkpoint_file(run_dir: Path, stem: str, ext: str, iteration: int | None) -> Path:
    if iteration is None:
        path = run_dir / f"{stem}.{ext}"
    else:
        path = run_dir / f"{stem}_iter{iteration}.{ext}"
    if not path.exists():
        raise _UsageError(f"no checkpoint file {path}")
    return path


def _cmd_inspect_kg(args) -> int:
    path = _checkpoint_file(Path(args.run_dir), "kg", "json", args.iteration)
    text = path.read_text(encoding="utf-8")
    if args.json:
        sys.stdout.write(text)
        return EXIT_OK
    kg = KnowledgeGraph.from_document(text)
    cores = sum(1 for n in kg.nodes.values() if n.is_core_entity)
    communities = {n.community_id for n in kg.nodes.values() if n.community_id is not None}
    clusters = {n.cluster_id for n in kg.nodes.values() if n.cluster_id is not None}
    print(f"nodes: {len(kg.nodes)} ({cores} core, {len(kg.nodes) - cores} concept)")
    print(f"edges: {len(kg.edges)}")
    print(f"communities: {len(communities)}  clusters: {len(clusters)}")
    for nid in kg.node_ids():
        node = kg.nodes[nid]
        kind = "core" if node.is_core_entity else "concept"
        print(
            f"  {nid} [{kind}] {node.name}"
            f" (cluster {node.cluster_id}, community {node.community_id})"
        )
    for eid in kg.edge_ids():
        edge = kg.edges[eid]
        cited = ", ".join(citation_token(i) for i in sorted(edge.evidence_ids))
        print(f"  {eid} {kg.representation(eid)} [evidence: {cited or 'none'}]")
    return EXIT_OK


def _cmd_inspect_og(args) -> int:
    path = _checkpoint_file(Path(args.run_dir), "outline", "txt", args.iteration)
    sys.stdout.write(path.read_text(encoding="utf-8"))
    sys.stdout.write("\n")
    return EXIT_OK


def _cmd_chains(args) -> int:
    run_dir = Path(args.run_dir)
    iteration = args.iteration
    if iteration is None:
        found = sorted(
            int(p.stem.split("iter")[1]) for p in run_dir.glob("chains_iter*.json")
        )
        if not found:
            raise _UsageError(f"no chain checkpoints in {run_dir}")
        iteration = found[-1]
    path = _checkpoint_file(run_dir, "chains", "json", iteration)
    doc = json.loads(path.read_text(encoding="utf-8"))
    names: dict[str, str] = {}
    kg_path = run_dir / f"kg_iter{iteration - 1}.json"
    if kg_path.exists():
        kg = KnowledgeGraph.from_document(kg_path.read_text(encoding="utf-8"))
        names = {nid: node.name for nid, node in kg.nodes.items()}
    selected = set(doc.get("selected", []))
    print(f"iteration {iteration}: {len(doc.get('candidates', []))} candidate chain(s)")
    for c in doc.get("candidates", []):
        mark = "*" if c["chain_id"] in selected else " "
        src = names.get(c["source_id"], c["source_id"])
        tgt = names.get(c["target_id"], c["target_id"])
        print(
            f" {mark} {c['chain_id']} [{c['kind']}/{c['basis']}] "
            f"{src} -> {c['relation']} -> {tgt} (score {c['score']:.4f})"
        )
    for cid, query in zip(doc.get("selected", []), doc.get("queries", [])):
        print(f"   query for {cid}: {query}")
    return EXIT_OK


def _cmd_simulate(args) -> int:
    summary = run_ablation(
        seeds=list(range(args.seeds)),
        world_kwargs={
            "n_communities": args.communities,
            "cores_per_community": args.cores,
            "concepts_per_community": args.concepts,
        },
        config_overrides={"max_iter": args.max_iter},
        out_dir=args.out,
    )
    mt = summary["mean_termination"]
    mc = summary["mean_final_coverage"]
    print(f"seeds: {summary['n_seeds']}")
    print(
        "mean termination iteration: "
        f"dualgraph {mt['dualgraph']:.2f}, outline-only {mt['outline-only']:.2f}"
    )
    print(
        "mean final coverage: "
        f"dualgraph {mc['dualgraph']:.4f}, outline-only {mc['outline-only']:.4f}"
    )
    print(
        f"coverage-at-2 wins for dualgraph: "
        f"{summary['coverage_at_2_wins']}/{summary['n_seeds']}"
    )
    if args.out:
        print(f"wrote {Path(args.out) / 'ablation.csv'}")
    return EXIT_OK


_COMMANDS = {
    "run": _cmd_run,
    "resume": _cmd_resume,
    "inspect-kg": _cmd_inspect_kg,
    "inspect-og": _cmd_inspect_og,
    "chains": _cmd_chains,
    "simulate": _cmd_simulate,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ProviderError, ParseError) as exc:
        print(f"provider failure: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
