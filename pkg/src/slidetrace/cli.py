"""Command-line entry points."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import dataset as ds
from .gateway import DEFAULT_TASK, CostModel, ScriptedEndpoint
from .geometry import Box
from .images import FileCropProvider, StubCropProvider
from .logs import EmptySession, MalformedLine, SchemaError, SlideMeta, parse_session_log, validate_session
from .metrics import bootstrap_ci, efficiency_completeness, match_hits
from .orchestrator import OrderPolicy, StaticProposer, case_result_to_json, run_case
from .segmenter import SegmenterConfig, run_pipeline


@click.group()
def main() -> None:
    """Viewer-log discretization, dataset assembly, evaluation, and review."""


def _load_slide_meta(path: str) -> SlideMeta:
    obj = json.loads(Path(path).read_text())
    return SlideMeta(
        slide_id=str(obj["slide_id"]),
        width_px=int(obj["width_px"]),
        height_px=int(obj["height_px"]),
        native_magnification=float(obj["native_magnification"]),
        microns_per_pixel=obj.get("microns_per_pixel"),
    )


@main.command()
@click.option("--input", "input_path", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--output", "output_path", required=True, type=click.Path())
def segment(input_path: str, config_path: str | None, output_path: str) -> None:
    """Run the five-stage pipeline on one session log."""
    cfg = SegmenterConfig()
    if config_path:
        cfg = SegmenterConfig.from_json(json.loads(Path(config_path).read_text()))
    try:
        log = parse_session_log(Path(input_path).read_text())
    except (MalformedLine, SchemaError, EmptySession) as exc:
        click.echo(f"schema error: {exc}", err=True)
        sys.exit(2)
    violations = validate_session(log)
    if violations:
        for v in violations:
            click.echo(f"invalid session: {v.rule} {v.field} event={v.event_index} {v.detail}", err=True)
        sys.exit(2)
    actions = run_pipeline(log, cfg)
    Path(output_path).write_text(json.dumps([a.to_json() for a in actions], indent=2) + "\n")
    click.echo(f"wrote {len(actions)} actions to {output_path}")


@main.command("build-dataset")
@click.option("--session", "session_path", required=True, type=click.Path(exists=True))
@click.option("--actions", "actions_path", required=True, type=click.Path(exists=True))
@click.option("--rationales", "rationales_path", required=True, type=click.Path(exists=True))
@click.option("--decisions", "decisions_path", required=True, type=click.Path(exists=True))
@click.option("--task", default=DEFAULT_TASK)
@click.option("--out", "out_dir", required=True, type=click.Path())
def build_dataset(
    session_path: str,
    actions_path: str,
    rationales_path: str,
    decisions_path: str,
    task: str,
    out_dir: str,
) -> None:
    """Assemble one session's reviewed rounds into a dataset directory.

    Actions are an array (ids assigned a0, a1, ... unless entries carry
    "action_id"); rationales and decisions are objects keyed by action id.
    """
    log = parse_session_log(Path(session_path).read_text())
    raw_actions = json.loads(Path(actions_path).read_text())
    actions = {}
    for i, entry in enumerate(raw_actions):
        actions[entry.get("action_id", f"a{i}")] = ds.VlmAction.from_json(entry)

    raw_rationales = json.loads(Path(rationales_path).read_text())
    rationales = {key: ds.Rationale.from_json(obj) for key, obj in raw_rationales.items()}
    decisions = {
        key: ds.ReviewDecision.from_json(obj)
        for key, obj in json.loads(Path(decisions_path).read_text()).items()
    }

    split = ds.assemble_rounds(log.session_id, actions, rationales, decisions)
    out = Path(out_dir) / log.session_id
    out.mkdir(parents=True, exist_ok=True)
    (out / "conversation.json").write_text(ds.emit_conversation(list(split.training), log.slide, task))
    rows = [
        {**r.to_json(), "split": "training", "pathologist_id": log.pathologist_id}
        for r in split.training
    ] + [{**r.to_json(), "split": "audit", "pathologist_id": log.pathologist_id} for r in split.audit]
    tags = {key: obj["tags"] for key, obj in raw_rationales.items() if "tags" in obj}
    for row in rows:
        if row["round_id"] in tags:
            row["tags"] = tags[row["round_id"]]
    (out / "rounds.json").write_text(json.dumps(rows, indent=2, sort_keys=True) + "\n")
    click.echo(f"wrote {len(split.training)} training + {len(split.audit)} audit rounds to {out}")


@main.command()
@click.option("--dataset", "dataset_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
def stats(dataset_dir: str, out_path: str) -> None:
    """Aggregate statistics over every session in a dataset directory."""
    rounds = []
    pathologists = {}
    tags = {}
    for rounds_file in sorted(Path(dataset_dir).glob("*/rounds.json")):
        for row in json.loads(rounds_file.read_text()):
            if row.get("split") == "audit":
                continue
            round_ = ds.CotRound.from_json(row)
            rounds.append(round_)
            if "pathologist_id" in row:
                pathologists[round_.session_id] = row["pathologist_id"]
            if "tags" in row:
                tags[round_.round_id] = (row["tags"][0], row["tags"][1])
    report = ds.dataset_stats(rounds, session_pathologists=pathologists, tags=tags)
    Path(out_path).write_text(json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n")
    click.echo(f"{report.session_count} sessions, {report.round_count} rounds -> {out_path}")


def _endpoint_from_config(path: str) -> ScriptedEndpoint:
    obj = json.loads(Path(path).read_text())
    if obj.get("type", "scripted") != "scripted":
        raise click.ClickException(
            "core ships only the scripted endpoint; live adapters implement ModelEndpoint"
        )
    cost = CostModel(**obj.get("cost", {}))
    rules = [(r["anchor"], r["response"]) for r in obj.get("rules", [])]
    return ScriptedEndpoint(rules, default=obj.get("default"), cost=cost, latency_ms=obj.get("latency_ms", 0))


@main.command()
@click.option("--slide", "slide_path", required=True, type=click.Path(exists=True))
@click.option("--proposals", "proposals_path", required=True, type=click.Path(exists=True))
@click.option("--endpoint", "endpoint_path", required=True, type=click.Path(exists=True))
@click.option("--order", type=click.Choice(["forward", "reverse", "random"]), default="forward")
@click.option("--seed", type=int, default=None)
@click.option("--cap", type=int, default=None)
@click.option("--crops", "crops_dir", type=click.Path(exists=True), default=None)
@click.option("--task", default=DEFAULT_TASK)
@click.option("--out", "out_path", required=True, type=click.Path())
def diagnose(
    slide_path: str,
    proposals_path: str,
    endpoint_path: str,
    order: str,
    seed: int | None,
    cap: int | None,
    crops_dir: str | None,
    task: str,
    out_path: str,
) -> None:
    """Run the three-stage loop on one slide with pre-computed proposals."""
    slide = _load_slide_meta(slide_path)
    proposer = StaticProposer.from_file(proposals_path)
    endpoint = _endpoint_from_config(endpoint_path)
    provider = FileCropProvider(crops_dir) if crops_dir else StubCropProvider()
    result = run_case(
        slide,
        proposer,
        endpoint,
        provider,
        order=OrderPolicy(order, seed),
        cap=cap,
        task=task,
    )
    Path(out_path).write_text(case_result_to_json(result))
    click.echo(f"diagnosis {'positive' if result.diagnostic.lymph_node_positive else 'negative'} -> {out_path}")


def _load_boxes(path: Path) -> list[Box]:
    entries = json.loads(path.read_text())
    boxes = []
    for entry in entries:
        obj = entry.get("box", entry) if isinstance(entry, dict) else entry
        boxes.append(Box.from_json(obj))
    return boxes


@main.command()
@click.option("--cases", "cases_dir", required=True, type=click.Path(exists=True))
@click.option("--expert", "expert_dir", required=True, type=click.Path(exists=True))
@click.option("--metric", default="all")
@click.option("--iou-threshold", default=0.3, show_default=True)
@click.option("--bootstrap", "n_iter", default=1000, show_default=True)
@click.option("--seed", default=42, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def evaluate(
    cases_dir: str,
    expert_dir: str,
    metric: str,
    iou_threshold: float,
    n_iter: int,
    seed: int,
    out_path: str,
) -> None:
    """Score predicted regions against expert-visited regions, case by case."""
    cases = {}
    for case_file in sorted(Path(cases_dir).glob("*.json")):
        expert_file = Path(expert_dir) / case_file.name
        if not expert_file.is_file():
            raise click.ClickException(f"no expert file for case {case_file.stem}")
        predicted = _load_boxes(case_file)
        expert = _load_boxes(expert_file)
        matching = match_hits(predicted, expert, iou_threshold)
        cases[case_file.stem] = {
            "hits": len(matching.hits),
            "n_predicted": len(predicted),
            "n_expert": len(expert),
            **efficiency_completeness(matching, len(predicted), len(expert)),
        }
    report: dict = {"cases": cases, "aggregate": {}}
    for name in ("efficiency", "completeness"):
        if metric not in ("all", name):
            continue
        values = [c[name] for c in cases.values() if name in c]
        if values:
            report["aggregate"][name] = bootstrap_ci(
                values, lambda vs: sum(vs) / len(vs), n_iter=n_iter, seed=seed
            )
    Path(out_path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    click.echo(f"evaluated {len(cases)} cases -> {out_path}")


@main.command("serve-review")
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
@click.option("--token-env", default=None, help="Environment variable holding the shared token.")
def serve_review(data_dir: str, host: str, port: int, token_env: str | None) -> None:
    """Serve the human-in-the-loop review API over a data directory."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(data_dir, token_env=token_env), host=host, port=port)


if __name__ == "__main__":
    main()
