"""Command-line entry point.

    grpo-vqa <validate|parse|score|eval|train-toy|refine> --config run.json [options]

Exit codes: 0 ok, 2 config error, 3 data error, 4 backend failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .core import DatasetError, TagConfig, load_dataset, parse_completion, validate_dataset
from .evaluation import HashedBagEmbedder, MetricConfig, MissingCandidates, run_benchmark
from .grpo import GrpoConfig
from .judge import HttpJudge, Judge, JudgeConfig, JudgeError, MockJudge
from .refine import refine_loop, reference_generator, scripted_generator
from .rewards import RewardWeights, total_reward

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_BACKEND = 0, 2, 3, 4

log = logging.getLogger("grpo_vqa")


class ConfigError(ValueError):
    pass


class DataError(ValueError):
    pass


class BackendError(RuntimeError):
    pass


@dataclass
class RunConfig:
    base_dir: Path
    dataset_path: Path | None = None
    tags: TagConfig = field(default_factory=TagConfig)
    weights: RewardWeights = field(default_factory=RewardWeights)
    grpo: GrpoConfig = field(default_factory=GrpoConfig)
    toy_task: dict = field(default_factory=dict)
    judge: dict = field(default_factory=lambda: {"kind": "mock"})
    embedder: dict = field(default_factory=lambda: {"kind": "hashed", "dimension": 256})
    metrics: list = field(default_factory=list)
    model_name: str = "candidate"
    refine: dict = field(default_factory=dict)
    output_dir: Path = Path("out")
    seed: int = 0

    def path(self, value: str) -> Path:
        p = Path(value)
        return p if p.is_absolute() else self.base_dir / p

    def require_dataset(self) -> Path:
        if self.dataset_path is None:
            raise ConfigError("config has no dataset_path")
        return self.dataset_path


DEFAULT_METRICS = [
    {"name": "QwenScore", "kind": "five_level"},
    {"name": "DeepSeekScore", "kind": "fractional"},
    {"name": "SBERTScore", "kind": "embedding"},
]

_KNOWN_KEYS = {
    "dataset_path", "tags", "reward_weights", "grpo", "toy_task", "judge", "embedder",
    "eval", "refine", "output_dir", "seed",
}


def _judge_block(value: Any) -> dict:
    if value == "mock" or value is None:
        return {"kind": "mock"}
    if not isinstance(value, dict) or "kind" not in value:
        raise ConfigError('judge must be "mock" or an object with a "kind"')
    kinds = {"mock", "http"}
    if value["kind"] not in kinds:
        raise ConfigError(f"judge kind must be one of {sorted(kinds)}")
    if value["kind"] == "http":
        try:
            JudgeConfig.from_dict({k: v for k, v in value.items() if k != "kind"})
        except (TypeError, ValueError) as err:
            raise ConfigError(f"judge config: {err}") from None
    return dict(value)


_TOY_KEYS = {"policy_seed", "prior", "noise", "records", "record_seed", "constant_reward", "track_expected_format"}


def _toy_task_block(task: dict) -> dict:
    unknown = set(task) - _TOY_KEYS
    if unknown:
        raise ConfigError(f"unknown toy_task keys: {sorted(unknown)}")
    if int(task.get("records", 8)) < 1:
        raise ConfigError("toy_task.records must be >= 1")
    if float(task.get("noise", 0.5)) < 0:
        raise ConfigError("toy_task.noise must be >= 0")
    for key in ("policy_seed", "record_seed"):
        int(task.get(key, 0))
    float(task.get("prior", 4.0))
    if task.get("constant_reward") is not None:
        float(task["constant_reward"])
    return dict(task)


def _refine_block(cfg: "RunConfig", block: dict) -> dict:
    block = dict(block)
    unknown = set(block) - {"threshold", "max_iterations", "stop_fraction", "tuned", "base"}
    if unknown:
        raise ConfigError(f"unknown refine keys: {sorted(unknown)}")
    if not 0.0 < float(block.get("threshold", 0.8)) < 1.0:
        raise ConfigError("refine.threshold must lie in (0, 1)")
    if int(block.get("max_iterations", 10)) < 1:
        raise ConfigError("refine.max_iterations must be >= 1")
    if not 0.0 < float(block.get("stop_fraction", 0.05)) <= 1.0:
        raise ConfigError("refine.stop_fraction must lie in (0, 1]")
    for key in ("tuned", "base"):
        gen = block.get(key) or {"kind": "reference"}
        if gen.get("kind") not in ("reference", "scripted"):
            raise ConfigError(f"refine.{key}.kind must be reference or scripted")
        if gen["kind"] == "scripted" and not cfg.path(gen["path"]).exists():
            raise ConfigError(f"refine.{key}.path {cfg.path(gen['path'])} does not exist")
    return block


def load_config(path: str | os.PathLike, out: str | None = None, seed: int | None = None) -> RunConfig:
    """Parse and validate a run config. Raises ConfigError; creates nothing on disk."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from None
    except json.JSONDecodeError as err:
        raise ConfigError(f"config {path} is not valid JSON: {err}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - _KNOWN_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    cfg = RunConfig(base_dir=Path(path).resolve().parent)
    try:
        if "dataset_path" in raw:
            cfg.dataset_path = cfg.path(raw["dataset_path"])
            if not cfg.dataset_path.exists():
                raise ConfigError(f"dataset_path {cfg.dataset_path} does not exist")
        if "tags" in raw:
            cfg.tags = TagConfig(**raw["tags"])
        if "reward_weights" in raw:
            cfg.weights = RewardWeights.parse(raw["reward_weights"])
        if "grpo" in raw:
            cfg.grpo = GrpoConfig.from_dict(raw["grpo"])
        cfg.toy_task = dict(raw.get("toy_task", {}))
        cfg.judge = _judge_block(raw.get("judge", "mock"))
        cfg.embedder = dict(raw.get("embedder", cfg.embedder))
        if cfg.embedder.get("kind") != "hashed":
            raise ConfigError('only the "hashed" embedder is built in')
        HashedBagEmbedder(int(cfg.embedder.get("dimension", 256)))
        ev = raw.get("eval", {})
        cfg.metrics = list(ev.get("metrics", DEFAULT_METRICS))
        for m in cfg.metrics:
            if m.get("kind") not in ("five_level", "fractional", "embedding") or not m.get("name"):
                raise ConfigError(f"bad metric entry {m!r}")
        cfg.model_name = ev.get("model_name", cfg.model_name)
        cfg.toy_task = _toy_task_block(cfg.toy_task)
        cfg.refine = _refine_block(cfg, raw.get("refine", {}))
        cfg.seed = int(raw.get("seed", 0))
        cfg.output_dir = cfg.path(raw.get("output_dir", "out"))
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError) as err:
        raise ConfigError(str(err)) from None
    if out is not None:
        cfg.output_dir = Path(out)
    if seed is not None:
        cfg.seed = seed
    return cfg


def make_judge(cfg: RunConfig) -> Judge:
    if cfg.judge["kind"] == "mock":
        return MockJudge()
    return HttpJudge(JudgeConfig.from_dict({k: v for k, v in cfg.judge.items() if k != "kind"}))


def _load_records(cfg: RunConfig):
    try:
        return load_dataset(cfg.require_dataset())
    except DatasetError as err:
        raise DataError(str(err)) from None
    except OSError as err:
        raise DataError(f"cannot read dataset: {err}") from None


def _load_candidates(path: str | None, records, required: bool = True) -> dict:
    if path is None:
        raise ConfigError("--candidates is required for this command")
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except (OSError, json.JSONDecodeError) as err:
        raise DataError(f"cannot read candidates {path}: {err}") from None
    if not isinstance(obj, dict) or not all(isinstance(v, str) for v in obj.values()):
        raise DataError("candidates file must map record id -> raw completion string")
    if required:
        missing = [r.id for r in records if r.id not in obj]
        if missing:
            raise DataError(f"no candidate for record id(s): {', '.join(missing)}")
    return obj


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def cmd_validate(cfg: RunConfig, args) -> int:
    print(validate_dataset(_load_records(cfg)).format())
    return EXIT_OK


def cmd_parse(cfg: RunConfig, args) -> int:
    records = _load_records(cfg) if cfg.dataset_path else []
    cands = _load_candidates(args.candidates, records, required=False)
    lines = []
    for cid in sorted(cands):
        sc = parse_completion(cands[cid], cfg.tags)
        lines.append(json.dumps({
            "id": cid, "reasoning": sc.reasoning, "answer": sc.answer,
            "well_formed": sc.well_formed, "problems": list(sc.problems),
        }, ensure_ascii=False))
    text = "".join(line + "\n" for line in lines)
    _write(cfg.output_dir / "parsed.jsonl", text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_score(cfg: RunConfig, args) -> int:
    records = _load_records(cfg)
    cands = _load_candidates(args.candidates, records)
    judge = make_judge(cfg)
    rows, gated = [], 0
    try:
        for r in records:
            sc = parse_completion(cands[r.id], cfg.tags)
            gated += not sc.well_formed
            rows.append({"id": r.id, **total_reward(sc, r, cfg.weights, judge).as_dict()})
    except JudgeError as err:
        raise BackendError(str(err)) from err
    text = "".join(json.dumps(row) + "\n" for row in rows)
    _write(cfg.output_dir / "rewards.jsonl", text)
    n = len(rows)
    summary = {
        "records": n,
        "weights": str(cfg.weights),
        "mean_total": sum(r["total"] for r in rows) / n,
        "format_gate_rate": gated / n,
        "judge_calls": judge.calls,
    }
    _write(cfg.output_dir / "rewards_summary.json", json.dumps(summary, indent=2) + "\n")
    print(json.dumps(summary))
    return EXIT_OK


def cmd_eval(cfg: RunConfig, args) -> int:
    records = _load_records(cfg)
    cands = _load_candidates(args.candidates, records)
    judge = make_judge(cfg)
    if args.audit:
        judge.audit_log = []
    embedder = HashedBagEmbedder(int(cfg.embedder.get("dimension", 256)))
    metrics = [
        MetricConfig(m["name"], m["kind"], judge=judge if m["kind"] != "embedding" else None,
                     embedder=embedder if m["kind"] == "embedding" else None)
        for m in cfg.metrics
    ]
    parsed = {r.id: parse_completion(cands[r.id], cfg.tags) for r in records}
    try:
        report = run_benchmark(records, parsed, metrics, model_name=cfg.model_name)
    except MissingCandidates as err:
        raise DataError(str(err)) from None
    judged = [m.name for m in metrics if m.kind != "embedding"]
    if records and judged and all(report.coverage[name] == 0 for name in judged):
        first = next(iter(report.errors.values()), "no cells scored")
        raise BackendError(f"every judge cell failed, e.g. {first}")
    if args.format in ("json", "both"):
        _write(cfg.output_dir / "report.json", report.to_json())
    if args.format in ("md", "both"):
        _write(cfg.output_dir / "report.md", report.to_markdown())
    if args.audit:
        _write(cfg.output_dir / "audit.jsonl", "".join(json.dumps(e, ensure_ascii=False) + "\n" for e in judge.audit_log))
    sys.stdout.write(report.to_markdown())
    return EXIT_OK


def cmd_train_toy(cfg: RunConfig, args) -> int:
    from .toy_policy import save_policy
    from .training import (
        RewardError,
        expected_format_reward,
        format_task_policy,
        format_task_prompts,
        format_task_records,
        make_reward_fn,
        train,
    )

    task = cfg.toy_task
    policy = format_task_policy(
        seed=int(task.get("policy_seed", 0)),
        prior=float(task.get("prior", 4.0)),
        noise=float(task.get("noise", 0.5)),
    )
    prompts = format_task_prompts(format_task_records(int(task.get("records", 8)), seed=int(task.get("record_seed", 0))))
    reward_fn = make_reward_fn(policy.vocab, cfg.weights, make_judge(cfg), cfg.tags)
    if task.get("constant_reward") is not None:
        value = float(task["constant_reward"])
        reward_fn = lambda prompt, tokens: value  # noqa: E731
    probe = None
    if task.get("track_expected_format", True) and cfg.tags == TagConfig():
        max_len = cfg.grpo.max_len
        probe = lambda p: {"expected_format_reward": expected_format_reward(p, (0,), max_len, cfg.tags)}  # noqa: E731

    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    metrics_path = cfg.output_dir / "metrics.jsonl"
    done = []
    try:
        final, history = train(policy, prompts, reward_fn, cfg.grpo, seed=cfg.seed,
                               metrics_path=metrics_path, on_step=done.append, probe=probe)
    except (RewardError, JudgeError) as err:
        last = done[-1]["step"] if done else None
        raise BackendError(f"training stopped (last completed step: {last}): {err}") from err
    save_policy(final, cfg.output_dir / "policy.json")
    if history:
        last = history[-1]
        print(f"steps={len(history)} final mean_format_reward={last['mean_format_reward']:.4f} "
              f"mean_total_reward={last['mean_total_reward']:.4f}")
    else:
        print("steps=0")
    return EXIT_OK


def _generator(block: dict | None, cfg: RunConfig, name: str):
    block = block or {"kind": "reference"}
    kind = block.get("kind")
    if kind == "reference":
        return reference_generator(name)
    if kind == "scripted":
        try:
            with open(cfg.path(block["path"]), encoding="utf-8") as fh:
                outputs = json.load(fh)
        except (OSError, json.JSONDecodeError) as err:
            raise BackendError(f"generator {name} unavailable: {err}") from None
        return scripted_generator(name, outputs)
    raise ConfigError(f"unknown generator kind {kind!r}")


def cmd_refine(cfg: RunConfig, args) -> int:
    records = _load_records(cfg)
    rc = cfg.refine
    tuned = _generator(rc.get("tuned"), cfg, "tuned")
    base = _generator(rc.get("base"), cfg, "base")
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    try:
        state = refine_loop(
            records, tuned, base, HashedBagEmbedder(int(cfg.embedder.get("dimension", 256))),
            threshold=float(rc.get("threshold", 0.8)),
            max_iterations=int(rc.get("max_iterations", 10)),
            stop_fraction=float(rc.get("stop_fraction", 0.05)),
            export_path=cfg.output_dir / "manual_review.jsonl",
        )
    except ValueError as err:
        raise ConfigError(str(err)) from None
    _write(cfg.output_dir / "refine_state.json", json.dumps(state.to_dict(), indent=2) + "\n")
    if records and len(state.errors) == len(records):
        raise BackendError(f"every record failed generation, e.g. {next(iter(state.errors.values()))}")
    print(json.dumps({"iterations": state.iteration, "stop_reason": state.stop_reason,
                      "history": state.history}))
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "parse": cmd_parse,
    "score": cmd_score,
    "eval": cmd_eval,
    "train-toy": cmd_train_toy,
    "refine": cmd_refine,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="grpo-vqa", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="run config JSON")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--seed", type=int, help="sampling seed (overrides config)")
        p.add_argument("--audit", action="store_true", help="log raw judge replies")
        p.add_argument("--format", choices=("json", "md", "both"), default="both")
        if name in ("parse", "score", "eval"):
            p.add_argument("--candidates", help="JSON object mapping record id -> raw completion")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, out=args.out, seed=args.seed)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, DatasetError) as err:
        print(f"data error: {err}", file=sys.stderr)
        return EXIT_DATA
    except (BackendError, JudgeError) as err:
        print(f"backend error: {err}", file=sys.stderr)
        return EXIT_BACKEND


if __name__ == "__main__":
    sys.exit(main())
