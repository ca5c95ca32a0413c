"""Command-line entry point: restore, bank, train, eval, probe-backends.

Machine output (JSON) goes to stdout; diagnostics to stderr. Exit codes:
0 success, 1 domain error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import requests

from . import bandit, fixtures
from .bank import InsightBank
from .core import load_image, save_image
from .errors import RestorAgentError
from .fullref import psnr, ssim
from .grpo import GrpoConfig, train_toy_policy
from .orchestrator import Backends, OrchestratorConfig, run_session
from .tools import default_registry, registry_from_config

try:
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - py310 fallback
    tomllib = None


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path, "rb") as fh:
        raw = fh.read()
    if tomllib is not None and path.endswith(".toml"):
        return tomllib.loads(raw.decode("utf-8"))
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        if tomllib is None:
            raise
        return tomllib.loads(raw.decode("utf-8"))


def _registry_from(config: dict):
    entries = config.get("tools")
    if entries:
        return registry_from_config(entries)
    return default_registry()


def _emit(obj) -> None:
    print(json.dumps(obj, sort_keys=True))


def cmd_restore(args) -> int:
    config = _load_config(args.config)
    registry = _registry_from(config)
    bank = InsightBank(args.bank)
    orch_cfg = OrchestratorConfig(
        max_steps=config.get("max_steps", 5),
        max_retries_per_step=config.get("max_retries_per_step", 3),
        decision_mode="OneStep" if args.mode == "one-step" else "MultiStep",
        k=config.get("k", 5),
        reward_delta=config.get("reward_delta", 0.0),
        evolution_enabled=not args.no_evolve,
        metric_weights=config.get("metric_weights"),
    )
    img = load_image(args.input)
    result = run_session(img, registry, bank, Backends(), orch_cfg)
    save_image(result.image, args.output)
    if args.trace:
        with open(args.trace, "w", encoding="utf-8") as fh:
            json.dump(result.trace, fh, sort_keys=True, indent=2)
    _emit(
        {
            "output": args.output,
            "committed_steps": result.trace["committed_steps"],
            "insights_written": result.trace["insights_written"],
        }
    )
    return 0


def cmd_bank(args) -> int:
    bank = InsightBank(args.bank)
    if args.bank_cmd == "build":
        count = 0
        for name in sorted(os.listdir(args.source)):
            if not name.endswith(".json"):
                continue
            with open(os.path.join(args.source, name), encoding="utf-8") as fh:
                obj = json.load(fh)
            records = obj if isinstance(obj, list) else [obj]
            for rec in records:
                from .core import RestorationTask

                bank.record(
                    degradation_info=rec["degradation_info"],
                    tool_id=rec["tool_id"],
                    subjective_eval=rec.get("subjective_eval", ""),
                    verdict=int(rec.get("verdict", 1)),
                    task=RestorationTask.from_name(rec["task"]),
                    timestamp=float(rec.get("timestamp", 0.0)),
                    objective_delta=float(rec.get("objective_delta", 0.0)),
                )
                count += 1
        _emit({"ingested": count, "size": len(bank)})
    elif args.bank_cmd == "stats":
        by_task = {}
        successes = 0
        for ins in bank.insights:
            by_task[ins.task.name] = by_task.get(ins.task.name, 0) + 1
            successes += ins.verdict
        _emit({"size": len(bank), "successes": successes, "by_task": by_task})
    else:  # dump
        for ins in bank.insights:
            print(json.dumps(ins.to_json_obj(), sort_keys=True))
    return 0


def cmd_train(args) -> int:
    config = _load_config(args.config)
    grpo_cfg = GrpoConfig(
        eps_clip=config.get("eps_clip", 0.2),
        beta=config.get("beta", 0.04),
        n=config.get("group_size", 8),
        learning_rate=config.get("learning_rate", 0.05),
        iterations=config.get("iterations", 200),
    )
    env = bandit.bandit_from_images([fixtures.hazy_scene()])
    result = train_toy_policy(env, grpo_cfg, seed=args.seed)
    if args.curve:
        with open(args.curve, "w", encoding="utf-8") as fh:
            fh.write("iteration,mean_reward,loss\n")
            for i, (r, l) in enumerate(zip(result.mean_rewards, result.losses)):
                fh.write(f"{i},{r:.6f},{l:.6f}\n")
    probs = result.params.probs(env.features[0])
    _emit(
        {
            "iterations": grpo_cfg.iterations,
            "final_mean_reward": result.mean_rewards[-1],
            "action_probs": {str(i): round(float(p), 6) for i, p in enumerate(probs)},
        }
    )
    return 0


def cmd_eval(args) -> int:
    a = load_image(args.image_a)
    b = load_image(args.image_b)
    _emit({"psnr": psnr(a, b), "ssim": ssim(a, b)})
    return 0


def cmd_probe_backends(args) -> int:
    config = _load_config(args.config)
    endpoints = {
        "embed": config.get("embed_endpoint") or os.environ.get("RESTORAGENT_EMBED_ENDPOINT"),
        "complete": config.get("complete_endpoint")
        or os.environ.get("RESTORAGENT_COMPLETE_ENDPOINT"),
        "tool": config.get("tool_endpoint") or os.environ.get("RESTORAGENT_TOOL_ENDPOINT"),
    }
    status = {}
    for name, endpoint in endpoints.items():
        if not endpoint:
            status[name] = "unconfigured"
            continue
        try:
            resp = requests.get(endpoint.rstrip("/") + "/health", timeout=5)
            status[name] = "ok" if resp.status_code == 200 else f"http {resp.status_code}"
        except requests.RequestException:
            status[name] = "unreachable"
    _emit(status)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="restoragent")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("restore", help="run a restoration session on one image")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--config")
    p.add_argument("--bank", default=None)
    p.add_argument("--mode", choices=["one-step", "multi-step"], default="multi-step")
    p.add_argument("--no-evolve", action="store_true")
    p.add_argument("--trace")
    p.set_defaults(fn=cmd_restore)

    p = sub.add_parser("bank", help="insight bank maintenance")
    p.add_argument("bank_cmd", choices=["build", "stats", "dump"])
    p.add_argument("--bank", required=True)
    p.add_argument("--source", help="directory of JSON triplet files (build)")
    p.set_defaults(fn=cmd_bank)

    p = sub.add_parser("train", help="train the toy task-selection policy")
    p.add_argument("--config")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--curve", help="write iteration,mean_reward,loss CSV")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="PSNR/SSIM between two images")
    p.add_argument("image_a")
    p.add_argument("image_b")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("probe-backends", help="health-check configured endpoints")
    p.add_argument("--config")
    p.set_defaults(fn=cmd_probe_backends)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except RestorAgentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
