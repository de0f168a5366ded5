"""Command-line front end: expert generation, training, evaluation, reports.

Every subcommand reads one TOML config; --seed and --out override the
[run] section so sweeps can reuse a single file.
"""

from __future__ import annotations

import argparse
import json

from .harness import (
    ExperimentConfig,
    emit_report,
    evaluate,
    generate_expert,
    load_policy,
    make_eval_env,
    run_training,
)


def _load_config(args) -> ExperimentConfig:
    config = ExperimentConfig.from_file(args.config)
    if args.seed is not None:
        config.seed = args.seed
    if args.out is not None:
        config.out_dir = args.out
    return config


def _add_common(parser):
    parser.add_argument("--config", required=True, help="TOML experiment config")
    parser.add_argument("--seed", type=int, default=None, help="override [run].seed")
    parser.add_argument("--out", default=None, help="override [run].out_dir")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="dsqil",
        description="Imitation-learning experiments on built-in toy environments.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_expert = sub.add_parser("expert", help="solve/train the expert and write demo datasets")
    _add_common(p_expert)

    p_train = sub.add_parser("train", help="run one training configuration")
    _add_common(p_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint")
    _add_common(p_eval)
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--episodes", type=int, default=None,
                        help="override [eval].final_episodes")
    p_eval.add_argument("--start-mode", default=None,
                        choices=["fixed", "distribution", "shifted"],
                        help="override [eval].start_mode")

    p_report = sub.add_parser("report", help="tabulate finished runs")
    p_report.add_argument("summaries", nargs="+", help="summary.json files")
    p_report.add_argument("--out", required=True, help="report output directory")

    args = parser.parse_args(argv)

    if args.command == "expert":
        config = _load_config(args)
        result = generate_expert(config)
        print(f"expert return: {result['expert_return']:.4f}")
        print(f"checkpoint:    {result['checkpoint']}")
        for k, path in sorted(result["datasets"].items()):
            print(f"demos[{k:>2}]:     {path}")
        return 0

    if args.command == "train":
        config = _load_config(args)
        result = run_training(config)
        print(f"final return:  {result.final_return_mean:.4f} "
              f"± {result.final_return_std:.4f}")
        print(f"metrics:       {result.metrics_path}")
        print(f"summary:       {result.summary_path}")
        print(f"checkpoint:    {result.checkpoint_path}")
        return 0

    if args.command == "eval":
        config = _load_config(args)
        episodes = args.episodes or config.eval.final_episodes
        start_mode = args.start_mode or config.eval.start_mode
        policy = load_policy(args.checkpoint)
        env = make_eval_env(config, config.seed, start_mode)
        mean, std, _ = evaluate(policy, env, episodes, config.train.gamma)
        print(json.dumps({"return_mean": mean, "return_std": std,
                          "episodes": episodes, "start_mode": start_mode}))
        return 0

    if args.command == "report":
        paths = emit_report(args.summaries, args.out)
        with open(paths["report_txt"]) as f:
            print(f.read(), end="")
        for key, value in paths.items():
            print(f"{key}: {value}")
        return 0

    parser.error(f"unknown command {args.command!r}")
    return 2


if __name__ == "__main__":
    raise SystemExit(main())
