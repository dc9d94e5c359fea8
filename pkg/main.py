"""
Entry point for the impact-time guidance toolkit.

Subcommands share one output directory and build on each other:

    gen-data     PNG trajectories -> dataset.csv
    train-tgo    dataset.csv -> predictor.pt / predictor.json
    eval-tgo     held-out metrics of the trained predictor
    train-ppo    predictor -> actor.pt / critic.pt / corrector.json
    simulate     fixed scenario, one trajectory per desired impact time
    compare      PNG, learned law, ITCG1 and ITCG2 on the fixed scenario
    monte-carlo  random engagements, impact-time error statistics

Every subcommand appends an entry (config hash, seed, scale, outputs) to
manifest.json in the output directory. Exit status is 0 on success, 1 on a
runtime failure and 2 on a configuration error.
"""

import argparse
import dataclasses
import logging
import os
import sys
import time
from typing import Any, Callable, Dict, List, Optional

import pandas as pd
from dotenv import load_dotenv

from agents.coordinator_agent import GUIDANCE_LAWS, GuidanceModels
from agents.corrector.ppo_agent import (
    CORRECTOR_SIDECAR,
    load_corrector,
    save_corrector,
    train_corrector,
    write_reward_history,
)
from agents.predictor.dataset import Normalizer, as_arrays, generate_dataset, read_dataset, split_dataset, write_dataset
from agents.predictor.tgo_agent import (
    PREDICTOR_SIDECAR,
    evaluate_predictor,
    load_predictor,
    metrics_dict,
    predict_batch,
    save_predictor,
    train_predictor,
)
from config import RunConfig, ScaleProfile, config_hash, load_config
from errors import ConfigurationError, GuidanceError
from experiments.monte_carlo import monte_carlo_experiment
from experiments.scenarios import compare_laws, run_fixed_scenario
from utils import default_workers, display_summary, ensure_output_dir, record_run, setup_logging, status_banner, write_csv

load_dotenv()

logger = logging.getLogger("guidance")

DATASET_NAME = "dataset.csv"
EXIT_OK, EXIT_FAILURE, EXIT_CONFIG = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="YAML config file (default: built-in defaults)")
    common.add_argument("--seed", type=int, default=None, help="master seed (default: config seed)")
    common.add_argument("--out", default=os.environ.get("GUIDANCE_OUT_DIR", "runs"), help="output directory")
    common.add_argument("--workers", type=int, default=None, help="worker processes, 0 = one per physical CPU")
    common.add_argument("--full-scale", action="store_true", help="use the full-scale profile")
    common.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING, ...")

    parser = argparse.ArgumentParser(prog="guidance", description="Impact-time guidance toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", parents=[common], help="generate the time-to-go dataset")
    p.add_argument("--trajectories", type=int, default=None)

    p = sub.add_parser("train-tgo", parents=[common], help="train the time-to-go predictor")
    p.add_argument("--steps", type=int, default=None)

    sub.add_parser("eval-tgo", parents=[common], help="evaluate the predictor on the held-out split")

    p = sub.add_parser("train-ppo", parents=[common], help="train the PPO bias corrector")
    p.add_argument("--episodes", type=int, default=None)
    p.add_argument("--tgo-source", choices=["dnn", "approx", "sparse"], default=None)

    p = sub.add_parser("simulate", parents=[common], help="fly the fixed scenario")
    p.add_argument("--td", type=float, nargs="+", default=None, help="desired impact time(s) [s]")
    p.add_argument("--law", choices=GUIDANCE_LAWS, default="proposed")

    p = sub.add_parser("compare", parents=[common], help="compare guidance laws on the fixed scenario")
    p.add_argument("--td", type=float, default=None)

    p = sub.add_parser("monte-carlo", parents=[common], help="Monte-Carlo impact-time statistics")
    p.add_argument("--runs", type=int, default=None)
    p.add_argument("--law", choices=GUIDANCE_LAWS, default="proposed")
    return parser


class Context:
    """Resolved settings for one subcommand invocation."""

    def __init__(self, args: argparse.Namespace, cfg: RunConfig):
        self.args = args
        self.cfg = cfg
        self.seed = cfg.seed if args.seed is None else args.seed
        workers = cfg.workers if args.workers is None else args.workers
        self.workers = default_workers() if workers == 0 else workers
        self.profile: ScaleProfile = cfg.scale.full if args.full_scale else cfg.scale.desk
        self.out = args.out
        self.progress = sys.stderr.isatty()

    def path(self, name: str) -> str:
        return os.path.join(self.out, name)


def _load_models(ctx: Context, need_corrector: bool) -> GuidanceModels:
    predictor = load_predictor(ctx.out) if os.path.isfile(ctx.path(PREDICTOR_SIDECAR)) else None
    corrector = None
    if need_corrector or os.path.isfile(ctx.path(CORRECTOR_SIDECAR)):
        corrector = load_corrector(ctx.out)
    if corrector is not None and corrector.cfg.tgo_source == "dnn" and predictor is None:
        raise ConfigurationError(f"corrector in {ctx.out} was trained with the predictor, which is missing")
    return GuidanceModels(predictor=predictor, corrector=corrector)


def _count(ctx: Context, flag: str, default: int, minimum: int = 1) -> int:
    """Explicit flag value, or the scale-profile default when the flag is absent."""
    value = getattr(ctx.args, flag)
    if value is None:
        return default
    if value < minimum:
        raise ConfigurationError(f"--{flag} must be >= {minimum}, got {value}")
    return value


def _split(ctx: Context):
    samples, _ = read_dataset(ctx.path(DATASET_NAME))
    return split_dataset(samples, ratio=ctx.cfg.predictor.train_ratio, seed=ctx.seed)


def cmd_gen_data(ctx: Context) -> Dict[str, Any]:
    n = _count(ctx, "trajectories", ctx.profile.trajectories)
    data = generate_dataset(ctx.cfg.engagement, n, ctx.seed, workers=ctx.workers)
    meta = {"trajectories": n, "hits": data.hits, "discarded": data.discarded, "samples": len(data.samples), "seed": ctx.seed}
    write_dataset(ctx.path(DATASET_NAME), data.samples, meta)
    return {"outputs": [DATASET_NAME], "stats": meta}


def cmd_train_tgo(ctx: Context) -> Dict[str, Any]:
    pcfg = ctx.cfg.predictor
    train, test = _split(ctx)
    normalizer = Normalizer.fit(train)
    steps = _count(ctx, "steps", ctx.profile.dnn_steps)
    net, history = train_predictor(
        train, normalizer, steps=steps, batch=pcfg.batch, lr=pcfg.learning_rate, seed=ctx.seed,
        hidden_layers=pcfg.hidden_layers, log_every=pcfg.log_every, progress=ctx.progress,
    )
    metrics = evaluate_predictor(net, normalizer, test)
    outputs = save_predictor(ctx.out, net, normalizer, {"metrics": metrics_dict(metrics), "steps": steps, "seed": ctx.seed})
    outputs.append(write_csv(ctx.path("tgo_loss.csv"), pd.DataFrame({"step": range(1, len(history) + 1), "mse": history})))
    return {"outputs": [os.path.basename(p) for p in outputs], "stats": metrics_dict(metrics)}


def cmd_eval_tgo(ctx: Context) -> Dict[str, Any]:
    predictor = load_predictor(ctx.out)
    _, test = _split(ctx)
    metrics = evaluate_predictor(predictor.net, predictor.normalizer, test)
    features, labels = as_arrays(test)
    predicted = predict_batch(predictor.net, predictor.normalizer, features)
    frame = pd.DataFrame({"predicted": predicted, "actual": labels, "error": predicted - labels})
    write_csv(ctx.path("tgo_eval.csv"), frame)
    return {"outputs": ["tgo_eval.csv"], "stats": metrics_dict(metrics)}


def cmd_train_ppo(ctx: Context) -> Dict[str, Any]:
    ppo = ctx.cfg.ppo
    if ctx.args.tgo_source:
        ppo = dataclasses.replace(ppo, tgo_source=ctx.args.tgo_source)
    # the normalizer comes with the predictor artifacts in every mode
    predictor = load_predictor(ctx.out)
    episodes = _count(ctx, "episodes", ctx.profile.episodes, minimum=0)
    run = train_corrector(
        ctx.cfg.engagement,
        predictor if ppo.tgo_source == "dnn" else None,
        predictor.normalizer,
        ppo,
        ctx.seed,
        episodes=episodes,
        progress=ctx.progress,
    )
    outputs = save_corrector(ctx.out, run.policy, run.critic, ppo, predictor.normalizer, {"episodes": episodes, "seed": ctx.seed})
    write_reward_history(ctx.path("reward_history.csv"), run.history)
    outputs.append(ctx.path("reward_history.csv"))
    hits = sum(r.outcome == "Hit" for r in run.history)
    return {
        "outputs": [os.path.basename(p) for p in outputs],
        "stats": {"episodes": episodes, "hits": hits, "updates": len(run.updates),
                  "discarded_transitions": run.discarded, "tgo_source": ppo.tgo_source},
    }


def cmd_simulate(ctx: Context) -> Dict[str, Any]:
    t_d_list = list(ctx.cfg.engagement.impact_time.sweep) if ctx.args.td is None else ctx.args.td
    models = _load_models(ctx, need_corrector=ctx.args.law == "proposed")
    res = run_fixed_scenario(ctx.cfg.engagement, models, t_d_list, ctx.out, law=ctx.args.law, workers=ctx.workers)
    return {"outputs": [os.path.basename(p) for p in res["result"]["files"]], "stats": res["stats"]}


def cmd_compare(ctx: Context) -> Dict[str, Any]:
    t_d = ctx.cfg.engagement.impact_time.fixed if ctx.args.td is None else ctx.args.td
    models = _load_models(ctx, need_corrector=True)
    res = compare_laws(ctx.cfg.engagement, models, t_d, ctx.out, workers=ctx.workers)
    for law, hit in res["stats"]["hit"].items():
        print(status_banner(hit, f"{law} at t_d={t_d:g} s"))
    return {"outputs": [os.path.basename(p) for p in res["result"]["files"]], "stats": res["stats"]}


def cmd_monte_carlo(ctx: Context) -> Dict[str, Any]:
    n_runs = _count(ctx, "runs", ctx.profile.mc_runs)
    models = _load_models(ctx, need_corrector=ctx.args.law == "proposed")
    res = monte_carlo_experiment(ctx.cfg.engagement, models, n_runs, ctx.seed, ctx.out, law=ctx.args.law, workers=ctx.workers)
    return {"outputs": [os.path.basename(p) for p in res["result"]["files"]], "stats": res["stats"]}


COMMANDS: Dict[str, Callable[[Context], Dict[str, Any]]] = {
    "gen-data": cmd_gen_data,
    "train-tgo": cmd_train_tgo,
    "eval-tgo": cmd_eval_tgo,
    "train-ppo": cmd_train_ppo,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "monte-carlo": cmd_monte_carlo,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)
    try:
        # validated before anything is written
        cfg = load_config(args.config)
    except ConfigurationError as exc:
        logger.error("%s", exc)
        return EXIT_CONFIG

    ctx = Context(args, cfg)
    started = time.time()
    try:
        ensure_output_dir(ctx.out)
        entry = COMMANDS[args.command](ctx)
    except ConfigurationError as exc:
        logger.error("%s: %s", args.command, exc)
        return EXIT_CONFIG
    except GuidanceError as exc:
        logger.error("%s failed: %s", args.command, exc)
        return EXIT_FAILURE
    except OSError as exc:
        logger.error("%s failed: %s", args.command, exc)
        return EXIT_FAILURE

    record_run(ctx.out, {
        "command": args.command,
        "config": os.path.abspath(args.config) if args.config else None,
        "config_hash": config_hash(cfg),
        "seed": ctx.seed,
        "workers": ctx.workers,
        "scale": "full" if args.full_scale else "desk",
        "argv": list(argv if argv is not None else sys.argv[1:]),
        "elapsed_s": round(time.time() - started, 3),
        **entry,
    })
    display_summary(args.command, {k: v for k, v in entry["stats"].items() if not isinstance(v, dict)})
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
