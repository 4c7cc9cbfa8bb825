"""Command-line driver: ``iqtab {gen-demos,train,eval,compare}``.

Configuration is one TOML or JSON file (chosen by extension)::

    seed = 0
    method = "iq"                 # iq | bc | sqil | maxent_irl
    methods = ["iq", "maxent_irl"]  # for compare
    outputs = "out"

    [env]                         # kind = gridworld | loop | random, or path = "mdp.json"
    kind = "gridworld"

    [demos.generate]              # or: [demos] path = "demos.jsonl"
    n_episodes = 30
    horizon = 100
    accept_states = []            # optional rejection filter
    expert = { temperature = 0.05 }

    [iq]                          # any IqConfig field
    divergence = "chi2"

    [eval]
    n_rollouts = 300
    horizon = 100
    greedy = true
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .baselines import METHODS, MaxEntIrlConfig, bc_tabular, maxent_irl, sqil_reward, sqil_tabular
from .envs import build_env, grid_state_table
from .evaluation import (MetricsReport, greedy_policy, modal_action, pearson, rollout,
                         transition_reward_correlation)
from .iq import IqConfig, IqResult, iq_learn, recover_reward_transition, state_reward
from .mdp import (DemoDataset, TabularMdp, compute_occupancy, empirical_occupancy,
                  sample_trajectories, total_variation)
from .soft import policy_value, soft_optimal_policy, soft_policy

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

log = logging.getLogger("iqtab")


class ConfigError(ValueError):
    pass


# -- configuration ----------------------------------------------------------------------

@dataclass
class EvalConfig:
    n_rollouts: int = 300
    horizon: int = 100
    greedy: bool = True
    per_episode: bool = False

    def __post_init__(self):
        if self.n_rollouts < 1:
            raise ConfigError("eval.n_rollouts must be >= 1")
        if self.horizon < 1:
            raise ConfigError("eval.horizon must be >= 1")


@dataclass
class ExperimentConfig:
    env: dict = field(default_factory=lambda: {"kind": "gridworld"})
    method: str = "iq"
    methods: list = field(default_factory=lambda: ["iq", "maxent_irl"])
    demos: dict = field(default_factory=lambda: {"generate": {}})
    iq: dict = field(default_factory=dict)
    bc: dict = field(default_factory=dict)
    sqil: dict = field(default_factory=dict)
    maxent_irl: dict = field(default_factory=dict)
    eval: EvalConfig = field(default_factory=EvalConfig)
    outputs: str = "out"
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.eval, dict):
            self.eval = EvalConfig(**self.eval)
        for m in [self.method, *self.methods]:
            if m not in METHODS:
                raise ConfigError(f"unknown method {m!r}; choose from {METHODS}")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        return cls(**d)

    def iq_config(self) -> IqConfig:
        return IqConfig.from_dict({"seed": self.seed, **self.iq})

    def maxent_config(self) -> MaxEntIrlConfig:
        return MaxEntIrlConfig(**{"seed": self.seed, **self.maxent_irl})


def load_config(path: Optional[str]) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file {p} does not exist")
    text = p.read_text(encoding="utf-8")
    if p.suffix.lower() == ".toml":
        raw = tomllib.loads(text)
    elif p.suffix.lower() == ".json":
        raw = json.loads(text)
    else:
        raise ConfigError("config must be a .toml or .json file")
    return ExperimentConfig.from_dict(raw)


# -- demos ---------------------------------------------------------------------------

def expert_policy(mdp: TabularMdp, expert: dict) -> np.ndarray:
    if mdp.true_reward is None:
        raise ConfigError("demo generation needs an environment with a true reward")
    _, pi = soft_optimal_policy(mdp, mdp.true_reward, float(expert.get("temperature", 1.0)))
    return pi


def generate_demos(mdp: TabularMdp, gen: dict, seed: int) -> DemoDataset:
    accept = gen.get("accept_states") or None
    horizon = int(gen.get("horizon", 100))
    return sample_trajectories(
        mdp, expert_policy(mdp, gen.get("expert", {})), int(gen.get("n_episodes", 30)), horizon,
        seed=seed, accept=accept, check_horizon=bool(gen.get("check_horizon", accept is None)))


def obtain_demos(cfg: ExperimentConfig, mdp: TabularMdp) -> DemoDataset:
    if "path" in cfg.demos:
        p = Path(cfg.demos["path"])
        if not p.exists():
            raise ConfigError(f"demo file {p} does not exist")
        return DemoDataset.load_jsonl(p).validate(mdp)
    return generate_demos(mdp, cfg.demos.get("generate", {}), cfg.seed)


# -- training ---------------------------------------------------------------------------

@dataclass
class MethodOutput:
    """Uniform view of a trained method for evaluation and export."""

    method: str
    policy: np.ndarray
    reward_sa: Optional[np.ndarray] = None
    state_reward: Optional[np.ndarray] = None
    q: Optional[np.ndarray] = None
    gamma: float = 0.0
    temperature: float = 1.0
    preferred_action: Optional[int] = None
    iterations: int = 0
    converged: bool = True
    wall_clock_seconds: float = 0.0
    # IQ rewards are per transition; everything else is per (s, a)
    transition_based: bool = False

    def reward_fn(self):
        if self.transition_based:
            v = policy_value(self.q, self.policy, self.temperature)
            return recover_reward_transition(self.q, v, self.gamma)
        if self.reward_sa is None:
            return None
        r = self.reward_sa
        return lambda s, a, s_next: r[s, a]

    def to_json(self) -> dict:
        out = {"method": self.method}
        for k, v in asdict(self).items():
            if k == "method":
                continue
            out[k] = v.tolist() if isinstance(v, np.ndarray) else v
        return out

    @classmethod
    def from_json(cls, d: dict) -> "MethodOutput":
        d = dict(d)
        if "q" in d and "objective_trace" in d and "method" not in d:
            res = IqResult.from_json(d)
            return _from_iq(res, None, None)
        arrays = ("policy", "reward_sa", "state_reward", "q")
        kwargs = {k: (np.asarray(d[k], dtype=float) if k in arrays and d.get(k) is not None
                      else d.get(k)) for k in cls.__dataclass_fields__ if k in d}
        return cls(**kwargs)


def _from_iq(res: IqResult, mdp: Optional[TabularMdp], pref) -> MethodOutput:
    sr = state_reward(mdp.with_gamma(res.gamma), res.q, res.temperature) if mdp else None
    return MethodOutput("iq", res.policy, res.reward_sa, sr, res.q, res.gamma, res.temperature,
                        pref, res.iterations, res.converged, res.wall_clock_seconds, True)


def train_method(method: str, cfg: ExperimentConfig, mdp: TabularMdp,
                 demos: DemoDataset) -> MethodOutput:
    pref = modal_action(demos, mdp.n_actions)
    t0 = time.perf_counter()
    if method == "iq":
        res = iq_learn(mdp, empirical_occupancy(demos, mdp), cfg.iq_config())
        return _from_iq(res, mdp, pref)
    if method == "bc":
        pi = bc_tabular(demos, mdp, float(cfg.bc.get("smoothing", 0.0)))
        return MethodOutput("bc", pi, preferred_action=pref, gamma=mdp.gamma,
                            wall_clock_seconds=time.perf_counter() - t0)
    if method == "sqil":
        tau = float(cfg.sqil.get("temperature", 1.0))
        q = sqil_tabular(mdp, demos, tau)
        pi = soft_policy(q, tau)
        r = sqil_reward(demos, mdp)
        return MethodOutput("sqil", pi, r, (pi * r).sum(axis=1), q, mdp.gamma, tau, pref,
                            wall_clock_seconds=time.perf_counter() - t0)
    if method == "maxent_irl":
        res = maxent_irl(mdp, empirical_occupancy(demos, mdp), cfg.maxent_config())
        return MethodOutput("maxent_irl", res.policy, res.reward_sa, res.reward_s, res.q,
                            mdp.gamma, cfg.maxent_config().temperature, pref, res.iterations,
                            res.converged, res.wall_clock_seconds)
    raise ConfigError(f"unknown method {method!r}")


def evaluate(out: MethodOutput, mdp: TabularMdp, ev: EvalConfig, seed: int,
             expert_occ: Optional[np.ndarray] = None) -> MetricsReport:
    pol = greedy_policy(out.policy, out.preferred_action) if ev.greedy else out.policy
    ro = rollout(mdp, pol, ev.n_rollouts, ev.horizon, seed=seed)
    corr = None
    fn = out.reward_fn()
    if fn is not None and mdp.true_reward is not None:
        corr = transition_reward_correlation(ro, fn, ev.per_episode)
    tv = None
    if expert_occ is not None:
        tv = total_variation(compute_occupancy(mdp, out.policy), expert_occ)
    returns = ro.returns
    return MetricsReport(float(returns.mean()), float(returns.std()), corr, tv,
                         float(out.wall_clock_seconds), int(out.iterations), bool(out.converged))


def expert_occupancy(cfg: ExperimentConfig, mdp: TabularMdp) -> Optional[np.ndarray]:
    """Exact occupancy of the generating expert (known only for generated demos)."""
    gen = cfg.demos.get("generate")
    if gen is None or "path" in cfg.demos or mdp.true_reward is None:
        return None
    return compute_occupancy(mdp, expert_policy(mdp, gen.get("expert", {})))


# -- exports ----------------------------------------------------------------------------

def _write_csv(path: Path, header: list, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([f"{x:.10g}" if isinstance(x, float) else x for x in row])


def write_reward_csv(out: MethodOutput, mdp: TabularMdp, outdir: Path) -> list:
    written = []
    if out.reward_sa is not None:
        p = outdir / f"{out.method}_reward_sa.csv"
        actions = mdp.info.get("actions") or [f"a{i}" for i in range(mdp.n_actions)]
        _write_csv(p, ["state", *actions],
                   ([s, *map(float, out.reward_sa[s])] for s in range(mdp.n_states)))
        written.append(p)
    if out.state_reward is not None and mdp.info.get("kind") == "gridworld":
        p = outdir / f"{out.method}_state_reward_grid.csv"
        grid = grid_state_table(mdp, out.state_reward)
        _write_csv(p, ["y", *[f"x{x}" for x in range(grid.shape[1])]],
                   ([y, *map(float, grid[y])] for y in range(grid.shape[0])))
        written.append(p)
    return written


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, allow_nan=False) + "\n", encoding="utf-8")


# -- commands -------------------------------------------------------------------------------

def cmd_gen_demos(cfg: ExperimentConfig, outdir: Path, say) -> Path:
    mdp = build_env(cfg.env)
    demos = obtain_demos(cfg, mdp) if "path" not in cfg.demos else None
    if demos is None:
        raise ConfigError("gen-demos needs a [demos.generate] section")
    outdir.mkdir(parents=True, exist_ok=True)
    path = outdir / "demos.jsonl"
    demos.save_jsonl(path)
    ret = mdp.true_reward[demos.s, demos.a]
    per_ep = np.bincount(demos.episode, weights=ret)
    say(f"wrote {len(demos)} transitions in {demos.n_episodes} episodes to {path}")
    say(f"expert mean return {per_ep.mean():.3f}")
    return path


def cmd_train(cfg: ExperimentConfig, outdir: Path, say) -> MetricsReport:
    mdp = build_env(cfg.env)
    demos = obtain_demos(cfg, mdp)
    out = train_method(cfg.method, cfg, mdp, demos)
    metrics = evaluate(out, mdp, cfg.eval, cfg.seed, expert_occupancy(cfg, mdp))
    outdir.mkdir(parents=True, exist_ok=True)
    _dump(outdir / f"{cfg.method}_result.json", out.to_json())
    write_reward_csv(out, mdp, outdir)
    _dump(outdir / f"{cfg.method}_metrics.json", metrics.to_json())
    say(_format_metrics(cfg.method, metrics))
    return metrics


def cmd_eval(cfg: ExperimentConfig, result_path: Path, outdir: Path, say) -> MetricsReport:
    if not result_path.exists():
        raise ConfigError(f"result file {result_path} does not exist")
    mdp = build_env(cfg.env)
    out = MethodOutput.from_json(json.loads(result_path.read_text(encoding="utf-8")))
    metrics = evaluate(out, mdp, cfg.eval, cfg.seed, expert_occupancy(cfg, mdp))
    outdir.mkdir(parents=True, exist_ok=True)
    _dump(outdir / f"{out.method}_eval_metrics.json", metrics.to_json())
    say(_format_metrics(out.method, metrics))
    return metrics


def cmd_compare(cfg: ExperimentConfig, outdir: Path, say) -> dict:
    if len(cfg.methods) < 2:
        raise ConfigError("compare needs at least two methods")
    mdp = build_env(cfg.env)
    demos = obtain_demos(cfg, mdp)
    expert_occ = expert_occupancy(cfg, mdp)
    outs, table = {}, {}
    for m in cfg.methods:
        outs[m] = train_method(m, cfg, mdp, demos)
        table[m] = evaluate(outs[m], mdp, cfg.eval, cfg.seed, expert_occ).to_json()
    pairs = {}
    for i, a in enumerate(cfg.methods):
        for b in cfg.methods[i + 1:]:
            ra, rb = outs[a].state_reward, outs[b].state_reward
            key = f"{a}|{b}"
            pairs[key] = {
                "state_reward_pearson": None if ra is None or rb is None else pearson(ra, rb),
                "wall_clock_ratio": (outs[b].wall_clock_seconds / outs[a].wall_clock_seconds
                                     if outs[a].wall_clock_seconds > 0 else None),
            }
    report = {"methods": table, "pairs": pairs}
    outdir.mkdir(parents=True, exist_ok=True)
    _dump(outdir / "compare.json", report)
    for m in cfg.methods:
        write_reward_csv(outs[m], mdp, outdir)
        say(_format_metrics(m, MetricsReport.from_json(table[m])))
    for key, v in pairs.items():
        p = v["state_reward_pearson"]
        r = v["wall_clock_ratio"]
        say(f"{key}: state-reward pearson {'n/a' if p is None else f'{p:.3f}'}, "
            f"wall-clock ratio {'n/a' if r is None else f'{r:.2f}'}")
    return report


def _format_metrics(name: str, m: MetricsReport) -> str:
    parts = [f"{name}: return {m.mean_return:.2f} +- {m.std_return:.2f}"]
    if m.pearson_reward_correlation is not None:
        parts.append(f"pearson {m.pearson_reward_correlation:.3f}")
    if m.occupancy_tv_to_expert is not None:
        parts.append(f"tv {m.occupancy_tv_to_expert:.4f}")
    parts.append(f"{m.wall_clock_seconds:.3f}s")
    return ", ".join(parts)


# -- entry point ----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="iqtab", description="Tabular inverse soft-Q learning experiments.",
        epilog="Defaults: method=iq, env=5x5 gridworld, 30 generated demos of 100 steps, "
               "eval 300 greedy rollouts of 100 steps, outputs in ./out. "
               "IQTAB_THREADS caps worker threads.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, helptext in (("gen-demos", "sample expert demonstrations to JSONL"),
                           ("train", "train one method, export result, rewards and metrics"),
                           ("eval", "evaluate a saved result file"),
                           ("compare", "train and compare several methods")):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("--config", help="TOML or JSON experiment config")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--out", help="output directory (overrides config 'outputs')")
        sp.add_argument("--quiet", action="store_true", help="suppress stdout summaries")
        sp.add_argument("--per-episode", action="store_true",
                        help="correlate per-episode reward sums instead of per-step rewards")
        if name == "eval":
            sp.add_argument("--result", required=True, help="result JSON written by train")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    say = (lambda *_: None) if args.quiet else print
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.per_episode:
            cfg.eval.per_episode = True
        outdir = Path(args.out or cfg.outputs)
        if args.command == "gen-demos":
            cmd_gen_demos(cfg, outdir, say)
        elif args.command == "train":
            cmd_train(cfg, outdir, say)
        elif args.command == "eval":
            cmd_eval(cfg, Path(args.result), outdir, say)
        else:
            cmd_compare(cfg, outdir, say)
    except Exception as exc:  # reported, nonzero exit
        print(f"iqtab: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
