"""Command-line experiment runner.

Subcommands::

    qsynth run    --scenario 1 --agent v2 --episodes 1000 --seed 1 --out runs/v2
    qsynth batch  --scenario 1 --agent classical --repeat 10 --out runs/batch
    qsynth oracle --scenario 3

Configuration files hold one ``key = value`` pair per line (``#`` starts a
comment).  Top-level keys are ``scenario``, ``agent``, ``episodes``,
``horizon``, ``qubits``, ``layers``, ``seed``, ``preset`` and ``out``;
``hp.<name>`` overrides a training hyperparameter and ``calibration.<name>``
a constant of the HDA evaluator.  Command-line flags override file values.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import agent as ag
from . import circuits, hdasim, qnet, statevec
from . import flowsheet as fs
from .errors import CapacityError, ConfigError, QSynthError

log = logging.getLogger("qsynth")

AGENTS = ("classical", "v1", "v2", "v3")
PRESETS = {"pb": {"v2": 30, "v3": 20}}
TOP_LEVEL = {
    "scenario": int,
    "agent": str,
    "episodes": int,
    "horizon": int,
    "qubits": int,
    "layers": int,
    "seed": int,
    "preset": str,
    "out": str,
}
REQUIRED = ("scenario", "agent")
HP_TYPES = {f.name: type(f.default) for f in fields(ag.Hyperparams)}
METRIC_COLUMNS = (
    "run_id",
    "agent",
    "scenario",
    "seed",
    "param_count",
    "opt_sf",
    "uniq_sf",
    "feas_sf",
    "first_opt_episode",
    "runtime_s",
)
SUMMARY_METRICS = (
    ("opt_sf", "Number of max reward solutions"),
    ("uniq_sf", "Unique Solutions"),
    ("feas_sf", "Feasible Solutions"),
    ("first_opt_episode", "Episode where optimal first found"),
    ("runtime_s", "Total run time (s)"),
)


@dataclass(frozen=True)
class RunConfig:
    scenario: int
    agent: str
    episodes: int = 1000
    horizon: int = 8
    qubits: int | None = None
    layers: int | None = None
    seed: int = 1
    preset: str | None = None
    hp: ag.Hyperparams = ag.Hyperparams()
    calibration: hdasim.Calibration = hdasim.DEFAULT
    out: str | None = None

    def train_config(self) -> ag.TrainConfig:
        return ag.TrainConfig(
            scenario=self.scenario,
            agent=self.agent,
            seed=self.seed,
            qubits=self.qubits,
            layers=self.layers,
            hp=self.hp,
            calibration=self.calibration,
        )

    def param_count(self) -> int:
        sc = fs.scenario(self.scenario)
        return qnet.param_count(self.agent, sc.input_dim, sc.action_count, self.qubits, self.layers)


# -- configuration ---------------------------------------------------------------


def read_key_values(path) -> dict[str, str]:
    out: dict[str, str] = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in out:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def _convert(key: str, value, typ):
    if value is None or isinstance(value, typ):
        return value
    try:
        return typ(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected {typ.__name__}, got {value!r}") from None


def resolve_config(raw: dict) -> RunConfig:
    """Validate raw key/value pairs and apply every default."""
    top, hp_over, cal_over = {}, {}, {}
    for key, value in raw.items():
        if value is None:
            continue
        if key in TOP_LEVEL:
            top[key] = _convert(key, value, TOP_LEVEL[key])
        elif key.startswith("hp.") and key[3:] in HP_TYPES:
            name = key[3:]
            hp_over[name] = _convert(key, value, HP_TYPES[name])
        elif key.startswith("calibration."):
            cal_over[key[len("calibration."):]] = _convert(key, value, float)
        else:
            raise ConfigError(f"unknown config key {key!r}")
    missing = [k for k in REQUIRED if k not in top]
    if missing:
        raise ConfigError(f"missing required keys: {', '.join(missing)}")

    agent = top["agent"].lower()
    if agent not in AGENTS:
        raise ConfigError(f"agent must be one of {', '.join(AGENTS)}; got {top['agent']!r}")
    number = top["scenario"]
    if number not in fs.SCENARIO_UNITS:
        raise ConfigError(f"scenario must be 1, 2 or 3; got {number}")
    sc = fs.scenario(number)
    qubits, layers = top.get("qubits"), top.get("layers")
    preset = top.get("preset")

    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}")
        if agent not in PRESETS[preset]:
            raise ConfigError(f"preset {preset!r} applies only to {', '.join(PRESETS[preset])}")
        layers = PRESETS[preset][agent]
    if agent == "classical":
        if qubits is not None or layers is not None:
            raise ConfigError("qubits/layers do not apply to the classical agent")
    elif agent == "v1":
        if qubits is not None and qubits != sc.input_dim:
            raise ConfigError(f"Variant 1 uses one qubit per state feature ({sc.input_dim} for scenario {number})")
        qubits = sc.input_dim
        layers = layers or 1
    else:
        qubits = qubits or sc.action_count
        minimum = circuits.min_layers_v2 if agent == "v2" else circuits.min_layers_v3
        layers = layers or minimum(sc.input_dim, qubits)
    if qubits is not None:
        statevec.check_capacity(qubits)
        try:
            circuits.build(int(agent[1]), sc.input_dim, sc.action_count, qubits, layers)
        except QSynthError as exc:
            raise ConfigError(str(exc)) from exc

    try:
        hp = ag.Hyperparams(
            **{**hp_over, "episodes": top.get("episodes", 1000), "horizon": top.get("horizon", 8)}
        )
        cal = hdasim.Calibration.from_overrides(cal_over)
    except (ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc
    return RunConfig(
        scenario=number,
        agent=agent,
        episodes=hp.episodes,
        horizon=hp.horizon,
        qubits=qubits,
        layers=layers,
        seed=top.get("seed", 1),
        preset=preset,
        hp=hp,
        calibration=cal,
        out=top.get("out"),
    )


def parse_config(path) -> RunConfig:
    return resolve_config(read_key_values(path))


# -- running -------------------------------------------------------------------


def derive_seed(base: int, index: int) -> int:
    """Seed of repeat ``index``: the base seed first, then a SeedSequence mix of (base, index)."""
    if index == 0:
        return base
    return int(np.random.SeedSequence([base, index]).generate_state(1)[0])


def episode_record(episode: int, epsilon: float, records, optimal: bool) -> str:
    doc = {
        "episode": episode,
        "epsilon": epsilon,
        "return": float(sum(r.reward for r in records)),
        "optimal": optimal,
        "steps": [r.to_dict() for r in records],
    }
    return json.dumps(doc, separators=(",", ":"))


def metrics_row(run_id: str, cfg: RunConfig, m: ag.RunMetrics) -> dict:
    return {
        "run_id": run_id,
        "agent": cfg.agent,
        "scenario": cfg.scenario,
        "seed": cfg.seed,
        "param_count": m.param_count,
        "opt_sf": m.opt_sf,
        "uniq_sf": m.uniq_sf,
        "feas_sf": m.feas_sf,
        "first_opt_episode": "" if m.first_opt_episode is None else m.first_opt_episode,
        "runtime_s": f"{m.runtime_s:.3f}",
    }


def write_csv(path, rows, columns) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def run(cfg: RunConfig, run_id: str | None = None, out=None, plot: bool = False):
    """Train once; write ``metrics.csv`` and ``episodes.jsonl`` under the output directory.

    Returns ``(metrics, row)``.  The episode log is written to a temporary
    name and only renamed once training finishes.
    """
    out = Path(out or cfg.out or "runs")
    run_id = run_id or f"{cfg.agent}-s{cfg.scenario}-seed{cfg.seed}"
    out.mkdir(parents=True, exist_ok=True)
    final = out / "episodes.jsonl"
    part = out / "episodes.jsonl.part"
    try:
        with open(part, "w") as fh:
            metrics = ag.train(
                cfg.train_config(),
                lambda *a: fh.write(episode_record(*a) + "\n"),
            )
    except BaseException:
        part.unlink(missing_ok=True)
        raise
    os.replace(part, final)
    expected = cfg.param_count()
    if metrics.param_count != expected:
        raise QSynthError(f"model has {metrics.param_count} parameters, formula gives {expected}")
    row = metrics_row(run_id, cfg, metrics)
    write_csv(out / "metrics.csv", [row], METRIC_COLUMNS)
    if plot:
        from . import report

        report.plot_learning_curve(final, out / "learning_curve.png")
    return metrics, row


def _batch_worker(task):
    cfg, run_id, out, plot = task
    try:
        return run(cfg, run_id, out, plot)[1]
    except Exception as exc:  # recorded and excluded from aggregates
        return {"run_id": run_id, "error": f"{type(exc).__name__}: {exc}"}


def _stats(values):
    vals = [float(v) for v in values if v not in ("", None)]
    if not vals:
        return None, None
    mean = statistics.fmean(vals)
    sd = statistics.stdev(vals) if len(vals) > 1 else 0.0
    return mean, sd


def summarize(rows: list[dict]) -> dict:
    out = {"runs": len(rows), "sd_degenerate": len(rows) < 2}
    for key, _ in SUMMARY_METRICS:
        out[f"{key}_mean"], out[f"{key}_sd"] = _stats(r[key] for r in rows)
    found = [r for r in rows if r["first_opt_episode"] not in ("", None)]
    out["found_optimum"] = len(found)
    return out


def batch(configs: list[RunConfig], repeat: int, out, jobs: int = 1, plot: bool = False):
    """Run every config ``repeat`` times with derived seeds.

    Writes ``metrics.csv`` (one row per run), ``summary.csv`` (mean and sample
    SD per config) and ``table.csv`` (metric rows by run columns) into ``out``.
    Returns ``(rows, summaries)``; failed runs are logged and excluded.
    """
    if not configs:
        raise ConfigError("batch needs at least one config")
    if repeat < 1:
        raise ConfigError("repeat must be at least 1")
    out = Path(out)
    tasks, owner = [], []
    for ci, cfg in enumerate(configs):
        prefix = f"c{ci + 1}-" if len(configs) > 1 else ""
        for i in range(repeat):
            run_cfg = replace(cfg, seed=derive_seed(cfg.seed, i))
            run_id = f"{prefix}{cfg.agent}-s{cfg.scenario}-r{i + 1:02d}"
            tasks.append((run_cfg, run_id, out / run_id, plot))
            owner.append(ci)
    out.mkdir(parents=True, exist_ok=True)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_batch_worker, tasks))
    else:
        results = [_batch_worker(t) for t in tasks]

    rows, per_config = [], [[] for _ in configs]
    for ci, res in zip(owner, results):
        if "error" in res:
            log.warning("run %s failed and is excluded: %s", res["run_id"], res["error"])
            continue
        rows.append(res)
        per_config[ci].append(res)
    write_csv(out / "metrics.csv", rows, METRIC_COLUMNS)

    summaries, table = [], []
    for cfg, cfg_rows in zip(configs, per_config):
        s = {"agent": cfg.agent, "scenario": cfg.scenario, "base_seed": cfg.seed, **summarize(cfg_rows)}
        if s["sd_degenerate"]:
            log.warning("%s scenario %d: fewer than 2 runs, SD reported as 0", cfg.agent, cfg.scenario)
        summaries.append(s)
        for key, label in SUMMARY_METRICS:
            line = {"agent": cfg.agent, "scenario": cfg.scenario, "metric": label}
            for i in range(repeat):
                line[f"run_{i + 1}"] = cfg_rows[i][key] if i < len(cfg_rows) else ""
            line["mean"], line["sd"] = s[f"{key}_mean"], s[f"{key}_sd"]
            table.append(line)
    if summaries:
        write_csv(out / "summary.csv", summaries, list(summaries[0]))
        write_csv(out / "table.csv", table, list(table[0]))
    if plot and rows:
        from . import report

        report.plot_first_optimal(rows, out / "first_optimal.png")
    return rows, summaries


def oracle(number: int, cal: hdasim.Calibration = hdasim.DEFAULT) -> list[dict]:
    """Every screened structure of a scenario, evaluated, best reward first."""
    sc = fs.scenario(number)
    rows = []
    for state in fs.enumerate_screened(sc):
        sim = hdasim.evaluate(state, cal)
        rows.append(
            {
                "signature": state.signature,
                "benzene_flow": sim.benzene_product_flow,
                "purity": sim.product_purity,
                "spec_met": sim.spec_met,
                "reward": sim.reward,
            }
        )
    rows.sort(key=lambda r: -r["reward"])
    return rows


def format_oracle(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=["signature", "benzene_flow", "purity", "spec_met", "reward"], lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({**r, "spec_met": int(r["spec_met"])})
    return buf.getvalue()


# -- argument parsing ------------------------------------------------------------


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", action="append", default=[], metavar="FILE",
                   help="key = value config file (repeat for several configs in batch)")
    p.add_argument("--scenario", type=int)
    p.add_argument("--agent", choices=AGENTS, type=str.lower)
    p.add_argument("--episodes", type=int)
    p.add_argument("--horizon", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--qubits", type=int)
    p.add_argument("--layers", type=int)
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="extra override, e.g. hp.learning_rate=0.005")
    p.add_argument("--out", metavar="DIR")
    p.add_argument("--plot", action="store_true", help="also render PNG figures")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qsynth", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="train one agent")
    _add_run_flags(p_run)
    p_batch = sub.add_parser("batch", help="repeat runs with derived seeds and aggregate")
    _add_run_flags(p_batch)
    p_batch.add_argument("--repeat", type=int, default=10)
    p_batch.add_argument("--jobs", type=int, default=1)
    p_or = sub.add_parser("oracle", help="enumerate and evaluate every screened structure")
    p_or.add_argument("--scenario", type=int, required=True)
    p_or.add_argument("--config", metavar="FILE", help="read calibration.* overrides from FILE")
    p_or.add_argument("--out", metavar="DIR")
    p_or.add_argument("--plot", action="store_true")
    return parser


def _flag_overrides(args) -> dict:
    raw = {k: getattr(args, k) for k in ("scenario", "agent", "episodes", "horizon", "seed", "qubits", "layers", "preset", "out")}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        raw[k.strip()] = v.strip()
    return {k: v for k, v in raw.items() if v is not None}


def configs_from_args(args) -> list[RunConfig]:
    flags = _flag_overrides(args)
    files = args.config or [None]
    return [resolve_config({**(read_key_values(f) if f else {}), **flags}) for f in files]


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "oracle":
            cal = hdasim.DEFAULT
            if args.config:
                over = {k[len("calibration."):]: v for k, v in read_key_values(args.config).items() if k.startswith("calibration.")}
                cal = hdasim.Calibration.from_overrides(over)
            if args.scenario not in fs.SCENARIO_UNITS:
                raise ConfigError(f"scenario must be 1, 2 or 3; got {args.scenario}")
            rows = oracle(args.scenario, cal)
            text = format_oracle(rows)
            sys.stdout.write(text)
            if args.out:
                out = Path(args.out)
                out.mkdir(parents=True, exist_ok=True)
                (out / f"oracle_s{args.scenario}.csv").write_text(text)
                if args.plot:
                    from . import report

                    report.plot_oracle(rows, out / f"oracle_s{args.scenario}.png", f"scenario {args.scenario}")
            return 0

        configs = configs_from_args(args)
        if args.command == "run":
            if len(configs) != 1:
                raise ConfigError("run takes a single config")
            _, row = run(configs[0], plot=args.plot)
            write = csv.DictWriter(sys.stdout, fieldnames=list(METRIC_COLUMNS), lineterminator="\n")
            write.writeheader()
            write.writerow(row)
            return 0

        out = args.out or configs[0].out or "runs/batch"
        rows, summaries = batch(configs, args.repeat, out, args.jobs, args.plot)
        for s in summaries:
            print(
                f"{s['agent']} scenario {s['scenario']}: {s['runs']} runs, "
                f"opt_sf {s['opt_sf_mean']} ± {s['opt_sf_sd']}, found optimum in {s['found_optimum']}"
            )
        return 0 if len(rows) == len(configs) * args.repeat else 1
    except CapacityError as exc:
        print(f"qsynth: capacity error: {exc}", file=sys.stderr)
        return 2
    except (QSynthError, KeyError) as exc:
        print(f"qsynth: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
