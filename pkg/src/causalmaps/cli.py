"""Experiment harness: seeded Monte Carlo orchestration, persistence, rendering.

Each subcommand validates its configuration, fans independent trials out
over derived seeds (mix64(master_seed, trial)), writes one JSON line per
trial record plus a CSV summary, and echoes a manifest.  For one
configuration the JSONL and CSV bytes are identical run to run (the
manifest carries wall time and is excluded from that guarantee).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from . import __version__
from .cmap import build_causal, build_halfplane, build_slice
from .errors import ConfigInvalid
from .lazymap import LazyLayeredMap
from .metric import escape_sequences, gamma_left_vertex, hyperbolicity_probe, probe_records
from .offspring import parse_distribution
from .rng import make_rng, mix64
from .tree import sample_gw, sample_gw_survived, serialize_tree
from . import electric, explore, render, walk

EXPERIMENTS = (
    "sample",
    "walk",
    "speed",
    "regen",
    "hyper",
    "resist",
    "explore",
    "kbad",
    "boundary",
    "escape",
    "render",
)


@dataclass
class ExperimentConfig:
    experiment: str
    mu: str = "0:0.25,2:0.75"
    depth: int = 12
    steps: int = 10000
    trials: int = 10
    k: int = 1
    lam: float = 1.0
    master_seed: int = 1
    out_dir: str = "out"
    kind: str = "causal"  # sample/render target: causal | slice | halfplane
    window: int = 3
    workers: int = 1

    def validate(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigInvalid(f"unknown experiment {self.experiment!r}")
        if self.trials <= 0:
            raise ConfigInvalid("trials must be positive")
        if self.steps < 0:
            raise ConfigInvalid("steps must be nonnegative")
        if self.depth < 0:
            raise ConfigInvalid("depth must be nonnegative")
        if self.k < 1:
            raise ConfigInvalid("k must be >= 1")
        if self.lam <= 0:
            raise ConfigInvalid("lambda must be positive")
        if self.workers < 1:
            raise ConfigInvalid("workers must be >= 1")
        if self.kind not in ("causal", "slice", "halfplane"):
            raise ConfigInvalid(f"unknown map kind {self.kind!r}")
        try:
            parse_distribution(self.mu)
        except Exception as exc:
            raise ConfigInvalid(f"bad distribution: {exc}") from exc


# --- per-trial workers (top level so they pickle) ------------------------------

def _trial_speed(cfg: ExperimentConfig, trial: int) -> dict:
    d = parse_distribution(cfg.mu)
    m = LazyLayeredMap.halfplane(d, mix64(cfg.master_seed, trial, 0))
    rng = make_rng(cfg.master_seed, trial, 1)
    tr = walk.run_walk(m, m.root, cfg.steps, cfg.lam, rng, seed=trial)
    regen = walk.regeneration_times(tr)
    dts, dhs = [], []
    for a, b in zip(regen.times[:-1], regen.times[1:]):
        dts.append(b - a)
        dhs.append(int(tr.heights[b]) - int(tr.heights[a]))
    return {
        "trial": trial,
        "h_final": int(tr.heights[-1]),
        "v_terminal": float(tr.heights[-1] / tr.n_steps),
        "n_regen": len(regen.times),
        "sum_dt": int(sum(dts)),
        "sum_dh": int(sum(dhs)),
    }


def _trial_escape(cfg: ExperimentConfig, trial: int) -> dict:
    d = parse_distribution(cfg.mu)
    s = LazyLayeredMap.backbone_slice(d, mix64(cfg.master_seed, trial, 0))
    rec = {"trial": trial}
    for k in range(0, cfg.k + 1, 5):
        out = escape_sequences(s, gamma_left_vertex(s, k), lambda i: 2 * i + 1, cfg.depth)
        rec[f"survived_k{k}"] = bool(out.survived)
    return rec


def _trial_kbad(cfg: ExperimentConfig, trial: int) -> dict:
    d = parse_distribution(cfg.mu)
    batch = 10000
    bad = 0
    for j in range(batch):
        m = LazyLayeredMap.halfplane(d, mix64(cfg.master_seed, trial, j))
        if walk.is_k_bad(m, m.root, cfg.k):
            bad += 1
    return {"trial": trial, "n": batch, "bad": bad}


def _trial_boundary(cfg: ExperimentConfig, trial: int) -> dict:
    d = parse_distribution(cfg.mu)
    m = LazyLayeredMap.causal(d, mix64(cfg.master_seed, trial, 0))
    hs = [5, 10, 15]
    rec = {"trial": trial}
    markers = []
    for w in (1, 2):
        tr = walk.run_walk(m, m.root, cfg.steps, 1.0, make_rng(cfg.master_seed, trial, w))
        markers.append({h: walk.boundary_marker(m, tr, h) for h in hs if tr.heights[-1] > h})
    for h in hs:
        if h in markers[0] and h in markers[1]:
            rec[f"differ_h{h}"] = bool(markers[0][h] != markers[1][h])
        else:
            rec[f"differ_h{h}"] = None
    return rec


def _trial_explore(cfg: ExperimentConfig, trial: int) -> dict:
    d = parse_distribution(cfg.mu)
    k = 1 + (trial % cfg.k)
    m = LazyLayeredMap.halfplane(d, mix64(cfg.master_seed, trial, 0))
    st = explore.new_exploration(m, k, rng=make_rng(cfg.master_seed, trial, 1))
    worst_ratio = 0.0
    witness_failures = 0
    while st.walk_steps_done < cfg.steps:
        ev = explore.advance(st)
        if ev["kind"] == "explore":
            try:
                explore.kfree_witness(st, m)
            except explore.NotKFree:
                witness_failures += 1
    for n in range(st.walk_steps_done):
        gap = explore.phi(st, n + 1) - explore.phi(st, n)
        worst_ratio = max(worst_ratio, gap / (7.0 * k * (n + 1)))
    rec = {
        "trial": trial,
        "k": k,
        "clock": st.clock,
        "phi_gap_ratio_max": worst_ratio,
        "witness_failures": witness_failures,
    }
    if trial == 0:
        rec["event_log"] = explore.event_log_lines(st)
    return rec


def _trial_hyper(cfg: ExperimentConfig, trial: int) -> list[dict]:
    # one record per surrounding triangle: {trial, radius, d_root_triangle}
    d = parse_distribution(cfg.mu)
    t = sample_gw_survived(d, cfg.depth, make_rng(cfg.master_seed, trial, 0))
    m = build_causal(t)
    recs = hyperbolicity_probe(m, cfg.steps, make_rng(cfg.master_seed, trial, 1))
    out = probe_records(recs, cfg.depth)
    for rec in out:
        rec["sample"], rec["trial"] = rec["trial"], trial
    return out


def _trial_resist(cfg: ExperimentConfig, trial: int) -> dict:
    d = parse_distribution(cfg.mu)
    t = sample_gw_survived(d, cfg.depth, make_rng(cfg.master_seed, trial, 0))
    s = build_slice(t)
    dec = electric.spine_walk(t, make_rng(cfg.master_seed, trial, 1))
    n_max = min(cfg.steps, len(dec.spine) - 1)
    prof = electric.spine_resistance_profile(s, dec, n_max)
    return {"trial": trial, "r_eff": [float(x) for x in prof]}


_TRIAL_FNS = {
    "speed": _trial_speed,
    "regen": _trial_speed,
    "escape": _trial_escape,
    "kbad": _trial_kbad,
    "boundary": _trial_boundary,
    "explore": _trial_explore,
    "hyper": _trial_hyper,
    "resist": _trial_resist,
}


def _map_trials(cfg: ExperimentConfig, fn) -> list[dict]:
    if cfg.workers == 1:
        out = [fn(cfg, t) for t in range(cfg.trials)]
    else:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            out = list(pool.map(fn, [cfg] * cfg.trials, range(cfg.trials)))
    flat: list[dict] = []
    for rec in out:
        if isinstance(rec, list):
            flat.extend(rec)
        else:
            flat.append(rec)
    return flat


# --- summaries -----------------------------------------------------------------

def _summarize(cfg: ExperimentConfig, records: list[dict]) -> dict:
    exp = cfg.experiment
    if exp in ("speed", "regen"):
        vs = np.array([r["v_terminal"] for r in records])
        dt = sum(r["sum_dt"] for r in records)
        dh = sum(r["sum_dh"] for r in records)
        half = walk.Z95 * vs.std(ddof=1) / np.sqrt(len(vs)) if len(vs) > 1 else 0.0
        return {
            "v_hat": float(vs.mean()),
            "ci_lo": float(vs.mean() - half),
            "ci_hi": float(vs.mean() + half),
            "v_ratio": (dh / dt) if dt else float("nan"),
            "n_trials": len(records),
        }
    if exp == "escape":
        out = {"n_trials": len(records)}
        for key in sorted(records[0]):
            if key.startswith("survived_k"):
                out[f"freq_{key[9:]}"] = float(np.mean([r[key] for r in records]))
        return out
    if exp == "kbad":
        n = sum(r["n"] for r in records)
        bad = sum(r["bad"] for r in records)
        d = parse_distribution(cfg.mu)
        theory = d.prob(1) ** ((cfg.k + 1) * (2 * cfg.k + 1))
        return {"n": n, "bad": bad, "p_hat": bad / n, "p_theory": theory}
    if exp == "boundary":
        out = {"n_pairs": len(records)}
        for h in (5, 10, 15):
            vals = [r[f"differ_h{h}"] for r in records if r[f"differ_h{h}"] is not None]
            out[f"differ_freq_h{h}"] = float(np.mean(vals)) if vals else float("nan")
        return out
    if exp == "explore":
        return {
            "n_runs": len(records),
            "phi_gap_ratio_max": max(r["phi_gap_ratio_max"] for r in records),
            "witness_failures": sum(r["witness_failures"] for r in records),
        }
    if exp == "hyper":
        ds = [r["d_root_triangle"] for r in records]
        return {
            "n_maps": cfg.trials,
            "n_surrounding": len(records),
            "d_root_triangle_max": max(ds) if ds else None,
        }
    if exp == "resist":
        slopes = []
        monotone = 0
        for r in records:
            prof = r["r_eff"]
            ns = np.arange(len(prof))
            if len(prof) > 1:
                slopes.append(float(np.polyfit(ns, prof, 1)[0]))
            if all(b >= a - 1e-8 for a, b in zip(prof, prof[1:])):
                monotone += 1
        return {
            "n_slices": len(records),
            "ls_slope_mean": float(np.mean(slopes)) if slopes else float("nan"),
            "monotone_fraction": monotone / len(records),
        }
    return {"n_records": len(records)}


# --- output writing ------------------------------------------------------------

def _describe_version() -> str:
    """Package version, suffixed with the source revision when available."""
    try:
        import subprocess

        rev = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True, text=True, timeout=5,
            cwd=os.path.dirname(os.path.abspath(__file__)),
        )
        if rev.returncode == 0 and rev.stdout.strip():
            return f"{__version__}+{rev.stdout.strip()}"
    except Exception:
        pass
    return __version__


def _write_outputs(cfg: ExperimentConfig, records: list[dict], summary: dict, t0: float) -> dict:
    os.makedirs(cfg.out_dir, exist_ok=True)
    base = os.path.join(cfg.out_dir, cfg.experiment)
    for rec in records:
        log = rec.pop("event_log", None)
        if log is not None:
            with open(f"{base}_events_{rec.get('trial', 0)}.jsonl", "w") as f:
                f.write("\n".join(log) + "\n")
    with open(base + "_trials.jsonl", "w") as f:
        for rec in records:
            f.write(json.dumps(rec, sort_keys=True) + "\n")
    with open(base + "_summary.csv", "w", newline="") as f:
        w = csv.writer(f)
        keys = sorted(summary)
        w.writerow(keys)
        w.writerow([summary[k] for k in keys])
    manifest = {
        "config": asdict(cfg),
        "version": _describe_version(),
        "wall_time_s": time.time() - t0,
        "schema": 1,
    }
    with open(base + "_manifest.json", "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
    return summary


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Execute the configured experiment and persist its outputs."""
    cfg.validate()
    t0 = time.time()
    if cfg.experiment == "sample":
        return _run_sample(cfg, t0)
    if cfg.experiment == "walk":
        return _run_walk_export(cfg, t0)
    if cfg.experiment == "render":
        return _run_render(cfg, t0)
    records = _map_trials(cfg, _TRIAL_FNS[cfg.experiment])
    summary = _summarize(cfg, records)
    return _write_outputs(cfg, records, summary, t0)


def _build_map(cfg: ExperimentConfig):
    d = parse_distribution(cfg.mu)
    if cfg.kind == "halfplane":
        return build_halfplane(d, cfg.window, cfg.depth, mix64(cfg.master_seed, 0))
    t = sample_gw_survived(d, cfg.depth, make_rng(cfg.master_seed, 0))
    return build_causal(t) if cfg.kind == "causal" else build_slice(t)


def _run_sample(cfg: ExperimentConfig, t0: float) -> dict:
    os.makedirs(cfg.out_dir, exist_ok=True)
    d = parse_distribution(cfg.mu)
    records = []
    for trial in range(cfg.trials):
        rng = make_rng(cfg.master_seed, trial)
        t = (
            sample_gw_survived(d, cfg.depth, rng)
            if d.mean > 1 and cfg.kind != "halfplane"
            else sample_gw(d, cfg.depth, rng)
        )
        path = os.path.join(cfg.out_dir, f"tree_{trial}.txt")
        with open(path, "w") as f:
            f.write(serialize_tree(t))
        records.append({"trial": trial, "n_vertices": len(t), "file": os.path.basename(path)})
    summary = {"n_trees": cfg.trials, "mean_size": float(np.mean([r["n_vertices"] for r in records]))}
    return _write_outputs(cfg, records, summary, t0)


def _run_walk_export(cfg: ExperimentConfig, t0: float) -> dict:
    os.makedirs(cfg.out_dir, exist_ok=True)
    d = parse_distribution(cfg.mu)
    records = []
    for trial in range(cfg.trials):
        if cfg.kind == "halfplane":
            m = LazyLayeredMap.halfplane(d, mix64(cfg.master_seed, trial, 0))
        else:
            m = LazyLayeredMap.causal(d, mix64(cfg.master_seed, trial, 0))
        tr = walk.run_walk(m, m.root, cfg.steps, cfg.lam, make_rng(cfg.master_seed, trial, 1), seed=trial)
        path = os.path.join(cfg.out_dir, f"walk_{trial}.txt")
        with open(path, "w") as f:
            for n in range(len(tr.positions)):
                f.write(f"{n} {int(tr.positions[n])} {int(tr.heights[n])}\n")
        records.append(
            {
                "trial": trial,
                "h_final": int(tr.heights[-1]),
                "descent_max": walk.descent_max(tr),
                "file": os.path.basename(path),
            }
        )
    summary = {
        "n_walks": cfg.trials,
        "mean_h_final": float(np.mean([r["h_final"] for r in records])),
    }
    return _write_outputs(cfg, records, summary, t0)


def _run_render(cfg: ExperimentConfig, t0: float) -> dict:
    os.makedirs(cfg.out_dir, exist_ok=True)
    m = _build_map(cfg)
    path = os.path.join(cfg.out_dir, f"map_{cfg.kind}.svg")
    render.render_svg(m, path)
    n = m.n_vertices if hasattr(m, "n_vertices") else len(m)
    records = [{"trial": 0, "file": os.path.basename(path), "n_vertices": int(n)}]
    summary = {"file": os.path.basename(path), "n_vertices": int(n)}
    return _write_outputs(cfg, records, summary, t0)


# --- argument parsing ----------------------------------------------------------

def _load_config_file(path: str) -> dict:
    try:
        import tomllib  # py311+
    except ModuleNotFoundError:
        import tomli as tomllib
    with open(path, "rb") as f:
        return tomllib.load(f)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="causalmaps", description=__doc__)
    sub = p.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        sp = sub.add_parser(name)
        sp.add_argument("--mu", type=str, default=None, help="offspring law, e.g. 0:0.25,2:0.75")
        sp.add_argument("--depth", type=int, default=None)
        sp.add_argument("--steps", type=int, default=None)
        sp.add_argument("--trials", type=int, default=None)
        sp.add_argument("--k", type=int, default=None)
        sp.add_argument("--lambda", dest="lam", type=float, default=None)
        sp.add_argument("--seed", dest="master_seed", type=int, default=None)
        sp.add_argument("--out", dest="out_dir", type=str, default=None)
        sp.add_argument("--kind", type=str, default=None)
        sp.add_argument("--window", type=int, default=None)
        sp.add_argument("--workers", type=int, default=None)
        sp.add_argument("--config", type=str, default=None, help="TOML file; flags override it")
    return p


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    base: dict = {}
    if args.config:
        base.update(_load_config_file(args.config))
    cfg = ExperimentConfig(experiment=args.experiment)
    for key, val in base.items():
        if not hasattr(cfg, key):
            raise ConfigInvalid(f"unknown config key {key!r}")
        setattr(cfg, key, val)
    for key in ("mu", "depth", "steps", "trials", "k", "lam", "master_seed", "out_dir", "kind", "window", "workers"):
        val = getattr(args, key, None)
        if val is not None:
            setattr(cfg, key, val)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = config_from_args(args)
    try:
        summary = run_experiment(cfg)
    except ConfigInvalid as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out = io.StringIO()
    json.dump(summary, out, sort_keys=True)
    print(out.getvalue())
    return 0


if __name__ == "__main__":
    sys.exit(main())
