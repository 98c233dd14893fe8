"""Command-line entry point: ``ccconucb --config desk.json``.

Exit codes: 0 success, 1 a probe failed, 2 bad config, 3 an episode aborted.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import platform
import sys
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .config import ConfigError, ExperimentConfig, parse_config
from .env import SamplingError, generate_instance
from .harness import (CSV_HEADER, EpisodeAborted, average_regret, constraint_violations, endurance_time,
                      iter_many, selection_counts, summarize_curves)
from .probes import ProbeReport, coverage_failed, episode_probes, probe_confidence_coverage

EXIT_OK, EXIT_PROBE, EXIT_CONFIG, EXIT_ABORT = 0, 1, 2, 3
COVERAGE_MIN_EPISODES = 100

log = logging.getLogger("ccconucb")


class ProbeLedger:
    """Folds per-episode probe reports into one summary per probe name."""

    def __init__(self):
        self.rows: dict[str, dict] = {}
        self.coverage_misses: dict[str, list[bool]] = {}
        self.coverage_results = []

    def add(self, run_id: str, policy: str, report: ProbeReport, missed: bool | None) -> None:
        for r in report.results:
            row = self.rows.setdefault(r.name, {
                "name": r.name, "runs": 0, "rounds_checked": 0, "max_violation": -float("inf"),
                "tolerance": r.tolerance, "passed": True, "failing_runs": [], "stated_form_failures": 0,
            })
            row["runs"] += 1
            row["rounds_checked"] += r.rounds_checked
            row["max_violation"] = max(row["max_violation"], r.max_violation)
            row["stated_form_failures"] += r.details.get("stated_form_failures", 0)
            if not r.passed:
                row["passed"] = False
                row["failing_runs"].append(run_id)
        if missed is not None:
            self.coverage_misses.setdefault(policy, []).append(missed)

    def finish(self, delta: float) -> None:
        for policy, flags in self.coverage_misses.items():
            R = len(flags)
            if R < COVERAGE_MIN_EPISODES:
                # too few episodes for the binomial tolerance to mean anything
                self.coverage_results.append({"name": "confidence_coverage", "policy": policy, "episodes": R,
                                              "gated": False, "failures": sum(flags)})
                continue
            res = probe_confidence_coverage(flags, delta, COVERAGE_MIN_EPISODES)
            self.coverage_results.append({"name": res.name, "policy": policy, "episodes": R, "gated": True,
                                          "failures": res.details["failures"], "failure_fraction": res.max_violation,
                                          "tolerance": res.tolerance, "passed": res.passed})

    @property
    def passed(self) -> bool:
        return (all(r["passed"] for r in self.rows.values())
                and all(c.get("passed", True) for c in self.coverage_results))

    def to_json(self) -> dict:
        rows = []
        for r in self.rows.values():
            r = dict(r)
            if r["name"] != "conservative_round_bound":
                r.pop("stated_form_failures")
            rows.append(r)
        return {"passed": self.passed, "probes": rows, "coverage": self.coverage_results}


class Runner:
    def __init__(self, cfg: ExperimentConfig, out: Path, seeds: list[int], workers: int):
        self.cfg = cfg
        self.out = out
        self.seeds = seeds
        self.workers = workers
        self.probes = ProbeLedger()
        self.files: list[Path] = []

    def instance_seed(self, seed: int) -> int:
        return self.cfg.instance_seed if self.cfg.instance_seed is not None else seed

    def jobs(self, policy: str, alpha: float):
        gen = self.cfg.gen_config()
        rc = self.cfg.run_config(alpha)
        return [(gen, self.instance_seed(s), policy, rc, self.cfg.T, s, True) for s in self.seeds]

    def run(self, policy: str, alpha: float):
        """Yield (seed, log) after writing the NDJSON log and folding in probes."""
        log.info("running %s alpha=%g over %d seeds", policy, alpha, len(self.seeds))
        for seed, rl in zip(self.seeds, iter_many(self.jobs(policy, alpha), self.workers)):
            run_id = f"{policy}_alpha{alpha:g}_seed{seed}"
            if self.cfg.write_logs:
                self.write(Path("logs") / f"{run_id}.ndjson", rl.to_ndjson())
            missed = None if policy == "conservative" else coverage_failed(rl)
            self.probes.add(run_id, policy, episode_probes(rl), missed)
            yield seed, rl

    def write(self, rel: Path, text: str) -> None:
        path = self.out / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        self.files.append(rel)

    def write_rows(self, rel: str, header, rows) -> None:
        from io import StringIO

        buf = StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        self.write(Path(rel), buf.getvalue())

    def write_regret(self, rel: str, summaries) -> None:
        rows = [r for s in summaries for r in s.csv_rows(self.cfg.csv_every)]
        self.write_rows(rel, CSV_HEADER, ([t, repr(m), repr(sd), p] for t, m, sd, p in rows))


def _label(policy: str, alpha: float, many: bool) -> str:
    return f"{policy}@alpha={alpha:g}" if many else policy


def _alpha_free(policy: str) -> bool:
    # C2UCB and the always-conservative baseline ignore alpha when acting
    return policy in ("c2ucb", "conservative")


def exp_regret_curves(r: Runner, write_curves: bool = True) -> None:
    summaries = []
    many = len(r.cfg.alphas) > 1
    for policy in r.cfg.policies:
        for alpha in (r.cfg.alphas[:1] if _alpha_free(policy) else r.cfg.alphas):
            curves = [average_regret(rl) for _, rl in r.run(policy, alpha)]
            summaries.append(summarize_curves(_label(policy, alpha, many and not _alpha_free(policy)), curves))
    if write_curves:
        r.write_regret("regret.csv", summaries)


def exp_probes(r: Runner) -> None:
    exp_regret_curves(r, write_curves=False)


def _tally(stats, policy: str, alpha: float, rl) -> None:
    s = stats.setdefault((policy, alpha), {"violations": [], "optimistic": [], "conservative": []})
    n_T, d_T = selection_counts(rl)
    s["violations"].append(constraint_violations(rl, alpha, rl.meta["mu0"]))
    s["optimistic"].append(n_T)
    s["conservative"].append(d_T)


def exp_table1(r: Runner) -> None:
    cfg = r.cfg
    stats: dict[tuple[str, float], dict[str, list]] = {}
    summaries = []
    for policy in cfg.policies:
        if _alpha_free(policy):
            # one run per seed serves every alpha; only the audit threshold moves
            curves = []
            for _, rl in r.run(policy, cfg.alphas[0]):
                curves.append(average_regret(rl))
                for a in cfg.alphas:
                    _tally(stats, policy, a, rl)
            summaries.append(summarize_curves(policy, curves))
            continue
        for a in cfg.alphas:
            curves = []
            for _, rl in r.run(policy, a):
                curves.append(average_regret(rl))
                _tally(stats, policy, a, rl)
            summaries.append(summarize_curves(_label(policy, a, True), curves))
    header = ["alpha"]
    for p in cfg.policies:
        header += [f"{p}_violations", f"{p}_optimistic", f"{p}_conservative"]
    header.append("n_seeds")
    rows = []
    for a in cfg.alphas:
        row = [repr(a)]
        for p in cfg.policies:
            s = stats[(p, a)]
            row += [repr(float(np.mean(s["violations"]))), repr(float(np.mean(s["optimistic"]))),
                    repr(float(np.mean(s["conservative"])))]
        row.append(len(r.seeds))
        rows.append(row)
    r.write_rows("table1.csv", header, rows)
    r.write_regret("regret.csv", summaries)


def gap_terciles(gaps) -> np.ndarray:
    """0/1/2 labels splitting instances into low/medium/high gap groups of near-equal size."""
    gaps = np.asarray(gaps, dtype=np.float64)
    labels = np.empty(len(gaps), dtype=np.int64)
    for k, idx in enumerate(np.array_split(np.argsort(gaps, kind="stable"), 3)):
        labels[idx] = k
    return labels


TERCILES = ("low", "medium", "high")


def exp_endurance(r: Runner) -> None:
    cfg = r.cfg
    T = cfg.T
    base = {seed: rl for seed, rl in r.run("conservative", cfg.alphas[0])}
    gaps = np.array([float(np.mean(base[s].optimal - base[s].meta["mu0"])) for s in r.seeds])
    terc = gap_terciles(gaps)
    rows, table = [], {}
    for policy in cfg.policies:
        if policy == "conservative":
            continue
        for a in cfg.alphas:
            for i, (seed, rl) in enumerate(r.run(policy, a)):
                e = endurance_time(rl, base[seed])
                rows.append([r.instance_seed(seed), seed, repr(float(gaps[i])), TERCILES[terc[i]], policy, repr(a),
                             T if e is None else e, int(e is None)])
                table.setdefault((policy, a, int(terc[i])), []).append((T if e is None else e, e is None))
    r.write_rows("endurance.csv", ["instance_seed", "episode_seed", "gap", "tercile", "policy", "alpha",
                                   "endurance_time", "censored"], rows)
    summary = []
    for (policy, a, k), vals in table.items():
        times = [v for v, _ in vals]
        summary.append([policy, repr(a), TERCILES[k], len(vals), repr(float(np.mean(times))),
                        sum(c for _, c in vals)])
    r.write_rows("endurance_summary.csv", ["policy", "alpha", "tercile", "n_instances", "mean_endurance_time",
                                           "censored"], summary)


EXPERIMENTS = {
    "regret_curves": exp_regret_curves,
    "table1": exp_table1,
    "endurance": exp_endurance,
    "probes": exp_probes,
}


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def cmd_run(cfg: ExperimentConfig, *, seed_offset: int = 0, workers: int = 1, output: str | None = None) -> int:
    if output is not None:
        cfg = replace(cfg, output_dir=output)
    out = Path(cfg.output_dir)
    seeds = list(range(seed_offset, seed_offset + cfg.n_seeds))
    runner = Runner(cfg, out, seeds, workers)
    status, error = EXIT_OK, None
    try:
        # fail fast on an unsampleable environment before any worker starts
        generate_instance(cfg.gen_config(), runner.instance_seed(seeds[0]))
        EXPERIMENTS[cfg.experiment](runner)
    except (EpisodeAborted, SamplingError) as exc:
        status, error = EXIT_ABORT, str(exc)
        log.error("run aborted: %s", exc)
    runner.probes.finish(cfg.delta)
    report = runner.probes.to_json()
    runner.write(Path("probes.json"), json.dumps(report, indent=2, sort_keys=True) + "\n")
    if status == EXIT_OK and not report["passed"]:
        status = EXIT_PROBE
        for row in report["probes"]:
            if not row["passed"]:
                log.error("probe %s failed on %d run(s), worst violation %.3g",
                          row["name"], len(row["failing_runs"]), row["max_violation"])
        for row in report["coverage"]:
            if not row.get("passed", True):
                log.error("coverage failed for %s: %d/%d episodes", row["policy"], row["failures"], row["episodes"])
    manifest = {
        "tool": "ccconucb",
        "version": __version__,
        "kernel_backend": kernels.BACKEND,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "config": cfg.to_json(),
        "seed_offset": seed_offset,
        "seeds": seeds,
        "exit_code": status,
        "error": error,
        "files": {str(p): _sha256(out / p) for p in sorted(set(runner.files))},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    log.info("wrote %d files to %s (exit %d)", len(runner.files) + 1, out, status)
    return status


def _nonneg_int(s: str) -> int:
    v = int(s)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {v}")
    return v


def _pos_int(s: str) -> int:
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ccconucb", description="Run conservative combinatorial bandit experiments.")
    p.add_argument("--config", required=True, help="experiment JSON file, or a shipped preset name (desk, paper_s6, ...)")
    p.add_argument("--seed-offset", type=_nonneg_int, default=0, help="first seed; runs use seeds offset..offset+n_seeds-1")
    p.add_argument("--workers", type=_pos_int, default=1, help="worker processes for episodes (default 1)")
    p.add_argument("--output", default=None, help="output directory, overriding the config's output_dir")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = parse_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return cmd_run(cfg, seed_offset=args.seed_offset, workers=args.workers, output=args.output)
    except OSError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_ABORT


if __name__ == "__main__":
    sys.exit(main())
