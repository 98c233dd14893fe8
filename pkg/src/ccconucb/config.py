"""Experiment configuration: JSON in, validated dataclass out.

Unknown keys are rejected and every error names the offending field.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path

from .env import GenConfig, NoiseSpec
from .harness import KNOWN, POLICIES, UNKNOWN, RunConfig
from .policy import FRESH, STATIC
from .reward import LINEAR_SUM, SATURATING_CONCAVE, RewardFunction

EXPERIMENTS = ("regret_curves", "table1", "endurance", "probes")

TABLE1_GRID = (0.01, 0.15, 0.3, 0.6, 0.9)
ENDURANCE_GRID = (0.1, 0.3, 0.6)

_DEFAULT_POLICIES = {
    "regret_curves": (KNOWN, UNKNOWN, "c2ucb"),
    "table1": ("c2ucb", KNOWN),
    "endurance": (KNOWN, "conservative"),
    "probes": (KNOWN, UNKNOWN, "c2ucb"),
}


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "regret_curves"
    M: int = 20
    d: int = 5
    K: int = 2
    T: int = 2000
    alpha: float = 0.2
    alpha_grid: tuple[float, ...] | None = None
    delta: float = 0.1
    lam: float | None = None
    S: float = 3.0
    L: float | None = None
    policies: tuple[str, ...] = ()
    n_seeds: int = 50
    instance_seed: int | None = None
    reward_function: RewardFunction = field(default_factory=RewardFunction)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    recompute_mode: str = FRESH
    conservative_ranks: tuple[int, int] = (8, 9)
    probe_every: int | None = None
    refresh_every: int = 1000
    write_logs: bool = True
    csv_every: int = 1
    output_dir: str = "runs"

    @property
    def alphas(self) -> tuple[float, ...]:
        return self.alpha_grid if self.alpha_grid is not None else (self.alpha,)

    def gen_config(self) -> GenConfig:
        return GenConfig(M=self.M, d=self.d, K=self.K, S=self.S, L=self.L,
                         conservative_ranks=self.conservative_ranks,
                         noise=self.noise, reward=self.reward_function)

    def run_config(self, alpha: float | None = None) -> RunConfig:
        return RunConfig(alpha=self.alpha if alpha is None else alpha, lam=self.lam, S=self.S,
                         delta=self.delta, recompute_mode=self.recompute_mode,
                         refresh_every=self.refresh_every, probe_every=self.probe_every)

    def to_json(self) -> dict:
        doc = asdict(self)
        doc["lambda"] = doc.pop("lam")
        for key in ("alpha_grid", "policies", "conservative_ranks"):
            if doc[key] is not None:
                doc[key] = list(doc[key])
        return doc


# JSON key -> dataclass field
_KEYS = {f.name: f.name for f in fields(ExperimentConfig)}
_KEYS["lambda"] = _KEYS.pop("lam")


def _int(path, v, lo=None):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(path, f"expected an integer, got {v!r}")
    if lo is not None and v < lo:
        raise ConfigError(path, f"must be >= {lo}, got {v}")
    return v


def _num(path, v):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(path, f"expected a finite number, got {v!r}")
    return float(v)


def _positive(path, v):
    v = _num(path, v)
    if v <= 0:
        raise ConfigError(path, f"must be > 0, got {v}")
    return v


def _unit_open(path, v):
    v = _num(path, v)
    if not 0 < v < 1:
        raise ConfigError(path, f"must lie in the open interval (0, 1), got {v}")
    return v


def _reward(path, v):
    if isinstance(v, str):
        v = {"kind": v}
    if not isinstance(v, dict):
        raise ConfigError(path, f"expected a reward id or object, got {v!r}")
    extra = set(v) - {"kind", "scale"}
    if extra:
        raise ConfigError(f"{path}.{sorted(extra)[0]}", "unknown key")
    kind = v.get("kind", LINEAR_SUM)
    if kind not in (LINEAR_SUM, SATURATING_CONCAVE):
        raise ConfigError(f"{path}.kind", f"must be one of {LINEAR_SUM!r}, {SATURATING_CONCAVE!r}; got {kind!r}")
    return RewardFunction(kind, _positive(f"{path}.scale", v.get("scale", 1.0)))


def _noise(path, v):
    if not isinstance(v, dict):
        raise ConfigError(path, f"expected an object with kind and scale, got {v!r}")
    extra = set(v) - {"kind", "scale"}
    if extra:
        raise ConfigError(f"{path}.{sorted(extra)[0]}", "unknown key")
    kind = v.get("kind", "gaussian")
    if kind not in ("gaussian", "uniform"):
        raise ConfigError(f"{path}.kind", f"must be 'gaussian' or 'uniform', got {kind!r}")
    scale = _num(f"{path}.scale", v.get("scale", 1.0))
    if not 0 <= scale <= 1:
        raise ConfigError(f"{path}.scale", f"must lie in [0, 1] for 1-sub-Gaussian noise, got {scale}")
    return NoiseSpec(kind, scale)


def config_from_dict(doc: dict) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("", "config must be a JSON object")
    unknown = sorted(set(doc) - set(_KEYS))
    if unknown:
        raise ConfigError(unknown[0], "unknown key")
    out: dict = {}
    g = doc.get

    exp = g("experiment", "regret_curves")
    if exp not in EXPERIMENTS:
        raise ConfigError("experiment", f"must be one of {list(EXPERIMENTS)}, got {exp!r}")
    out["experiment"] = exp
    for key in ("M", "d", "K", "T", "n_seeds"):
        if key in doc:
            out[key] = _int(key, doc[key], 1)
    M, K = out.get("M", 20), out.get("K", 2)
    if K > M:
        raise ConfigError("K", f"must not exceed M={M}, got {K}")

    if "alpha" in doc:
        out["alpha"] = _unit_open("alpha", doc["alpha"])
    grid = g("alpha_grid")
    if grid is None:
        grid = {"table1": TABLE1_GRID, "endurance": ENDURANCE_GRID}.get(exp)
    if grid is not None:
        if not isinstance(grid, (list, tuple)) or not grid:
            raise ConfigError("alpha_grid", "expected a non-empty list")
        grid = tuple(_unit_open(f"alpha_grid[{i}]", a) for i, a in enumerate(grid))
        for i in range(1, len(grid)):
            if not grid[i] > grid[i - 1]:
                raise ConfigError(f"alpha_grid[{i}]", "entries must be strictly increasing")
        out["alpha_grid"] = grid

    if "delta" in doc:
        out["delta"] = _unit_open("delta", doc["delta"])
    for key, name in (("lambda", "lam"), ("L", "L")):
        if g(key) is not None:
            out[name] = _positive(key, doc[key])
    if "S" in doc:
        out["S"] = _positive("S", doc["S"])

    pols = g("policies")
    if pols is None:
        pols = _DEFAULT_POLICIES[exp]
    if not isinstance(pols, (list, tuple)) or not pols:
        raise ConfigError("policies", "expected a non-empty list")
    for i, p in enumerate(pols):
        if p not in POLICIES:
            raise ConfigError(f"policies[{i}]", f"must be one of {sorted(POLICIES)}, got {p!r}")
    if len(set(pols)) != len(pols):
        raise ConfigError("policies", "duplicate policy")
    if exp == "endurance" and "conservative" not in pols:
        raise ConfigError("policies", "endurance needs the 'conservative' baseline")
    out["policies"] = tuple(pols)

    if g("instance_seed") is not None:
        out["instance_seed"] = _int("instance_seed", doc["instance_seed"], 0)
    if "reward_function" in doc:
        out["reward_function"] = _reward("reward_function", doc["reward_function"])
    if "noise" in doc:
        out["noise"] = _noise("noise", doc["noise"])
    if "recompute_mode" in doc:
        mode = doc["recompute_mode"]
        if not isinstance(mode, str) or mode.lower() not in (FRESH, STATIC):
            raise ConfigError("recompute_mode", f"must be 'Fresh' or 'Static', got {mode!r}")
        out["recompute_mode"] = mode.lower()
    if "conservative_ranks" in doc:
        r = doc["conservative_ranks"]
        if not isinstance(r, (list, tuple)) or len(r) != 2:
            raise ConfigError("conservative_ranks", "expected [upper_rank, lower_rank]")
        hi, lo = (_int(f"conservative_ranks[{i}]", x, 1) for i, x in enumerate(r))
        if not hi <= lo <= M:
            raise ConfigError("conservative_ranks", f"need 1 <= {hi} <= {lo} <= M={M}")
        out["conservative_ranks"] = (hi, lo)
    if g("probe_every") is not None:
        out["probe_every"] = _int("probe_every", doc["probe_every"], 1)
    for key in ("refresh_every", "csv_every"):
        if key in doc:
            out[key] = _int(key, doc[key], 1)
    if "write_logs" in doc:
        if not isinstance(doc["write_logs"], bool):
            raise ConfigError("write_logs", f"expected true or false, got {doc['write_logs']!r}")
        out["write_logs"] = doc["write_logs"]
    if "output_dir" in doc:
        if not isinstance(doc["output_dir"], str) or not doc["output_dir"]:
            raise ConfigError("output_dir", "expected a non-empty path string")
        out["output_dir"] = doc["output_dir"]
    return ExperimentConfig(**out)


def preset_path(name: str) -> Path:
    return Path(str(resources.files("ccconucb") / "presets" / f"{name}.json"))


def parse_config(path) -> ExperimentConfig:
    """Load and validate a config file; a bare preset name such as ``desk`` also works."""
    p = Path(path)
    if not p.exists() and not p.suffix and preset_path(str(path)).exists():
        p = preset_path(str(path))
    try:
        text = p.read_text()
    except FileNotFoundError:
        raise ConfigError("", f"config file not found: {path}") from None
    except OSError as exc:
        raise ConfigError("", f"cannot read {path}: {exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"malformed JSON in {path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return config_from_dict(doc)
