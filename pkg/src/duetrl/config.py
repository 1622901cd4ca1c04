"""Run configuration: flat key=value text with dotted sections.

Every key has a default equal to the tuned hyperparameter tables, so an
empty file is a valid config.  Unknown keys are rejected with the offending
key name.  Snapshots serialize every effective value so a run can be
reproduced from its snapshot alone.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .algos import PpoConfig, SacConfig
from .envs import DisabilityProfile, RewardWeights
from .errors import ConfigError
from .rng import derive_seed


def _parse_scalar(text: str):
    t = text.strip()
    if t.startswith("[") and t.endswith("]"):
        inner = t[1:-1].strip()
        if not inner:
            return []
        return [_parse_scalar(part) for part in inner.split(",")]
    if t in ("true", "True"):
        return True
    if t in ("false", "False"):
        return False
    if len(t) >= 2 and t[0] == t[-1] and t[0] in "'\"":
        return t[1:-1]
    try:
        return int(t)
    except ValueError:
        pass
    try:
        return float(t)
    except ValueError:
        pass
    return t  # bare string


def parse_config_text(text: str) -> dict:
    """Flat `a.b = value` lines to a nested dict; '#' lines are comments."""
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value", key=line)
        key, _, value = line.partition("=")
        key = key.strip()
        node = out
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"key {key!r} conflicts with a scalar", key=key)
        node[parts[-1]] = _parse_scalar(value)
    return out


_SECTIONS = {
    "ppo": PpoConfig,
    "sac": SacConfig,
    "disability": DisabilityProfile,
    "rewards": RewardWeights,
}


@dataclass
class RunConfig:
    task: str = "scratch"
    algorithm: str = "ippo"
    seeds: object = 3              # count or explicit list
    base_seed: int = 0
    total_steps: int = 100_000
    eval_cadence: int = 50_000
    eval_episodes: int = 8
    output_dir: str = "runs/out"
    ppo: PpoConfig = field(default_factory=PpoConfig)
    sac: SacConfig = field(default_factory=SacConfig)
    disability: DisabilityProfile = field(default_factory=DisabilityProfile)
    rewards: RewardWeights = field(default_factory=RewardWeights)

    def seed_list(self) -> list[int]:
        """Explicit seeds, or `seeds` values derived from base_seed."""
        if isinstance(self.seeds, list):
            return [int(s) for s in self.seeds]
        return [derive_seed(self.base_seed, i) for i in range(int(self.seeds))]

    def algo_config(self):
        from .algos import is_ppo
        return self.ppo if is_ppo(self.algorithm) else self.sac


_TOP_FIELDS = {f.name for f in fields(RunConfig)} - set(_SECTIONS)


def run_config_from_dict(doc: dict) -> RunConfig:
    cfg = RunConfig()
    for key, value in doc.items():
        if key in _SECTIONS:
            if not isinstance(value, dict):
                raise ConfigError(f"section {key!r} needs dotted keys", key=key)
            section_cls = _SECTIONS[key]
            valid = {f.name for f in fields(section_cls)}
            for k, v in value.items():
                if k not in valid:
                    raise ConfigError(f"unknown key {key}.{k}", key=f"{key}.{k}")
            section = replace(getattr(cfg, key), **value)
            setattr(cfg, key, section)
        elif key in _TOP_FIELDS:
            setattr(cfg, key, value)
        else:
            raise ConfigError(f"unknown key {key}", key=key)
    if isinstance(cfg.seeds, (list, int)) is False:
        raise ConfigError("seeds must be an int count or a list", key="seeds")
    return cfg


def load_run_config(path) -> RunConfig:
    return run_config_from_dict(parse_config_text(Path(path).read_text()))


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return f'"{v}"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_format_value(x) for x in v) + "]"
    return repr(v)


def format_run_config(cfg: RunConfig) -> str:
    """Snapshot text: every effective key, diff-friendly one per line."""
    lines = []
    for name in sorted(_TOP_FIELDS):
        lines.append(f"{name} = {_format_value(getattr(cfg, name))}")
    for section in sorted(_SECTIONS):
        obj = getattr(cfg, section)
        for k, v in sorted(asdict(obj).items()):
            lines.append(f"{section}.{k} = {_format_value(v)}")
    return "\n".join(lines) + "\n"


def apply_overrides(cfg: RunConfig, pairs: list[str]) -> RunConfig:
    """Apply `key=value` strings (dotted keys allowed) on top of a config."""
    doc: dict = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"override {pair!r} is not key=value", key=pair)
        key, _, value = pair.partition("=")
        node = doc
        parts = key.strip().split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = _parse_scalar(value)
    merged = parse_config_text(format_run_config(cfg))
    _deep_update(merged, doc)
    return run_config_from_dict(merged)


def _deep_update(base: dict, extra: dict) -> None:
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(base.get(k), dict):
            _deep_update(base[k], v)
        else:
            base[k] = v
