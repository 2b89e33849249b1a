"""Run configuration: YAML file + ``key=value`` overrides + documented defaults.

Precedence is flags > file > defaults. Every section is validated by the
dataclass that owns it before any work starts.
"""
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import List, Optional, Tuple

import yaml

from .crf import CrfConfig
from .errors import MalformedConfig, UnknownField, ValidationFailure
from .metrics import BIN_EDGES, DELTA_THRESHOLD
from .scene import SceneConfig

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


@dataclass(frozen=True)
class RefineConfig:
    dataset: Optional[str] = None
    detections: str = "gt"
    # noisy_gt | gt | <directory of <frame_id>.pred.f32 rasters>
    unary: str = "noisy_gt"
    unary_noise: float = 0.02
    score_threshold: float = 0.5
    window: int = 3

    def __post_init__(self):
        if self.detections not in ("gt", "decoded"):
            raise ValueError("refine.detections must be 'gt' or 'decoded'")
        if self.unary_noise < 0:
            raise ValueError("unary_noise >= 0")
        if not 0 <= self.score_threshold <= 1:
            raise ValueError("score_threshold in [0, 1]")
        if self.window < 3 or self.window % 2 == 0:
            raise ValueError("window odd and >= 3")


@dataclass(frozen=True)
class EvalConfig:
    pairs: Optional[str] = None
    threshold: float = DELTA_THRESHOLD
    bin_edges: Tuple[float, ...] = BIN_EDGES
    symmetric: bool = True

    def __post_init__(self):
        object.__setattr__(self, "bin_edges", tuple(float(e) for e in self.bin_edges))
        if not self.threshold > 1:
            raise ValueError("threshold > 1")
        if len(self.bin_edges) < 2 or any(b <= a for a, b in zip(self.bin_edges, self.bin_edges[1:])):
            raise ValueError("bin_edges strictly increasing")


@dataclass(frozen=True)
class PlanConfig:
    detections: Optional[str] = None
    frame_id: Optional[str] = None
    resolution: float = 0.5
    x_min: float = -20.0
    x_max: float = 20.0
    z_min: float = 0.0
    z_max: float = 60.0
    inflation: float = 0.5
    start: Tuple[float, float] = (0.0, 0.5)
    goal: Tuple[float, float] = (0.0, 45.0)

    def __post_init__(self):
        object.__setattr__(self, "start", tuple(float(v) for v in self.start))
        object.__setattr__(self, "goal", tuple(float(v) for v in self.goal))
        if not self.resolution > 0:
            raise ValueError("resolution > 0")
        if not (self.x_max > self.x_min and self.z_max > self.z_min):
            raise ValueError("grid extents non-empty")
        if self.inflation < 0:
            raise ValueError("inflation >= 0")
        if len(self.start) != 2 or len(self.goal) != 2:
            raise ValueError("start and goal are (x, z) pairs")


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    frames: int = 20
    workers: int = 1
    log_level: str = "INFO"
    scene: SceneConfig = field(default_factory=SceneConfig)
    crf: CrfConfig = field(default_factory=CrfConfig)
    refine: RefineConfig = field(default_factory=RefineConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    plan: PlanConfig = field(default_factory=PlanConfig)

    def __post_init__(self):
        if self.frames < 1:
            raise ValueError("frames >= 1")
        if self.workers < 1:
            raise ValueError("workers >= 1")
        if self.log_level not in LOG_LEVELS:
            raise ValueError(f"log_level in {LOG_LEVELS}")

    def to_dict(self):
        d = asdict(self)
        d["scene"].pop("seed")
        return _plain(d)


SECTIONS = {"scene": SceneConfig, "crf": CrfConfig, "refine": RefineConfig, "eval": EvalConfig, "plan": PlanConfig}
TOP_LEVEL = ("seed", "frames", "workers", "log_level")


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def default_dict():
    return RunConfig().to_dict()


def _section_fields(section):
    names = {f.name for f in fields(SECTIONS[section])}
    names.discard("seed")
    return names


def _merge(base, incoming, where):
    for key, value in incoming.items():
        if key in TOP_LEVEL:
            base[key] = value
        elif key in SECTIONS:
            if value is None:
                continue
            if not isinstance(value, dict):
                raise MalformedConfig(f"{where}: section {key!r} must be a mapping")
            allowed = _section_fields(key)
            for sub, v in value.items():
                if sub not in allowed:
                    raise UnknownField(f"{where}: unknown field {key}.{sub}")
                base[key][sub] = v
        else:
            raise UnknownField(f"{where}: unknown field {key}")


def parse_override(text):
    """``"crf.sigma_f=0.3"`` -> ``{"crf": {"sigma_f": 0.3}}`` (value parsed as YAML)."""
    if "=" not in text:
        raise MalformedConfig(f"override {text!r} is not key=value")
    key, raw = text.split("=", 1)
    try:
        value = yaml.safe_load(raw) if raw.strip() else None
    except yaml.YAMLError as e:
        raise MalformedConfig(f"override {text!r}: {e}") from e
    parts = key.strip().split(".")
    if len(parts) == 1:
        return {parts[0]: value}
    if len(parts) == 2:
        return {parts[0]: {parts[1]: value}}
    raise UnknownField(f"override key {key!r} is nested too deeply")


def load_file(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise MalformedConfig(f"{path}: {e.strerror or e}") from e
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        where = f"{path}:{mark.line + 1}" if mark is not None else str(path)
        raise MalformedConfig(f"{where}: {getattr(e, 'problem', None) or e}") from e
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise MalformedConfig(f"{path}: top level must be a mapping")
    return data


def build(merged) -> RunConfig:
    try:
        sections = {}
        for name, cls in SECTIONS.items():
            kwargs = dict(merged[name])
            if name == "scene":
                kwargs["seed"] = merged["seed"]
            sections[name] = cls(**kwargs)
        return RunConfig(
            seed=int(merged["seed"]), frames=int(merged["frames"]), workers=int(merged["workers"]),
            log_level=str(merged["log_level"]).upper(), **sections,
        )
    except (ValueError, TypeError) as e:
        raise ValidationFailure(str(e)) from e


def parse_config(path=None, overrides: List[str] = (), seed=None) -> RunConfig:
    merged = default_dict()
    if path is not None:
        _merge(merged, load_file(path), str(path))
    for text in overrides:
        _merge(merged, parse_override(text), "--override")
    if seed is not None:
        merged["seed"] = seed
    return build(merged)


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)
