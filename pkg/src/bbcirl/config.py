"""Pipeline configuration.

The file format is flat UTF-8 ``section.key = value`` lines; ``#`` starts a
comment. Tuples are written comma-separated (``forward.layer_sizes = 49,16,3``),
booleans as ``true``/``false``. Keys left out take their defaults.
"""
from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, field, fields, replace

from .artifacts import sha256_text
from .errors import ConfigError
from .gridworld import GridConfig
from .tinynn import NetSpec


@dataclass(frozen=True)
class GridSection:
    width: int = 7
    height: int = 7
    start: int = 0
    goal: int = 48
    goal_reward: float = 20.0
    horizon: int = 15
    reward_seed: int = 7
    terminal_goal: bool = False


@dataclass(frozen=True)
class ForwardSection:
    episodes: int = 5000
    alpha: float = 0.00075
    gamma: float = 0.999
    layer_sizes: tuple[int, ...] = (49, 16, 3)
    seed: int = 0          # initial weights and action sampling


@dataclass(frozen=True)
class BundleSection:
    B: int = 15
    mode: str = "disjoint"
    independent: bool = False
    clone_lr: float = 0.00075
    clone_epochs: int = 2000
    seed: int = 0
    layer_sizes: tuple[int, ...] = (49, 16, 3)


@dataclass(frozen=True)
class BetaSection:
    layer_sizes: tuple[int, ...] = (49, 20, 1)
    Z: int = 100
    F: int = 5000
    lr: float = 0.01
    gradient_mode: str = "plain"
    # the first seed trains the reported estimate; all of them feed the bands
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4, 5, 6, 7, 8, 9)


@dataclass(frozen=True)
class EvalSection:
    n_episodes: int = 500
    eval_seed: int = 2000
    retrain_seed: int = 1000
    reward_transform: str = "standardize"
    reward_scale: float = 10.0
    first_k: int = 50
    runs: int = 10


@dataclass(frozen=True)
class PipelineConfig:
    grid: GridSection = field(default_factory=GridSection)
    forward: ForwardSection = field(default_factory=ForwardSection)
    bundle: BundleSection = field(default_factory=BundleSection)
    beta: BetaSection = field(default_factory=BetaSection)
    eval: EvalSection = field(default_factory=EvalSection)
    out_dir: str = "runs/default"

    # -- derived objects --
    def grid_config(self) -> GridConfig:
        return GridConfig(**dataclasses.asdict(self.grid))

    def forward_spec(self) -> NetSpec:
        return NetSpec(self.forward.layer_sizes, "softmax", self.forward.seed)

    def clone_spec(self) -> NetSpec:
        return NetSpec(self.bundle.layer_sizes, "softmax", self.bundle.seed)

    def beta_spec(self) -> NetSpec:
        return NetSpec(self.beta.layer_sizes, "linear", self.beta.seeds[0])

    def validate(self) -> None:
        self.grid_config().validate()
        n = self.grid.width * self.grid.height
        checks = [
            ("forward.episodes", self.forward.episodes >= 1),
            ("forward.alpha", self.forward.alpha > 0),
            ("forward.gamma", 0 < self.forward.gamma <= 1),
            ("forward.layer_sizes", self.forward.layer_sizes[:1] == (n,) and self.forward.layer_sizes[-1:] == (3,)),
            ("bundle.B", 1 <= self.bundle.B <= self.forward.episodes),
            ("bundle.mode", self.bundle.mode in ("disjoint", "sliding")),
            ("bundle.clone_lr", self.bundle.clone_lr > 0),
            ("bundle.clone_epochs", self.bundle.clone_epochs >= 1),
            ("bundle.layer_sizes", self.bundle.layer_sizes[:1] == (n,) and self.bundle.layer_sizes[-1:] == (3,)),
            ("beta.layer_sizes", self.beta.layer_sizes[:1] == (n,) and self.beta.layer_sizes[-1:] == (1,)),
            ("beta.Z", self.beta.Z >= 1),
            ("beta.F", self.beta.F >= 1),
            ("beta.lr", self.beta.lr > 0),
            ("beta.gradient_mode", self.beta.gradient_mode in ("log", "plain")),
            ("beta.seeds", len(self.beta.seeds) >= 1),
            ("eval.n_episodes", self.eval.n_episodes >= 2),
            ("eval.reward_transform", self.eval.reward_transform in ("raw", "standardize")),
            ("eval.first_k", self.eval.first_k >= 2),
            ("eval.runs", 2 <= self.eval.runs <= len(self.beta.seeds)),
        ]
        for key, ok in checks:
            if not ok:
                raise ConfigError(f"invalid value for {key}: {self.get(key)!r}")

    def get(self, key: str):
        section, _, name = key.partition(".")
        return getattr(getattr(self, section), name) if name else getattr(self, section)

    def with_seed(self, seed: int) -> "PipelineConfig":
        """The same experiment under run seed ``seed``: forward, cloning,
        retraining and evaluation seeds move with it; beta seeds do not."""
        return replace(self,
                       forward=replace(self.forward, seed=seed),
                       bundle=replace(self.bundle, seed=seed),
                       eval=replace(self.eval, retrain_seed=1000 + seed, eval_seed=2000 + seed))

    def dumps(self) -> str:
        lines = []
        for sec in fields(self):
            value = getattr(self, sec.name)
            if dataclasses.is_dataclass(value):
                lines += [f"{sec.name}.{f.name} = {_format(getattr(value, f.name))}" for f in fields(value)]
            else:
                lines.append(f"{sec.name} = {_format(value)}")
        return "\n".join(lines) + "\n"

    def hash(self) -> str:
        """Digest of every setting except the output location."""
        return sha256_text(replace(self, out_dir="").dumps())[:16]


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    return str(v)


def _parse(key: str, text: str, typ):
    try:
        if typ is bool:
            if text.lower() not in ("true", "false"):
                raise ValueError(text)
            return text.lower() == "true"
        if typ is int:
            return int(text)
        if typ is float:
            return float(text)
        if typing.get_origin(typ) is tuple:
            return tuple(int(x) for x in text.split(",") if x.strip())
        return text
    except ValueError:
        raise ConfigError(f"invalid value for {key}: {text!r}") from None


def _types(cls) -> dict:
    return typing.get_type_hints(cls)


def apply_overrides(cfg: PipelineConfig, pairs: dict[str, str]) -> PipelineConfig:
    """Apply ``{"section.key": "text"}`` settings, parsing text by field type."""
    top = _types(PipelineConfig)
    sections: dict[str, dict] = {}
    out = {}
    for key, text in pairs.items():
        section, _, name = key.partition(".")
        if section not in top:
            raise ConfigError(f"unknown config key {key!r}")
        if not name:
            if dataclasses.is_dataclass(top[section]):
                raise ConfigError(f"config key {key!r} needs a field name")
            out[section] = _parse(key, text, top[section])
            continue
        hints = _types(top[section]) if dataclasses.is_dataclass(top[section]) else {}
        if name not in hints:
            raise ConfigError(f"unknown config key {key!r}")
        sections.setdefault(section, {})[name] = _parse(key, text, hints[name])
    for section, values in sections.items():
        out[section] = replace(getattr(cfg, section), **values)
    return replace(cfg, **out)


def loads(text: str, base: PipelineConfig | None = None) -> PipelineConfig:
    pairs = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        pairs[key.strip()] = value.strip()
    cfg = apply_overrides(base or PipelineConfig(), pairs)
    cfg.validate()
    return cfg


def load(path) -> PipelineConfig:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())


def parse_override(item: str) -> tuple[str, str]:
    key, sep, value = item.partition("=")
    if not sep:
        raise ConfigError(f"override {item!r} is not of the form key=value")
    return key.strip(), value.strip()
