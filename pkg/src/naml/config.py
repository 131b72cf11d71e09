"""Training configuration with the published hyperparameters as defaults."""

import json
from dataclasses import asdict, dataclass, field, fields, replace

from .errors import ConfigError

VIEWS = ("title", "body", "category", "subcategory")


@dataclass(frozen=True)
class TrainConfig:
    word_dim: int = 300
    cat_dim: int = 100
    n_filters: int = 400
    cnn_window: int = 3
    dense_dim: int = 400
    query_dim: int = 200
    neg_ratio: int = 4
    dropout: float = 0.2
    batch_size: int = 100
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    epochs: int = 5
    seed: int = 0
    max_title_len: int = 30
    max_body_len: int = 100
    max_history: int = 50
    min_frequency: int = 1
    val_fraction: float = 0.1
    views: tuple = VIEWS
    word_attention: bool = True
    news_attention: bool = True
    view_attention: bool = True
    mask_empty_views: bool = False
    category_dropout: bool = False
    freeze_embeddings: bool = False
    dtype: str = "float32"

    def __post_init__(self):
        object.__setattr__(self, "views", tuple(self.views))
        self.validate()

    @property
    def half_window(self):
        return (self.cnn_window - 1) // 2

    def validate(self):
        positive = (
            "word_dim", "cat_dim", "n_filters", "cnn_window", "dense_dim", "query_dim",
            "neg_ratio", "batch_size", "epochs", "max_title_len", "max_body_len",
            "max_history", "min_frequency",
        )
        for name in positive:
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if self.cnn_window % 2 != 1:
            raise ConfigError(f"cnn_window must be odd, got {self.cnn_window}")
        if self.dense_dim != self.n_filters:
            raise ConfigError("dense_dim must equal n_filters: all view vectors share one dimension")
        if not 0 <= self.dropout < 1:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if not 0 < self.val_fraction < 1:
            raise ConfigError(f"val_fraction must be in (0, 1), got {self.val_fraction}")
        if self.lr < 0:
            raise ConfigError("lr must be >= 0")
        if not self.views:
            raise ConfigError("at least one view must be active")
        unknown = [v for v in self.views if v not in VIEWS]
        if unknown:
            raise ConfigError(f"unknown views {unknown}; choose from {list(VIEWS)}")
        if len(set(self.views)) != len(self.views):
            raise ConfigError("duplicate views")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"dtype must be float32 or float64, got {self.dtype!r}")

    def to_dict(self):
        d = asdict(self)
        d["views"] = list(self.views)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**_checked(cls, d))

    def updated(self, **changes):
        return replace(self, **_checked(type(self), changes))


def _checked(cls, d):
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(d) - names)
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    out = dict(d)
    if "views" in out:
        views = out["views"]
        if isinstance(views, str):
            views = [v.strip() for v in views.split(",") if v.strip()]
        out["views"] = tuple(views)
    return out


PATH_KEYS = ("news", "behaviors", "vocab", "embeddings", "out", "test_behaviors")


@dataclass
class RunConfig:
    """TrainConfig plus file locations for the command line."""

    train: TrainConfig = field(default_factory=TrainConfig)
    paths: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        paths = {k: d.pop(k) for k in PATH_KEYS if k in d}
        return cls(TrainConfig.from_dict(d), paths)

    @classmethod
    def load(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                d = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc.msg}") from None
        if not isinstance(d, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return cls.from_dict(d)

    def with_overrides(self, train_overrides=None, path_overrides=None):
        """Return a copy where non-None overrides win over current values."""
        train = self.train
        if train_overrides:
            train = train.updated(**{k: v for k, v in train_overrides.items() if v is not None})
        paths = dict(self.paths)
        for k, v in (path_overrides or {}).items():
            if v is not None:
                paths[k] = v
        return RunConfig(train, paths)

    def to_dict(self):
        d = self.train.to_dict()
        d.update(self.paths)
        return d
