"""Experiment configuration: documented INI grammar, validation, echo.

Grammar: flat "key = value" sections. Unknown sections or keys are errors
that name the offending token and its line. Sections may repeat; later
occurrences merge into earlier ones and the last value for a key wins, so
a base config can be extended by appending overrides. format_config()
emits a canonical echo with every default resolved; parsing that echo
yields an equal config (round-trip contract).

Sections and keys (defaults in parentheses):

  [geometry]   n_v, n_h                                  required
  [experiment] schemes (all five), users (4), pilots (8), snr_db (15),
               constellations (500), seed (0), workers (1)
  [precoder]   max_iters (300), rho (1.0), tol (1e-6), tol_window (5),
               bisect_steps (64)
  [data]       train, validation, evaluation              dataset paths
  [synthetic]  train (40000), validation (2000), evaluation (2000),
               seed (0), paths_min (1), paths_max (5),
               angle_spread_deg (2.0), azimuth_min_deg (-60),
               azimuth_max_deg (60), elevation_min_deg (-15),
               elevation_max_deg (15), power_decay (0.7)
  [feedback]   latent_dim (8), codebook_size (32), bits_dir (8)
  [training]   variant (S), epochs (30), batch_size (64), beta (0.25),
               snr_min_db (0), snr_max_db (20), seed (0), jitter (1e-6),
               learning_rate (1e-3), warmup_epochs (10),
               nll_learning_rate (1e-4)
  [gmm]        components (16), seed (0), max_iters (100), jitter (1e-6)
  [models]     <SCHEME> = path, or <SCHEME>@<axis>:<value> = path for
               sweep-point overrides (e.g. VQVAE-S@n_p:2)
  [sweep]      axis (one of snr_db, n_p, J, B), values (comma list)
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field, fields as dc_fields

from .channels import ClusterModelConfig
from .pilots import UraGeometry
from .precoding import PrecoderConfig
from .vqvae import TrainingConfig, VARIANTS

SCHEMES = ("VQVAE-S", "VQVAE-I", "AE", "DFT-LS", "DFT-GMM")
SWEEP_AXES = ("snr_db", "n_p", "J", "B")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DataPaths:
    train: str = ""
    validation: str = ""
    evaluation: str = ""


@dataclass(frozen=True)
class SyntheticConfig:
    train: int = 40000
    validation: int = 2000
    evaluation: int = 2000
    cluster: ClusterModelConfig = field(default_factory=ClusterModelConfig)


@dataclass(frozen=True)
class FeedbackConfig:
    latent_dim: int = 8
    codebook_size: int = 32
    bits_dir: int = 8


@dataclass(frozen=True)
class GmmFitConfig:
    components: int = 16
    seed: int = 0
    max_iters: int = 100
    jitter: float = 1e-6


@dataclass
class ExperimentConfig:
    geometry: UraGeometry
    schemes: tuple = SCHEMES
    users: int = 4
    pilots: int = 8
    snr_db: float = 15.0
    constellations: int = 500
    seed: int = 0
    workers: int = 1
    precoder: PrecoderConfig = field(default_factory=PrecoderConfig)
    data: DataPaths = field(default_factory=DataPaths)
    synthetic: SyntheticConfig = field(default_factory=SyntheticConfig)
    feedback: FeedbackConfig = field(default_factory=FeedbackConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    train_variant: str = "S"
    gmm: GmmFitConfig = field(default_factory=GmmFitConfig)
    models: dict = field(default_factory=dict)
    sweep_axis: str = ""
    sweep_values: tuple = ()

    def __post_init__(self):
        if not self.schemes:
            raise ConfigError("scheme list must not be empty")
        for s in self.schemes:
            if s not in SCHEMES:
                raise ConfigError(f"unknown scheme {s!r}")
        if self.train_variant not in VARIANTS:
            raise ConfigError(f"unknown training variant "
                              f"{self.train_variant!r}")
        if self.users < 1 or self.pilots < 1 or self.constellations < 1:
            raise ConfigError("users, pilots, constellations must be >= 1")
        if self.pilots > self.geometry.n:
            raise ConfigError("more pilots than antennas unsupported")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.sweep_axis and self.sweep_axis not in SWEEP_AXES:
            raise ConfigError(f"unknown sweep axis {self.sweep_axis!r}")
        if self.sweep_axis and not self.sweep_values:
            raise ConfigError("sweep axis set but the value list is empty")


def _fmt_num(v) -> str:
    if isinstance(v, bool):
        raise TypeError("booleans are not config numbers")
    if isinstance(v, int) or (isinstance(v, float) and v.is_integer()):
        return str(int(v))
    return repr(float(v))


def _find_line(text: str, section: str, key: str = None) -> int:
    """Best-effort line number of a section header or a key inside it."""
    in_section = False
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line.startswith("[") and line.endswith("]"):
            if key is None and line[1:-1].strip() == section:
                return ln
            in_section = line[1:-1].strip() == section
        elif key is not None and in_section:
            m = re.match(r"([^=\s][^=]*?)\s*=", line)
            if m and m.group(1).strip() == key:
                return ln
    return 0


_MODEL_KEY = re.compile(
    r"^(?P<scheme>[A-Z][A-Z0-9-]*)(@(?P<axis>[A-Za-z_]+):(?P<value>[-0-9.eE+]+))?$")

_KNOWN_KEYS = {
    "geometry": {"n_v", "n_h"},
    "experiment": {"schemes", "users", "pilots", "snr_db", "constellations",
                   "seed", "workers"},
    "precoder": {"max_iters", "rho", "tol", "tol_window", "bisect_steps"},
    "data": {"train", "validation", "evaluation"},
    "synthetic": {"train", "validation", "evaluation", "seed", "paths_min",
                  "paths_max", "angle_spread_deg", "azimuth_min_deg",
                  "azimuth_max_deg", "elevation_min_deg",
                  "elevation_max_deg", "power_decay"},
    "feedback": {"latent_dim", "codebook_size", "bits_dir"},
    "training": {"variant", "epochs", "batch_size", "beta", "snr_min_db",
                 "snr_max_db", "seed", "jitter", "learning_rate",
                 "warmup_epochs", "nll_learning_rate"},
    "gmm": {"components", "seed", "max_iters", "jitter"},
    "models": None,  # free-form scheme keys, validated by pattern
    "sweep": {"axis", "values"},
}


class _Reader:
    """Typed access into parsed sections with key/line-aware errors."""

    def __init__(self, parser: configparser.ConfigParser, text: str):
        self.parser = parser
        self.text = text

    def _fail(self, section, key, message):
        line = _find_line(self.text, section, key)
        where = f"line {line}" if line else "unknown line"
        raise ConfigError(f"[{section}] {key} ({where}): {message}")

    def get(self, section, key, default, conv):
        if not self.parser.has_option(section, key):
            return default
        raw = self.parser.get(section, key).strip()
        try:
            return conv(raw)
        except (TypeError, ValueError) as exc:
            self._fail(section, key, f"invalid value {raw!r}: {exc}")

    def get_int(self, section, key, default):
        return self.get(section, key, default, int)

    def get_float(self, section, key, default):
        return self.get(section, key, default, float)

    def get_str(self, section, key, default):
        return self.get(section, key, default, str)


def _parse_scheme_list(raw: str):
    items = tuple(tok.strip() for tok in raw.split(",") if tok.strip())
    for tok in items:
        if tok not in SCHEMES:
            raise ValueError(f"unknown scheme {tok!r}; expected one of "
                             f"{', '.join(SCHEMES)}")
    return items


def parse_config_text(text: str, source: str = "<config>") -> ExperimentConfig:
    # strict=False merges repeated sections so a base config can be layered
    # with appended overrides; the last value for a key wins
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",),
                                       strict=False)
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc

    for section in parser.sections():
        if section not in _KNOWN_KEYS:
            line = _find_line(text, section)
            raise ConfigError(f"unknown section [{section}] (line {line})")
        known = _KNOWN_KEYS[section]
        for key in parser.options(section):
            if known is None:
                if not _MODEL_KEY.match(key):
                    line = _find_line(text, section, key)
                    raise ConfigError(
                        f"[models] {key} (line {line}): keys must be "
                        "SCHEME or SCHEME@axis:value")
            elif key not in known:
                line = _find_line(text, section, key)
                raise ConfigError(
                    f"unknown key {key!r} in [{section}] (line {line})")

    rd = _Reader(parser, text)
    if not parser.has_section("geometry"):
        raise ConfigError("missing required section [geometry]")
    n_v = rd.get_int("geometry", "n_v", None)
    n_h = rd.get_int("geometry", "n_h", None)
    if n_v is None or n_h is None:
        raise ConfigError("[geometry] requires both n_v and n_h")
    geometry = UraGeometry(n_v=n_v, n_h=n_h)

    schemes = rd.get("experiment", "schemes", SCHEMES, _parse_scheme_list)

    cluster = ClusterModelConfig(
        path_count_range=(rd.get_int("synthetic", "paths_min", 1),
                          rd.get_int("synthetic", "paths_max", 5)),
        angle_spread_deg=rd.get_float("synthetic", "angle_spread_deg", 2.0),
        azimuth_range_deg=(rd.get_float("synthetic", "azimuth_min_deg",
                                        -60.0),
                           rd.get_float("synthetic", "azimuth_max_deg",
                                        60.0)),
        elevation_range_deg=(rd.get_float("synthetic", "elevation_min_deg",
                                          -15.0),
                             rd.get_float("synthetic", "elevation_max_deg",
                                          15.0)),
        power_decay=rd.get_float("synthetic", "power_decay", 0.7),
        seed=rd.get_int("synthetic", "seed", 0),
    )
    synthetic = SyntheticConfig(
        train=rd.get_int("synthetic", "train", 40000),
        validation=rd.get_int("synthetic", "validation", 2000),
        evaluation=rd.get_int("synthetic", "evaluation", 2000),
        cluster=cluster,
    )

    training = TrainingConfig(
        beta=rd.get_float("training", "beta", 0.25),
        snr_range_db=(rd.get_float("training", "snr_min_db", 0.0),
                      rd.get_float("training", "snr_max_db", 20.0)),
        epochs=rd.get_int("training", "epochs", 30),
        batch_size=rd.get_int("training", "batch_size", 64),
        seed=rd.get_int("training", "seed", 0),
        jitter=rd.get_float("training", "jitter", 1e-6),
        learning_rate=rd.get_float("training", "learning_rate", 1e-3),
        warmup_epochs=rd.get_int("training", "warmup_epochs", 10),
        nll_learning_rate=rd.get_float("training", "nll_learning_rate",
                                       1e-4),
    )

    models = {}
    if parser.has_section("models"):
        for key in parser.options("models"):
            models[key] = parser.get("models", key).strip()

    sweep_axis = rd.get_str("sweep", "axis", "")
    sweep_values = ()
    if parser.has_option("sweep", "values"):
        if sweep_axis not in SWEEP_AXES:
            raise ConfigError(f"[sweep] values given but axis is "
                              f"{sweep_axis!r}")
        conv = float if sweep_axis == "snr_db" else int
        sweep_values = rd.get("sweep", "values", (), lambda raw: tuple(
            conv(tok.strip()) for tok in raw.split(",") if tok.strip()))

    try:
        return ExperimentConfig(
            geometry=geometry,
            schemes=schemes,
            users=rd.get_int("experiment", "users", 4),
            pilots=rd.get_int("experiment", "pilots", 8),
            snr_db=rd.get_float("experiment", "snr_db", 15.0),
            constellations=rd.get_int("experiment", "constellations", 500),
            seed=rd.get_int("experiment", "seed", 0),
            workers=rd.get_int("experiment", "workers", 1),
            precoder=PrecoderConfig(
                max_iters=rd.get_int("precoder", "max_iters", 300),
                rho=rd.get_float("precoder", "rho", 1.0),
                tol=rd.get_float("precoder", "tol", 1e-6),
                tol_window=rd.get_int("precoder", "tol_window", 5),
                bisect_steps=rd.get_int("precoder", "bisect_steps", 64),
            ),
            data=DataPaths(
                train=rd.get_str("data", "train", ""),
                validation=rd.get_str("data", "validation", ""),
                evaluation=rd.get_str("data", "evaluation", ""),
            ),
            synthetic=synthetic,
            feedback=FeedbackConfig(
                latent_dim=rd.get_int("feedback", "latent_dim", 8),
                codebook_size=rd.get_int("feedback", "codebook_size", 32),
                bits_dir=rd.get_int("feedback", "bits_dir", 8),
            ),
            training=training,
            train_variant=rd.get_str("training", "variant", "S"),
            gmm=GmmFitConfig(
                components=rd.get_int("gmm", "components", 16),
                seed=rd.get_int("gmm", "seed", 0),
                max_iters=rd.get_int("gmm", "max_iters", 100),
                jitter=rd.get_float("gmm", "jitter", 1e-6),
            ),
            models=models,
            sweep_axis=sweep_axis,
            sweep_values=sweep_values,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def parse_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    return parse_config_text(text, source=str(path))


def format_config(cfg: ExperimentConfig) -> str:
    """Canonical echo of a config with all defaults resolved; re-parses to
    an equal config."""
    lines = []

    def section(name, pairs):
        lines.append(f"[{name}]")
        for key, value in pairs:
            lines.append(f"{key} = {value}")
        lines.append("")

    section("geometry", [("n_v", cfg.geometry.n_v),
                         ("n_h", cfg.geometry.n_h)])
    section("experiment", [
        ("schemes", ", ".join(cfg.schemes)),
        ("users", cfg.users),
        ("pilots", cfg.pilots),
        ("snr_db", _fmt_num(cfg.snr_db)),
        ("constellations", cfg.constellations),
        ("seed", cfg.seed),
        ("workers", cfg.workers),
    ])
    section("precoder", [
        ("max_iters", cfg.precoder.max_iters),
        ("rho", _fmt_num(cfg.precoder.rho)),
        ("tol", _fmt_num(cfg.precoder.tol)),
        ("tol_window", cfg.precoder.tol_window),
        ("bisect_steps", cfg.precoder.bisect_steps),
    ])
    section("data", [
        ("train", cfg.data.train),
        ("validation", cfg.data.validation),
        ("evaluation", cfg.data.evaluation),
    ])
    cl = cfg.synthetic.cluster
    section("synthetic", [
        ("train", cfg.synthetic.train),
        ("validation", cfg.synthetic.validation),
        ("evaluation", cfg.synthetic.evaluation),
        ("seed", cl.seed),
        ("paths_min", cl.path_count_range[0]),
        ("paths_max", cl.path_count_range[1]),
        ("angle_spread_deg", _fmt_num(cl.angle_spread_deg)),
        ("azimuth_min_deg", _fmt_num(cl.azimuth_range_deg[0])),
        ("azimuth_max_deg", _fmt_num(cl.azimuth_range_deg[1])),
        ("elevation_min_deg", _fmt_num(cl.elevation_range_deg[0])),
        ("elevation_max_deg", _fmt_num(cl.elevation_range_deg[1])),
        ("power_decay", _fmt_num(cl.power_decay)),
    ])
    section("feedback", [
        ("latent_dim", cfg.feedback.latent_dim),
        ("codebook_size", cfg.feedback.codebook_size),
        ("bits_dir", cfg.feedback.bits_dir),
    ])
    tr = cfg.training
    section("training", [
        ("variant", cfg.train_variant),
        ("epochs", tr.epochs),
        ("batch_size", tr.batch_size),
        ("beta", _fmt_num(tr.beta)),
        ("snr_min_db", _fmt_num(tr.snr_range_db[0])),
        ("snr_max_db", _fmt_num(tr.snr_range_db[1])),
        ("seed", tr.seed),
        ("jitter", _fmt_num(tr.jitter)),
        ("learning_rate", _fmt_num(tr.learning_rate)),
        ("warmup_epochs", tr.warmup_epochs),
        ("nll_learning_rate", _fmt_num(tr.nll_learning_rate)),
    ])
    section("gmm", [
        ("components", cfg.gmm.components),
        ("seed", cfg.gmm.seed),
        ("max_iters", cfg.gmm.max_iters),
        ("jitter", _fmt_num(cfg.gmm.jitter)),
    ])
    if cfg.models:
        section("models", sorted(cfg.models.items()))
    if cfg.sweep_axis:
        section("sweep", [
            ("axis", cfg.sweep_axis),
            ("values", ", ".join(_fmt_num(v) for v in cfg.sweep_values)),
        ])
    return "\n".join(lines)
