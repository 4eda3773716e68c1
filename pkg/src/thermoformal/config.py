"""INI experiment configuration: parsing, validation and canonical emission."""

from __future__ import annotations

import configparser
import dataclasses
import io
import typing
from dataclasses import dataclass, field, fields
from pathlib import Path

from .base_dynamics import BaseMap, BaseMapConfig, ConfigError, build_expansion_profile
from .solenoid import SkewProduct


class ConfigParseError(ConfigError):
    """Bad configuration text; carries a 1-based line and column when known."""

    def __init__(self, message: str, path: str = "<config>", line: int = 0, col: int = 0):
        self.path, self.line, self.col = path, line, col
        where = f"{path}:{line}:{col}" if line else path
        super().__init__(f"{where}: {message}")


@dataclass(frozen=True)
class SystemSection:
    m: int = 1
    kind: str = "linear"
    linear_factors: tuple[int, ...] = (2,)
    delta: float = 0.0
    pert_radius: float = 0.1
    pert_radius_transverse: float | None = None
    lambda_u: float = 0.7
    rho: float = 0.05
    fiber_contraction_override: float | None = None
    fiber_rotation_scale: float = 0.5


@dataclass(frozen=True)
class ParamsSection:
    alpha: float = 0.6


@dataclass(frozen=True)
class PotentialSection:
    name: str = "zero"
    amplitude: float = 0.1
    fiber_coef: float = 0.0
    exponent: float = 1.0
    t: float = 1.0


@dataclass(frozen=True)
class SchedulesSection:
    eps: tuple[float, ...] = (0.1, 0.05, 0.025)
    n_min: int = 1
    n_max: int = 22
    t_range: str = "0:1.25:6"
    collection: str = "all"
    glue_eps: float = 0.05
    eta: float = 0.01


@dataclass(frozen=True)
class BudgetsSection:
    candidates: int = 262144
    saturation: float = 0.0625
    pairs: int = 10000
    extrema_samples: int = 100000
    n_cells: tuple[int, ...] = (1024,)
    ulam_samples: int = 4
    trend_cells: tuple[int, ...] = ()
    orbit_length: int = 1000000
    lyapunov_length: int = 10000
    lift_samples: int = 200000
    glue_pairs: int = 100
    glue_max_len: int = 19
    classify_segments: int = 1000
    classify_length: int = 20


@dataclass(frozen=True)
class ChecksSection:
    srb_tol: float = 0.01
    pesin_tol: float | None = 1e-4
    entropy_tol: float = 0.05


@dataclass(frozen=True)
class RunSection:
    seed: int = 0
    output_dir: str = "out"


SECTIONS = {
    "system": SystemSection,
    "params": ParamsSection,
    "potential": PotentialSection,
    "schedules": SchedulesSection,
    "budgets": BudgetsSection,
    "checks": ChecksSection,
    "run": RunSection,
}


@dataclass(frozen=True)
class ExperimentConfig:
    system: SystemSection = field(default_factory=SystemSection)
    params: ParamsSection = field(default_factory=ParamsSection)
    potential: PotentialSection = field(default_factory=PotentialSection)
    schedules: SchedulesSection = field(default_factory=SchedulesSection)
    budgets: BudgetsSection = field(default_factory=BudgetsSection)
    checks: ChecksSection = field(default_factory=ChecksSection)
    run: RunSection = field(default_factory=RunSection)

    # -- derived objects ------------------------------------------------------

    def base_config(self) -> BaseMapConfig:
        s = self.system
        return BaseMapConfig(m=s.m, kind=s.kind, linear_factors=s.linear_factors, delta=s.delta,
                             pert_radius=s.pert_radius, pert_radius_transverse=s.pert_radius_transverse,
                             lambda_u=s.lambda_u, rho=s.rho)

    def build_system(self) -> SkewProduct:
        g = BaseMap(self.base_config())
        prof = build_expansion_profile(g)
        return SkewProduct(g, prof, fiber_contraction=self.system.fiber_contraction_override,
                           fiber_rotation_scale=self.system.fiber_rotation_scale)

    def cells(self):
        c = self.budgets.n_cells
        return c[0] if len(c) == 1 else c

    def t_grid(self) -> tuple[float, float, int]:
        return parse_t_range(self.schedules.t_range)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return dataclasses.replace(self, run=dataclasses.replace(self.run, seed=int(seed)))

    def with_output(self, out: str) -> "ExperimentConfig":
        return dataclasses.replace(self, run=dataclasses.replace(self.run, output_dir=str(out)))

    # -- text form -------------------------------------------------------------

    def to_ini(self) -> str:
        buf = io.StringIO()
        for name in SECTIONS:
            sec = getattr(self, name)
            buf.write(f"[{name}]\n")
            for fl in fields(sec):
                buf.write(f"{fl.name} = {_emit(getattr(sec, fl.name))}\n")
            buf.write("\n")
        return buf.getvalue().rstrip("\n") + "\n"


def parse_t_range(text: str) -> tuple[float, float, int]:
    parts = text.split(":")
    if len(parts) != 3:
        raise ValueError("t range must look like a:b:n")
    a, b, n = float(parts[0]), float(parts[1]), int(parts[2])
    if n < 2 or not b > a:
        raise ValueError("t range needs b > a and n >= 2")
    return a, b, n


def _emit(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ", ".join(_emit(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _convert(raw: str, tp):
    raw = raw.strip()
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin is typing.Union or (args and type(None) in args):
        if raw.lower() == "none":
            return None
        inner = [a for a in args if a is not type(None)][0]
        return _convert(raw, inner)
    if origin is tuple:
        if not raw:
            return ()
        return tuple(_convert(x, args[0]) for x in raw.split(","))
    if tp is bool:
        low = raw.lower()
        if low in ("true", "yes", "1"):
            return True
        if low in ("false", "no", "0"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if tp is int:
        return int(raw)
    if tp is float:
        return float(raw)
    return raw


def _locate(text: str, section: str, key: str | None) -> tuple[int, int]:
    """Line and column of a key (or section header) in the raw text."""
    cur = None
    for i, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            cur = s[1:-1].strip()
            if key is None and cur == section:
                return i, line.index("[") + 1
            continue
        if cur == section and key is not None:
            k = s.split("=", 1)[0].split(":", 1)[0].strip()
            if k == key:
                return i, line.index(k) + 1
    return 0, 0


def parse_config(text: str, path: str = "<config>") -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=path)
    except configparser.MissingSectionHeaderError as e:
        raise ConfigParseError("key outside any [section]", path, e.lineno, 1) from None
    except configparser.ParsingError as e:
        lineno = e.errors[0][0] if e.errors else 0
        raise ConfigParseError(f"malformed line {e.errors[0][1] if e.errors else ''}".strip(), path,
                               lineno, 1) from None
    except configparser.Error as e:
        line = getattr(e, "lineno", 0) or 0
        raise ConfigParseError(str(e).splitlines()[0], path, line, 1) from None

    built = {}
    for sec in cp.sections():
        if sec not in SECTIONS:
            raise ConfigParseError(f"unknown section [{sec}]", path, *_locate(text, sec, None))
    for name, cls in SECTIONS.items():
        hints = typing.get_type_hints(cls)
        kw = {}
        if cp.has_section(name):
            known = {fl.name for fl in fields(cls)}
            for key, raw in cp.items(name):
                if key not in known:
                    raise ConfigParseError(f"unknown key {key!r} in [{name}]", path,
                                           *_locate(text, name, key))
                try:
                    kw[key] = _convert(raw, hints[key])
                except ValueError as e:
                    raise ConfigParseError(f"bad value for {name}.{key}: {e}", path,
                                           *_locate(text, name, key)) from None
        built[name] = cls(**kw)
    cfg = ExperimentConfig(**built)
    validate(cfg, text, path)
    return cfg


def validate(cfg: ExperimentConfig, text: str = "", path: str = "<config>") -> None:
    def bad(section, key, msg):
        raise ConfigParseError(msg, path, *_locate(text, section, key))

    s, sch, b, c = cfg.system, cfg.schedules, cfg.budgets, cfg.checks
    try:
        cfg.base_config()
    except ConfigError as e:
        bad("system", None, str(e))
    if s.fiber_contraction_override is not None and not 0 < s.fiber_contraction_override < 1:
        bad("system", "fiber_contraction_override", "fiber_contraction_override must lie in (0, 1)")
    if not 0 < cfg.params.alpha < 1:
        bad("params", "alpha", "alpha must lie in (0, 1)")
    if cfg.potential.name.lower() not in ("zero", "holder", "holder_test", "geo", "geometric"):
        bad("potential", "name", f"unknown potential {cfg.potential.name!r}")
    if not 0 < cfg.potential.exponent <= 1:
        bad("potential", "exponent", "Holder exponent must lie in (0, 1]")
    if not sch.eps or any(not 0 < e < 0.5 for e in sch.eps):
        bad("schedules", "eps", "eps values must lie in (0, 1/2)")
    if not 1 <= sch.n_min <= sch.n_max:
        bad("schedules", "n_max", "need 1 <= n_min <= n_max")
    try:
        parse_t_range(sch.t_range)
    except ValueError as e:
        bad("schedules", "t_range", str(e))
    if sch.collection.lower() not in ("all", "g", "s"):
        bad("schedules", "collection", "collection must be all, G or S")
    if not 0 < sch.glue_eps <= 0.5:
        bad("schedules", "glue_eps", "glue_eps must lie in (0, 1/2]")
    if sch.eta <= 0:
        bad("schedules", "eta", "eta must be positive")
    for key in ("candidates", "pairs", "extrema_samples", "ulam_samples", "orbit_length",
                "lyapunov_length", "lift_samples", "glue_max_len", "classify_length"):
        if getattr(b, key) < 1:
            bad("budgets", key, f"{key} must be positive")
    for key in ("glue_pairs", "classify_segments"):
        if getattr(b, key) < 0:
            bad("budgets", key, f"{key} must be nonnegative")
    if not 0 < b.saturation <= 1:
        bad("budgets", "saturation", "saturation must lie in (0, 1]")
    if len(b.n_cells) not in (1, s.m):
        bad("budgets", "n_cells", "n_cells takes one total count or one count per axis")
    if c.srb_tol <= 0 or c.entropy_tol <= 0 or (c.pesin_tol is not None and c.pesin_tol <= 0):
        bad("checks", None, "tolerances must be positive")


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise ConfigParseError(f"cannot read config: {e.strerror}", str(p)) from None
    return parse_config(text, str(p))


def preset_path(name: str) -> Path:
    return Path(__file__).with_name("presets") / f"{name}.ini"


def load_preset(name: str) -> ExperimentConfig:
    return load_config(preset_path(name))
