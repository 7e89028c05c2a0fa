"""Run configuration (flat ``key = value`` text) and the structured report."""

from __future__ import annotations

import configparser
import dataclasses
import io
import math
from dataclasses import dataclass, fields
from pathlib import Path

from .packet import PacketSpec
from .scattering import BarrierSpec

__all__ = ["RunConfig", "ConfigError", "load_config", "parse_config", "format_float", "Report"]


class ConfigError(ValueError):
    pass


def format_float(x) -> str:
    return format(float(x), ".17g")


@dataclass(frozen=True)
class RunConfig:
    # physics
    m: float = 1.0
    k0: float = 10.0
    d: float = 2.0
    delta: float = math.sqrt(2.0)
    k_av: float = 9.9
    y0: float = -15.0
    # clock
    omega1: float = 5e-4
    omega2: float = 1e-3
    # numerics
    n_k: int = 16384
    span_sigmas: float = 8.0
    t_max: float = 200.0
    dt_sample: float = 0.005
    noise_floor: float = 1e-8
    eps_neg: float = 1e-4
    checkpoints: str = "2,4,6,8,12"
    cross_tol: float = 1e-5
    # legacy
    epsilon: float = 0.01
    # oracle
    oracle_t_max: float = 6.0
    oracle_h: float = 0.01
    oracle_dt: float = 2e-4
    oracle_omegas: str = "0,0.001"
    oracle_sample: float = 0.05
    # outputs
    series_path: str = "series.csv"
    orders_path: str = "orders.csv"
    oracle_path: str = "oracle_series.csv"
    report_path: str = "report.txt"
    summary_path: str = "sweep_summary.csv"

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.type in ("float", "int") and not math.isfinite(v):
                raise ConfigError(f"invariant violated: {f.name} finite (got {v!r})")
        checks = [
            (self.n_k >= 64, "n_k >= 64"),
            (self.span_sigmas > 0, "span_sigmas > 0"),
            (self.t_max > 0, "t_max > 0"),
            (self.dt_sample > 0, "dt_sample > 0"),
            (0 < self.omega1 and 0 < self.omega2 and self.omega1 != self.omega2, "0 < omega1 != omega2 > 0"),
            (0 < self.noise_floor < 1, "0 < noise_floor < 1"),
            (self.eps_neg >= 0, "eps_neg >= 0"),
            (0 < self.epsilon <= 0.1, "0 < epsilon <= 0.1"),
        ]
        for ok, text in checks:
            if not ok:
                raise ConfigError(f"invariant violated: {text}")
        try:
            self.barrier.m  # builds and validates
            self.packet.check_against(self.barrier)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def barrier(self) -> BarrierSpec:
        return BarrierSpec(m=self.m, k0=self.k0, d=self.d)

    @property
    def packet(self) -> PacketSpec:
        return PacketSpec(delta=self.delta, k_av=self.k_av, y0=self.y0)

    @property
    def checkpoint_times(self) -> list[float]:
        return _float_list(self.checkpoints)

    @property
    def oracle_omega_list(self) -> list[float]:
        return _float_list(self.oracle_omegas)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def items(self):
        for f in fields(self):
            v = getattr(self, f.name)
            yield f.name, (format_float(v) if isinstance(v, float) else str(v))

    def dumps(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in self.items())


def _float_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _coerce(name: str, raw: str):
    types = {f.name: f.type for f in fields(RunConfig)}
    if name not in types:
        raise ConfigError(f"unknown config key {name!r}")
    kind = types[name]
    try:
        if kind == "int":
            return int(float(raw)) if float(raw).is_integer() else int(raw)
        if kind == "float":
            return float(raw)
    except ValueError:
        raise ConfigError(f"config key {name!r}: cannot parse {raw!r} as {kind}") from None
    return raw.strip()


def parse_config(text: str, overrides=()) -> RunConfig:
    """Parse flat ``key = value`` lines (``#`` starts a comment) plus ``key=value`` overrides."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), comment_prefixes=("#",),
                                       interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string("[run]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    values = {k: _coerce(k, v) for k, v in parser["run"].items()}
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        k, v = (s.strip() for s in item.split("=", 1))
        values[k] = _coerce(k, v)
    return RunConfig(**values)


def load_config(path=None, overrides=()) -> RunConfig:
    text = Path(path).read_text() if path else ""
    return parse_config(text, overrides)


class Report:
    """Sectioned key/value document; floats carry 17 significant digits.

    ``Report.loads(r.dumps())`` reproduces every value exactly.
    """

    def __init__(self, sections=None):
        self.sections: dict[str, dict] = {k: dict(v) for k, v in (sections or {}).items()}

    def __getitem__(self, name):
        return self.sections[name]

    def set(self, section, key, value):
        self.sections.setdefault(section, {})[key] = value

    def __eq__(self, other):
        return isinstance(other, Report) and self.sections == other.sections

    @staticmethod
    def _fmt(v):
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, float):
            text = format_float(v)
            return text if any(c in text for c in ".eni") else text + ".0"
        return str(v)

    @staticmethod
    def _parse(raw: str):
        if raw in ("true", "false"):
            return raw == "true"
        for kind in (int, float):
            try:
                return kind(raw)
            except ValueError:
                pass
        return raw

    def dumps(self) -> str:
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        for name, body in self.sections.items():
            parser[name] = {k: self._fmt(v) for k, v in body.items()}
        buf = io.StringIO()
        parser.write(buf)
        return buf.getvalue()

    @classmethod
    def loads(cls, text: str) -> "Report":
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        parser.read_string(text)
        return cls({s: {k: cls._parse(v) for k, v in parser[s].items()} for s in parser.sections()})

    def write(self, path):
        Path(path).write_text(self.dumps())

    @classmethod
    def read(cls, path) -> "Report":
        return cls.loads(Path(path).read_text())
