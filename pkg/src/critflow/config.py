"""INI experiment files: parsing, validation and construction of solver configs.

Recognised sections and keys (all optional; defaults in ``DEFAULTS``)::

    [experiment]  suite, seed, samples, output
    [grid]        n, dim
    [physics]     mu, lam, K, gamma, rho_bar
    [indices]     p, p1, alpha
    [run]         T, dt, save_every, vacuum_floor, cfl, n_smooth
    [data]        a_norm, u_norm, kmax
    [monitor]     C, C_prime, C1, c, kappa, eta, a_bound
    [probe]       delta
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field as dc_field
from pathlib import Path

from .effective_velocity import PressureLaw
from .errors import ParseError, ValidationError
from .littlewood_paley import DEFAULT_ALPHA
from .ns_solver import SolverConfig, index_gates, small_data
from .spectral_core import Field, Grid, ViscosityParams

MODES = ("verify", "simulate", "probe")

DEFAULTS: dict[str, dict[str, object]] = {
    "experiment": {"suite": "all", "seed": None, "samples": None, "output": None},
    "grid": {"n": 64, "dim": 2},
    "physics": {"mu": 1.0, "lam": 0.0, "K": 1.0, "gamma": 1.0, "rho_bar": 1.0},
    "indices": {"p": 2.0, "p1": 2.0, "alpha": DEFAULT_ALPHA},
    "run": {"T": 0.5, "dt": 1e-3, "save_every": 10, "vacuum_floor": 0.1, "cfl": 0.5, "n_smooth": None},
    "data": {"a_norm": 0.01, "u_norm": 0.01, "kmax": 8.0},
    "monitor": {"C": 1.0, "C_prime": 1.0, "C1": 1.0, "c": 0.01, "kappa": 0.1, "eta": 0.1, "a_bound": None},
    "probe": {"delta": 1e-4},
}

_INT_KEYS = {"seed", "samples", "n", "dim", "save_every", "n_smooth"}
_STR_KEYS = {"suite", "output"}


@dataclass
class ExperimentSpec:
    """A validated experiment: mode, suite, seed and the flat settings table."""

    mode: str
    settings: dict = dc_field(default_factory=dict)
    source: str | None = None
    warnings: list = dc_field(default_factory=list)

    def get(self, section: str, key: str):
        return self.settings[section][key]

    @property
    def suite(self) -> str:
        return self.get("experiment", "suite")

    @property
    def seed(self) -> int | None:
        return self.get("experiment", "seed")

    @property
    def samples(self) -> int | None:
        return self.get("experiment", "samples")

    @property
    def output(self) -> str | None:
        return self.get("experiment", "output")

    def grid(self) -> Grid:
        return Grid(self.get("grid", "dim"), self.get("grid", "n"))

    def solver_config(self) -> SolverConfig:
        s = self.settings
        g = self.grid()
        ph, ix, rn, da, mo = s["physics"], s["indices"], s["run"], s["data"], s["monitor"]
        if da["a_norm"] == 0 and da["u_norm"] == 0:
            rho0, u0 = Field.constant(g, ph["rho_bar"]), Field.zeros(g, g.dim)
        else:
            rho0, u0 = small_data(g, da["a_norm"], da["u_norm"], seed=self.seed or 0,
                                  p=ix["p"], p1=ix["p1"], kmax=da["kmax"])
        return SolverConfig(
            rho0, u0,
            visc=ViscosityParams(ph["mu"], ph["lam"]),
            law=PressureLaw(ph["K"], ph["gamma"], ph["rho_bar"]),
            T=rn["T"], dt=rn["dt"], p=ix["p"], p1=ix["p1"], n_smooth=rn["n_smooth"],
            save_every=rn["save_every"], vacuum_floor=rn["vacuum_floor"], alpha=ix["alpha"],
            cfl=rn["cfl"], C=mo["C"], C_prime=mo["C_prime"], C1=mo["C1"], c=mo["c"],
            kappa=mo["kappa"], eta=mo["eta"], a_bound=mo["a_bound"], seed=self.seed or 0,
        )


def _key_lines(text: str) -> dict[tuple[str, str], int]:
    """Map (section, key) to its 1-based line number."""
    out, section = {}, None
    for i, line in enumerate(text.splitlines(), 1):
        m = re.match(r"\s*\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip()
            continue
        m = re.match(r"\s*([^=:#;\s][^=:]*?)\s*[=:]", line)
        if m and section is not None:
            out.setdefault((section, m.group(1).strip()), i)
    return out


def _convert(key: str, raw: str, line, default):
    raw = raw.strip()
    if key in _STR_KEYS:
        return raw if raw else default
    if raw.lower() in ("none", "") and default is None:
        return None
    try:
        if key in _INT_KEYS:
            return int(raw)
        return float(raw)
    except ValueError:
        raise ParseError(f"cannot read {raw!r} as a number", line=line, key=key) from None


def parse_text(text: str, mode: str = "simulate", source: str | None = None) -> ExperimentSpec:
    if mode not in MODES:
        raise ParseError(f"unknown mode {mode!r}; choose from {MODES}")
    cp = configparser.ConfigParser(interpolation=None, strict=True)
    cp.optionxform = str
    try:
        cp.read_string(text, source=source or "<config>")
    except configparser.MissingSectionHeaderError as exc:
        raise ParseError("key outside any section", line=exc.lineno) from None
    except configparser.DuplicateOptionError as exc:
        raise ParseError("duplicate key", line=exc.lineno, key=exc.option) from None
    except configparser.DuplicateSectionError as exc:
        raise ParseError(f"duplicate section [{exc.section}]", line=exc.lineno) from None
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if exc.errors else None
        raise ParseError("malformed line", line=line) from None
    lines = _key_lines(text)
    settings = {sec: dict(vals) for sec, vals in DEFAULTS.items()}
    for sec in cp.sections():
        if sec not in DEFAULTS:
            line = next((i for i, l in enumerate(text.splitlines(), 1) if l.strip() == f"[{sec}]"), None)
            raise ParseError(f"unknown section [{sec}]", line=line, key=sec)
        for key, raw in cp.items(sec):
            line = lines.get((sec, key))
            if key not in DEFAULTS[sec]:
                raise ParseError(f"unknown key in [{sec}]", line=line, key=key)
            settings[sec][key] = _convert(key, raw, line, DEFAULTS[sec][key])
    spec = ExperimentSpec(mode, settings, source)
    spec.warnings = validate(spec)
    return spec


def parse_config(path, mode: str = "simulate") -> ExperimentSpec:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror}") from None
    return parse_text(text, mode, str(path))


def validate(spec: ExperimentSpec) -> list[str]:
    """Collect every violated gate; raise ValidationError if any is hard."""
    s = spec.settings
    bad = []
    g, ph, ix, rn = s["grid"], s["physics"], s["indices"], s["run"]
    n = g["n"]
    if g["dim"] not in (2, 3):
        bad.append("dim ∈ {2, 3}")
    if n < 8 or n & (n - 1):
        bad.append("n a power of two ≥ 8")
    if not ph["mu"] > 0:
        bad.append("μ > 0")
    if not ph["lam"] + 2 * ph["mu"] > 0:
        bad.append("λ + 2μ > 0")
    if not ph["K"] > 0:
        bad.append("K > 0")
    if not ph["gamma"] >= 1:
        bad.append("γ ≥ 1")
    if not ph["rho_bar"] > 0:
        bad.append("ρ̄ > 0")
    if not ix["alpha"] > 1:
        bad.append("α > 1")
    if not rn["T"] > 0 or not rn["dt"] > 0 or rn["dt"] > rn["T"]:
        bad.append("0 < dt ≤ T")
    if rn["save_every"] < 1:
        bad.append("save_every ≥ 1")
    if not 0 < rn["vacuum_floor"] < 1:
        bad.append("0 < vacuum_floor < 1")
    if s["experiment"]["samples"] is not None and s["experiment"]["samples"] < 1:
        bad.append("samples ≥ 1")
    soft = []
    for label, ok, kind in index_gates(g["dim"], ix["p"], ix["p1"], ph["gamma"] == 1.0):
        if ok:
            continue
        (bad if kind == "existence" else soft).append(label)
    if bad:
        raise ValidationError(bad)
    return soft
