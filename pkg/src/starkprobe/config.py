"""Flat ``key = value`` sweep configurations.

Format: one assignment per line, ``#`` starts a comment, lists are
comma-separated and field grids are ``log:start:stop:count`` or
``lin:start:stop:count``. Parsing collects every problem before failing.
"""

from __future__ import annotations

import enum
import hashlib
import math
from dataclasses import dataclass, fields, replace

import numpy as np

FIGURES = ("fig1", "fig2", "fig3", "fig5", "fig6", "fig7")


class Scenario(str, enum.Enum):
    SPECTRUM = "spectrum"
    QFI_SWEEP = "qfi-sweep"
    QFI_MATRIX = "qfi-matrix"
    CFI_SWEEP = "cfi-sweep"
    GAP_SWEEP = "gap-sweep"
    COLLAPSE = "collapse"
    BETA_GAMMA = "fit-beta-gamma"
    MULTIPARAM_TRACE = "multiparam-trace"
    REPRODUCE = "reproduce"


MONOMIAL_SCENARIOS = {Scenario.SPECTRUM, Scenario.QFI_SWEEP, Scenario.COLLAPSE, Scenario.BETA_GAMMA}
PARABOLIC_SCENARIOS = {Scenario.QFI_MATRIX, Scenario.CFI_SWEEP, Scenario.GAP_SWEEP, Scenario.MULTIPARAM_TRACE}


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = list(errors)


@dataclass(frozen=True)
class Grid:
    """Field grid: log- or lin-spaced, or an explicit list of values."""

    kind: str
    start: float = 0.0
    stop: float = 0.0
    count: int = 0
    values: tuple[float, ...] = ()

    def points(self) -> np.ndarray:
        if self.kind == "log":
            return np.logspace(math.log10(self.start), math.log10(self.stop), self.count)
        if self.kind == "lin":
            return np.linspace(self.start, self.stop, self.count)
        return np.asarray(self.values, dtype=float)

    def __len__(self) -> int:
        return self.count if self.kind in ("log", "lin") else len(self.values)

    def halved(self) -> "Grid":
        if self.kind in ("log", "lin"):
            return replace(self, count=max(2, (self.count + 1) // 2))
        return self

    def render(self) -> str:
        if self.kind in ("log", "lin"):
            return f"{self.kind}:{self.start!r}:{self.stop!r}:{self.count}"
        return ", ".join(repr(v) for v in self.values)


def parse_grid(text: str) -> Grid:
    text = text.strip()
    if text.startswith(("log:", "lin:")):
        parts = text.split(":")
        if len(parts) != 4:
            raise ValueError(f"grid {text!r} must be kind:start:stop:count")
        kind = parts[0]
        try:
            start, stop = float(parts[1]), float(parts[2])
        except ValueError:
            raise ValueError(f"grid {text!r} has non-numeric endpoints") from None
        try:
            count = int(parts[3])
        except ValueError:
            raise ValueError(f"grid {text!r} has a non-integer count") from None
        if count < 1:
            raise ValueError(f"grid {text!r} must contain at least one point")
        if not (math.isfinite(start) and math.isfinite(stop)):
            raise ValueError(f"grid {text!r} has non-finite endpoints")
        if kind == "log" and (start <= 0 or stop <= 0):
            raise ValueError("log grid requires positive endpoints")
        return Grid(kind, start, stop, count)
    try:
        values = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise ValueError(f"malformed grid or list {text!r}") from None
    if not values:
        raise ValueError("empty grid")
    if not all(math.isfinite(v) for v in values):
        raise ValueError(f"non-finite value in {text!r}")
    return Grid("list", values=values)


@dataclass(frozen=True)
class SweepConfig:
    scenario: Scenario
    family: str = "single"
    potential: str = "monomial"
    L: tuple[int, ...] = ()
    gamma: tuple[float, ...] = ()
    h: Grid | None = None
    h1: Grid | None = None
    h2: Grid | None = None
    line_offset: float | None = None
    method: str = "finite-difference"
    povm: str | None = None
    mode: str = "peak"
    h_fixed: float = 1e-6
    init: tuple[float, ...] = (1e-12, 2.0, 0.25)
    bootstrap: int = 200
    levels: int = 0
    figure: str | None = None
    out: str = "out"
    workers: int = 1
    seed: int = 20240517
    quick: bool = False
    full: bool = False

    def field_points(self, name: str) -> np.ndarray:
        g = getattr(self, name)
        if g is None:
            return np.array([])
        return (g.halved() if self.quick else g).points()

    def serialize(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None or v == ():
                continue
            lines.append(f"{f.name} = {_render(v)}")
        return "\n".join(lines) + "\n"

    def hash(self) -> str:
        """Digest of everything that affects computed values (not `out`, not `workers`)."""
        body = "\n".join(
            line for line in self.serialize().splitlines() if not line.startswith(("out ", "workers "))
        )
        return hashlib.sha256(body.encode()).hexdigest()[:16]


def _render(v) -> str:
    if isinstance(v, enum.Enum):
        return v.value
    if isinstance(v, Grid):
        return v.render()
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ", ".join(repr(x) if isinstance(x, float) else str(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _int_list(text: str) -> tuple[int, ...]:
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        if tok:
            out.append(int(tok))
    if not out:
        raise ValueError("empty list")
    return tuple(out)


def _float_list(text: str) -> tuple[float, ...]:
    vals = tuple(float(t) for t in text.split(",") if t.strip())
    if not vals:
        raise ValueError("empty list")
    return vals


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


_CONVERTERS = {
    "scenario": lambda t: Scenario(t.strip()),
    "family": lambda t: t.strip(),
    "potential": lambda t: t.strip(),
    "L": _int_list,
    "gamma": _float_list,
    "h": parse_grid,
    "h1": parse_grid,
    "h2": parse_grid,
    "line_offset": float,
    "method": lambda t: t.strip(),
    "povm": lambda t: t.strip(),
    "mode": lambda t: t.strip(),
    "h_fixed": float,
    "init": _float_list,
    "bootstrap": int,
    "levels": int,
    "figure": lambda t: t.strip(),
    "out": lambda t: t.strip(),
    "workers": int,
    "seed": int,
    "quick": _bool,
    "full": _bool,
}


def parse_config(text: str, **overrides) -> SweepConfig:
    """Parse and validate; raises :class:`ConfigError` listing every problem."""
    errors: list[str] = []
    values: dict = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"line {n}: expected 'key = value'")
            continue
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _CONVERTERS:
            errors.append(f"line {n}: unknown key {key!r}")
            continue
        if key in values:
            errors.append(f"line {n}: duplicate key {key!r}")
            continue
        try:
            values[key] = _CONVERTERS[key](val)
        except ValueError as exc:
            errors.append(f"line {n}: {key}: {exc}")
    values.update({k: v for k, v in overrides.items() if v is not None})
    if "scenario" not in values:
        errors.append("missing required key 'scenario'")
        raise ConfigError(errors)
    try:
        cfg = SweepConfig(**values)
    except TypeError as exc:
        raise ConfigError(errors + [str(exc)]) from None
    errors.extend(validate(cfg))
    if errors:
        raise ConfigError(errors)
    return cfg


def validate(cfg: SweepConfig) -> list[str]:
    errs = []
    sc = cfg.scenario
    if cfg.family not in ("single", "many-body"):
        errs.append(f"family must be 'single' or 'many-body', got {cfg.family!r}")
    if cfg.potential not in ("monomial", "parabolic"):
        errs.append(f"potential must be 'monomial' or 'parabolic', got {cfg.potential!r}")
    if cfg.workers < 1:
        errs.append("workers must be >= 1")
    if cfg.seed < 0 or cfg.seed >= 2**64:
        errs.append("seed must be an unsigned 64-bit integer")
    if sc is Scenario.REPRODUCE:
        if cfg.figure not in FIGURES:
            errs.append(f"figure must be one of {', '.join(FIGURES)}, got {cfg.figure!r}")
        return errs
    if not cfg.L:
        errs.append("L list is empty")
    if any(L < 2 for L in cfg.L):
        errs.append("every L must be >= 2")
    if cfg.family == "many-body" and any(L % 2 for L in cfg.L):
        errs.append("many-body sizes must be even (half filling)")
    if cfg.family == "many-body" and any(L > 20 for L in cfg.L):
        errs.append("many-body sizes above 20 are out of reach for exact diagonalization")
    if sc in MONOMIAL_SCENARIOS:
        if cfg.potential != "monomial":
            errs.append(f"scenario {sc.value} needs potential = monomial")
        if not cfg.gamma:
            errs.append(f"scenario {sc.value} needs a gamma list")
        if any(g <= 0 for g in cfg.gamma):
            errs.append("gamma must be positive")
        if cfg.h is None and not (sc is Scenario.BETA_GAMMA and cfg.mode == "fixed"):
            errs.append(f"scenario {sc.value} needs an h grid")
    if sc in PARABOLIC_SCENARIOS:
        if cfg.potential != "parabolic":
            errs.append(f"scenario {sc.value} needs potential = parabolic")
        if cfg.h2 is None:
            errs.append(f"scenario {sc.value} needs an h2 grid")
        if cfg.h1 is None and cfg.line_offset is None:
            errs.append(f"scenario {sc.value} needs an h1 grid or a line_offset")
        if cfg.h1 is not None and cfg.line_offset is not None:
            errs.append("give either an h1 grid or a line_offset, not both")
    if cfg.method not in ("finite-difference", "perturbative"):
        errs.append(f"method must be finite-difference or perturbative, got {cfg.method!r}")
    if cfg.method == "perturbative" and (cfg.family != "single" or sc is not Scenario.QFI_SWEEP):
        errs.append("the perturbative method exists only for single-particle qfi-sweep")
    if sc is Scenario.CFI_SWEEP:
        want = "position" if cfg.family == "single" else "spin-configuration"
        if cfg.povm is None:
            errs.append(f"cfi-sweep needs povm = {want}")
        elif cfg.povm != want:
            errs.append(f"povm {cfg.povm!r} does not match family {cfg.family!r} (use {want})")
    if cfg.mode not in ("peak", "fixed"):
        errs.append(f"mode must be peak or fixed, got {cfg.mode!r}")
    if sc is Scenario.COLLAPSE:
        if len(cfg.L) < 3:
            errs.append("collapse needs at least three sizes")
        if len(cfg.init) != 3 or not cfg.init[2] > 0:
            errs.append("init must be h_c, alpha, nu with nu > 0")
    if sc is Scenario.BETA_GAMMA and len(cfg.L) < 3:
        errs.append("fit-beta-gamma needs at least three sizes")
    if sc is Scenario.BETA_GAMMA and len(cfg.gamma) < 3:
        errs.append("fit-beta-gamma needs at least three gamma values")
    if cfg.bootstrap < 0:
        errs.append("bootstrap must be >= 0")
    return errs


__all__ = ["ConfigError", "FIGURES", "Grid", "Scenario", "SweepConfig", "parse_config", "parse_grid", "validate"]
