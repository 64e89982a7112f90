from __future__ import annotations

import os
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from dotenv import load_dotenv

load_dotenv()

TOL_RANGE = (1e-14, 1e-4)
ODE_TOL_RANGE = (1e-14, 1e-6)


@dataclass
class Settings:
    OUTPUT_DIR: Path
    TOL_ODE: float = 1e-12
    RTOL_ODE: float = 1e-10
    TOL_REPORT: float = 1e-6
    QUAD_RTOL: float = 1e-13
    QUAD_MAX_PANELS: int = 2**20
    QUAD_NOISE_RTOL: float = 1e-9
    TAU_RTOL: float = 1e-12
    EPSILON_FLOOR: Fraction = Fraction(1, 10**9)
    MULTIPLICITY_SLOPE_TOL: float = 0.25
    REMARK_OPTIMIZATION: bool = False
    WORKERS: int = 2
    DETERMINISTIC: bool = True


def check_tolerance(name: str, value: float, bounds: tuple[float, float] = TOL_RANGE) -> float:
    lo, hi = bounds
    if not (lo <= value <= hi):
        raise ValueError(f"{name} must lie in [{lo:g}, {hi:g}], got {value!r}")
    return value


def _load() -> Settings:
    def _bool(value: str | None, default: bool = False) -> bool:
        if value is None:
            return default
        return value.strip().lower() in {"1", "true", "yes", "on"}

    cfg = Settings(
        OUTPUT_DIR=Path(os.getenv("OUTPUT_DIR", "./output")),
        TOL_ODE=float(os.getenv("TOL_ODE", "1e-12")),
        RTOL_ODE=float(os.getenv("RTOL_ODE", "1e-10")),
        TOL_REPORT=float(os.getenv("TOL_REPORT", "1e-6")),
        QUAD_RTOL=float(os.getenv("QUAD_RTOL", "1e-13")),
        QUAD_MAX_PANELS=int(os.getenv("QUAD_MAX_PANELS", str(2**20))),
        QUAD_NOISE_RTOL=float(os.getenv("QUAD_NOISE_RTOL", "1e-9")),
        TAU_RTOL=float(os.getenv("TAU_RTOL", "1e-12")),
        EPSILON_FLOOR=Fraction(os.getenv("EPSILON_FLOOR", "1/1000000000")),
        MULTIPLICITY_SLOPE_TOL=float(os.getenv("MULTIPLICITY_SLOPE_TOL", "0.25")),
        REMARK_OPTIMIZATION=_bool(os.getenv("REMARK_OPTIMIZATION"), False),
        WORKERS=int(os.getenv("WORKERS", "2")),
        DETERMINISTIC=_bool(os.getenv("DETERMINISTIC"), True),
    )
    check_tolerance("TOL_ODE", cfg.TOL_ODE, ODE_TOL_RANGE)
    check_tolerance("TOL_REPORT", cfg.TOL_REPORT)
    if cfg.WORKERS < 1:
        raise ValueError("WORKERS must be at least 1")
    if cfg.EPSILON_FLOOR <= 0:
        raise ValueError("EPSILON_FLOOR must be positive")
    return cfg


settings = _load()
