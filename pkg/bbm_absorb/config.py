"""Run configuration: TOML documents validated into pydantic models."""
import re
import sys
from functools import cached_property
from pathlib import Path
from typing import Dict
from typing import List
from typing import Literal
from typing import Optional
from typing import Tuple

from pydantic import BaseModel
from pydantic import ConfigDict
from pydantic import Field
from pydantic import field_validator
from pydantic import model_validator

from .bbm_simulator import DEFAULT_DT
from .bbm_simulator import MAX_HALVINGS
from .bbm_simulator import DEFAULT_MAX_EVENTS
from .bbm_simulator import DEFAULT_MAX_POPULATION
from .bbm_simulator import SEED_LIMIT
from .bbm_simulator import SimConfig
from .errors import ModelError
from .fkpp_wave import DEFAULT_EPS_TAIL
from .fkpp_wave import DEFAULT_TOL
from .fkpp_wave import DEFAULT_X_MAX
from .generator_solver import DEFAULT_ORDER
from .offspring_law import OffspringLaw
from .offspring_law import drift_params
from .offspring_law import make_offspring_law

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = [
    "COMMANDS",
    "DEFAULT_TOLERANCES",
    "RunConfig",
    "LawSection",
    "DriftSection",
    "BarrierSection",
    "TwoBarrierSection",
    "SeriesSection",
    "WaveSection",
    "SimulationSection",
    "OutputSection",
    "ParseError",
    "parse_config",
]

COMMANDS = ("solve-a", "wave", "dist", "simulate", "verify", "report")

DEFAULT_TOLERANCES: Dict[str, float] = {
    "ode_residual": 1e-8,
    "cross_oracle": 1e-6,
    "cross_F": 1e-8,
    "identity": 1e-8,
    "mass_defect": 1e-6,
    "censoring": 1e-3,
}

_LINE = re.compile(r"line (\d+)")


class ParseError(ModelError):
    def __init__(self, message: str, line: Optional[int] = None) -> None:
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class LawSection(_Section):
    probs: List[Tuple[int, float]]

    @field_validator("probs")
    @classmethod
    def _valid_law(cls, value: List[Tuple[int, float]]) -> List[Tuple[int, float]]:
        make_offspring_law(value)
        return value


class DriftSection(_Section):
    c: float


class BarrierSection(_Section):
    x: float = Field(gt=0.0)


class TwoBarrierSection(_Section):
    a: float
    b: float
    y: float = 0.0

    @model_validator(mode="after")
    def _ordered(self) -> "TwoBarrierSection":
        if not self.a < self.y < self.b:
            raise ValueError(f"need a < y < b, got a={self.a}, y={self.y}, b={self.b}")
        return self


class SeriesSection(_Section):
    """``order`` is the length of the series of ``a``; ``dist_order`` the last probability index."""

    order: int = Field(default=DEFAULT_ORDER, ge=2)
    dist_order: int = Field(default=1024, ge=8)
    radius: Optional[float] = Field(default=None, gt=0.0, lt=1.0)
    samples: Optional[int] = Field(default=None, ge=16)


class WaveSection(_Section):
    x_max: float = Field(default=DEFAULT_X_MAX, gt=0.0)
    eps_tail: float = Field(default=DEFAULT_EPS_TAIL, gt=0.0, lt=1.0)
    tol: float = Field(default=DEFAULT_TOL, gt=0.0)


class SimulationSection(_Section):
    replicas: int = Field(default=100_000, ge=0)
    max_events: int = Field(default=DEFAULT_MAX_EVENTS, ge=1)
    max_population: int = Field(default=DEFAULT_MAX_POPULATION, ge=1)
    dt: float = Field(default=DEFAULT_DT, gt=0.0)
    halvings: int = Field(default=0, ge=0, le=MAX_HALVINGS)


class OutputSection(_Section):
    directory: Path = Path("out")


class RunConfig(BaseModel):
    """
    A validated run of one command.

    Exactly one of ``barrier`` and ``two_barrier`` may be given; the commands
    working with absorbed counts need one, ``dist`` and ``verify`` need the
    single barrier.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    command: Literal["solve-a", "wave", "dist", "simulate", "verify", "report"]
    seed: int = Field(default=0, ge=0, lt=SEED_LIMIT)
    threads: int = Field(default=1, ge=1)
    law: LawSection
    drift: DriftSection
    barrier: Optional[BarrierSection] = None
    two_barrier: Optional[TwoBarrierSection] = None
    series: SeriesSection = SeriesSection()
    wave: WaveSection = WaveSection()
    simulation: SimulationSection = SimulationSection()
    output: OutputSection = OutputSection()
    tolerances: Dict[str, float] = Field(default_factory=dict)

    @field_validator("tolerances")
    @classmethod
    def _known_tolerances(cls, value: Dict[str, float]) -> Dict[str, float]:
        unknown = sorted(set(value) - set(DEFAULT_TOLERANCES))
        if unknown:
            raise ValueError(f"unknown tolerance names {unknown}, expected some of {sorted(DEFAULT_TOLERANCES)}")
        if any(not v > 0.0 for v in value.values()):
            raise ValueError("tolerances must be positive")
        return value

    @model_validator(mode="after")
    def _barriers(self) -> "RunConfig":
        if self.barrier is not None and self.two_barrier is not None:
            raise ValueError("give either [barrier] or [two_barrier], not both")
        if self.command in ("dist", "verify", "report") and self.barrier is None:
            raise ValueError(f"command {self.command!r} needs a [barrier] section")
        if self.command == "simulate" and self.barrier is None and self.two_barrier is None:
            raise ValueError("command 'simulate' needs a [barrier] or [two_barrier] section")
        if self.command != "simulate" or self.two_barrier is None:
            law = make_offspring_law(self.law.probs)
            if not drift_params(law, self.drift.c).extinction_certain:
                raise ValueError(f"drift {self.drift.c} is below the critical drift {law.c0:.16g}")
        return self

    @cached_property
    def offspring_law(self) -> OffspringLaw:
        return make_offspring_law(self.law.probs)

    def tolerance(self, name: str) -> float:
        return self.tolerances.get(name, DEFAULT_TOLERANCES[name])

    def sim_config(self) -> SimConfig:
        common = dict(
            law=self.offspring_law,
            c=self.drift.c,
            seed=self.seed,
            max_events=self.simulation.max_events,
            max_population=self.simulation.max_population,
            dt=self.simulation.dt,
            halvings=self.simulation.halvings,
        )
        if self.two_barrier is not None:
            return SimConfig(a=self.two_barrier.a, b=self.two_barrier.b, y=self.two_barrier.y, **common)
        if self.barrier is None:
            raise ModelError("no barrier configured")
        return SimConfig(x=self.barrier.x, **common)


def parse_config(text: str) -> RunConfig:
    """
    Parse a TOML run configuration.

    >>> cfg = parse_config('command = "solve-a"\\n[law]\\nprobs = [[2, 1.0]]\\n[drift]\\nc = 1.5\\n')
    >>> cfg.series.order
    20000

    :raises ParseError: if the document is not valid TOML
    :raises pydantic.ValidationError: if a value is missing or invalid
    """
    try:
        document = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        match = _LINE.search(str(e))
        raise ParseError(str(e), int(match.group(1)) if match else None) from e
    return RunConfig.model_validate(document)
