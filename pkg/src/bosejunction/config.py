"""JSON run configuration: strict schema, conversion to model objects.

Unknown keys are rejected everywhere.  Errors are reported as
``"<field path>: <message>"`` with paths such as ``reservoirs[0].phase``.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt, ValidationError

from .model import (
    GCS,
    SSB,
    CombZdZ,
    ContinuumRd,
    CoupledModel,
    GraphExplicit,
    GraphKDelta,
    LatticeZd,
    NoPhase,
    RadialContinuum,
    ReservoirSpec,
    SystemSpec,
    Tabulated,
    validate,
)
from .ness import ExplicitVector, ProfileVector, TestVector
from .spectral import SpectralOptions, read_density_csv

__all__ = ["ConfigError", "RunConfig", "parse_config", "load_config", "build_test_vector", "build_profile"]


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        super().__init__("\n".join(errors))
        self.errors = errors


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", strict=True, frozen=True)


# --------------------------------------------------------------------------
# schema


class SystemCfg(_Strict):
    omega: float
    lambda_: float = Field(alias="lambda")


class ContinuumCfg(_Strict):
    type: Literal["continuum_rd"]
    d: int


class LatticeCfg(_Strict):
    type: Literal["lattice_zd"]
    d: int


class CombCfg(_Strict):
    type: Literal["comb_zdz"]
    d: int


class TabulatedCfg(_Strict):
    type: Literal["tabulated"]
    grid: Optional[list[float]] = None
    values: Optional[list[float]] = None
    csv: Optional[str] = None
    pf_pairing: Optional[tuple[float, float]] = None


KindCfg = Annotated[Union[ContinuumCfg, LatticeCfg, CombCfg, TabulatedCfg], Field(discriminator="type")]


class RadialCfg(_Strict):
    type: Literal["radial"]
    radii: list[float]
    values: list[float]
    values_imag: Optional[list[float]] = None


class GaussianCfg(_Strict):
    """Radial profile ``amplitude * exp(-p^2 / (2 width^2))`` cut at ``radius``."""

    type: Literal["gaussian"]
    amplitude: float
    width: PositiveFloat
    radius: PositiveFloat
    samples: PositiveInt = 2049


class KDeltaCfg(_Strict):
    type: Literal["k_delta"]
    site: list[int]


class CoeffCfg(_Strict):
    site: list[int]
    re: float = 0.0
    im: float = 0.0


class ExplicitCfg(_Strict):
    type: Literal["explicit"]
    coeffs: list[CoeffCfg]


FormFactorCfg = Annotated[Union[RadialCfg, GaussianCfg, KDeltaCfg, ExplicitCfg], Field(discriminator="type")]


class NoPhaseCfg(_Strict):
    type: Literal["none"]


class SSBCfg(_Strict):
    type: Literal["ssb"]
    tau: float
    D: float


class GCSCfg(_Strict):
    type: Literal["gcs"]
    s1: float
    s2: float
    D: float


PhaseCfg = Annotated[Union[NoPhaseCfg, SSBCfg, GCSCfg], Field(discriminator="type")]


class ReservoirCfg(_Strict):
    kind: KindCfg
    beta: float
    mu: float
    form_factor: Optional[FormFactorCfg] = None
    phase: PhaseCfg = NoPhaseCfg(type="none")


class ThresholdsCfg(_Strict):
    condition_b: Optional[PositiveFloat] = None
    open_channel: PositiveFloat = 1e-8


class NumericsCfg(_Strict):
    grid_points: PositiveInt = 4097
    continuum_grid_points: PositiveInt = 65537
    epsilon_ladder: list[PositiveFloat] = [1e-2, 1e-3]
    mc_samples: Optional[PositiveInt] = None
    seed: Optional[int] = None
    sigma0: PositiveFloat = 0.03
    eps0: PositiveFloat = 0.03
    lanczos_steps: PositiveInt = 600
    comb_base_radius: PositiveInt = 2
    comb_tooth_length: PositiveInt = 700
    boundary_margin: PositiveInt = 3
    modes_per_reservoir: PositiveInt = 2048
    thresholds: ThresholdsCfg = ThresholdsCfg()


class OutputsCfg(_Strict):
    dir: str = "out"
    format: Literal["csv", "json"] = "csv"


class ProfileCfg(_Strict):
    """Profile ``a`` of ``psi = a(h0) g``: constant or sampled at ``nodes``."""

    type: Literal["profile"]
    nodes: list[float] = [0.0]
    re: list[float]
    im: Optional[list[float]] = None


class VectorExplicitCfg(_Strict):
    type: Literal["explicit"]
    coeffs: list[CoeffCfg]


ComponentCfg = Annotated[Union[ProfileCfg, VectorExplicitCfg], Field(discriminator="type")]


class TestVectorCfg(_Strict):
    c: tuple[float, float] = (0.0, 0.0)
    psi: list[Optional[ComponentCfg]] = []


class EvolveCfg(_Strict):
    t_max: PositiveFloat
    samples: PositiveInt = 401
    test_vector: TestVectorCfg = TestVectorCfg(c=(1.0, 0.0))
    probes: dict[str, list[Optional[ProfileCfg]]] = {}


class GraphCfg(_Strict):
    kind: Literal["zd", "comb", "edge_list"]
    d: Optional[int] = None
    radius: PositiveInt = 6
    base_radius: PositiveInt = 4
    tooth_length: PositiveInt = 8
    path: Optional[str] = None
    phi: Optional[dict[str, float]] = None
    orientation: Optional[list[tuple[str, str]]] = None
    max_walk: PositiveInt = 12
    boundary_margin: PositiveInt = 3


class RootCfg(_Strict):
    system: SystemCfg
    reservoirs: list[ReservoirCfg]
    numerics: NumericsCfg = NumericsCfg()
    outputs: OutputsCfg = OutputsCfg()
    evolve: Optional[EvolveCfg] = None
    graph: Optional[GraphCfg] = None


# --------------------------------------------------------------------------
# conversion


@dataclass(frozen=True, eq=False)
class RunConfig:
    model: CoupledModel
    numerics: NumericsCfg
    outputs: OutputsCfg
    evolve: EvolveCfg | None
    graph: GraphCfg | None
    raw: dict
    config_hash: str
    base_dir: Path

    @property
    def spectral_options(self) -> SpectralOptions:
        n = self.numerics
        return SpectralOptions(
            grid_points=n.grid_points,
            mc_samples=n.mc_samples or SpectralOptions().mc_samples,
            seed=n.seed if n.seed is not None else 0,
            sigma0=n.sigma0,
            eps0=n.eps0,
            lanczos_steps=n.lanczos_steps,
            comb_base_radius=n.comb_base_radius,
            comb_tooth_length=n.comb_tooth_length,
            boundary_margin=n.boundary_margin,
        )


def _path(loc) -> str:
    out = ""
    for part in loc:
        if isinstance(part, int):
            out += f"[{part}]"
        elif part in ("continuum_rd", "lattice_zd", "comb_zdz", "tabulated", "radial", "gaussian", "k_delta",
                      "explicit", "none", "ssb", "gcs", "profile"):
            continue  # union tags
        else:
            out += ("." if out else "") + ("lambda" if part == "lambda_" else str(part))
    return out or "<root>"


def _kind(k, where, base: Path):
    if isinstance(k, ContinuumCfg):
        return ContinuumRd(k.d)
    if isinstance(k, LatticeCfg):
        return LatticeZd(k.d)
    if isinstance(k, CombCfg):
        return CombZdZ(k.d)
    if k.csv is not None:
        if k.grid is not None or k.values is not None:
            raise ConfigError([f"{where}.kind: give either csv or grid/values"])
        p = Path(k.csv)
        g, v = read_density_csv(p if p.is_absolute() else base / p)
    else:
        if k.grid is None or k.values is None:
            raise ConfigError([f"{where}.kind: tabulated density needs grid and values or csv"])
        g, v = np.asarray(k.grid), np.asarray(k.values)
    pf = None if k.pf_pairing is None else complex(*k.pf_pairing)
    try:
        return Tabulated(tuple(float(x) for x in g), tuple(float(x) for x in v), pf)
    except ValueError as e:
        raise ConfigError([f"{where}.kind: {e}"]) from None


def _coeffs(items) -> GraphExplicit:
    return GraphExplicit.from_mapping({tuple(c.site): complex(c.re, c.im) for c in items})


def _form_factor(ff, where):
    if ff is None:
        return None
    try:
        if isinstance(ff, RadialCfg):
            im = ff.values_imag or [0.0] * len(ff.values)
            if len(im) != len(ff.values):
                raise ValueError("values_imag length differs from values")
            return RadialContinuum(tuple(ff.radii), tuple(complex(a, b) for a, b in zip(ff.values, im)))
        if isinstance(ff, GaussianCfg):
            a, w = ff.amplitude, ff.width
            return RadialContinuum.from_function(lambda p: a * math.exp(-0.5 * (p / w) ** 2), ff.radius, ff.samples)
        if isinstance(ff, KDeltaCfg):
            return GraphKDelta(tuple(ff.site))
        return _coeffs(ff.coeffs)
    except ValueError as e:
        raise ConfigError([f"{where}.form_factor: {e}"]) from None


def _phase(p):
    if isinstance(p, SSBCfg):
        return SSB(p.tau, p.D)
    if isinstance(p, GCSCfg):
        return GCS(p.s1, p.s2, p.D)
    return NoPhase()


def build_profile(p: ProfileCfg) -> ProfileVector:
    im = p.im or [0.0] * len(p.re)
    if not (len(p.nodes) == len(p.re) == len(im)):
        raise ConfigError(["profile: nodes, re and im must have equal length"])
    return ProfileVector(tuple(p.nodes), tuple(complex(a, b) for a, b in zip(p.re, im)))


def build_test_vector(tv: TestVectorCfg) -> TestVector:
    comps = []
    for c in tv.psi:
        if c is None:
            comps.append(None)
        elif isinstance(c, ProfileCfg):
            comps.append(build_profile(c))
        else:
            comps.append(ExplicitVector(_coeffs(c.coeffs)))
    return TestVector(complex(*tv.c), tuple(comps))


def parse_config(text: str, seed_override: int | None = None, base_dir: Path | None = None) -> RunConfig:
    """Parse and validate a JSON configuration; raises :class:`ConfigError`."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError([f"<root>: invalid JSON ({e.msg} at line {e.lineno})"]) from None
    if not isinstance(data, dict):
        raise ConfigError(["<root>: expected a JSON object"])
    if seed_override is not None:
        data.setdefault("numerics", {})
        if isinstance(data["numerics"], dict):
            data["numerics"]["seed"] = int(seed_override)
    try:
        # JSON mode so that arrays may fill tuple fields under strict typing
        cfg = RootCfg.model_validate_json(json.dumps(data))
    except ValidationError as e:
        raise ConfigError([f"{_path(err['loc'])}: {err['msg']}" for err in e.errors()]) from None

    base = base_dir or Path(".")
    errors = []
    reservoirs = []
    for k, r in enumerate(cfg.reservoirs):
        where = f"reservoirs[{k}]"
        try:
            reservoirs.append(ReservoirSpec(_kind(r.kind, where, base), r.beta, r.mu, _form_factor(r.form_factor, where), _phase(r.phase)))
        except ConfigError as e:
            errors.extend(e.errors)
    if errors:
        raise ConfigError(errors)
    model = CoupledModel(SystemSpec(cfg.system.omega, cfg.system.lambda_), tuple(reservoirs))
    # lambda = 0 is kept as a decoupled diagnostic run (check, eta, evolve)
    decoupled = cfg.system.lambda_ == 0.0
    errors.extend(e for e in validate(model) if not (decoupled and e.startswith("system.lambda:")))

    n = cfg.numerics
    uses_mc = n.mc_samples is not None or any(isinstance(r.kind, LatticeZd) for r in reservoirs)
    if uses_mc and n.seed is None:
        errors.append("numerics.seed: seed is mandatory when Monte Carlo sampling is used")
    if n.grid_points % 2 == 0 or n.grid_points < 9:
        errors.append("numerics.grid_points: must be odd and >= 9")
    if n.modes_per_reservoir < 2:
        errors.append("numerics.modes_per_reservoir: must be >= 2")
    if n.mc_samples is not None and n.mc_samples & (n.mc_samples - 1):
        errors.append("numerics.mc_samples: must be a power of two")
    if errors:
        raise ConfigError(errors)

    canonical = json.dumps(data, sort_keys=True, separators=(",", ":"))
    digest = hashlib.sha256(canonical.encode()).hexdigest()
    return RunConfig(model, n, cfg.outputs, cfg.evolve, cfg.graph, data, digest, base)


def load_config(path, seed_override: int | None = None) -> RunConfig:
    p = Path(path)
    return parse_config(p.read_text(encoding="utf-8"), seed_override, p.parent)
