"""Scenario configuration: a flat, sectioned key = value text format with
line comments, lossless round-trip, and line-level validation errors."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from .model import NoiseBounds, VehicleParams
from .simulate import AttackPolicy, LeadProfile, SimConfig
from .synthesis import A3_GRID, A_GRID, C_GRID, PSD_MARGIN, REACH_A_GRID, TAU1_GRID


class ConfigError(ValueError):
    """Malformed or invalid configuration; message carries file line numbers."""


@dataclass(frozen=True)
class SynthesisOptions:
    alpha1: float = 0.95
    alpha2: float = 0.05
    eps: float = 1e-3
    lambda_max: float = -0.01
    a_grid: tuple = A_GRID
    c_grid: tuple = C_GRID
    a3_grid: tuple = A3_GRID
    tau1_grid: tuple = TAU1_GRID
    reach_a_grid: tuple = REACH_A_GRID
    refinement_rounds: int = 1
    psd_margin: float = PSD_MARGIN


@dataclass(frozen=True)
class ScenarioConfig:
    vehicle: VehicleParams
    bounds: NoiseBounds
    synthesis: SynthesisOptions
    sim: SimConfig
    raw: tuple = ()   # ordered (section, key, value-string) triples as loaded

    def digest(self) -> str:
        return hashlib.sha256(serialize(self).encode()).hexdigest()


def _parse_lines(text: str):
    """Returns ordered (section, key, value, lineno) tuples."""
    out = []
    section = None
    for lineno, rawline in enumerate(text.splitlines(), start=1):
        line = rawline.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if not section:
                raise ConfigError(f"line {lineno}: empty section name")
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {rawline!r}")
        if section is None:
            raise ConfigError(f"line {lineno}: key outside of any [section]")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        out.append((section, key, value, lineno))
    return out


def _float(value: str, where: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"{where}: expected a number, got {value!r}") from None


def _int(value: str, where: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"{where}: expected an integer, got {value!r}") from None


def _floats(value: str, where: str) -> tuple:
    parts = [p for p in value.replace(",", " ").split() if p]
    return tuple(_float(p, where) for p in parts)


_VEHICLE_KEYS = {"h", "tau", "Ts", "s_i", "L_i", "v_max"}
_BOUND_KEYS = {"u_bar", "w1_bar", "w2_bar", "w3_bar"}
_SYNTH_FLOAT = {"alpha1", "alpha2", "eps", "lambda_max", "psd_margin"}
_SYNTH_GRID = {"a_grid", "c_grid", "a3_grid", "tau1_grid", "reach_a_grid"}
_SIM_FLOAT = {"wd_halfwidth", "wu_halfwidth", "we_halfwidth", "xhat0_spread",
              "lead_amplitude", "lead_rate", "attack_gamma", "attack_bound"}
_SIM_INT = {"steps", "seed", "m"}


def load(path) -> ScenarioConfig:
    with open(path) as fh:
        return loads(fh.read())


def loads(text: str) -> ScenarioConfig:
    entries = _parse_lines(text)
    sections: dict = {}
    for section, key, value, lineno in entries:
        sect = sections.setdefault(section, {})
        if key in sect:
            raise ConfigError(f"line {lineno}: duplicate key {key!r} in [{section}]")
        sect[key] = (value, lineno)

    def take(section, key, default=None):
        if section in sections and key in sections[section]:
            return sections[section].pop(key)
        return (default, None)

    def where(section, key, lineno):
        return f"line {lineno}: [{section}] {key}"

    veh_kwargs = {}
    for key in _VEHICLE_KEYS:
        value, lineno = take("vehicle", key)
        if value is not None:
            veh_kwargs[key] = _float(value, where("vehicle", key, lineno))
    try:
        vehicle = VehicleParams(**veh_kwargs)
    except ValueError as exc:
        raise ConfigError(f"[vehicle]: {exc}") from None

    bound_kwargs = {}
    for key in _BOUND_KEYS:
        value, lineno = take("bounds", key)
        if value is not None:
            bound_kwargs[key] = _float(value, where("bounds", key, lineno))
    try:
        bounds = NoiseBounds(**bound_kwargs)
    except ValueError as exc:
        raise ConfigError(f"[bounds]: {exc}") from None

    synth_kwargs = {}
    for key in _SYNTH_FLOAT:
        value, lineno = take("synthesis", key)
        if value is not None:
            synth_kwargs[key] = _float(value, where("synthesis", key, lineno))
    for key in _SYNTH_GRID:
        value, lineno = take("synthesis", key)
        if value is not None:
            grid = _floats(value, where("synthesis", key, lineno))
            if not grid or not all(0.0 < g < 1.0 for g in grid):
                raise ConfigError(
                    f"{where('synthesis', key, lineno)}: grid values must lie in (0, 1)")
            synth_kwargs[key] = grid
    value, lineno = take("synthesis", "refinement_rounds")
    if value is not None:
        synth_kwargs["refinement_rounds"] = _int(
            value, where("synthesis", "refinement_rounds", lineno))
    synthesis = SynthesisOptions(**synth_kwargs)
    if not synthesis.lambda_max < 0:
        raise ConfigError("[synthesis] lambda_max: must be negative")
    if not vehicle.tau < -1.0 / (3.0 * synthesis.lambda_max):
        raise ConfigError("[synthesis] lambda_max: requires tau < -1/(3 lambda_max)")
    if abs(synthesis.alpha1 + synthesis.alpha2 - 1.0) > 1e-12 \
            or synthesis.alpha1 <= 0 or synthesis.alpha2 <= 0:
        raise ConfigError("[synthesis] alpha1/alpha2: must be positive and sum to 1")
    if not 0.0 <= synthesis.psd_margin < 1e-6:
        raise ConfigError("[synthesis] psd_margin: must lie in [0, 1e-6)")

    sim_kwargs = {}
    for key in _SIM_INT:
        value, lineno = take("simulation", key)
        if value is not None:
            sim_kwargs[key] = _int(value, where("simulation", key, lineno))
    simple_floats = {}
    for key in _SIM_FLOAT:
        value, lineno = take("simulation", key)
        if value is not None:
            simple_floats[key] = _float(value, where("simulation", key, lineno))
    lead_kind, lineno = take("simulation", "lead_kind", "exp_decay")
    lead = LeadProfile(kind=lead_kind,
                       amplitude=simple_floats.pop("lead_amplitude", 2.0),
                       rate=simple_floats.pop("lead_rate", 0.1))
    attack_kind, lineno = take("simulation", "attack_kind", "none")
    attack_vehicles, lineno = take("simulation", "attack_vehicles")
    attack_value, lineno = take("simulation", "attack_value")
    attack_target, lineno = take("simulation", "attack_target")
    try:
        attack = AttackPolicy(
            kind=attack_kind,
            gamma=simple_floats.pop("attack_gamma", 1.0),
            bound=simple_floats.pop("attack_bound", 5.0),
            value=_floats(attack_value, "attack_value") if attack_value else (5.0, 5.0),
            target=_floats(attack_target, "attack_target") if attack_target
            else (-1.0, -vehicle.h, 0.0, 0.0, 0.0),
            vehicles=tuple(int(v) for v in _floats(attack_vehicles, "attack_vehicles"))
            if attack_vehicles else (),
        )
    except ValueError as exc:
        raise ConfigError(f"[simulation]: {exc}") from None
    x0_value, lineno = take("simulation", "x0")
    xhat0_value, lineno = take("simulation", "xhat0")
    if xhat0_value in (None, "same", "random"):
        xhat0 = xhat0_value or "same"
    else:
        xhat0 = _floats(xhat0_value, where("simulation", "xhat0", lineno))
    try:
        sim = SimConfig(
            lead=lead, attack=attack,
            x0=_floats(x0_value, "x0") if x0_value else (0.0, 30.0, 0.0, 0.0, 0.0),
            xhat0=xhat0,
            **sim_kwargs, **simple_floats)
    except ValueError as exc:
        raise ConfigError(f"[simulation]: {exc}") from None

    for section, remaining in sections.items():
        for key, (_, lineno) in remaining.items():
            raise ConfigError(f"line {lineno}: unknown key {key!r} in [{section}]")

    raw = tuple((s, k, v) for s, k, v, _ in entries)
    return ScenarioConfig(vehicle=vehicle, bounds=bounds, synthesis=synthesis,
                          sim=sim, raw=raw)


def serialize(cfg: ScenarioConfig) -> str:
    """Canonical text form; loads(serialize(cfg)) reproduces every setting."""
    def fmt(v):
        if isinstance(v, tuple):
            return " ".join(repr(float(x)) for x in v)
        if isinstance(v, float):
            return repr(v)
        return str(v)

    veh, bnd, syn, sim = cfg.vehicle, cfg.bounds, cfg.synthesis, cfg.sim
    lines = ["[vehicle]"]
    for key in sorted(_VEHICLE_KEYS):
        lines.append(f"{key} = {fmt(getattr(veh, key))}")
    lines.append("")
    lines.append("[bounds]")
    for key in sorted(_BOUND_KEYS):
        lines.append(f"{key} = {fmt(getattr(bnd, key))}")
    lines.append("")
    lines.append("[synthesis]")
    for key in sorted(_SYNTH_FLOAT):
        lines.append(f"{key} = {fmt(getattr(syn, key))}")
    for key in sorted(_SYNTH_GRID):
        lines.append(f"{key} = {fmt(getattr(syn, key))}")
    lines.append(f"refinement_rounds = {syn.refinement_rounds}")
    lines.append("")
    lines.append("[simulation]")
    lines.append(f"steps = {sim.steps}")
    lines.append(f"seed = {sim.seed}")
    lines.append(f"m = {sim.m}")
    lines.append(f"lead_kind = {sim.lead.kind}")
    lines.append(f"lead_amplitude = {fmt(sim.lead.amplitude)}")
    lines.append(f"lead_rate = {fmt(sim.lead.rate)}")
    lines.append(f"wd_halfwidth = {fmt(sim.wd_halfwidth)}")
    lines.append(f"wu_halfwidth = {fmt(sim.wu_halfwidth)}")
    if sim.we_halfwidth is not None:
        lines.append(f"we_halfwidth = {fmt(sim.we_halfwidth)}")
    lines.append(f"x0 = {fmt(sim.x0)}")
    if isinstance(sim.xhat0, str):
        lines.append(f"xhat0 = {sim.xhat0}")
    else:
        lines.append(f"xhat0 = {fmt(sim.xhat0)}")
    lines.append(f"xhat0_spread = {fmt(sim.xhat0_spread)}")
    lines.append(f"attack_kind = {sim.attack.kind}")
    lines.append(f"attack_gamma = {fmt(sim.attack.gamma)}")
    lines.append(f"attack_bound = {fmt(sim.attack.bound)}")
    lines.append(f"attack_value = {fmt(sim.attack.value)}")
    lines.append(f"attack_target = {fmt(sim.attack.target)}")
    if sim.attack.vehicles:
        lines.append("attack_vehicles = " + " ".join(str(v) for v in sim.attack.vehicles))
    return "\n".join(lines) + "\n"
