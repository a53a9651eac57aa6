"""Scenario configuration: sectioned key=value text, serializer and presets.

Grammar (INI, parsed with the stdlib parser): sections [plant], [human],
[automation], [ocp], [solver], [scenario], [output]; every key optional with
the benchmark defaults; unknown sections or keys are rejected.  Schedule
segments are written as

    [scenario]
    segment1 = 0.0, 0.5, 1.0, cooperative, autopilot

meaning (t_start, arm damping target, arm stiffness target, cooperation,
authority); authority may also be "auto" to classify online from the measured
arm gains.  Dotted overrides ("scenario.duration=30") are applied after the
file.  ``serialize_config`` emits a canonical document that parses back to an
identical configuration.
"""

from __future__ import annotations

import configparser
from dataclasses import replace
from importlib import resources
from typing import Dict, Iterable, Tuple

from . import agents
from .cgmres import SolverSettings
from .harness import ScenarioConfig, ScheduleSegment, ValidationError
from .ocp import OcpSettings
from .plant import MechanicalParams


class ParseError(ValueError):
    """The configuration text is malformed (syntax, unknown key, bad value)."""


_FLOAT = "float"
_INT = "int"
_BOOL = "bool"
_STR = "str"

# section -> key -> type; segment keys are handled by pattern.
_SCHEMA: Dict[str, Dict[str, str]] = {
    "plant": {"j_sw": _FLOAT, "j_s": _FLOAT, "j_m": _FLOAT, "j_h": _FLOAT,
              "k_t": _FLOAT, "ratio": _FLOAT},
    "human": {"alpha_b": _FLOAT, "alpha_k": _FLOAT, "beta_b": _FLOAT, "beta_k": _FLOAT},
    "automation": {"alpha_b": _FLOAT, "alpha_k": _FLOAT, "beta_autopilot": _FLOAT,
                   "beta_active_safety": _FLOAT, "intent_scale": _FLOAT},
    "ocp": {"np_horizon": _INT, "nc_horizon": _INT, "r_u": _FLOAT, "r_s": _FLOAT},
    "solver": {"zeta": _FLOAT, "h_fd": _FLOAT, "i_max": _INT, "gmres_tol": _FLOAT,
               "delta0": _FLOAT, "divergence_bound": _FLOAT, "init_max_iter": _INT,
               "u_dot_limit": _FLOAT, "slack_floor": _FLOAT, "mu_limit": _FLOAT,
               "control_limit": _FLOAT},
    "scenario": {"duration": _FLOAT, "ts": _FLOAT, "adaptive": _BOOL,
                 "truth_substeps": _INT, "tau_v": _FLOAT, "k_threshold": _FLOAT,
                 "z_a_fixed_b": _FLOAT, "z_a_fixed_k": _FLOAT, "gamma_limit": _FLOAT,
                 "gain_floor": _FLOAT,
                 "intent_t1": _FLOAT, "intent_t2": _FLOAT, "intent_t3": _FLOAT,
                 "intent_amplitude": _FLOAT},
    "output": {"csv": _STR, "metrics": _STR},
}

PRESET_NAMES = (
    "fig4_uncoop_autopilot",
    "fig5_uncoop_active",
    "fig6_coop_autopilot",
    "fig7_coop_active",
    "fig8_combined",
)

PRESET_SUMMARIES = {
    "fig4_uncoop_autopilot": "opposed intents, strong arm: automation yields authority",
    "fig5_uncoop_active": "opposed intents, weak arm: automation takes authority",
    "fig6_coop_autopilot": "aligned intents, strong arm: automation yields authority",
    "fig7_coop_active": "aligned intents, weak arm: automation takes authority",
    "fig8_combined": "all four interaction modes in one continuous run",
}


def _is_segment_key(key: str) -> bool:
    return key.startswith("segment") and key[len("segment"):].isdigit()


def _raw_sections(text: str, overrides: Iterable[str] = ()) -> Dict[str, Dict[str, str]]:
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ParseError(str(exc)) from exc
    raw: Dict[str, Dict[str, str]] = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ParseError(f"unknown section [{section}]")
        raw[section] = {}
        for key, value in parser.items(section):
            if not (key in _SCHEMA[section] or (section == "scenario" and _is_segment_key(key))):
                raise ParseError(f"unknown key {key!r} in section [{section}]")
            raw[section][key] = value
    for item in overrides:
        if "=" not in item:
            raise ParseError(f"override {item!r} is not of the form section.key=value")
        dotted, value = item.split("=", 1)
        if "." not in dotted:
            raise ParseError(f"override key {dotted!r} is not of the form section.key")
        section, key = dotted.split(".", 1)
        section = section.strip().lower()
        key = key.strip().lower()
        if section not in _SCHEMA:
            raise ParseError(f"unknown section [{section}] in override {item!r}")
        if not (key in _SCHEMA[section] or (section == "scenario" and _is_segment_key(key))):
            raise ParseError(f"unknown key {key!r} in override {item!r}")
        raw.setdefault(section, {})[key] = value.strip()
    return raw


def _typed(section: str, key: str, value: str):
    kind = _SCHEMA[section].get(key, _STR)
    try:
        if kind == _FLOAT:
            return float(value)
        if kind == _INT:
            return int(value)
        if kind == _BOOL:
            low = value.strip().lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {value!r}")
        return value
    except ValueError as exc:
        raise ParseError(f"[{section}] {key}: {exc}") from exc


def _parse_segment(key: str, value: str) -> Tuple[int, ScheduleSegment]:
    parts = [p.strip() for p in value.split(",")]
    if len(parts) != 5:
        raise ParseError(f"[scenario] {key}: expected 't_start, b_h, k_h, cooperation, "
                         f"authority', got {value!r}")
    try:
        t_start = float(parts[0])
        b_h = float(parts[1])
        k_h = float(parts[2])
    except ValueError as exc:
        raise ParseError(f"[scenario] {key}: {exc}") from exc
    index = int(key[len("segment"):])
    try:
        seg = ScheduleSegment(t_start, (b_h, k_h), parts[3], parts[4])
    except ValueError as exc:
        raise ValidationError(f"[scenario] {key}: {exc}") from exc
    return index, seg


def parse_config(text: str, overrides: Iterable[str] = ()) -> ScenarioConfig:
    """Build a ScenarioConfig from configuration text plus dotted overrides.

    Unspecified keys take the benchmark defaults; an empty document yields the
    default single-segment scenario (strong arm, cooperative, autopilot).
    """
    raw = _raw_sections(text, overrides)

    def get(section: str, key: str, default):
        if section in raw and key in raw[section]:
            return _typed(section, key, raw[section][key])
        return default

    try:
        params = MechanicalParams(
            j_sw=get("plant", "j_sw", 1e-2),
            j_s=get("plant", "j_s", 1e-2),
            j_m=get("plant", "j_m", 1e-3),
            j_h=get("plant", "j_h", 1e-3),
            k_t=get("plant", "k_t", 1000.0),
            ratio=get("plant", "ratio", 1.0),
            alpha_bh=get("human", "alpha_b", -1.0),
            alpha_kh=get("human", "alpha_k", -1.0),
            beta_bh=get("human", "beta_b", 1.0),
            beta_kh=get("human", "beta_k", 1.0),
            alpha_ba=get("automation", "alpha_b", -1.0),
            alpha_ka=get("automation", "alpha_k", -1.0),
        )
        intent = agents.IntentProfile(
            t1=get("scenario", "intent_t1", 1.0),
            t2=get("scenario", "intent_t2", 5.0),
            t3=get("scenario", "intent_t3", 2.0),
            w_amp=get("scenario", "intent_amplitude", 1.0),
        )
        ts = get("scenario", "ts", 0.01)
        ocp = OcpSettings(
            np_horizon=get("ocp", "np_horizon", 10),
            nc_horizon=get("ocp", "nc_horizon", 10),
            ts=ts,
            r_u=get("ocp", "r_u", 1e-3),
            r_s=get("ocp", "r_s", 1e-2),
        )
        solver = SolverSettings(
            zeta=get("solver", "zeta", 100.0),
            h_fd=get("solver", "h_fd", 1e-6),
            i_max=get("solver", "i_max", 12),
            gmres_tol=get("solver", "gmres_tol", 1e-6),
            delta0=get("solver", "delta0", 0.05),
            dt=ts,
            divergence_bound=get("solver", "divergence_bound", 1e4),
            init_max_iter=get("solver", "init_max_iter", 100),
            u_dot_limit=get("solver", "u_dot_limit", 100.0),
            slack_floor=get("solver", "slack_floor", 0.03),
            mu_limit=get("solver", "mu_limit", 1e3),
            control_limit=get("solver", "control_limit", 25.0),
        )

        segments = []
        for key, value in raw.get("scenario", {}).items():
            if _is_segment_key(key):
                segments.append(_parse_segment(key, value))
        segments.sort(key=lambda pair: pair[0])
        schedule = tuple(seg for _, seg in segments) or (
            ScheduleSegment(0.0, (0.5, 1.0), agents.COOPERATIVE, agents.AUTOPILOT),)

        z_a_b = get("scenario", "z_a_fixed_b", None)
        z_a_k = get("scenario", "z_a_fixed_k", None)
        if (z_a_b is None) != (z_a_k is None):
            raise ValidationError("z_a_fixed_b and z_a_fixed_k must be given together")
        z_a_fixed = (z_a_b, z_a_k) if z_a_b is not None else None

        return ScenarioConfig(
            plant=params,
            intent=intent,
            schedule=schedule,
            adaptive=get("scenario", "adaptive", True),
            z_a_fixed=z_a_fixed,
            duration=get("scenario", "duration", 15.0),
            ts=ts,
            ocp=ocp,
            solver=solver,
            truth_substeps=get("scenario", "truth_substeps", 10),
            automation_intent_scale=get("automation", "intent_scale", 0.9),
            tau_v=get("scenario", "tau_v", 0.0),
            k_threshold=get("scenario", "k_threshold", 0.5),
            beta_autopilot=get("automation", "beta_autopilot", 0.1),
            beta_active_safety=get("automation", "beta_active_safety", 1.0),
            gamma_limit=get("scenario", "gamma_limit", 1000.0),
            gain_floor=get("scenario", "gain_floor", 1e-3),
        )
    except (ParseError, ValidationError):
        raise
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc


def output_paths(text: str, overrides: Iterable[str] = ()) -> Dict[str, str]:
    """The [output] section (csv/metrics default paths), possibly empty."""
    raw = _raw_sections(text, overrides)
    return dict(raw.get("output", {}))


def serialize_config(cfg: ScenarioConfig) -> str:
    """Canonical text for a configuration; parses back to an equal value."""
    p = cfg.plant
    lines = [
        "[plant]",
        f"j_sw = {p.j_sw!r}",
        f"j_s = {p.j_s!r}",
        f"j_m = {p.j_m!r}",
        f"j_h = {p.j_h!r}",
        f"k_t = {p.k_t!r}",
        f"ratio = {p.ratio!r}",
        "",
        "[human]",
        f"alpha_b = {p.alpha_bh!r}",
        f"alpha_k = {p.alpha_kh!r}",
        f"beta_b = {p.beta_bh!r}",
        f"beta_k = {p.beta_kh!r}",
        "",
        "[automation]",
        f"alpha_b = {p.alpha_ba!r}",
        f"alpha_k = {p.alpha_ka!r}",
        f"beta_autopilot = {cfg.beta_autopilot!r}",
        f"beta_active_safety = {cfg.beta_active_safety!r}",
        f"intent_scale = {cfg.automation_intent_scale!r}",
        "",
        "[ocp]",
        f"np_horizon = {cfg.ocp.np_horizon}",
        f"nc_horizon = {cfg.ocp.nc_horizon}",
        f"r_u = {cfg.ocp.r_u!r}",
        f"r_s = {cfg.ocp.r_s!r}",
        "",
        "[solver]",
        f"zeta = {cfg.solver.zeta!r}",
        f"h_fd = {cfg.solver.h_fd!r}",
        f"i_max = {cfg.solver.i_max}",
        f"gmres_tol = {cfg.solver.gmres_tol!r}",
        f"delta0 = {cfg.solver.delta0!r}",
        f"divergence_bound = {cfg.solver.divergence_bound!r}",
        f"init_max_iter = {cfg.solver.init_max_iter}",
        f"u_dot_limit = {cfg.solver.u_dot_limit!r}",
        f"slack_floor = {cfg.solver.slack_floor!r}",
        f"mu_limit = {cfg.solver.mu_limit!r}",
        f"control_limit = {cfg.solver.control_limit!r}",
        "",
        "[scenario]",
        f"duration = {cfg.duration!r}",
        f"ts = {cfg.ts!r}",
        f"adaptive = {'true' if cfg.adaptive else 'false'}",
        f"truth_substeps = {cfg.truth_substeps}",
        f"tau_v = {cfg.tau_v!r}",
        f"k_threshold = {cfg.k_threshold!r}",
        f"gamma_limit = {cfg.gamma_limit!r}",
        f"gain_floor = {cfg.gain_floor!r}",
        f"intent_t1 = {cfg.intent.t1!r}",
        f"intent_t2 = {cfg.intent.t2!r}",
        f"intent_t3 = {cfg.intent.t3!r}",
        f"intent_amplitude = {cfg.intent.w_amp!r}",
    ]
    if cfg.z_a_fixed is not None:
        lines.append(f"z_a_fixed_b = {cfg.z_a_fixed[0]!r}")
        lines.append(f"z_a_fixed_k = {cfg.z_a_fixed[1]!r}")
    for i, seg in enumerate(cfg.schedule, start=1):
        lines.append(f"segment{i} = {seg.t_start!r}, {seg.z_h_target[0]!r}, "
                     f"{seg.z_h_target[1]!r}, {seg.cooperation}, {seg.authority}")
    return "\n".join(lines) + "\n"


def preset_config(name: str) -> ScenarioConfig:
    """Programmatic definition of a named preset scenario."""
    weak = (0.1, 0.1)
    strong = (0.5, 1.0)
    if name == "fig4_uncoop_autopilot":
        schedule = (ScheduleSegment(0.0, strong, agents.UNCOOPERATIVE, agents.AUTOPILOT),)
        return ScenarioConfig(schedule=schedule)
    if name == "fig5_uncoop_active":
        schedule = (ScheduleSegment(0.0, weak, agents.UNCOOPERATIVE, agents.ACTIVE_SAFETY),)
        return ScenarioConfig(schedule=schedule)
    if name == "fig6_coop_autopilot":
        schedule = (ScheduleSegment(0.0, strong, agents.COOPERATIVE, agents.AUTOPILOT),)
        return ScenarioConfig(schedule=schedule)
    if name == "fig7_coop_active":
        schedule = (ScheduleSegment(0.0, weak, agents.COOPERATIVE, agents.ACTIVE_SAFETY),)
        return ScenarioConfig(schedule=schedule)
    if name == "fig8_combined":
        schedule = (
            ScheduleSegment(0.0, weak, agents.COOPERATIVE, agents.ACTIVE_SAFETY),
            ScheduleSegment(15.0, strong, agents.UNCOOPERATIVE, agents.AUTOPILOT),
            ScheduleSegment(30.0, weak, agents.UNCOOPERATIVE, agents.ACTIVE_SAFETY),
            ScheduleSegment(45.0, strong, agents.COOPERATIVE, agents.AUTOPILOT),
        )
        return ScenarioConfig(schedule=schedule, duration=60.0)
    raise ParseError(f"unknown preset {name!r}; known: {', '.join(PRESET_NAMES)}")


def preset_text(name: str) -> str:
    """The checked-in configuration text of a named preset."""
    if name not in PRESET_NAMES:
        raise ParseError(f"unknown preset {name!r}; known: {', '.join(PRESET_NAMES)}")
    return resources.files("hapticsteer").joinpath(f"presets/{name}.cfg").read_text()


def driver_alone_config(b_h: float, k_h: float) -> ScenarioConfig:
    """Benchmark configuration for the driver-alone tracking-error statistics.

    The automation contributes no motion goal (zero intent scale) but its
    back-drivable lower-level impedance stays physically in the loop at the
    light fixture value (0.1, 0.1); the published benchmark statistics are
    reproducible only with that passive load present.
    """
    schedule = (ScheduleSegment(0.0, (b_h, k_h), agents.COOPERATIVE, agents.AUTOPILOT),)
    return ScenarioConfig(schedule=schedule, adaptive=False, z_a_fixed=(0.1, 0.1),
                          automation_intent_scale=0.0)
