"""Experiment configuration files.

Plain INI read with :mod:`configparser`. Every section and key is checked
against the schema below and anything unknown is an error, so a typo never
silently falls back to a default::

    [system]
    scheme = noma            ; noma | tdma
    pbar = 15                ; average power budget
    power_accounting = codeword   ; codeword | served

    [stream.1]               ; one section per user, numbered from 1
    lambda = 0.5
    r0 = 2
    weight = 0.5

    [channel]
    levels = 0.1, 1.0
    pmf = 0.2, 0.8           ; shared by all users, or pmf.1 = ..., pmf.2 = ...

    [solver]                 ; optional CO-SRP solver overrides
    [mdp]                    ; optional: delta_max, gamma, vi_tol, ...
    [sim]                    ; optional: horizon, warmup, seed, reps, ...
    [sweep]                  ; optional: parameter, from, to, steps
    [output]                 ; optional: dir
"""
from __future__ import annotations

import configparser
import dataclasses
import json
from dataclasses import dataclass, field
from typing import Any

from .cmdp import MdpConfig
from .cosrp import Scheme
from .errors import InvalidInputError
from .model import ChannelModel, PowerAccounting, StreamConfig
from .optimizer import SolverConfig
from .sim import SimConfig

SWEEP_PARAMETERS = ("pbar", "lambda", "weight_1")

_SOLVER_KEYS = {f.name: f.type for f in dataclasses.fields(SolverConfig)}
_MDP_KEYS = {f.name: f.type for f in dataclasses.fields(MdpConfig) if f.name != "power_accounting"}
_SIM_KEYS = {"horizon": "int", "warmup": "int", "seed": "int", "reps": "int",
             "hist_max": "int", "trace_slots": "int"}


@dataclass(frozen=True)
class SweepSpec:
    parameter: str
    start: float
    stop: float
    steps: int

    def __post_init__(self):
        if self.parameter not in SWEEP_PARAMETERS:
            raise InvalidInputError(f"sweep parameter must be one of {SWEEP_PARAMETERS}, got {self.parameter!r}")
        if self.steps < 2:
            raise InvalidInputError("a sweep needs at least 2 steps")
        if not self.start < self.stop:
            raise InvalidInputError("sweep needs from < to")

    def grid(self) -> list[float]:
        return [self.start + (self.stop - self.start) * k / (self.steps - 1) for k in range(self.steps)]


@dataclass
class ExperimentConfig:
    streams: tuple[StreamConfig, ...]
    channel: ChannelModel
    scheme: Scheme = Scheme.NOMA
    pbar: float = 1.0
    power_accounting: PowerAccounting = PowerAccounting.CODEWORD
    solver: SolverConfig = field(default_factory=SolverConfig)
    mdp: MdpConfig = field(default_factory=MdpConfig)
    sim: SimConfig = field(default_factory=lambda: SimConfig(horizon=100_000))
    sweep: SweepSpec | None = None
    out_dir: str | None = None

    def __post_init__(self):
        if self.channel.n_users != len(self.streams):
            raise InvalidInputError("channel and streams disagree on the number of users")
        if not self.pbar >= 0:
            raise InvalidInputError("pbar must be non-negative")

    def with_(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def resolved(self) -> dict[str, Any]:
        """Every effective setting, for provenance lines in output files."""
        def plain(obj):
            if isinstance(obj, (Scheme, PowerAccounting)):
                return obj.value
            if dataclasses.is_dataclass(obj):
                return {f.name: plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
            if isinstance(obj, (tuple, list)):
                return [plain(v) for v in obj]
            return obj
        return {
            "scheme": self.scheme.value,
            "pbar": self.pbar,
            "power_accounting": self.power_accounting.value,
            "streams": [plain(s) for s in self.streams],
            "channel": {"levels": list(self.channel.levels), "pmf": [list(r) for r in self.channel.pmf]},
            "solver": plain(self.solver),
            "mdp": plain(self.mdp),
            "sim": plain(self.sim),
            "sweep": plain(self.sweep),
        }

    def resolved_json(self) -> str:
        return json.dumps(self.resolved(), sort_keys=True, separators=(",", ":"))


def _floats(text: str, what: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.replace(",", " ").split())
    except ValueError:
        raise InvalidInputError(f"{what}: expected a list of numbers, got {text!r}") from None


def _number(section: str, key: str, text: str, kind):
    kind = getattr(kind, "__name__", str(kind))
    try:
        if "int" in kind and "float" not in kind:
            return int(text)
        if "bool" in kind:
            return configparser.ConfigParser.BOOLEAN_STATES[text.lower()]
        if "None" in kind and text.strip().lower() == "none":
            return None
        return float(text)
    except (ValueError, KeyError):
        raise InvalidInputError(f"[{section}] {key}: cannot read {text!r} as {kind}") from None


def _check_keys(section: str, keys, allowed):
    unknown = sorted(set(keys) - set(allowed))
    if unknown:
        raise InvalidInputError(f"[{section}] unknown key(s): {', '.join(unknown)}")


def _enum(enum, section, key, text):
    try:
        return enum(text.strip().lower())
    except ValueError:
        choices = "|".join(e.value for e in enum)
        raise InvalidInputError(f"[{section}] {key}: expected {choices}, got {text!r}") from None


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    parser.optionxform = str  # keys are case-sensitive
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise InvalidInputError(f"{source}: {exc}") from None

    known = {"system", "channel", "solver", "mdp", "sim", "sweep", "output"}
    stream_sections = []
    for name in parser.sections():
        if name.startswith("stream."):
            idx = name.split(".", 1)[1]
            if not idx.isdigit() or int(idx) < 1:
                raise InvalidInputError(f"stream sections are numbered from 1, got [{name}]")
            stream_sections.append((int(idx), name))
        elif name not in known:
            raise InvalidInputError(f"unknown section [{name}]")
    stream_sections.sort()
    if not stream_sections:
        raise InvalidInputError("at least one [stream.N] section is required")
    if [i for i, _ in stream_sections] != list(range(1, len(stream_sections) + 1)):
        raise InvalidInputError("stream sections must be numbered 1..N without gaps")

    system = parser["system"] if parser.has_section("system") else {}
    _check_keys("system", system, {"scheme", "pbar", "power_accounting"})
    scheme = _enum(Scheme, "system", "scheme", system.get("scheme", "noma"))
    accounting = _enum(PowerAccounting, "system", "power_accounting", system.get("power_accounting", "codeword"))
    if "pbar" not in system:
        raise InvalidInputError("[system] pbar is required")
    pbar = _number("system", "pbar", system["pbar"], float)

    streams = []
    for _, name in stream_sections:
        sec = parser[name]
        _check_keys(name, sec, {"lambda", "r0", "weight"})
        for key in ("lambda", "r0"):
            if key not in sec:
                raise InvalidInputError(f"[{name}] {key} is required")
        streams.append(StreamConfig(
            lam=_number(name, "lambda", sec["lambda"], float),
            r0=_number(name, "r0", sec["r0"], float),
            weight=_number(name, "weight", sec.get("weight", "1"), float),
        ))
    n = len(streams)

    if not parser.has_section("channel"):
        raise InvalidInputError("[channel] section is required")
    chan = parser["channel"]
    _check_keys("channel", chan, {"levels", "pmf"} | {f"pmf.{i + 1}" for i in range(n)})
    if "levels" not in chan:
        raise InvalidInputError("[channel] levels is required")
    levels = _floats(chan["levels"], "[channel] levels")
    per_user = [k for k in chan if k.startswith("pmf.")]
    if "pmf" in chan and per_user:
        raise InvalidInputError("[channel] give either pmf or pmf.1..pmf.N, not both")
    if "pmf" in chan:
        model = ChannelModel.shared(levels, _floats(chan["pmf"], "[channel] pmf"), n)
    elif len(per_user) == n:
        model = ChannelModel(levels, tuple(_floats(chan[f"pmf.{i + 1}"], f"[channel] pmf.{i + 1}") for i in range(n)))
    else:
        raise InvalidInputError("[channel] needs pmf, or one pmf.i line per stream")

    solver = SolverConfig()
    if parser.has_section("solver"):
        sec = parser["solver"]
        _check_keys("solver", sec, _SOLVER_KEYS)
        solver = dataclasses.replace(solver, **{k: _number("solver", k, v, _SOLVER_KEYS[k]) for k, v in sec.items()})

    mdp_args = {"power_accounting": accounting}
    if parser.has_section("mdp"):
        sec = parser["mdp"]
        _check_keys("mdp", sec, _MDP_KEYS)
        mdp_args.update({k: _number("mdp", k, v, _MDP_KEYS[k]) for k, v in sec.items()})
    mdp = MdpConfig(**mdp_args)

    sim_args = {"horizon": 100_000, "power_accounting": accounting}
    if parser.has_section("sim"):
        sec = parser["sim"]
        _check_keys("sim", sec, _SIM_KEYS)
        for k, v in sec.items():
            sim_args["replications" if k == "reps" else k] = _number("sim", k, v, int)
    sim = SimConfig(**sim_args)

    sweep = None
    if parser.has_section("sweep"):
        sec = parser["sweep"]
        _check_keys("sweep", sec, {"parameter", "from", "to", "steps"})
        missing = {"parameter", "from", "to", "steps"} - set(sec)
        if missing:
            raise InvalidInputError(f"[sweep] missing {', '.join(sorted(missing))}")
        sweep = SweepSpec(sec["parameter"].strip(), _number("sweep", "from", sec["from"], float),
                          _number("sweep", "to", sec["to"], float), _number("sweep", "steps", sec["steps"], int))

    out_dir = None
    if parser.has_section("output"):
        sec = parser["output"]
        _check_keys("output", sec, {"dir"})
        out_dir = sec.get("dir")

    return ExperimentConfig(tuple(streams), model, scheme, pbar, accounting, solver, mdp, sim, sweep, out_dir)


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise InvalidInputError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, source=path)


def format_config(cfg: ExperimentConfig) -> str:
    """INI text that parses back to ``cfg`` (solver/mdp/sim defaults included)."""
    lines = ["[system]", f"scheme = {cfg.scheme.value}", f"pbar = {cfg.pbar!r}",
             f"power_accounting = {cfg.power_accounting.value}", ""]
    for i, s in enumerate(cfg.streams, start=1):
        lines += [f"[stream.{i}]", f"lambda = {s.lam!r}", f"r0 = {s.r0!r}", f"weight = {s.weight!r}", ""]
    lines += ["[channel]", "levels = " + ", ".join(repr(v) for v in cfg.channel.levels)]
    lines += [f"pmf.{i} = " + ", ".join(repr(q) for q in row) for i, row in enumerate(cfg.channel.pmf, start=1)]
    lines.append("")
    sim = cfg.sim
    lines += ["[sim]", f"horizon = {sim.horizon}", f"seed = {sim.seed}", f"reps = {sim.replications}"]
    if sim.warmup is not None:
        lines.append(f"warmup = {sim.warmup}")
    lines.append("")
    lines += ["[mdp]", f"delta_max = {cfg.mdp.delta_max}", f"gamma = {cfg.mdp.gamma!r}", ""]
    if cfg.sweep is not None:
        sw = cfg.sweep
        lines += ["[sweep]", f"parameter = {sw.parameter}", f"from = {sw.start!r}", f"to = {sw.stop!r}",
                  f"steps = {sw.steps}", ""]
    return "\n".join(lines)
