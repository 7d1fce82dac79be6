"""INI-style configuration with environment overrides.

Sections are ``[engine]``, ``[workload]``, ``[profile]`` and
``[experiment]``. Keys are the field names of :class:`EngineConfig`,
:class:`WorkloadSpec` and :class:`ExperimentPlan`, plus a few flattened
nested fields::

    [engine]
    machine_count = 8
    queue_policy = EDF
    rho_data_only = 0.3

    [workload]
    total_tasks = 1500
    deadline_model = streaming
    startup_delay = 6

    [profile]
    ChangeCodec/h265 = 8.0

    [experiment]
    loads = 1000, 2500
    reps = 10

An environment variable ``TASKMERGE_<SECTION>_<KEY>`` (for example
``TASKMERGE_ENGINE_MACHINE_COUNT=4``) overrides the file.
"""

from __future__ import annotations

import configparser
import dataclasses
import os
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .engine import EngineConfig, MergePolicyMode
from .experiment import ExperimentPlan
from .model import OpType, SharingFactors
from .policy import QueuingPolicy
from .position import Heuristic, PositionMode
from .tracegen import DeadlineModel, ExecProfile, WorkloadSpec

ENV_PREFIX = "TASKMERGE_"
SECTIONS = ("engine", "workload", "profile", "experiment")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Settings:
    engine: EngineConfig = field(default_factory=EngineConfig)
    workload: WorkloadSpec = field(default_factory=WorkloadSpec)
    plan: ExperimentPlan = field(default_factory=ExperimentPlan)

    def as_sections(self) -> dict[str, dict[str, str]]:
        """Resolved settings in the same shape the file uses."""
        out = {"engine": {}, "workload": {}, "profile": {}, "experiment": {}}
        for f in dataclasses.fields(self.engine):
            v = getattr(self.engine, f.name)
            if f.name == "sharing":
                out["engine"]["rho_data_and_operation"] = repr(v.data_and_operation)
                out["engine"]["rho_data_only"] = repr(v.data_only)
            else:
                out["engine"][f.name] = _show(v)
        for f in dataclasses.fields(self.workload):
            v = getattr(self.workload, f.name)
            if f.name == "profile":
                for op, p, mu in v.means:
                    out["profile"][f"{op.value}/{p}"] = repr(mu)
            elif f.name == "deadlines":
                out["workload"]["deadline_model"] = v.kind
                out["workload"]["startup_delay"] = repr(v.startup_delay)
                out["workload"]["slack_factor"] = repr(v.slack_factor)
            else:
                out["workload"][f.name] = _show(v)
        for f in dataclasses.fields(self.plan):
            out["experiment"][f.name] = _show(getattr(self.plan, f.name))
        return out


def _show(v: Any) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "on" if v else "off"
    if isinstance(v, (tuple, list)):
        return ", ".join(_show(x) for x in v)
    if hasattr(v, "value"):
        return str(v.value)
    if isinstance(v, float):
        return repr(v)
    return str(v)


_BOOL = {"1": True, "true": True, "yes": True, "on": True,
         "0": False, "false": False, "no": False, "off": False}


def parse_bool(text: str) -> bool:
    try:
        return _BOOL[text.strip().lower()]
    except KeyError:
        raise ValueError(f"expected on/off, got {text!r}") from None


def _scalar(kind, text: str):
    text = text.strip()
    if kind is bool:
        return parse_bool(text)
    if kind is int:
        return int(text)
    if kind is float:
        return float(text)
    if kind is str:
        return text
    if kind is QueuingPolicy:
        return QueuingPolicy.parse(text)
    if kind is MergePolicyMode:
        return MergePolicyMode.parse(text)
    if kind is PositionMode:
        return PositionMode(text.lower())
    if kind is Heuristic:
        return Heuristic(text.lower())
    raise TypeError(f"unsupported field type {kind!r}")


def _convert(hint, text: str):
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)
    if origin is typing.Union or (origin is not None and type(None) in args):
        inner = [a for a in args if a is not type(None)]
        if text.strip().lower() in ("none", ""):
            return None
        return _convert(inner[0], text)
    if origin is tuple:
        items = [x for x in text.replace(";", ",").split(",") if x.strip()]
        return tuple(_scalar(args[0], x) for x in items)
    return _scalar(hint, text)


def _apply(obj, values: Mapping[str, str], section: str, special=None):
    hints = typing.get_type_hints(type(obj))
    names = {f.name for f in dataclasses.fields(obj)}
    changes = {}
    for key, text in values.items():
        if special and key in special:
            continue
        if key not in names or key in ("sharing", "profile", "deadlines"):
            raise ConfigError(f"[{section}] unknown key {key!r}")
        try:
            changes[key] = _convert(hints[key], text)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"[{section}] {key}: {exc}") from None
    try:
        return dataclasses.replace(obj, **changes)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"[{section}] {exc}") from None


def _read_sections(path: str | Path | None, text: str | None) -> dict[str, dict[str, str]]:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keep profile keys as written
    try:
        if text is not None:
            parser.read_string(text)
        elif path is not None:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(str(exc).splitlines()[0]) from None
    out: dict[str, dict[str, str]] = {s: {} for s in SECTIONS}
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        for k, v in parser.items(section):
            out[section][k if section == "profile" else k.lower()] = v
    return out


def _env_overrides(sections: dict[str, dict[str, str]], env: Mapping[str, str]) -> None:
    for name, value in env.items():
        if not name.startswith(ENV_PREFIX):
            continue
        rest = name[len(ENV_PREFIX):].lower()
        for section in ("engine", "workload", "experiment"):
            if rest.startswith(section + "_"):
                sections[section][rest[len(section) + 1:]] = value
                break


def load_settings(path: str | Path | None = None, text: str | None = None,
                  env: Mapping[str, str] | None = None) -> Settings:
    """Defaults, then the file (or ``text``), then ``TASKMERGE_*`` variables."""
    sections = _read_sections(path, text)
    _env_overrides(sections, os.environ if env is None else env)

    eng = sections["engine"]
    engine = _apply(EngineConfig(), eng, "engine",
                    special={"rho_data_and_operation", "rho_data_only"})
    if "rho_data_and_operation" in eng or "rho_data_only" in eng:
        try:
            sharing = SharingFactors(
                float(eng.get("rho_data_and_operation", engine.sharing.data_and_operation)),
                float(eng.get("rho_data_only", engine.sharing.data_only)))
        except ValueError as exc:
            raise ConfigError(f"[engine] {exc}") from None
        engine = engine.with_(sharing=sharing)

    wl = sections["workload"]
    deadline_keys = {"deadline_model", "startup_delay", "slack_factor"}
    workload = _apply(WorkloadSpec(), wl, "workload", special=deadline_keys)
    if deadline_keys & wl.keys():
        d = workload.deadlines
        try:
            deadlines = DeadlineModel(
                kind=wl.get("deadline_model", d.kind).strip(),
                startup_delay=float(wl.get("startup_delay", d.startup_delay)),
                segment_duration=workload.segment_duration,
                slack_factor=float(wl.get("slack_factor", d.slack_factor)))
        except ValueError as exc:
            raise ConfigError(f"[workload] {exc}") from None
        workload = dataclasses.replace(workload, deadlines=deadlines)
    if sections["profile"]:
        means = []
        for key, mu in sections["profile"].items():
            try:
                op_text, param = key.split("/", 1)
                means.append((OpType.parse(op_text), param.strip().lower(), float(mu)))
            except ValueError as exc:
                raise ConfigError(f"[profile] {key}: {exc}") from None
        try:
            workload = dataclasses.replace(workload, profile=ExecProfile(tuple(means)))
        except ValueError as exc:
            raise ConfigError(f"[profile] {exc}") from None
    try:
        workload.validate()
    except ValueError as exc:
        raise ConfigError(f"[workload] {exc}") from None

    plan = _apply(ExperimentPlan(), sections["experiment"], "experiment")
    return Settings(engine, workload, plan)
