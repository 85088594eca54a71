"""Key-value configuration files for the command line.

The format is INI (read with :mod:`configparser`).  Sections and keys::

    [scenario]      any ScenarioConfig field, e.g. n = 100, snr = 5
    [grid]          comma-separated values overriding a scenario field,
                    e.g. n = 50, 100 (the Cartesian product is run)
    [runner]        methods (comma-separated), time_limit, node_limit,
                    gap_tol, bound_mode, n_starts, n_keep, threads
    [tuning]        method, folds, seed, alpha, kn_start, expected_p0,
                    kp_grid and lambda_grid (comma-separated; "inf" allowed)

Unknown sections or keys and out-of-range values raise
:class:`~sfsod.exceptions.InvalidConfig` naming ``section.key``.
"""

from __future__ import annotations

import configparser
import itertools
import typing
from dataclasses import fields, replace

from .bench import RunnerConfig, ScenarioConfig
from .exceptions import InvalidConfig
from .tuning import TuningPlan

SECTIONS = ("scenario", "grid", "runner", "tuning")


def _convert(text: str, kind, where: str):
    text = text.strip()
    try:
        if kind is bool:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        return text
    except ValueError:
        raise InvalidConfig(where, f"cannot read {text!r} as {kind.__name__}") from None


def _field_kinds(cls) -> dict:
    hints = typing.get_type_hints(cls)
    kinds = {}
    for f in fields(cls):
        h = hints[f.name]
        args = [a for a in typing.get_args(h) if a is not type(None)]
        kinds[f.name] = args[0] if args else h
    return kinds


def _list(text):
    return [t.strip() for t in text.split(",") if t.strip()]


def read_config(path) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise InvalidConfig("file", str(exc).replace("\n", " ")) from None
    for sec in parser.sections():
        if sec not in SECTIONS:
            raise InvalidConfig(sec, f"unknown section; expected one of {SECTIONS}")
    return parser


def _build(cls, section, parser, skip=()):
    kinds = _field_kinds(cls)
    values = {}
    if parser is not None and parser.has_section(section):
        for key, text in parser.items(section):
            where = f"{section}.{key}"
            if key not in kinds or key in skip:
                raise InvalidConfig(where, "unknown key")
            kind = kinds[key]
            if kind is tuple:
                values[key] = tuple(_list(text))
            elif text.strip().lower() == "none":
                values[key] = None
            else:
                values[key] = _convert(text, kind, where)
    return values


def scenarios_from(parser) -> list:
    """Scenario grid described by ``[scenario]`` and ``[grid]``."""
    base = ScenarioConfig(**_build(ScenarioConfig, "scenario", parser))
    kinds = _field_kinds(ScenarioConfig)
    axes = []
    if parser.has_section("grid"):
        for key, text in parser.items("grid"):
            where = f"grid.{key}"
            if key not in kinds:
                raise InvalidConfig(where, "unknown scenario field")
            vals = [_convert(v, kinds[key], where) for v in _list(text)]
            if not vals:
                raise InvalidConfig(where, "needs at least one value")
            axes.append((key, vals))
    out = []
    for combo in itertools.product(*[v for _, v in axes]):
        out.append(replace(base, **{k: v for (k, _), v in zip(axes, combo)}))
    return out


def runner_from(parser, threads=None) -> RunnerConfig:
    values = _build(RunnerConfig, "runner", parser)
    if "methods" in values:
        values["methods"] = tuple(values["methods"])
    if threads is not None:
        values["threads"] = threads
    return RunnerConfig(**values)


def plan_from(parser, **overrides) -> TuningPlan:
    values = _build(TuningPlan, "tuning", parser, skip=("fit_config",))
    for key in ("kp_grid", "lambda_grid"):
        if key in values:
            kind = int if key == "kp_grid" else float
            values[key] = tuple(_convert(v, kind, f"tuning.{key}") for v in values[key])
    values.update({k: v for k, v in overrides.items() if v is not None})
    return TuningPlan(**values)


def config_echo(parser) -> dict:
    """The file's content as a plain nested dictionary."""
    return {sec: dict(parser.items(sec)) for sec in parser.sections()}
