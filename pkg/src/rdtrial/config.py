"""Simulation config files: INI-style key/value sections.

Schema (version 1)::

    [run]
    replications = 10000
    base_seed = 20260823
    alpha = 0.05
    bootstrap_b = 1000
    methods = suissa, mh-test, mh-sato, mh-mgr, ge, liu, ye, boot, zhang, firth

    [grid]
    sample_sizes = 30, 60, 90, 120, 150
    deltas = 0, 0.15, 0.30
    beta_covs = log1, log1.5, log3
    control_rate = 0.2

``beta_covs`` entries are either ``logX`` (natural log of X) or a plain number
interpreted as the log-odds coefficient itself.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass

import numpy as np

from .harness import ScenarioSpec, make_scenario
from .methods import METHOD_NAMES

CONFIG_SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid or malformed simulation configuration."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass(frozen=True)
class SimConfig:
    grid: tuple[ScenarioSpec, ...]
    methods: tuple[str, ...]
    replications: int
    base_seed: int
    alpha: float
    bootstrap_b: int


def _parse_beta(token: str) -> float:
    token = token.strip()
    if token.startswith("log"):
        return float(np.log(float(token[3:])))
    return float(token)


def _split(raw: str) -> list[str]:
    return [t.strip() for t in raw.split(",") if t.strip()]


def load_config(path) -> SimConfig:
    parser = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        if line is None and getattr(exc, "errors", None):
            line = exc.errors[0][0]
        raise ConfigError(str(exc), line=line) from exc

    for section in ("run", "grid"):
        if not parser.has_section(section):
            raise ConfigError(f"missing [{section}] section")
    run, grid = parser["run"], parser["grid"]
    try:
        replications = int(run.get("replications", "0"))
        base_seed = int(run.get("base_seed", "0"))
        alpha = float(run.get("alpha", "0.05"))
        boot_b = int(run.get("bootstrap_b", "1000"))
        methods = tuple(_split(run.get("methods", ", ".join(METHOD_NAMES))))
        sizes = [int(t) for t in _split(grid.get("sample_sizes", ""))]
        deltas = [float(t) for t in _split(grid.get("deltas", ""))]
        betas = [_parse_beta(t) for t in _split(grid.get("beta_covs", ""))]
        p0 = float(grid.get("control_rate", "0.2"))
    except ValueError as exc:
        raise ConfigError(f"unparseable value: {exc}") from exc

    if replications < 1:
        raise ConfigError("replications must be at least 1")
    if not 0.0 < alpha < 1.0:
        raise ConfigError("alpha must lie in (0, 1)")
    for m in methods:
        if m not in METHOD_NAMES:
            raise ConfigError(f"unknown method {m!r}")
    if not methods:
        raise ConfigError("methods list is empty")
    if not (sizes and deltas and betas):
        raise ConfigError("grid needs sample_sizes, deltas, and beta_covs")

    scenarios = tuple(
        make_scenario(n, delta, beta, p0=p0)
        for delta in deltas for beta in betas for n in sizes
    )
    return SimConfig(grid=scenarios, methods=methods, replications=replications,
                     base_seed=base_seed, alpha=alpha, bootstrap_b=boot_b)
