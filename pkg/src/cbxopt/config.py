"""Strict JSON config files.

A document selects the objective and mirrors :class:`~cbxopt.core.CbxConfig`;
``init``, ``termination`` and ``output`` are nested objects. Unknown keys are
rejected. Every error names the offending key and, where it can be located,
the line it appears on.

Example::

    {
      "objective": "ackley",
      "dimension": 2,
      "variant": "cbo",
      "alpha": 100,
      "noise": "anisotropic",
      "init": {"kind": "uniform_box", "lower": [-3, -3], "upper": [3, 3]},
      "termination": {"max_iterations": 500, "diameter_tol": 1e-8}
    }
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional, Tuple, Union

from .bench import NamedObjective, make_objective
from .core import CbxConfig, ConfigError, InitSpec, TerminationSpec

TOP_KEYS = {
    "objective", "dimension", "variant", "n_particles", "alpha", "lambda", "sigma", "dt", "noise",
    "batch_size", "kernel_width", "memory_drift", "memory_sigma", "cbs_mode", "seed",
    "init", "termination", "output",
}
INIT_KEYS = {"kind", "lower", "upper", "mean", "stddev"}
TERMINATION_KEYS = {"max_iterations", "max_evals", "diameter_tol", "consensus_stall"}
STALL_KEYS = {"window", "tol"}
OUTPUT_KEYS = {"trace", "report"}

# dataclass field -> document key
_FIELD_TO_KEY = {"lam": "lambda"}


@dataclass(frozen=True)
class OutputSpec:
    trace: Optional[str] = None
    report: Optional[str] = None


class _Doc:
    """Typed accessors over the raw JSON that raise keyed errors."""

    def __init__(self, text: str):
        self.text = text

    def line_of(self, key: str) -> Optional[int]:
        m = re.search(r'"%s"\s*:' % re.escape(key), self.text)
        if m is None:
            return None
        return self.text.count("\n", 0, m.start()) + 1

    def error(self, key: str, message: str) -> ConfigError:
        # a missing key has no line of its own; fall back to its parent
        line = None
        for part in reversed(key.split(".")):
            line = self.line_of(part)
            if line is not None:
                break
        return ConfigError(message, key=key, line=line)

    def check_keys(self, obj: Any, allowed: set, where: str) -> dict:
        if not isinstance(obj, dict):
            raise self.error(where or "document", f"'{where or 'document'}' must be a JSON object")
        for key in obj:
            if key not in allowed:
                full = f"{where}.{key}" if where else key
                raise self.error(full, f"unknown key '{full}'")
        return obj

    def integer(self, obj: dict, key: str, path: str, default=None, minimum=None):
        value = obj.get(key, default)
        if value is None:
            return None
        if isinstance(value, bool) or not isinstance(value, int):
            raise self.error(path, f"'{path}' must be an integer, got {value!r}")
        if minimum is not None and value < minimum:
            raise self.error(path, f"'{path}' must be >= {minimum}, got {value}")
        return value

    def number(self, obj: dict, key: str, path: str, default=None):
        value = obj.get(key, default)
        if value is None:
            return None
        if value in ("inf", "Infinity"):
            return math.inf
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise self.error(path, f"'{path}' must be a number, got {value!r}")
        return float(value)

    def string(self, obj: dict, key: str, path: str, default=None):
        value = obj.get(key, default)
        if value is None:
            return None
        if not isinstance(value, str):
            raise self.error(path, f"'{path}' must be a string, got {value!r}")
        return value

    def vector(self, obj: dict, key: str, path: str, d: int):
        value = obj.get(key)
        if value is None:
            return None
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return (float(value),) * d
        if not isinstance(value, list) or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in value):
            raise self.error(path, f"'{path}' must be a number or a list of numbers")
        if len(value) != d:
            raise self.error(path, f"'{path}' must have length {d}, got {len(value)}")
        return tuple(float(v) for v in value)


def _load_text(source: Union[str, Path]) -> str:
    if isinstance(source, Path):
        return source.read_text()
    if source.lstrip().startswith("{"):
        return source
    return Path(source).read_text()


def parse_config(source: Union[str, Path]) -> Tuple[CbxConfig, NamedObjective, OutputSpec]:
    """Parse and validate a config document given as a path or as JSON text.

    Raises :class:`ConfigError` for any content problem and ``OSError`` when
    the file cannot be read.
    """
    text = _load_text(source)
    doc = _Doc(text)
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", line=exc.lineno) from None
    doc.check_keys(raw, TOP_KEYS, "")

    for required in ("objective", "dimension"):
        if required not in raw:
            raise ConfigError(f"missing required key '{required}'", key=required)
    name = doc.string(raw, "objective", "objective")
    d = doc.integer(raw, "dimension", "dimension", minimum=1)
    try:
        objective = make_objective(name, d)
    except ConfigError as exc:
        raise doc.error(exc.key, str(exc)) from None

    init_raw = doc.check_keys(raw.get("init", {}), INIT_KEYS, "init")
    kind = doc.string(init_raw, "kind", "init.kind", "uniform_box")
    if kind == "uniform_box":
        for k in ("mean", "stddev"):
            if k in init_raw:
                raise doc.error(f"init.{k}", f"'init.{k}' does not apply to uniform_box")
        init = InitSpec(
            "uniform_box",
            lower=doc.vector(init_raw, "lower", "init.lower", d),
            upper=doc.vector(init_raw, "upper", "init.upper", d),
        )
    elif kind == "gaussian":
        for k in ("lower", "upper"):
            if k in init_raw:
                raise doc.error(f"init.{k}", f"'init.{k}' does not apply to gaussian")
        init = InitSpec(
            "gaussian",
            mean=doc.vector(init_raw, "mean", "init.mean", d),
            stddev=doc.number(init_raw, "stddev", "init.stddev", 1.0),
        )
    else:
        raise doc.error("init.kind", f"unknown init kind {kind!r}; expected uniform_box or gaussian")

    term_raw = doc.check_keys(raw.get("termination", {}), TERMINATION_KEYS, "termination")
    stall = term_raw.get("consensus_stall")
    if stall is not None:
        doc.check_keys(stall, STALL_KEYS, "termination.consensus_stall")
        for k in STALL_KEYS:
            if k not in stall:
                raise doc.error(f"termination.consensus_stall.{k}", f"missing key 'termination.consensus_stall.{k}'")
        stall = (
            doc.integer(stall, "window", "termination.consensus_stall.window", minimum=1),
            doc.number(stall, "tol", "termination.consensus_stall.tol"),
        )
    termination = TerminationSpec(
        max_iterations=doc.integer(term_raw, "max_iterations", "termination.max_iterations", 1000, minimum=0),
        max_evals=doc.integer(term_raw, "max_evals", "termination.max_evals", minimum=1),
        diameter_tol=doc.number(term_raw, "diameter_tol", "termination.diameter_tol"),
        consensus_stall=stall,
    )

    out_raw = doc.check_keys(raw.get("output", {}), OUTPUT_KEYS, "output")
    output = OutputSpec(
        trace=doc.string(out_raw, "trace", "output.trace"),
        report=doc.string(out_raw, "report", "output.report"),
    )

    kwargs = dict(
        dimension=d,
        variant=doc.string(raw, "variant", "variant", "cbo"),
        noise=doc.string(raw, "noise", "noise", "isotropic"),
        cbs_mode=doc.string(raw, "cbs_mode", "cbs_mode", "sampling"),
        n_particles=doc.integer(raw, "n_particles", "n_particles", 50),
        batch_size=doc.integer(raw, "batch_size", "batch_size"),
        seed=doc.integer(raw, "seed", "seed", 0),
        alpha=doc.number(raw, "alpha", "alpha", 1e4),
        lam=doc.number(raw, "lambda", "lambda", 1.0),
        sigma=doc.number(raw, "sigma", "sigma", 1.0),
        dt=doc.number(raw, "dt", "dt", 0.1),
        kernel_width=doc.number(raw, "kernel_width", "kernel_width", 1.0),
        memory_drift=doc.number(raw, "memory_drift", "memory_drift"),
        memory_sigma=doc.number(raw, "memory_sigma", "memory_sigma"),
        init=init,
        termination=termination,
    )
    try:
        config = CbxConfig(**kwargs)
    except ConfigError as exc:
        key = _FIELD_TO_KEY.get(exc.key, exc.key) or "document"
        if key in TERMINATION_KEYS:
            key = f"termination.{key}"
        message = Exception.__str__(exc)
        raise doc.error(key, f"'{key}': {message}") from None
    return config, objective, output


def _num(x: float):
    # keep the echo strict JSON
    return x if math.isfinite(x) else str(x)


def effective_config(config: CbxConfig, objective: NamedObjective, output: Optional[OutputSpec] = None) -> dict:
    """Complete document, defaults included; re-parsing it yields the same config."""
    init = config.init
    if init.kind == "uniform_box":
        init_doc = {"kind": "uniform_box", "lower": list(init.lower), "upper": list(init.upper)}
    else:
        init_doc = {"kind": "gaussian", "mean": list(init.mean), "stddev": init.stddev}
    term = config.termination
    stall = None
    if term.consensus_stall is not None:
        stall = {"window": term.consensus_stall[0], "tol": term.consensus_stall[1]}
    output = output or OutputSpec()
    return {
        "objective": objective.name,
        "dimension": config.dimension,
        "variant": config.variant,
        "n_particles": config.n_particles,
        "alpha": config.alpha,
        "lambda": config.lam,
        "sigma": config.sigma,
        "dt": config.dt,
        "noise": config.noise,
        "batch_size": config.batch_size,
        "kernel_width": _num(config.kernel_width),
        "memory_drift": config.memory_drift,
        "memory_sigma": config.memory_sigma,
        "cbs_mode": config.cbs_mode,
        "seed": config.seed,
        "init": init_doc,
        "termination": {
            "max_iterations": term.max_iterations,
            "max_evals": term.max_evals,
            "diameter_tol": term.diameter_tol,
            "consensus_stall": stall,
        },
        "output": {"trace": output.trace, "report": output.report},
    }
