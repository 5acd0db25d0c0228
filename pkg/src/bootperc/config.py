"""Run configuration: schema, defaults and normalisation."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import jsonschema

COMMANDS = ("simulate", "closure", "scan", "estimate-k", "slab", "waves", "verify")

_num_or_list = {"oneOf": [{"type": "number"}, {"type": "array", "items": {"type": "number"},
                                                "minItems": 1}]}
_int_or_list = {"oneOf": [{"type": "integer", "minimum": 1},
                          {"type": "array", "items": {"type": "integer", "minimum": 1},
                           "minItems": 1}]}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["command"],
    "properties": {
        "command": {"enum": list(COMMANDS)},
        "n": _int_or_list,
        "p": _num_or_list,
        "M": _num_or_list,
        "trials": {"type": "integer", "minimum": 1},
        "master_seed": {"type": "integer", "minimum": 0, "maximum": 2**63 - 1},
        "tolerance": {"type": "number", "exclusiveMinimum": 0, "maximum": 0.5},
        "K_max": {"type": ["integer", "null"], "minimum": 2},
        "n_max": {"type": "integer", "minimum": 1},
        "wave_mode": {"enum": ["literal", "ring"]},
        "scale": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "B": {"type": "number"},
                "A_const": {"type": "number"},
                "sigma": {"type": "integer"},
                "c_slow": {"type": "number"},
                "p0": {"type": "number"},
                "strict": {"type": "boolean"},
            },
        },
        "out": {"type": "string"},
        "resume": {"type": "boolean"},
        "threads": {"type": "integer", "minimum": 0},
    },
}

# per-command defaults; keys absent here are not used by the command
DEFAULTS = {
    "simulate": {"n": [64], "p": [0.3], "trials": 10},
    "scan": {"n": [256, 512, 1024], "p": [0.25, 0.3, 0.35], "trials": 500},
    "closure": {"n_max": 64, "trials": 1000},
    "estimate-k": {"p": [0.12], "trials": 2000, "tolerance": 0.05, "K_max": None},
    "slab": {"p": [0.08], "M": [30, 40, 50, 60], "trials": 50},
    "waves": {"trials": 500, "wave_mode": "literal"},
    "verify": {"trials": 100},
}
COMMON = {"master_seed": 0, "scale": {}, "out": "bootperc-out", "resume": False, "threads": 1}


class ConfigError(ValueError):
    """Invalid configuration; ``details`` is machine readable."""

    def __init__(self, message: str, details: dict | None = None):
        super().__init__(message)
        self.details = details or {}


def _listify(v):
    return list(v) if isinstance(v, (list, tuple)) else [v]


def normalize(raw: dict) -> dict:
    """Validate ``raw`` and return it with defaults filled in and sweep
    fields turned into lists.  Keys the command does not use are dropped."""
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as e:
        path = "/".join(str(x) for x in e.absolute_path)
        raise ConfigError(f"invalid config at '{path}': {e.message}",
                          {"path": path, "message": e.message}) from None
    cmd = raw["command"]
    out = {"command": cmd}
    for key, default in {**DEFAULTS[cmd], **COMMON}.items():
        out[key] = raw.get(key, default)
    for key in ("n", "p", "M"):
        if key in out:
            out[key] = _listify(out[key])
    for key in ("p",):
        for v in out.get(key, []):
            if not 0 <= v <= 1:
                raise ConfigError(f"p must lie in [0, 1], got {v}", {"path": "p", "value": v})
    out["scale"] = dict(sorted(out["scale"].items()))
    return out


@dataclass(frozen=True)
class RunConfig:
    command: str
    master_seed: int = 0
    trials: int = 1
    out: str = "bootperc-out"
    resume: bool = False
    threads: int = 1
    options: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        d = normalize(raw)
        common = {k: d.pop(k) for k in ("command", "master_seed", "trials", "out", "resume",
                                         "threads")}
        return cls(**common, options=d)

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file {path} not found", {"path": str(path)}) from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file {path} is not JSON: {e}", {"path": str(path)}) from None
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object", {"path": ""})
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        d = asdict(self)
        opts = d.pop("options")
        return dict(sorted({**d, **opts}.items()))

    def replace(self, **changes) -> "RunConfig":
        return RunConfig.from_dict({**self.to_dict(), **changes})

    def identity(self) -> dict:
        """The fields that determine the output; run-control flags excluded."""
        d = self.to_dict()
        for k in ("resume", "threads", "out"):
            d.pop(k)
        return d
