"""Scenario configuration: one JSON document per scenario.

Structure is checked against a JSON schema that rejects unknown keys; the
remaining cross-field rules (model vs. initial counts, sampler vs.
observation model) are checked afterwards.  Every error names the offending
field as a dotted path.
"""

import copy
import json
from dataclasses import dataclass
from importlib import resources

import jsonschema

from .exceptions import ConfigError
from .models import make_spec

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_INT1 = {"type": "integer", "minimum": 1}
_INT0 = {"type": "integer", "minimum": 0}
_VEC = {"type": "array", "items": _NUM, "minItems": 1}
_NAMES = {"type": "array", "items": {"enum": ["beta", "gamma", "alpha", "p_obs"]},
          "minItems": 1, "uniqueItems": True}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


SCHEMA = _obj({
    "id": {"type": "string"},
    "description": {"type": "string"},
    "model": {"enum": ["sir", "seir"]},
    "population": _INT1,
    "init": {"type": "array", "items": _INT0},
    "true_params": _obj({"beta": _POS, "gamma": _POS, "alpha": _POS}),
    "hidden": {"enum": ["deterministic", "gillespie"]},
    "grid": _obj({"first": {"type": "integer"}, "last": {"type": "integer"}}, ["first", "last"]),
    "obs": _obj({
        "kind": {"enum": ["gaussian", "binomial"]},
        "n_ratio": {"type": "number", "minimum": 0},
        "variance_floor": _POS,
        "p_obs": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
    }, ["kind"]),
    "truncate": _INT1,
    "sampler": _obj({
        "kind": {"enum": ["pmmh", "abc"]},
        "params": _NAMES,
        "fixed": _obj({"beta": _POS, "gamma": _POS, "alpha": _POS}),
        "theta0": _VEC,
        "n_steps": _INT1,
        "n_chains": _INT1,
        "n_particles": _INT1,
        "burn": _INT0,
        "thin": _INT1,
        "pilot": _obj({
            "enabled": {"type": "boolean"},
            "target_rate": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
            "n_steps": _INT1,
            "window": _INT1,
            "max_adjust": _INT1,
            "on_failure": {"enum": ["raise", "continue"]},
        }),
        "adaptive": _obj({"t0": _INT1, "epsilon": _POS}),
        "h": {"type": "number", "minimum": 0},
        "sigma": {"type": "array", "items": _VEC},
        "prior_upper": _VEC,
        "epsilon": _NUM,
        "n_accept": _INT1,
        "lower": _VEC,
        "upper": _VEC,
        "max_attempts": _INT1,
    }, ["kind", "params"]),
    "bands": _obj({"n_draws": {"type": "integer", "minimum": 100}}),
    "sweep": _obj({
        "path": {"enum": ["obs.n_ratio", "obs.p_obs", "truncate"]},
        "values": {"type": "array", "items": _NUM, "minItems": 1},
    }, ["path", "values"]),
    "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
}, ["model", "population", "init", "grid", "obs", "sampler", "seed"])


def _path(parts):
    return ".".join(str(p) for p in parts) or "<root>"


@dataclass(frozen=True)
class ScenarioConfig:
    """Validated scenario; ``raw`` is the JSON document as loaded."""

    raw: dict

    def __getattr__(self, name):
        try:
            return self.__dict__["raw"][name]
        except KeyError:
            raise AttributeError(name) from None

    @property
    def scenario_id(self):
        return self.raw.get("id", "scenario")

    @property
    def sampler(self):
        return self.raw["sampler"]

    @property
    def spec(self):
        return make_spec(self.raw["model"], self.raw["population"])

    def get(self, key, default=None):
        return self.raw.get(key, default)

    def variants(self):
        """``(label, config)`` pairs: one per sweep value, or the scenario itself."""
        sweep = self.raw.get("sweep")
        if sweep is None:
            return [(None, self)]
        out = []
        for v in sweep["values"]:
            raw = copy.deepcopy(self.raw)
            del raw["sweep"]
            head, _, leaf = sweep["path"].rpartition(".")
            target = raw[head] if head else raw
            target[leaf] = int(v) if leaf == "truncate" else v
            out.append((f"{leaf}={v:g}", validate(raw)))
        return out

    def with_seed(self, seed):
        raw = copy.deepcopy(self.raw)
        raw["seed"] = int(seed)
        return validate(raw)


def validate(raw):
    """Check a configuration document and return a :class:`ScenarioConfig`."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        if err.validator == "additionalProperties":
            extra = sorted(set(err.instance) - set(err.schema["properties"]))
            path = list(err.absolute_path) + extra[:1]
            raise ConfigError(_path(path), "unknown key")
        raise ConfigError(_path(err.absolute_path), err.message)
    _check_consistency(raw)
    return ScenarioConfig(raw)


def _check_consistency(raw):
    try:
        spec = make_spec(raw["model"], raw["population"])
    except ValueError as err:
        raise ConfigError("model", str(err)) from None
    if len(raw["init"]) != spec.n_compartments:
        raise ConfigError("init", f"{raw['model']} needs {spec.n_compartments} counts")
    if sum(raw["init"]) != raw["population"]:
        raise ConfigError("init", "counts must sum to population")
    if raw["grid"]["last"] <= raw["grid"]["first"]:
        raise ConfigError("grid.last", "must exceed grid.first")
    n_obs = raw["grid"]["last"] - raw["grid"]["first"]
    if raw.get("truncate", n_obs) > n_obs:
        raise ConfigError("truncate", f"at most {n_obs} observation times exist")

    needed = set(spec.required_params)
    truth = raw.get("true_params")
    if truth is not None and not needed <= set(truth):
        raise ConfigError("true_params", f"{raw['model']} needs {sorted(needed)}")

    obs = raw["obs"]
    if obs["kind"] == "gaussian":
        if "n_ratio" not in obs:
            raise ConfigError("obs.n_ratio", "required for gaussian observations")
        if "p_obs" in obs:
            raise ConfigError("obs.p_obs", "only applies to binomial observations")
    else:
        if "p_obs" not in obs:
            raise ConfigError("obs.p_obs", "required for binomial observations")
        for key in ("n_ratio", "variance_floor"):
            if key in obs:
                raise ConfigError(f"obs.{key}", "only applies to gaussian observations")

    s = raw["sampler"]
    names = s["params"]
    fixed = s.get("fixed", {})
    rates = needed - set(fixed)
    if not rates <= set(names):
        raise ConfigError("sampler.params", f"must include {sorted(rates)} or fix them")
    if "alpha" in names and raw["model"] != "seir":
        raise ConfigError("sampler.params", "alpha only exists in the seir model")
    if s["kind"] == "pmmh":
        for key in ("epsilon", "n_accept", "lower", "upper", "max_attempts"):
            if key in s:
                raise ConfigError(f"sampler.{key}", "only applies to the abc sampler")
        if "theta0" not in s:
            raise ConfigError("sampler.theta0", "required for pmmh")
        if len(s["theta0"]) != len(names):
            raise ConfigError("sampler.theta0", f"needs {len(names)} entries")
        if "p_obs" in names and obs["kind"] != "binomial":
            raise ConfigError("sampler.params", "p_obs can only be sampled with binomial obs")
        if "adaptive" in s:
            if "h" not in s:
                raise ConfigError("sampler.h", "adaptive mode needs a fixed h")
            if s.get("pilot", {}).get("enabled", False):
                raise ConfigError("sampler.pilot.enabled", "pilot and adaptive are exclusive")
        if "sigma" in s:
            sig = s["sigma"]
            if len(sig) != len(names) or any(len(r) != len(names) for r in sig):
                raise ConfigError("sampler.sigma", f"must be {len(names)}x{len(names)}")
        if "prior_upper" in s and len(s["prior_upper"]) != len(names):
            raise ConfigError("sampler.prior_upper", f"needs {len(names)} entries")
        rate = s.get("pilot", {}).get("target_rate")
        if rate is not None and not 0 <= rate[0] < rate[1] <= 1:
            raise ConfigError("sampler.pilot.target_rate", "need 0 <= low < high <= 1")
    else:
        for key in ("theta0", "n_chains", "n_particles", "pilot", "adaptive", "h", "sigma",
                    "burn", "thin", "n_steps", "prior_upper"):
            if key in s:
                raise ConfigError(f"sampler.{key}", "only applies to the pmmh sampler")
        if "p_obs" in names:
            raise ConfigError("sampler.params", "abc samples rate parameters only")
        for key in ("epsilon", "n_accept", "lower", "upper"):
            if key not in s:
                raise ConfigError(f"sampler.{key}", "required for abc")
        for key in ("lower", "upper"):
            if len(s[key]) != len(names):
                raise ConfigError(f"sampler.{key}", f"needs {len(names)} entries")
        if any(lo >= hi for lo, hi in zip(s["lower"], s["upper"])):
            raise ConfigError("sampler.upper", "each bound must exceed the lower one")
    sweep = raw.get("sweep")
    if sweep is not None and sweep["path"].startswith("obs."):
        leaf = sweep["path"].split(".")[1]
        if leaf not in obs:
            raise ConfigError("sweep.path", f"obs has no {leaf}")


def load_config(path):
    """Read and validate a scenario file."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as err:
        raise ConfigError("<root>", f"{path}: invalid JSON at line {err.lineno}: {err.msg}") from None
    return validate(raw)


def scenario_ids():
    files = resources.files("stochepi").joinpath("scenarios").iterdir()
    return sorted(f.name[:-5] for f in files if f.name.endswith(".json"))


def load_scenario(scenario_id):
    """Load one of the bundled scenarios by id."""
    ref = resources.files("stochepi").joinpath("scenarios", f"{scenario_id}.json")
    if not ref.is_file():
        raise ConfigError("id", f"unknown scenario {scenario_id!r}; "
                                f"available: {', '.join(scenario_ids())}")
    return validate(json.loads(ref.read_text(encoding="utf-8")))
