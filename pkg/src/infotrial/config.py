"""Experiment configuration files.

Configs are INI-style files with the sections ``[experiment]``, ``[trial]``,
``[policy]``, ``[hyper]``, ``[generator]`` and ``[replay]``.  Every section
and key is optional; unknown sections or keys are errors.  Lists are
comma-separated, a search box is written ``lo,hi; lo,hi``.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
from dataclasses import dataclass, field
from pathlib import Path

from infotrial.acquisition import Identity, RecruitmentPolicy, Step, Tanh
from infotrial.model import Hyperparameters
from infotrial.trial import GeneratorConfig, ReplayConfig, TrialConfig


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("invalid configuration:\n  " + "\n  ".join(problems))


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _floats(s: str) -> tuple[float, ...]:
    return tuple(float(v) for v in s.split(",") if v.strip())


def _strings(s: str) -> tuple[str, ...] | None:
    return tuple(v.strip() for v in s.split(",") if v.strip()) or None


def _box(s: str):
    if not s.strip():
        return None
    rows = []
    for part in s.split(";"):
        lo, hi = _floats(part)
        rows.append((lo, hi))
    return tuple(rows)


def _center(s: str):
    return "median" if s.strip() == "median" else float(s)


def _choice(*options):
    def parse(s: str) -> str:
        v = s.strip()
        if v not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {v!r}")
        return v

    return parse


SCHEMA = {
    "experiment": {
        "replicates": int,
        "jobs": int,
        "seed": int,
        "out_dir": str,
        "mode": _choice("act", "rct", "both"),
        "sweep_p0": _floats,
    },
    "trial": {
        "n_target": int,
        "horizon": float,
        "burn_in": int,
        "selective": _bool,
        "box": _box,
        "max_candidates": int,
    },
    "policy": {"kind": _choice("identity", "step", "tanh"), "p0": float, "beta0": float},
    "hyper": {"kappa0": float, "chi0": float, "alpha0_sq": float},
    "generator": {
        "beta_true": _floats,
        "lambda_true": float,
        "covariate_dist": _choice("uniform", "gaussian"),
        "covariate_sd": float,
        "n_features": int,
        "censor_prob": float,
        "arrival_rate": float,
        "k_arms": int,
        "features": _choice("interaction", "plain"),
    },
    "replay": {
        "n_target": int,
        "horizon": float,
        "burn_in": int,
        "covariates": _strings,
        "center": _center,
        "scale": float,
        "box": _box,
    },
}


@dataclass
class ExperimentSpec:
    trial: TrialConfig = field(default_factory=TrialConfig)
    replay: ReplayConfig = field(default_factory=ReplayConfig)
    replicates: int = 100
    jobs: int = 1
    seed: int = 0
    out_dir: str = "runs"
    mode: str = "both"
    sweep_p0: tuple[float, ...] = (0.33, 0.66, 0.90)

    def modes(self) -> list[str]:
        return ["act", "rct"] if self.mode == "both" else [self.mode]


def make_policy(kind: str, p0: float | None, beta0: float | None) -> RecruitmentPolicy:
    if kind == "identity":
        return Identity()
    if kind == "step":
        return Step(0.5 if p0 is None else p0)
    return Tanh(0.1 if beta0 is None else beta0, 0.5 if p0 is None else p0)


def parse_config(text: str, overrides: dict | None = None) -> ExperimentSpec:
    cp = configparser.ConfigParser(interpolation=None, default_section="__none__")
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([str(exc).replace("\n", " ")]) from None

    problems: list[str] = []
    values: dict[str, dict] = {s: {} for s in SCHEMA}
    for section in cp.sections():
        if section not in SCHEMA:
            problems.append(f"unknown section [{section}]")
            continue
        for key, raw in cp.items(section):
            parser = SCHEMA[section].get(key)
            if parser is None:
                problems.append(f"[{section}] unknown key '{key}'")
                continue
            try:
                values[section][key] = parser(raw)
            except ValueError as exc:
                problems.append(f"[{section}] {key}: {exc}")
    for key, v in (overrides or {}).items():
        if v is not None:
            values["experiment"][key] = v
    if problems:
        raise ConfigError(problems)

    def build(label, cls, **kw):
        try:
            return cls(**kw)
        except (ValueError, TypeError) as exc:
            problems.append(f"[{label}] {exc}")
            return None

    hyper = build("hyper", Hyperparameters, **values["hyper"])
    pol = dict(values["policy"])
    kind = pol.pop("kind", "step")
    policy = None
    try:
        policy = make_policy(kind, pol.get("p0"), pol.get("beta0"))
    except ValueError as exc:
        problems.append(f"[policy] {exc}")

    gen_kw = dict(values["generator"])
    gen_kw.setdefault("seed", values["experiment"].get("seed", 0))
    generator = build("generator", GeneratorConfig, **gen_kw)
    trial = replay = None
    if hyper is not None and policy is not None and generator is not None:
        trial = build("trial", TrialConfig, policy=policy, hyper=hyper, generator=generator, **values["trial"])
        replay = build("replay", ReplayConfig, policy=policy, hyper=hyper, seed=gen_kw["seed"], **values["replay"])
    exp = values["experiment"]
    for key in ("replicates", "jobs"):
        if key in exp and exp[key] < 1:
            problems.append(f"[experiment] {key} must be >= 1")
    if problems:
        raise ConfigError(problems)
    return ExperimentSpec(trial=trial, replay=replay, **exp)


def load_config(path, overrides: dict | None = None) -> ExperimentSpec:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError([f"cannot read config {path}: {exc.strerror}"]) from None
    return parse_config(text, overrides)


def _policy_items(policy) -> dict:
    if isinstance(policy, Identity):
        return {"kind": "identity"}
    if isinstance(policy, Step):
        return {"kind": "step", "p0": policy.p0}
    return {"kind": "tanh", "p0": policy.p0, "beta0": policy.beta0}


def _render(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple) and v and isinstance(v[0], tuple):
        return "; ".join(",".join(repr(float(a)) for a in row) for row in v)
    if isinstance(v, tuple):
        return ", ".join(repr(a) if isinstance(a, float) else str(a) for a in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def dump_config(spec: ExperimentSpec) -> str:
    """Fully resolved config, defaults filled in; parses back to ``spec``."""
    cp = configparser.ConfigParser(interpolation=None, default_section="__none__")
    cp["experiment"] = {k: _render(getattr(spec, k)) for k in SCHEMA["experiment"]}
    t = spec.trial
    cp["trial"] = {k: _render(getattr(t, k)) for k in SCHEMA["trial"]}
    cp["policy"] = {k: _render(v) for k, v in _policy_items(t.policy).items()}
    cp["hyper"] = {k: _render(v) for k, v in dataclasses.asdict(t.hyper).items()}
    cp["generator"] = {k: _render(getattr(t.generator, k)) for k in SCHEMA["generator"]}
    cp["replay"] = {k: _render(getattr(spec.replay, k)) for k in SCHEMA["replay"]}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()
