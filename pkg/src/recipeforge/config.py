"""YAML configuration with defaults and command-line overrides.

Precedence is command line > config file > built-in default.  Overrides
are given as dotted paths (``session.k_max``) so every file value can be
set from the command line.
"""

from __future__ import annotations

import copy
from pathlib import Path
from typing import Any

import yaml

from . import gateway
from .evaluation import SandboxConfig
from .metrics import MatchWeights
from .prompts import PromptConfig
from .repair import SessionConfig

DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "model": {"kind": "scripted_mock", "model_id": "mock", "endpoint": "", "api_key_env": None,
              "temperature": 0.0, "max_tokens": 4096, "timeout": 120.0, "max_concurrency": 4, "retries": 3,
              "script": [], "script_file": None},
    "embedder": None,
    "session": {"k_max": 5, "strategy": "similar", "count": 2, "metadata_mode": "raw", "distill_mode": "rule_based",
                "audit_feedback": False, "reretrieve": False, "oscillation_window": 4, "class_inherent": []},
    "weights": {"w_d": 0.6, "w_b": 0.4, "alpha": 0.6, "beta": 0.2, "gamma": 0.1, "lambda": 0.1},
    "prompt": {"context_chars": 120_000, "metadata_chars": 8_000, "condensed_fraction": 0.25, "log_chars": 8_000,
               "min_log_chars": 500, "template_dir": None},
    "sandbox": {"kind": "container"},
    "paths": {"knowledge_base": None, "corpus": None, "results": "results.jsonl", "artifacts": None,
              "cache": ".recipeforge-cache"},
    "bench": {"parallelism": 2, "sample": None, "configs": []},
}


def _merge(base: dict[str, Any], extra: dict[str, Any], where: str = "") -> dict[str, Any]:
    out = copy.deepcopy(base)
    for key, value in extra.items():
        if key not in out and where in ("", "session", "weights", "prompt", "paths", "bench"):
            raise ValueError(f"unknown configuration key {where + '.' if where else ''}{key}")
        if isinstance(out.get(key), dict) and isinstance(value, dict) and key != "sandbox":
            out[key] = _merge(out[key], value, key)
        elif key == "sandbox" and isinstance(value, dict):
            out[key] = {**out[key], **value}
        else:
            out[key] = value
    return out


def load_config(path: str | Path | None = None) -> dict[str, Any]:
    cfg = copy.deepcopy(DEFAULTS)
    if path is None:
        return cfg
    p = Path(path)
    data = yaml.safe_load(p.read_text()) or {}
    if not isinstance(data, dict):
        raise ValueError(f"{p}: top level must be a mapping")
    cfg = _merge(cfg, data)
    cfg["_base_dir"] = str(p.parent.resolve())
    return cfg


def apply_overrides(cfg: dict[str, Any], overrides: dict[str, Any]) -> dict[str, Any]:
    """Set dotted keys; ``None`` values mean "not given" and are skipped."""
    out = copy.deepcopy(cfg)
    for dotted, value in overrides.items():
        if value is None:
            continue
        node = out
        *parents, leaf = dotted.split(".")
        for part in parents:
            if node.get(part) is None:
                node[part] = {}
            node = node[part]
        node[leaf] = value
    return out


def _resolve(cfg: dict[str, Any], value: str | None) -> str | None:
    if value is None:
        return None
    p = Path(value)
    if p.is_absolute() or "_base_dir" not in cfg:
        return str(p)
    return str(Path(cfg["_base_dir"]) / p)


def path_setting(cfg: dict[str, Any], key: str) -> str | None:
    """A ``paths`` entry, relative paths taken from the config file's directory."""
    return _resolve(cfg, cfg["paths"].get(key))


def load_script(path: str | Path) -> list[dict[str, Any]]:
    """A model script: a YAML list of ``{match: regex, responses: [text, ...]}``."""
    data = yaml.safe_load(Path(path).read_text())
    if isinstance(data, dict):
        data = data.get("script", [])
    if not isinstance(data, list):
        raise ValueError(f"{path}: a script is a list of rules")
    return data


def model_handle(cfg: dict[str, Any], section: str = "model") -> gateway.ModelHandle | None:
    spec = cfg.get(section)
    if not spec:
        return None
    spec = dict(spec)
    script_file = spec.pop("script_file", None)
    if script_file:
        spec["script"] = list(spec.get("script") or []) + load_script(_resolve(cfg, script_file))
    return gateway.handle_from_config(spec)


def match_weights(cfg: dict[str, Any]) -> MatchWeights:
    w = cfg["weights"]
    return MatchWeights(w["alpha"], w["beta"], w["gamma"], w["lambda"])


def sandbox_config(cfg: dict[str, Any]) -> SandboxConfig:
    return SandboxConfig.from_dict(cfg.get("sandbox") or {})


def prompt_config(cfg: dict[str, Any]) -> PromptConfig:
    p = dict(cfg["prompt"])
    p["template_dir"] = _resolve(cfg, p.get("template_dir"))
    return PromptConfig(**p)


def session_config(cfg: dict[str, Any], variant: dict[str, Any] | None = None,
                   model: gateway.ModelHandle | None = None) -> SessionConfig:
    """Build a SessionConfig from the ``session`` section plus an optional per-run variant."""
    s = {**cfg["session"], **(variant or {})}
    handle = model if model is not None else model_handle(cfg)
    w = cfg["weights"]
    return SessionConfig(
        k_max=int(s["k_max"]), reference_strategy=s["strategy"], reference_count=int(s["count"]),
        metadata_mode=s["metadata_mode"], audit_feedback=bool(s["audit_feedback"]), model=handle,
        rng_seed=int(s.get("seed", cfg.get("seed", 0))), label=s.get("label", ""),
        distill_mode=s.get("distill_mode", "rule_based"), reretrieve=bool(s.get("reretrieve", False)),
        oscillation_window=int(s.get("oscillation_window", 4)), weights=match_weights(cfg),
        affinity_weights=(float(w["w_d"]), float(w["w_b"])), class_inherent=tuple(s.get("class_inherent") or ()),
        prompt=prompt_config(cfg), sandbox=sandbox_config(cfg), embedder=model_handle(cfg, "embedder"),
        artifact_dir=path_setting(cfg, "artifacts"),
    )


def bench_configs(cfg: dict[str, Any], model: gateway.ModelHandle | None = None) -> list[SessionConfig]:
    variants = cfg["bench"].get("configs") or [{}]
    return [session_config(cfg, v, model) for v in variants]
