"""YAML experiment configuration with strict keys and collected validation errors."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import yaml

from ..baselines import BaselineConfig
from ..errors import ParseError, RetraceError, ValidationError
from ..pkpd import PKPDParams
from ..retrace import RetraceConfig
from ..simulator import GenSpec

EXPERIMENTS = ("table1", "noise_sweep", "pkpd", "single_run")
METHODS = ("retrace_mle", "retrace_ols", "retrace_em", "mst_mle", "dpt_mle")
PIPELINES = ("true_order", "retrace", "mst", "dpt")


@dataclass(frozen=True)
class InitConfig:
    """Initial law; ``mean``/``cov`` are scalars broadcast to every coordinate."""

    kind: str = "gaussian"
    mean: float = 5.0
    cov: float = 1.0


@dataclass(frozen=True)
class StudyConfig:
    n_subjects: int = 1000
    n_mc: int = 1024
    t_star: int = -1  # -1 means final step
    pipelines: tuple = PIPELINES


def _default_gen() -> GenSpec:
    return GenSpec(min_irreversibility=0.1)


@dataclass
class ExperimentConfig:
    experiment: str = "single_run"
    dims: int = 10
    n_traj: int = 500
    n_steps: int = 50
    dt: float = 0.01
    noise_sigmas: list = field(default_factory=lambda: [0.0])
    seeds: list = field(default_factory=lambda: [0])
    methods: list = field(default_factory=lambda: list(METHODS))
    corruption: str = "per_trajectory"
    output_dir: str = "results"
    init: InitConfig = field(default_factory=InitConfig)
    gen: GenSpec = field(default_factory=_default_gen)
    retrace: RetraceConfig = field(default_factory=RetraceConfig)
    baseline: BaselineConfig = field(default_factory=BaselineConfig)
    pkpd: PKPDParams = field(default_factory=PKPDParams)
    study: StudyConfig = field(default_factory=StudyConfig)


_SECTIONS = {"init": InitConfig, "gen": GenSpec, "retrace": RetraceConfig, "baseline": BaselineConfig,
             "pkpd": PKPDParams, "study": StudyConfig}
_TUPLE_FIELDS = {("pkpd", "diam_range"), ("study", "pipelines")}


def _node_lines(node: yaml.Node, prefix: str = "", out: dict | None = None) -> dict:
    """Map dotted key paths to 1-based source lines."""
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            path = f"{prefix}{k.value}"
            out[path] = k.start_mark.line + 1
            _node_lines(v, path + ".", out)
    return out


def _parse(text: str, source: str) -> tuple[dict, dict]:
    try:
        node = yaml.compose(text)
        raw = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        where = f"{source}:{mark.line + 1}:{mark.column + 1}" if mark else source
        raise ParseError(f"{where}: {exc.problem}") from None
    except yaml.YAMLError as exc:
        raise ParseError(f"{source}: {exc}") from None
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ParseError(f"{source}:1: top level must be a mapping")
    return raw, _node_lines(node) if node is not None else {}


def _check_unknown(raw: dict, lines: dict, source: str) -> None:
    top = {f.name for f in fields(ExperimentConfig)}
    for key, val in raw.items():
        if key not in top:
            raise ParseError(f"{source}:{lines.get(str(key), '?')}: unknown key '{key}'")
        if key in _SECTIONS:
            if not isinstance(val, dict):
                raise ParseError(f"{source}:{lines.get(key, '?')}: section '{key}' must be a mapping")
            allowed = {f.name for f in fields(_SECTIONS[key]) if f.init}
            for sub in val:
                if sub not in allowed:
                    path = f"{key}.{sub}"
                    raise ParseError(f"{source}:{lines.get(path, '?')}: unknown key '{path}'")


def _build_section(name: str, cls, values: dict, errors: list) -> Any:
    vals = dict(values)
    for f in fields(cls):
        if (name, f.name) in _TUPLE_FIELDS and f.name in vals and isinstance(vals[f.name], list):
            vals[f.name] = tuple(vals[f.name])
    default = getattr(ExperimentConfig(), name)
    try:
        return dataclasses.replace(default, **vals)
    except (RetraceError, ValueError, TypeError) as exc:
        errors.append(f"{name}: {exc}")
        return default


def _validate(cfg: ExperimentConfig) -> list[str]:
    errs = []
    if cfg.experiment not in EXPERIMENTS:
        errs.append(f"experiment: must be one of {', '.join(EXPERIMENTS)}")
    for name in ("dims", "n_traj", "n_steps"):
        v = getattr(cfg, name)
        if not isinstance(v, int) or isinstance(v, bool) or v < 1:
            errs.append(f"{name}: must be a positive integer")
    if isinstance(cfg.n_steps, int) and cfg.n_steps < 2:
        errs.append("n_steps: must be >= 2")
    if isinstance(cfg.n_traj, int) and cfg.n_traj < 2:
        errs.append("n_traj: must be >= 2")
    if not isinstance(cfg.dt, (int, float)) or not cfg.dt > 0:
        errs.append("dt: must be positive")
    if not isinstance(cfg.seeds, list) or not cfg.seeds:
        errs.append("seeds: must be a non-empty list")
    elif not all(isinstance(s, int) and s >= 0 for s in cfg.seeds):
        errs.append("seeds: entries must be non-negative integers")
    if not isinstance(cfg.methods, list) or not cfg.methods:
        errs.append("methods: must be a non-empty list")
    else:
        bad = [m for m in cfg.methods if m not in METHODS]
        if bad:
            errs.append(f"methods: unknown {bad}; allowed {list(METHODS)}")
    if not isinstance(cfg.noise_sigmas, list) or not cfg.noise_sigmas:
        errs.append("noise_sigmas: must be a non-empty list")
    elif not all(isinstance(s, (int, float)) and s >= 0 for s in cfg.noise_sigmas):
        errs.append("noise_sigmas: entries must be non-negative numbers")
    if cfg.corruption not in ("shared", "per_trajectory"):
        errs.append("corruption: must be 'shared' or 'per_trajectory'")
    if cfg.init.kind not in ("stationary", "gaussian"):
        errs.append("init.kind: must be 'stationary' or 'gaussian'")
    if not isinstance(cfg.init.cov, (int, float)) or not cfg.init.cov > 0:
        errs.append("init.cov: must be positive")
    if cfg.gen.basis not in ("axis", "random"):
        errs.append("gen.basis: must be 'axis' or 'random'")
    if not 0 < cfg.gen.eig_min <= cfg.gen.eig_max:
        errs.append("gen.eig_min/eig_max: need 0 < eig_min <= eig_max")
    s = cfg.study
    if not isinstance(s.n_subjects, int) or s.n_subjects < 4:
        errs.append("study.n_subjects: must be an integer >= 4")
    if not isinstance(s.n_mc, int) or s.n_mc < 2:
        errs.append("study.n_mc: must be an integer >= 2")
    if s.t_star != -1 and not 0 < s.t_star < cfg.pkpd.n_steps:
        errs.append("study.t_star: must be -1 or in 1..pkpd.n_steps-1")
    bad = [p for p in s.pipelines if p not in PIPELINES]
    if bad:
        errs.append(f"study.pipelines: unknown {bad}")
    return errs


def config_from_dict(raw: dict, source: str = "<dict>", lines: dict | None = None) -> ExperimentConfig:
    lines = lines or {}
    _check_unknown(raw, lines, source)
    errors: list[str] = []
    kw = {}
    for key, val in raw.items():
        if key in _SECTIONS:
            kw[key] = _build_section(key, _SECTIONS[key], val, errors)
        else:
            kw[key] = val
    if isinstance(kw.get("dt"), int):
        kw["dt"] = float(kw["dt"])
    cfg = ExperimentConfig(**kw)
    errors.extend(_validate(cfg))
    if errors:
        raise ValidationError("invalid configuration:\n  " + "\n  ".join(errors))
    return cfg


def loads_config(text: str, source: str = "<string>") -> ExperimentConfig:
    raw, lines = _parse(text, source)
    return config_from_dict(raw, source, lines)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    return loads_config(path.read_text(), str(path))


def config_to_dict(cfg: ExperimentConfig) -> dict:
    def plain(v):
        if isinstance(v, tuple):
            return [plain(x) for x in v]
        if isinstance(v, list):
            return [plain(x) for x in v]
        return v

    out: dict = {}
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if dataclasses.is_dataclass(v):
            out[f.name] = {g.name: plain(getattr(v, g.name)) for g in fields(v) if g.init}
        else:
            out[f.name] = plain(v)
    return out


def dumps_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False, default_flow_style=False)


def dump_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(dumps_config(cfg))
