"""Experiment configuration: YAML load, validation, canonical round-trip.

One config file describes one experiment: a scenario payload (``hk``
dynamics ensemble, ``projected`` recursion, or ``walk`` oracle), the
ensemble settings, and nothing else.  Loading re-validates every module
invariant and reports all violations at once, each tagged with the
offending key.  ``dump_config(load_config(p))`` parses back to an
identical config, and the sha256 fingerprint of the canonical form is
stamped into every output file so mixed artifacts are detectable.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace

import yaml

from .model import InitialCondition, ModelConfig, validate_model_config
from .noise import NoiseSpec, validate_noise_spec
from .projected import MapSpec, ProjectedSystemSpec, validate_projected_spec
from .walks import SIMPLE_STEP, StretchedWalkSpec, WalkSpec, validate_walk_spec

SCENARIOS = ("hk", "projected", "walk")

WALK_KINDS = ("first_passage", "stretched", "recurrence")

DEFAULT_RUNS = 1000
DEFAULT_HORIZON = 100_000
DEFAULT_NOISE_FAMILY = "uniform_ball"


class ConfigError(ValueError):
    """Parse or validation failure; ``problems`` lists every violation."""

    def __init__(self, message: str, problems=(), kind: str = "validation"):
        super().__init__(message)
        self.problems = list(problems)
        self.kind = kind

    def report(self) -> str:
        lines = [str(self)]
        lines += [f"  - {p}" for p in self.problems]
        return "\n".join(lines)


@dataclass(frozen=True)
class EnsembleSettings:
    """How many runs, how far, and under which seed they advance."""

    runs: int = DEFAULT_RUNS
    horizons: tuple[int, ...] = (DEFAULT_HORIZON,)
    base_seed: int = 0
    workers: int = 1
    extra_after_hit: int = 0

    @property
    def horizon(self) -> int:
        """The longest horizon; shorter ones are read off the same runs."""
        return max(self.horizons)


@dataclass(frozen=True)
class ExperimentConfig:
    """Exactly one scenario payload plus ensemble settings."""

    scenario: str
    ensemble: EnsembleSettings
    model: ModelConfig | None = None
    projected: ProjectedSystemSpec | None = None
    walk: WalkSpec | StretchedWalkSpec | None = None
    walk_kind: str = "first_passage"
    threshold: float = 0.0
    ball_radius: float = 1.0
    label: str = ""


# ---------------------------------------------------------------------------
# Parsing helpers: every reader appends key-tagged problems instead of raising
# ---------------------------------------------------------------------------


class _Section:
    """A mapping with typed, key-tagged field access."""

    def __init__(self, data: dict, prefix: str, problems: list[str]):
        self.data = dict(data)
        self.prefix = prefix
        self.problems = problems
        self.seen: set[str] = set()

    def _tag(self, key: str) -> str:
        return f"{self.prefix}{key}"

    def has(self, key: str) -> bool:
        return key in self.data

    def take(self, key: str, default=None):
        self.seen.add(key)
        return self.data.get(key, default)

    def number(self, key: str, default=None, required: bool = False, integer: bool = False):
        self.seen.add(key)
        if key not in self.data:
            if required:
                self.problems.append(f"{self._tag(key)}: required key is missing")
            return default
        raw = self.data[key]
        if isinstance(raw, bool) or not isinstance(raw, (int, float)):
            self.problems.append(f"{self._tag(key)}: expected a number, got {raw!r}")
            return default
        if integer:
            if float(raw) != int(raw):
                self.problems.append(f"{self._tag(key)}: expected an integer, got {raw!r}")
                return default
            return int(raw)
        return float(raw)

    def text(self, key: str, default=None, required: bool = False):
        self.seen.add(key)
        if key not in self.data:
            if required:
                self.problems.append(f"{self._tag(key)}: required key is missing")
            return default
        raw = self.data[key]
        if not isinstance(raw, str):
            self.problems.append(f"{self._tag(key)}: expected a string, got {raw!r}")
            return default
        return raw

    def flag(self, key: str, default: bool = False) -> bool:
        self.seen.add(key)
        raw = self.data.get(key, default)
        if not isinstance(raw, bool):
            self.problems.append(f"{self._tag(key)}: expected true/false, got {raw!r}")
            return default
        return raw

    def section(self, key: str) -> "_Section | None":
        self.seen.add(key)
        if key not in self.data:
            return None
        raw = self.data[key]
        if not isinstance(raw, dict):
            self.problems.append(f"{self._tag(key)}: expected a mapping, got {raw!r}")
            return None
        return _Section(raw, f"{self._tag(key)}.", self.problems)

    def reject_unknown(self) -> None:
        for key in sorted(set(self.data) - self.seen):
            self.problems.append(f"{self._tag(key)}: unknown key")


def _read_noise(
    sec: _Section, problems: list[str], top_delta, prefix: str
) -> NoiseSpec | None:
    """Noise from a nested section, honoring the top-level delta shorthand."""
    family = DEFAULT_NOISE_FAMILY
    delta = None
    symmetric = False
    if sec is not None:
        family = sec.text("family", DEFAULT_NOISE_FAMILY)
        delta = sec.number("delta")
        symmetric = sec.flag("requires_symmetry")
        sec.reject_unknown()
        if delta is not None and top_delta is not None:
            problems.append(
                f"{prefix}delta and {prefix}noise.delta both set; keep exactly one"
            )
            return None
    if delta is None:
        delta = top_delta
    if delta is None:
        problems.append(f"{prefix}noise.delta: required key is missing")
        return None
    return NoiseSpec(family=family, delta=float(delta), requires_symmetry=symmetric)


def _read_initial(sec: _Section | None, problems: list[str]) -> InitialCondition:
    if sec is None:
        return InitialCondition(kind="uniform_box")
    kind = sec.text("kind", "uniform_box")
    values = sec.take("values", ())
    seed = sec.number("seed", 0, integer=True)
    separation = sec.number("separation_eps", 0.0)
    sizes = sec.take("sizes", (0, 0))
    sec.reject_unknown()
    try:
        values = tuple(tuple(float(v) for v in row) for row in values)
    except (TypeError, ValueError):
        problems.append("initial.values: expected a list of coordinate rows")
        values = ()
    try:
        sizes = tuple(int(s) for s in sizes)
    except (TypeError, ValueError):
        problems.append("initial.sizes: expected a pair of integers")
        sizes = (0, 0)
    if len(sizes) != 2:
        problems.append(f"initial.sizes: expected exactly two sizes, got {len(sizes)}")
        sizes = (0, 0)
    return InitialCondition(
        kind=kind or "uniform_box",
        values=values,
        seed=int(seed or 0),
        separation_eps=float(separation or 0.0),
        sizes=sizes,
    )


def _read_horizons(sec: _Section, problems: list[str]) -> tuple[int, ...]:
    sec.seen.add("horizon")
    raw = sec.data.get("horizon", DEFAULT_HORIZON)
    items = raw if isinstance(raw, (list, tuple)) else [raw]
    out: list[int] = []
    for item in items:
        if isinstance(item, bool) or not isinstance(item, (int, float)) or int(item) != item:
            problems.append(f"ensemble.horizon: expected integer(s), got {item!r}")
            return (DEFAULT_HORIZON,)
        out.append(int(item))
    if not out:
        problems.append("ensemble.horizon: needs at least one horizon")
        return (DEFAULT_HORIZON,)
    if any(h < 1 for h in out):
        problems.append(f"ensemble.horizon: horizons must be >= 1, got {out}")
    if any(b <= a for a, b in zip(out, out[1:])):
        problems.append(f"ensemble.horizon: horizons must be strictly increasing, got {out}")
    return tuple(out)


def _read_ensemble(sec: _Section | None, problems: list[str]) -> EnsembleSettings:
    if sec is None:
        return EnsembleSettings()
    runs = sec.number("runs", DEFAULT_RUNS, integer=True)
    horizons = _read_horizons(sec, problems)
    base_seed = sec.number("base_seed", 0, integer=True)
    workers = sec.number("workers", 1, integer=True)
    extra = sec.number("extra_after_hit", 0, integer=True)
    sec.reject_unknown()
    if runs is not None and runs < 1:
        problems.append(f"ensemble.runs: need at least one run, got {runs}")
    if workers is not None and workers < 1:
        problems.append(f"ensemble.workers: need at least one worker, got {workers}")
    if extra is not None and extra < 0:
        problems.append(f"ensemble.extra_after_hit: must be >= 0, got {extra}")
    if base_seed is not None and not 0 <= base_seed < 2**64:
        problems.append(f"ensemble.base_seed: must fit in 64 bits, got {base_seed}")
    return EnsembleSettings(
        runs=int(runs or DEFAULT_RUNS),
        horizons=horizons,
        base_seed=int(base_seed or 0),
        workers=int(workers or 1),
        extra_after_hit=int(extra or 0),
    )


def _read_hk(root: _Section, problems: list[str]) -> ModelConfig | None:
    n = root.number("n", required=True, integer=True)
    d = root.number("d", required=True, integer=True)
    epsilon = root.number("epsilon", required=True)
    space_mode = root.text("space_mode", required=True)
    top_delta = root.number("delta")
    noise = _read_noise(root.section("noise"), problems, top_delta, "")
    initial = _read_initial(root.section("initial"), problems)
    allow_large = root.flag("allow_large_delta")
    if None in (n, d, epsilon, space_mode) or noise is None:
        return None
    cfg = ModelConfig(
        n=int(n),
        d=int(d),
        epsilon=float(epsilon),
        space_mode=space_mode,
        noise=noise,
        initial=initial,
        allow_large_delta=allow_large,
    )
    problems.extend(validate_model_config(cfg))
    return cfg


def _read_map(sec: _Section | None, problems: list[str]) -> MapSpec | None:
    if sec is None:
        problems.append("map: required section is missing")
        return None
    family = sec.text("family", required=True)
    alpha = sec.number("alpha", 1.0)
    epsilon = sec.number("epsilon", 0.0)
    n = sec.number("n", 0, integer=True)
    d = sec.number("d", 0, integer=True)
    sec.reject_unknown()
    if family is None:
        return None
    return MapSpec(
        family=family,
        alpha=float(alpha or 0.0) if alpha is not None else 1.0,
        epsilon=float(epsilon or 0.0),
        n=int(n or 0),
        d=int(d or 0),
    )


def _read_projected(root: _Section, problems: list[str]) -> ProjectedSystemSpec | None:
    dim = root.number("dim", required=True, integer=True)
    r = root.number("r", required=True)
    r0 = root.number("r0", required=True)
    mp = _read_map(root.section("map"), problems)
    top_delta = root.number("delta")
    noise = _read_noise(root.section("noise"), problems, top_delta, "")
    start = root.take("start", ())
    try:
        start = tuple(float(v) for v in start)
    except (TypeError, ValueError):
        problems.append("start: expected a list of coordinates")
        start = ()
    if None in (dim, r, r0) or mp is None or noise is None:
        return None
    spec = ProjectedSystemSpec(
        dim=int(dim), r=float(r), r0=float(r0), map=mp, noise=noise, start=start
    )
    problems.extend(validate_projected_spec(spec))
    return spec


def _read_walk(root: _Section, problems: list[str]):
    kind = root.text("kind", "first_passage")
    if kind not in WALK_KINDS:
        problems.append(f"kind: unknown walk kind {kind!r}; options are {WALK_KINDS}")
        kind = "first_passage"
    noise_sec = root.section("noise")
    noise = SIMPLE_STEP
    if noise_sec is not None:
        family = noise_sec.text("family", SIMPLE_STEP.family)
        delta = noise_sec.number("delta", SIMPLE_STEP.delta)
        noise_sec.reject_unknown()
        noise = NoiseSpec(family=family, delta=float(delta))
    threshold = root.number("threshold", 0.0)
    ball_radius = root.number("ball_radius", 1.0)
    spec = None
    if kind == "stretched":
        beta = root.number("beta", required=True)
        bound_m = root.number("bound_m", required=True)
        if None not in (beta, bound_m):
            spec = StretchedWalkSpec(beta=float(beta), bound_m=float(bound_m), step=noise)
    else:
        dim = root.number("dim", required=True, integer=True)
        start = root.take("start", ())
        try:
            start = tuple(float(v) for v in start)
        except (TypeError, ValueError):
            problems.append("start: expected a list of coordinates")
            start = ()
        if dim is not None:
            spec = WalkSpec(dim=int(dim), step=noise, start=start)
    if spec is not None:
        problems.extend(validate_walk_spec(spec))
    if kind == "first_passage" and threshold is not None and threshold > 0.0:
        problems.append(f"threshold: first-passage level must be <= 0, got {threshold}")
    if kind == "recurrence" and ball_radius is not None and ball_radius <= 0.0:
        problems.append(f"ball_radius: must be positive, got {ball_radius}")
    return spec, kind, float(threshold or 0.0), float(ball_radius or 1.0)


def config_from_dict(data, source: str = "<config>") -> ExperimentConfig:
    """Build and validate a config from a parsed mapping.

    Raises ConfigError carrying every violation found, not just the
    first; each message starts with the offending key.
    """
    if not isinstance(data, dict):
        raise ConfigError(
            f"{source}: top level must be a mapping, got {type(data).__name__}",
            kind="parse",
        )
    problems: list[str] = []
    root = _Section(data, "", problems)
    scenario = root.text("scenario", "hk")
    label = root.text("label", "")
    ensemble = _read_ensemble(root.section("ensemble"), problems)

    model = projected = walk = None
    walk_kind = "first_passage"
    threshold, ball_radius = 0.0, 1.0
    if scenario == "hk":
        model = _read_hk(root, problems)
    elif scenario == "projected":
        projected = _read_projected(root, problems)
    elif scenario == "walk":
        walk, walk_kind, threshold, ball_radius = _read_walk(root, problems)
    else:
        problems.append(f"scenario: unknown scenario {scenario!r}; options are {SCENARIOS}")
    root.reject_unknown()

    if problems:
        raise ConfigError(f"{source}: {len(problems)} problem(s)", problems=problems)
    return ExperimentConfig(
        scenario=scenario,
        ensemble=ensemble,
        model=model,
        projected=projected,
        walk=walk,
        walk_kind=walk_kind,
        threshold=threshold,
        ball_radius=ball_radius,
        label=label or "",
    )


def loads_config(text: str, source: str = "<string>") -> ExperimentConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as err:
        raise ConfigError(f"{source}: not parseable as YAML: {err}", kind="parse") from err
    return config_from_dict(data, source)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as err:
        raise ConfigError(f"{path}: cannot read config: {err}", kind="parse") from err
    return loads_config(text, source=str(path))


# ---------------------------------------------------------------------------
# Canonical serialization and fingerprint
# ---------------------------------------------------------------------------


def _noise_dict(spec: NoiseSpec) -> dict:
    out = {"family": spec.family, "delta": spec.delta}
    if spec.requires_symmetry:
        out["requires_symmetry"] = True
    return out


def config_to_dict(cfg: ExperimentConfig) -> dict:
    """Plain-data form; load(dump(cfg)) == cfg."""
    out: dict = {"scenario": cfg.scenario}
    if cfg.label:
        out["label"] = cfg.label
    if cfg.scenario == "hk" and cfg.model is not None:
        m = cfg.model
        out.update(n=m.n, d=m.d, epsilon=m.epsilon, space_mode=m.space_mode)
        out["noise"] = _noise_dict(m.noise)
        init = {"kind": m.initial.kind}
        if m.initial.kind == "explicit":
            init["values"] = [list(row) for row in m.initial.values]
        if m.initial.kind == "uniform_box":
            init["seed"] = m.initial.seed
        if m.initial.kind == "two_cluster":
            init["separation_eps"] = m.initial.separation_eps
            init["sizes"] = list(m.initial.sizes)
        out["initial"] = init
        if m.allow_large_delta:
            out["allow_large_delta"] = True
    elif cfg.scenario == "projected" and cfg.projected is not None:
        p = cfg.projected
        out.update(dim=p.dim, r=p.r, r0=p.r0)
        mp = {"family": p.map.family}
        if p.map.family in ("linear_scale", "target_stretch"):
            mp["alpha"] = p.map.alpha
        if p.map.family == "hk_mean":
            mp.update(epsilon=p.map.epsilon, n=p.map.n, d=p.map.d)
        out["map"] = mp
        out["noise"] = _noise_dict(p.noise)
        if p.start:
            out["start"] = list(p.start)
    elif cfg.scenario == "walk" and cfg.walk is not None:
        out["kind"] = cfg.walk_kind
        w = cfg.walk
        if isinstance(w, StretchedWalkSpec):
            out.update(beta=w.beta, bound_m=w.bound_m)
            step = w.step
        else:
            out["dim"] = w.dim
            if w.start:
                out["start"] = list(w.start)
            step = w.step
        out["noise"] = _noise_dict(step)
        if cfg.walk_kind == "first_passage" and cfg.threshold != 0.0:
            out["threshold"] = cfg.threshold
        if cfg.walk_kind == "recurrence":
            out["ball_radius"] = cfg.ball_radius
    ens = {
        "runs": cfg.ensemble.runs,
        "horizon": (
            cfg.ensemble.horizons[0]
            if len(cfg.ensemble.horizons) == 1
            else list(cfg.ensemble.horizons)
        ),
        "base_seed": cfg.ensemble.base_seed,
    }
    if cfg.ensemble.workers != 1:
        ens["workers"] = cfg.ensemble.workers
    if cfg.ensemble.extra_after_hit:
        ens["extra_after_hit"] = cfg.ensemble.extra_after_hit
    out["ensemble"] = ens
    return out


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False, default_flow_style=False)


def config_fingerprint(cfg: ExperimentConfig) -> str:
    """sha256 over the canonical JSON form; stamped into every output."""
    blob = json.dumps(config_to_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def with_workers(cfg: ExperimentConfig, workers: int) -> ExperimentConfig:
    return replace(cfg, ensemble=replace(cfg.ensemble, workers=workers))
