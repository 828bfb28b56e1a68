"""INI experiment files: parsing, overrides, serialization and hashing."""

from __future__ import annotations

import configparser
import hashlib

from .diffusion import AlgorithmSpec
from .gain import GainParams
from .harness import ExperimentConfig
from .privacy import PrivacyConfig
from .signal import ScenarioConfig
from .topology import TopologySpec


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists every problem found."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


def _bool(s):
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _floats(s):
    return tuple(float(x) for x in s.replace(",", " ").split())


def _ints(s):
    return tuple(int(x) for x in s.replace(",", " ").split())


def _auto_float(s):
    return None if s.strip().lower() in ("auto", "") else float(s)


def _edges(s):
    out = []
    for tok in s.replace(",", " ").split():
        l, _, k = tok.partition("-")
        out.append((int(l), int(k)))
    return tuple(out)


def _step(s):
    vals = _floats(s)
    return vals[0] if len(vals) == 1 else vals


def _name_list(s):
    return tuple(x for x in s.replace(",", " ").split())


# (section, key) -> (parser, help); per-algorithm keys live under ALGORITHM_KEYS
KEYS = {
    ("experiment", "name"): (str, "label used in messages"),
    ("experiment", "algorithms"): (_name_list, "comma-separated names; each needs an [algorithm.NAME] section"),
    ("experiment", "monte_carlo_runs"): (int, "independent runs averaged per algorithm"),
    ("experiment", "master_seed"): (int, "seed from which every run's seed is derived"),
    ("experiment", "batch_size"): (int, "runs simulated in lockstep (memory/speed trade-off)"),
    ("experiment", "collect_bounds"): (_bool, "record d2 and d2_max per node and iteration"),
    ("experiment", "collect_diagnostics"): (_bool, "record key-error correlation diagnostics"),
    ("experiment", "diag_stride"): (int, "iterations between diagnostic samples"),
    ("experiment", "diag_burn_in"): (int, "first iteration sampled for diagnostics"),
    ("scenario", "dim"): (int, "length L of the unknown vector"),
    ("scenario", "regressor_variance"): (float, "variance of every regressor entry"),
    ("scenario", "measurement_noise_variance"): (float, "variance of the measurement noise"),
    ("scenario", "horizon"): (int, "iterations per run"),
    ("scenario", "change_points"): (_ints, "iterations where the unknown vector is redrawn"),
    ("topology", "kind"): (str, "ring, random-geometric, complete or edges"),
    ("topology", "n_agents"): (int, "number of agents N"),
    ("topology", "radius"): (_auto_float, "connection radius on the unit square, or auto"),
    ("topology", "seed"): (int, "placement seed for random-geometric graphs"),
    ("topology", "edges"): (_edges, "undirected pairs such as 0-1 1-2 (kind = edges)"),
    ("topology", "target_degree"): (float, "mean neighborhood size aimed at by radius = auto"),
    ("topology", "max_retries"): (int, "placements tried before falling back to a ring"),
    ("gain", "alpha"): (float, "generalized correntropy exponent"),
    ("gain", "beta"): (float, "kernel bandwidth"),
    ("gain", "kernel_const"): (_auto_float, "kernel constant A, or auto"),
    ("gain", "floor_p"): (float, "floor on |p_r| before powers and reciprocals"),
    ("gain", "gain_min"): (float, "lower clip on |g_r|"),
    ("gain", "gain_max"): (float, "upper clip on |g_r|"),
    ("gain", "mix"): (float, "weight of the proportionate part against the uniform gain"),
    ("gain", "normalization"): (str, "trace (unit-trace positive gain) or none (raw signed gain)"),
    ("privacy", "dp_noise_variance"): (float, "variance of the shared DP noise"),
    ("privacy", "channel_noise_variance"): (float, "variance of the AWGN on every exchanged entry"),
    ("privacy", "shared_seed"): (int, "honest agents' common DP-noise seed"),
    ("stability", "mu_grid"): (_floats, "step sizes probed by the stability subcommand"),
    ("stability", "probe_horizon"): (int, "iterations per probe run"),
    ("stability", "probe_seeds"): (int, "runs per probed step size"),
}

ALGORITHM_KEYS = {
    "family": (str, "dlms, pgcdlms or dp-pgcdlms"),
    "variant": (lambda s: None if s.strip().lower() in ("", "none") else s.strip(), "oracle, v1, v2 (dp-pgcdlms)"),
    "step_size": (_step, "step size, one value or one per node"),
    "normalize_phi": (_bool, "scale intermediate estimates to unit norm"),
}


def key_help() -> str:
    rows = [(f"{s}.{k}", doc) for (s, k), (_, doc) in KEYS.items()]
    rows += [(f"algorithm.NAME.{k}", doc) for k, (_, doc) in ALGORITHM_KEYS.items()]
    return "\n".join(f"  {key:<38} {doc}" for key, doc in rows)


def _fmt_value(v) -> str:
    if v is None:
        return "auto"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        if v and isinstance(v[0], tuple):
            return " ".join(f"{a}-{b}" for a, b in v)
        return ", ".join(_fmt_value(x) for x in v)
    return str(v)


def to_ini(config: ExperimentConfig) -> str:
    """Canonical text form; equal configs give identical text."""
    c = config
    sections = {
        "experiment": {
            "name": c.name,
            "algorithms": ", ".join(a.name for a in c.algorithms),
            "monte_carlo_runs": c.monte_carlo_runs,
            "master_seed": c.master_seed,
            "batch_size": c.batch_size,
            "collect_bounds": c.collect_bounds,
            "collect_diagnostics": c.collect_diagnostics,
            "diag_stride": c.diag_stride,
            "diag_burn_in": c.diag_burn_in,
        },
        "scenario": {
            "dim": c.scenario.dim,
            "regressor_variance": float(c.scenario.regressor_variance),
            "measurement_noise_variance": float(c.scenario.measurement_noise_variance),
            "horizon": c.scenario.horizon,
            "change_points": tuple(c.scenario.change_points),
        },
        "topology": {
            "kind": c.topology.kind,
            "n_agents": c.topology.n_agents,
            "radius": c.topology.radius,
            "seed": c.topology.seed,
            "edges": tuple(c.topology.edges),
            "target_degree": float(c.topology.target_degree),
            "max_retries": c.topology.max_retries,
        },
        "gain": {
            "alpha": float(c.gain.alpha),
            "beta": float(c.gain.beta),
            "kernel_const": c.gain.kernel_const,
            "floor_p": float(c.gain.floor_p),
            "gain_min": float(c.gain.gain_clip[0]),
            "gain_max": float(c.gain.gain_clip[1]),
            "mix": float(c.gain.mix),
            "normalization": c.gain.normalization,
        },
        "privacy": {
            "dp_noise_variance": float(c.privacy.dp_noise_variance),
            "channel_noise_variance": float(c.privacy.channel_noise_variance),
            "shared_seed": c.privacy.shared_seed,
        },
        "stability": {
            "mu_grid": tuple(float(m) for m in c.mu_grid),
            "probe_horizon": c.probe_horizon,
            "probe_seeds": c.probe_seeds,
        },
    }
    for a in c.algorithms:
        step = a.step_size if isinstance(a.step_size, tuple) else float(a.step_size)
        sections[f"algorithm.{a.name}"] = {
            "family": a.family,
            "variant": a.variant if a.variant else "none",
            "step_size": step,
            "normalize_phi": a.normalize_phi,
        }
    out = []
    for sec, items in sections.items():
        out.append(f"[{sec}]")
        out += [f"{k} = {_fmt_value(v)}".rstrip() for k, v in items.items()]
        out.append("")
    return "\n".join(out)


def config_hash(config: ExperimentConfig, length: int = 12) -> str:
    return hashlib.sha256(to_ini(config).encode("utf-8")).hexdigest()[:length]


def _parser():
    p = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    p.optionxform = str
    return p


def apply_overrides(parser: configparser.ConfigParser, overrides) -> None:
    """Set ``section.key=value`` or unique bare ``key=value`` pairs; every
    key must already exist in the parsed file."""
    errors = []
    for item in overrides or ():
        key, sep, value = item.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            errors.append(f"override {item!r} is not key=value")
            continue
        if "." in key:
            sec, _, opt = key.rpartition(".")
            if not (parser.has_section(sec) and parser.has_option(sec, opt)):
                errors.append(f"unknown config key {key!r}")
                continue
        else:
            hits = [s for s in parser.sections() if parser.has_option(s, key)]
            if not hits:
                errors.append(f"unknown config key {key!r}")
                continue
            if len(hits) > 1:
                errors.append(f"ambiguous key {key!r}: qualify as one of {[f'{s}.{key}' for s in hits]}")
                continue
            sec, opt = hits[0], key
        parser.set(sec, opt, value)
    if errors:
        raise ConfigError(errors)


def from_parser(parser: configparser.ConfigParser) -> ExperimentConfig:
    errors = []
    vals = {}
    for sec in parser.sections():
        if sec.startswith("algorithm."):
            continue
        for opt, raw in parser.items(sec):
            if (sec, opt) not in KEYS:
                errors.append(f"unknown config key '{sec}.{opt}'")
                continue
            try:
                vals[(sec, opt)] = KEYS[(sec, opt)][0](raw)
            except (TypeError, ValueError) as exc:
                errors.append(f"{sec}.{opt}: {exc}")

    d = ExperimentConfig()
    g = lambda s, k, default: vals.get((s, k), default)  # noqa: E731

    algorithms = []
    for name in g("experiment", "algorithms", ()):
        sec = f"algorithm.{name}"
        if not parser.has_section(sec):
            errors.append(f"algorithm {name!r} has no [{sec}] section")
            continue
        kw = {}
        for opt, raw in parser.items(sec):
            if opt not in ALGORITHM_KEYS:
                errors.append(f"unknown config key '{sec}.{opt}'")
                continue
            try:
                kw[opt] = ALGORITHM_KEYS[opt][0](raw)
            except (TypeError, ValueError) as exc:
                errors.append(f"{sec}.{opt}: {exc}")
        try:
            algorithms.append(AlgorithmSpec(name=name, **kw))
        except (TypeError, ValueError) as exc:
            errors.append(f"{sec}: {exc}")

    n_agents = g("topology", "n_agents", d.topology.n_agents)
    built = {}
    for label, build in (
        (
            "scenario",
            lambda: ScenarioConfig(
                dim=g("scenario", "dim", d.scenario.dim),
                n_agents=n_agents,
                regressor_variance=g("scenario", "regressor_variance", d.scenario.regressor_variance),
                measurement_noise_variance=g(
                    "scenario", "measurement_noise_variance", d.scenario.measurement_noise_variance
                ),
                horizon=g("scenario", "horizon", d.scenario.horizon),
                change_points=g("scenario", "change_points", d.scenario.change_points),
            ),
        ),
        (
            "topology",
            lambda: TopologySpec(
                kind=g("topology", "kind", d.topology.kind),
                n_agents=n_agents,
                radius=g("topology", "radius", d.topology.radius),
                seed=g("topology", "seed", d.topology.seed),
                edges=g("topology", "edges", d.topology.edges),
                target_degree=g("topology", "target_degree", d.topology.target_degree),
                max_retries=g("topology", "max_retries", d.topology.max_retries),
            ),
        ),
        (
            "gain",
            lambda: GainParams(
                alpha=g("gain", "alpha", d.gain.alpha),
                beta=g("gain", "beta", d.gain.beta),
                kernel_const=g("gain", "kernel_const", d.gain.kernel_const),
                floor_p=g("gain", "floor_p", d.gain.floor_p),
                gain_clip=(g("gain", "gain_min", d.gain.gain_clip[0]), g("gain", "gain_max", d.gain.gain_clip[1])),
                mix=g("gain", "mix", d.gain.mix),
                normalization=g("gain", "normalization", d.gain.normalization),
            ),
        ),
        (
            "privacy",
            lambda: PrivacyConfig(
                dp_noise_variance=g("privacy", "dp_noise_variance", d.privacy.dp_noise_variance),
                channel_noise_variance=g("privacy", "channel_noise_variance", d.privacy.channel_noise_variance),
                shared_seed=g("privacy", "shared_seed", d.privacy.shared_seed),
            ),
        ),
    ):
        try:
            built[label] = build()
        except (TypeError, ValueError) as exc:
            errors.append(f"{label}: {exc}")
    if errors:
        raise ConfigError(errors)

    config = ExperimentConfig(
        name=g("experiment", "name", d.name),
        algorithms=tuple(algorithms),
        monte_carlo_runs=g("experiment", "monte_carlo_runs", d.monte_carlo_runs),
        master_seed=g("experiment", "master_seed", d.master_seed),
        batch_size=g("experiment", "batch_size", d.batch_size),
        collect_bounds=g("experiment", "collect_bounds", d.collect_bounds),
        collect_diagnostics=g("experiment", "collect_diagnostics", d.collect_diagnostics),
        diag_stride=g("experiment", "diag_stride", d.diag_stride),
        diag_burn_in=g("experiment", "diag_burn_in", d.diag_burn_in),
        mu_grid=g("stability", "mu_grid", d.mu_grid),
        probe_horizon=g("stability", "probe_horizon", d.probe_horizon),
        probe_seeds=g("stability", "probe_seeds", d.probe_seeds),
        **built,
    )
    errors = config.validate()
    if errors:
        raise ConfigError(errors)
    return config


def loads(text: str, overrides=()) -> ExperimentConfig:
    parser = _parser()
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([f"malformed config: {exc}".replace("\n", " ")]) from exc
    apply_overrides(parser, overrides)
    return from_parser(parser)


def load_config(path, overrides=()) -> ExperimentConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError([f"cannot read config file {path}: {exc.strerror}"]) from exc
    return loads(text, overrides)


def with_overrides(config: ExperimentConfig, overrides) -> ExperimentConfig:
    return loads(to_ini(config), overrides) if overrides else config


__all__ = [
    "ConfigError",
    "apply_overrides",
    "config_hash",
    "from_parser",
    "key_help",
    "load_config",
    "loads",
    "to_ini",
    "with_overrides",
]
