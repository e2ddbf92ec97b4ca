"""Experiment configuration: JSON schema, strict parsing, hashing.

One file per experiment.  Layout (matrices are row-major nested lists):

    {
      "params":      {"regime": "slow", "alpha": 1.0, ...},
      "family":      {"kind": "synthetic_gaussian", ...} | {"kind": "euler_sde", ...},
      "projection":  {"kind": "identity"} | {"kind": "box", "lower": [...], "upper": [...]},
      "replication": {"replicas": R, "n_final": N, "checkpoints": [...] | null,
                      "master_seed": S, "divergence_radius": r | null},
      "output":      {"directory": "out", "plots": true}
    }

Unknown keys anywhere are rejected.  Round-trips losslessly through
``to_dict``; ``config_hash`` is the sha256 of the canonical JSON and is
embedded in every artifact.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
import numpy as np

from .driver import BoxProjection, IdentityProjection, geometric_checkpoints
from .families import EulerSdeFamily, GeometricCostModel, LevelFamily, SyntheticGaussianFamily
from .harness import ReplicationSpec
from .params import ParameterSet, fill_param_defaults


class ConfigError(ValueError):
    pass


def _require_keys(section: dict, name: str, required: set, optional: set = frozenset()):
    unknown = set(section) - required - optional
    if unknown:
        raise ConfigError(f"unknown keys in '{name}': {sorted(unknown)}")
    missing = required - set(section)
    if missing:
        raise ConfigError(f"missing keys in '{name}': {sorted(missing)}")


@dataclass(frozen=True)
class ExperimentConfig:
    params: ParameterSet
    family_spec: dict
    projection_spec: dict
    replication: ReplicationSpec
    output_dir: str
    plots: bool

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "family": self.family_spec,
            "projection": self.projection_spec,
            "replication": {
                "replicas": self.replication.replicas,
                "n_final": self.replication.n_final,
                "checkpoints": list(self.replication.checkpoints),
                "master_seed": self.replication.master_seed,
                "divergence_radius": self.replication.divergence_radius,
            },
            "output": {"directory": self.output_dir, "plots": self.plots},
        }

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


def parse_config_structure(doc: dict) -> dict:
    """Structural pass: key checking and defaults, no feasibility validation.

    Returns the filled parameter mapping (flat dict).  Raises ConfigError for
    malformed documents; regime inequalities are *not* checked here, so the
    CLI can report them as domain failures rather than parse errors.
    """
    if not isinstance(doc, dict):
        raise ConfigError("configuration root must be an object")
    _require_keys(doc, "<root>", {"params", "family", "projection", "replication", "output"})
    try:
        filled = fill_param_defaults(doc["params"])
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"params: {exc}") from exc

    fam = dict(doc["family"])
    kind = fam.get("kind")
    if kind == "synthetic_gaussian":
        _require_keys(fam, "family", {"kind", "theta_star", "H", "mu", "noise_factor"},
                      {"quadratic", "modulated"})
    elif kind == "euler_sde":
        _require_keys(fam, "family", {"kind", "drift", "diffusion"},
                      {"target", "horizon", "payoff"})
    else:
        raise ConfigError(f"family: unknown kind {kind!r}")

    proj = dict(doc["projection"])
    if proj.get("kind") == "identity":
        _require_keys(proj, "projection", {"kind"})
    elif proj.get("kind") == "box":
        _require_keys(proj, "projection", {"kind", "lower", "upper"})
    else:
        raise ConfigError(f"projection: unknown kind {proj.get('kind')!r}")

    rep = dict(doc["replication"])
    _require_keys(rep, "replication", {"replicas", "n_final", "master_seed"},
                  {"checkpoints", "divergence_radius"})
    if not isinstance(rep["replicas"], int) or rep["replicas"] < 2:
        raise ConfigError("replication: replicas must be an integer >= 2")
    out = dict(doc["output"])
    _require_keys(out, "output", {"directory"}, {"plots"})
    return filled


def config_from_dict(doc: dict) -> ExperimentConfig:
    filled = parse_config_structure(doc)
    params = ParameterSet(**filled)  # raises InvalidParameters when rejected
    rep = dict(doc["replication"])
    cps = rep.get("checkpoints")
    if cps is None:
        cps = geometric_checkpoints(int(rep["n_final"]))
    spec = ReplicationSpec(
        replicas=int(rep["replicas"]),
        n_final=int(rep["n_final"]),
        checkpoints=tuple(int(c) for c in cps),
        master_seed=int(rep["master_seed"]),
        divergence_radius=(None if rep.get("divergence_radius") is None
                           else float(rep["divergence_radius"])),
    )
    out = dict(doc["output"])
    return ExperimentConfig(
        params=params,
        family_spec=dict(doc["family"]),
        projection_spec=dict(doc["projection"]),
        replication=spec,
        output_dir=str(out["directory"]),
        plots=bool(out.get("plots", True)),
    )


def load_config_document(path: str) -> dict:
    """Load and structurally check a config file, returning the raw document."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    parse_config_structure(doc)
    return doc


def load_config(path: str) -> ExperimentConfig:
    return config_from_dict(load_config_document(path))


def build_family(cfg: ExperimentConfig) -> LevelFamily:
    fam = cfg.family_spec
    if fam["kind"] == "synthetic_gaussian":
        return SyntheticGaussianFamily(
            theta_star=np.asarray(fam["theta_star"], dtype=float),
            H=np.asarray(fam["H"], dtype=float),
            mu=np.asarray(fam["mu"], dtype=float),
            noise_factor=np.asarray(fam["noise_factor"], dtype=float),
            alpha=cfg.params.alpha,
            beta=cfg.params.beta,
            M=cfg.params.M,
            quadratic=None if fam.get("quadratic") is None else np.asarray(fam["quadratic"], dtype=float),
            modulated=bool(fam.get("modulated", False)),
        )
    return EulerSdeFamily(
        drift=float(fam["drift"]),
        diffusion=float(fam["diffusion"]),
        target=float(fam.get("target", 1.0)),
        horizon=float(fam.get("horizon", 1.0)),
        M=int(cfg.params.M),
        payoff=str(fam.get("payoff", "shortfall")),
    )


def build_cost_model(cfg: ExperimentConfig) -> GeometricCostModel:
    return GeometricCostModel(kappa_C=cfg.params.kappa_C, M=cfg.params.M)


def build_projection(cfg: ExperimentConfig):
    proj = cfg.projection_spec
    if proj["kind"] == "identity":
        return IdentityProjection()
    return BoxProjection(proj["lower"], proj["upper"])
