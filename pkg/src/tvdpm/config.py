"""Experiment configuration: schema-validated JSON into runtime objects.

The schema ships with the package (schemas/experiment.schema.json) and
rejects unknown keys outright, so a typo fails loudly before anything runs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

import jsonschema
import numpy as np

from .kernels import GaussianAR1, GaussianKnownVar, NormalInverseGamma, StaticKernel, SymmetricDirichlet
from .models import GaussianModel, KnownVarGaussianModel, TopicModel
from .smc import FilterConfig, RhoWalk, WalkUniform
from .urn import (
    ComposePolicy,
    MixturePolicy,
    SizeBiasedDeletion,
    SlidingWindow,
    UniformDeletion,
)

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "build_policy", "build_model"]


class ConfigError(ValueError):
    """Configuration rejected by the schema or by semantic checks."""


def _schema() -> dict:
    text = resources.files("tvdpm.schemas").joinpath("experiment.schema.json").read_text()
    return json.loads(text)


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    theta: float
    model: dict
    policy: dict
    inference: dict
    data: dict | None = None
    output: dict | None = None

    @property
    def method(self) -> str:
        return self.inference["method"]


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        raw = json.load(fh)
    return validate_config(raw)


def validate_config(raw: dict) -> ExperimentConfig:
    try:
        jsonschema.validate(raw, _schema())
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"config rejected: {exc.message}") from exc
    return ExperimentConfig(
        seed=raw["seed"],
        theta=raw["theta"],
        model=raw["model"],
        policy=raw["policy"],
        inference=raw["inference"],
        data=raw.get("data"),
        output=raw.get("output"),
    )


def build_policy(spec: dict):
    kind = spec["type"]
    if kind == "uniform":
        if spec["rho"] == "walk":
            return WalkUniform()
        return UniformDeletion(spec["rho"])
    if kind == "size_biased":
        return SizeBiasedDeletion(spec.get("count", 1))
    if kind == "mixture":
        return MixturePolicy(spec["alpha"], build_policy(spec["a"]), build_policy(spec["b"]))
    if kind == "compose":
        return ComposePolicy([build_policy(p) for p in spec["policies"]])
    if kind == "sliding_window":
        return SlidingWindow(spec["r"])
    raise ConfigError(f"unknown policy type {kind!r}")


def build_model(spec: dict):
    kind = spec["type"]
    if kind == "gaussian_nig":
        return GaussianModel(
            NormalInverseGamma(spec["mu0"], spec["kappa0"], spec["nu0"], spec["lambda0"])
        )
    if kind == "gaussian_known_var":
        return KnownVarGaussianModel(
            GaussianKnownVar(spec["mu0"], spec["sigma0"]), spec["obs_sigma"]
        )
    if kind == "topic":
        return TopicModel(SymmetricDirichlet(spec["theta_v"], spec["vocab_size"]))
    raise ConfigError(f"unknown model type {kind!r}")


def build_kernel(spec: dict | None, model):
    if spec is None or spec["type"] == "static":
        return StaticKernel()
    if spec["type"] == "ar1":
        if not isinstance(model, KnownVarGaussianModel) or not isinstance(
            model.base, GaussianKnownVar
        ):
            raise ConfigError("ar1 kernel needs the known-variance Gaussian model")
        return GaussianAR1(spec.get("phi", 0.9), model.base)
    raise ConfigError(f"unknown kernel type {spec['type']!r}")


def build_filter_config(cfg: ExperimentConfig) -> FilterConfig:
    inf = cfg.inference
    if inf["method"] != "smc":
        raise ConfigError("inference.method must be 'smc' for the filter")
    walk = inf.get("rho_walk")
    grid_spec = inf.get("grid")
    grid = (
        np.linspace(grid_spec["lo"], grid_spec["hi"], grid_spec["points"])
        if grid_spec
        else None
    )
    policy = build_policy(cfg.policy)
    uses_walk = _policy_uses_walk(cfg.policy)
    if uses_walk and walk is None:
        raise ConfigError("policy references the rho walk but inference.rho_walk is missing")
    return FilterConfig(
        n_particles=inf["n_particles"],
        theta=cfg.theta,
        policy=policy,
        proposal=inf.get("proposal", "conjugate"),
        ess_threshold_fraction=inf.get("ess_threshold_fraction", 0.5),
        rho_walk=RhoWalk(walk["a_rho"], walk["rho0"]) if walk else None,
        grid=grid,
    )


def _policy_uses_walk(spec: dict) -> bool:
    if spec["type"] == "uniform":
        return spec["rho"] == "walk"
    if spec["type"] == "mixture":
        return _policy_uses_walk(spec["a"]) or _policy_uses_walk(spec["b"])
    if spec["type"] == "compose":
        return any(_policy_uses_walk(p) for p in spec["policies"])
    return False
