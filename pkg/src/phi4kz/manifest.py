"""Run manifests: schema, validation, expansion into runs, hashing.

A manifest is a YAML or JSON document that pins every knob of a sweep:
model couplings, lattice sizes, truncations, the quench-time grid and
timestep policy, checkpoints and seeds.  Identical manifests (same hash)
reproduce identical observable records.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import yaml

from .dmrg import DmrgSettings
from .errors import ManifestError
from .model import (
    LatticeSpec,
    ModelParams,
    coupling_ion_chain,
    critical_field_shift,
    default_dt,
    schedule,
)
from .mps import TruncationPolicy
from .quench import QuenchRun

SCHEMA_VERSION = 1

DT_POLICIES = ("fixed-dt", "fixed-ratio")


def _require(cond, message, path):
    if not cond:
        raise ManifestError(message, path=path)


def _get(mapping, key, default=None):
    value = mapping.get(key, default)
    return default if value is None else value


@dataclass(frozen=True)
class Manifest:
    """Validated sweep description."""

    model: dict
    lattice_sizes: tuple
    truncation: dict
    schedule: dict
    checkpoints: tuple
    seeds: dict
    dmrg: dict
    output_dir: str
    raw: dict = field(repr=False, default_factory=dict)

    # -- loading -----------------------------------------------------------

    @classmethod
    def from_dict(cls, data: dict, path=None) -> "Manifest":
        _require(isinstance(data, dict), "manifest must be a mapping", path)
        version = _get(data, "schema_version", SCHEMA_VERSION)
        _require(version == SCHEMA_VERSION,
                 f"unsupported schema_version {version}", path)

        model_in = _get(data, "model", {})
        _require(isinstance(model_in, dict), "model must be a mapping", path)
        g = model_in.get("g", "ion-chain")
        if g == "ion-chain":
            g = coupling_ion_chain()
        model = {
            "hbar": float(_get(model_in, "hbar", 0.1)),
            "g": float(g),
            "omega0": float(_get(model_in, "omega0", 9.0)),
            "c_prime": float(_get(model_in, "c_prime", 2.63)),
        }
        for key in ("hbar", "g", "omega0"):
            _require(model[key] > 0, f"model.{key} must be positive", path)
        eps_c = model_in.get("eps_tilde_c")
        model["eps_tilde_c"] = (
            float(eps_c) if eps_c is not None
            else critical_field_shift(model["hbar"], model["g"], model["omega0"],
                                      model["c_prime"]))

        sizes = _get(data, "lattice", {}).get("sizes", [])
        _require(len(sizes) > 0, "lattice.sizes must be a non-empty list", path)
        _require(all(isinstance(s, int) and s >= 4 and s % 2 == 0 for s in sizes),
                 "lattice sizes must be even integers >= 4", path)

        trunc_in = _get(data, "truncation", {})
        truncation = {
            "d": int(_get(trunc_in, "d", 20)),
            "n_rep": trunc_in.get("n_rep"),
            "m_max": int(_get(trunc_in, "m_max", 50)),
            "weight_tol": float(_get(trunc_in, "weight_tol", 1e-10)),
            "omega_ref": float(_get(trunc_in, "omega_ref", 1.0)),
        }
        _require(truncation["d"] >= 2, "truncation.d must be at least 2", path)
        _require(truncation["m_max"] >= 2, "truncation.m_max must be at least 2", path)
        _require(0 < truncation["weight_tol"] <= 1e-4,
                 "truncation.weight_tol must lie in (0, 1e-4]", path)

        sched_in = _get(data, "schedule", {})
        tau_list = _get(sched_in, "tau_q", [])
        _require(len(tau_list) > 0, "schedule.tau_q must be a non-empty list", path)
        _require(all(float(t) > 0 for t in tau_list),
                 "schedule.tau_q entries must be positive", path)
        policy = _get(sched_in, "dt_policy", "fixed-dt")
        _require(policy in DT_POLICIES,
                 f"schedule.dt_policy must be one of {DT_POLICIES}", path)
        sched = {
            "tau_q": tuple(float(t) for t in tau_list),
            "dt_policy": policy,
            "dt": float(_get(sched_in, "dt", 1e-2)),
            "ratio": float(_get(sched_in, "ratio", 1e5)),
            "dt_min": float(_get(sched_in, "dt_min", 1e-5)),
        }
        _require(sched["dt"] > 0, "schedule.dt must be positive", path)
        if policy == "fixed-dt":
            _require(sched["dt"] < min(sched["tau_q"]),
                     "schedule.dt must be below the smallest tau_q", path)

        checkpoints = tuple(float(c) for c in _get(data, "checkpoints", []))
        _require(all(-0.5 <= c <= 0.5 for c in checkpoints),
                 "checkpoints are ramp values in [-1/2, 1/2]", path)

        seeds = {"base": int(_get(_get(data, "seeds", {}), "base", 0))}

        dmrg_in = _get(data, "dmrg", {})
        dmrg = {
            "max_sweeps": int(_get(dmrg_in, "max_sweeps", 16)),
            "energy_tol": float(_get(dmrg_in, "energy_tol", 1e-9)),
            "local_tol": float(_get(dmrg_in, "local_tol", 1e-9)),
            "init_bond": int(_get(dmrg_in, "init_bond", 8)),
            "penalty_weight": float(_get(dmrg_in, "penalty_weight", 1.0)),
        }
        output_dir = str(_get(_get(data, "output", {}), "dir", "out"))
        return cls(
            model=model, lattice_sizes=tuple(int(s) for s in sizes),
            truncation=truncation, schedule=sched, checkpoints=checkpoints,
            seeds=seeds, dmrg=dmrg, output_dir=output_dir, raw=data,
        )

    @classmethod
    def load(cls, path) -> "Manifest":
        try:
            with open(path) as fh:
                data = yaml.safe_load(fh)
        except FileNotFoundError:
            raise ManifestError(f"manifest file not found: {path}", path=str(path))
        except yaml.YAMLError as exc:
            raise ManifestError(f"manifest is not valid YAML/JSON: {exc}", path=str(path))
        return cls.from_dict(data, path=str(path))

    # -- derived quantities --------------------------------------------------

    def canonical(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "model": self.model,
            "lattice_sizes": list(self.lattice_sizes),
            "truncation": {k: self.truncation[k] for k in sorted(self.truncation)},
            "schedule": {k: (list(v) if isinstance(v, tuple) else v)
                         for k, v in sorted(self.schedule.items())},
            "checkpoints": list(self.checkpoints),
            "seeds": self.seeds,
            "dmrg": {k: self.dmrg[k] for k in sorted(self.dmrg)},
        }

    def hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]

    def model_params(self) -> ModelParams:
        return ModelParams(self.model["hbar"], self.model["g"], self.model["omega0"])

    def dt_for(self, tau_q: float) -> float:
        if self.schedule["dt_policy"] == "fixed-dt":
            return self.schedule["dt"]
        return max(tau_q / self.schedule["ratio"], self.schedule["dt_min"])

    def dmrg_settings(self) -> DmrgSettings:
        return DmrgSettings(
            max_sweeps=self.dmrg["max_sweeps"],
            energy_tol=self.dmrg["energy_tol"],
            local_tol=self.dmrg["local_tol"],
            init_bond=self.dmrg["init_bond"],
            penalty_weight=self.dmrg["penalty_weight"],
            trunc=self.trunc_policy(),
            seed=self.seeds["base"],
        )

    def trunc_policy(self) -> TruncationPolicy:
        return TruncationPolicy(self.truncation["m_max"], self.truncation["weight_tol"])

    def quench_runs(self):
        """Cartesian (tau_q, L) grid of runs, deterministic labels and seeds."""
        params = self.model_params()
        runs = []
        for li, length in enumerate(self.lattice_sizes):
            lattice = LatticeSpec(length, params)
            for ti, tau_q in enumerate(self.schedule["tau_q"]):
                sched = schedule(tau_q, self.dt_for(tau_q),
                                 eps_tilde_c=self.model["eps_tilde_c"])
                runs.append(QuenchRun(
                    lattice=lattice,
                    schedule=sched,
                    d=self.truncation["d"],
                    trunc=self.trunc_policy(),
                    n_rep=self.truncation["n_rep"],
                    omega_ref=self.truncation["omega_ref"],
                    seed=self.seeds["base"] + 1000 * li + ti,
                    checkpoints=self.checkpoints,
                    dmrg=self.dmrg_settings(),
                    label=f"L{length}_tau{tau_q:g}",
                ))
        return runs
