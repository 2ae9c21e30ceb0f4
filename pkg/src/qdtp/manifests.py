"""Experiment manifests: named, seeded, reproducible simulation runs.

A manifest ties a scenario to a gate configuration and a seed list and
says where the artifacts go.  The package bundles one manifest per
reference experiment (see ``qdtp.manifests.bundled_manifest_names``);
running any of them on a clean checkout reproduces the same CSV output
byte for byte.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

from .artifacts import write_run_dir
from .errors import ConfigurationError
from .mitigation import MitigationPolicy
from .recursions import QdtpConfig
from .scenario import Scenario
from .simulator import TraceSeries, simulate, verify_trace
from .timebase import NS_PER_MS

__all__ = [
    "ExperimentManifest",
    "bundled_manifest_names",
    "bundled_scenario_names",
    "load_manifest",
    "resolve_scenario",
    "run_manifest",
]


def _data_dir(kind: str):
    # single-argument joinpath: the multi-arg form needs Python >= 3.12
    return resources.files("qdtp").joinpath("data").joinpath(kind)


def bundled_scenario_names() -> list[str]:
    return sorted(p.name[:-5] for p in _data_dir("scenarios").iterdir()
                  if p.name.endswith(".json"))


def bundled_manifest_names() -> list[str]:
    return sorted(p.name[:-5] for p in _data_dir("manifests").iterdir()
                  if p.name.endswith(".json"))


@dataclass(frozen=True)
class ExperimentManifest:
    """One named experiment: scenario + gate settings + seeds + output dir."""

    name: str
    scenario: str
    seeds: tuple[int, ...]
    out: str
    sqf_d_ms: Optional[float] = None
    mitigation: Optional[tuple[int, int]] = None
    sampling_interval_ms: float = 100.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if not self.name or "/" in self.name or "\\" in self.name:
            raise ConfigurationError(f"bad manifest name {self.name!r}")
        if not self.seeds:
            raise ConfigurationError("manifest needs at least one seed")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigurationError("duplicate seeds in manifest")
        if self.sqf_d_ms is not None and self.sqf_d_ms <= 0:
            raise ConfigurationError("sqf_d_ms must be positive")
        if self.mitigation is not None:
            if self.sqf_d_ms is None:
                raise ConfigurationError("mitigation requires an sqf gate")
            pol = MitigationPolicy.coerce(self.mitigation)
            object.__setattr__(self, "mitigation", (pol.n_threshold, pol.k_factor))
        if self.sampling_interval_ms <= 0:
            raise ConfigurationError("sampling interval must be positive")

    @property
    def qdtp_config(self) -> Optional[QdtpConfig]:
        if self.sqf_d_ms is None:
            return None
        return QdtpConfig(d_ns=round(self.sqf_d_ms * NS_PER_MS))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "scenario": self.scenario,
            "sqf_d_ms": self.sqf_d_ms,
            "mitigation": list(self.mitigation) if self.mitigation else None,
            "seeds": list(self.seeds),
            "out": self.out,
            "sampling_interval_ms": self.sampling_interval_ms,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentManifest":
        if not isinstance(raw, dict):
            raise ConfigurationError("manifest must be a JSON object")
        d_ms = raw.get("sqf_d_ms")
        if d_ms is None and raw.get("sqf_d_us") is not None:
            d_ms = raw["sqf_d_us"] / 1000.0
        mit = raw.get("mitigation")
        try:
            return cls(
                name=raw["name"],
                scenario=raw["scenario"],
                seeds=tuple(raw["seeds"]),
                out=raw.get("out", f"runs/{raw['name']}"),
                sqf_d_ms=d_ms,
                mitigation=tuple(mit) if mit else None,
                sampling_interval_ms=float(raw.get("sampling_interval_ms", 100.0)),
            )
        except KeyError as exc:
            raise ConfigurationError(f"manifest missing field {exc}") from exc
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"bad manifest field: {exc}") from exc


def load_manifest(ref: str) -> ExperimentManifest:
    """Load a manifest by bundled name or file path."""
    bundled = _data_dir("manifests").joinpath(f"{ref}.json")
    if "/" not in str(ref) and "\\" not in str(ref) and bundled.is_file():
        raw_text = bundled.read_text(encoding="utf-8")
    else:
        path = Path(ref)
        if not path.is_file():
            raise ConfigurationError(
                f"no manifest named {ref!r}; bundled: {', '.join(bundled_manifest_names())}"
            )
        raw_text = path.read_text(encoding="utf-8")
    try:
        raw = json.loads(raw_text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{ref}: not valid JSON ({exc})") from exc
    return ExperimentManifest.from_dict(raw)


def resolve_scenario(ref: str) -> Scenario:
    """Load a scenario by bundled name or file path."""
    bundled = _data_dir("scenarios").joinpath(f"{ref}.json")
    if "/" not in str(ref) and "\\" not in str(ref) and bundled.is_file():
        try:
            raw = json.loads(bundled.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:  # pragma: no cover - ships valid
            raise ConfigurationError(f"{ref}: not valid JSON ({exc})") from exc
        return Scenario.from_dict(raw)
    path = Path(ref)
    if not path.is_file():
        raise ConfigurationError(
            f"no scenario named {ref!r}; bundled: {', '.join(bundled_scenario_names())}"
        )
    return Scenario.from_json_file(path)


def _check_name_collision(run_root: Path, manifest: ExperimentManifest) -> None:
    marker = run_root / "manifest.json"
    if marker.is_file():
        try:
            existing = json.loads(marker.read_text(encoding="utf-8"))
        except json.JSONDecodeError:
            existing = None
        if existing is not None and existing != manifest.to_dict():
            raise ConfigurationError(
                f"output {run_root} already holds a different manifest "
                f"named {manifest.name!r}"
            )


def run_manifest(manifest: ExperimentManifest, base_dir=".",
                 keep_traces: bool = False):
    """Execute every seed of a manifest and write its artifact tree.

    Layout: ``<base>/<out>/seed<N>/{packets.csv,queues.csv,summary.json}``
    plus a ``manifest.json`` marker at the top.  Every trace is verified
    against the closed-form recursions before anything is written; a
    mismatch raises InvariantViolation and leaves no partial seed dir
    behind.  Returns the list of seed directories, or ``(dirs, traces)``
    when ``keep_traces`` is set.
    """
    scenario = resolve_scenario(manifest.scenario)
    run_root = Path(base_dir) / manifest.out
    run_root.mkdir(parents=True, exist_ok=True)
    _check_name_collision(run_root, manifest)

    seed_dirs: list[Path] = []
    traces: list[TraceSeries] = []
    for seed in manifest.seeds:
        trace = simulate(
            dataclasses.replace(scenario, seed=seed),
            manifest.qdtp_config,
            manifest.mitigation,
            sampling_interval=manifest.sampling_interval_ms / 1000.0,
        )
        verify_trace(trace)
        seed_dir = run_root / f"seed{seed:04d}"
        seed_dir.mkdir(parents=True, exist_ok=True)
        write_run_dir(trace, seed_dir)
        seed_dirs.append(seed_dir)
        if keep_traces:
            traces.append(trace)

    with open(run_root / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest.to_dict(), fh, indent=2)
        fh.write("\n")
    return (seed_dirs, traces) if keep_traces else seed_dirs
