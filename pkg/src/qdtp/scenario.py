"""Workload descriptions: traffic sources, service-time models, scenarios.

A scenario bundles a handful of benign periodic/poisson sources, an optional
flood source, and two service-time models -- one for normal operation and one
for the degraded behaviour the device falls into while its input queue is
congested.  Generation is fully deterministic: the scenario seed feeds a
master RNG that hands out one child seed per source (in a fixed order), so
the same scenario always produces byte-identical traces.
"""
from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass
from typing import Optional, Sequence

from .errors import ConfigurationError, ContractViolation
from .recursions import ArrivalSequence, ServiceSequence
from .timebase import s_to_ns

__all__ = [
    "ServiceModel",
    "TrafficModel",
    "Scenario",
    "LabeledArrivals",
    "ServiceSampler",
    "generate_arrivals",
    "sample_services",
]

SERVICE_MODES = ("constant", "gaussian", "gaussian_with_outliers")
TRAFFIC_KINDS = ("periodic", "poisson", "burst")

# Sampled processing times are clamped to at least one microsecond; a
# gaussian tail can otherwise produce zero or negative durations.
MIN_SERVICE_NS = 1_000


@dataclass(frozen=True)
class ServiceModel:
    """Distribution of per-packet processing time, in seconds.

    ``variance`` is in seconds squared.  In ``gaussian_with_outliers`` mode a
    packet becomes an outlier with ``outlier_probability`` and then takes
    ``outlier_scale * mean`` instead of a gaussian draw, mimicking the rare
    huge stalls real devices exhibit.
    """

    mode: str
    mean: float
    variance: float = 0.0
    outlier_probability: float = 0.0
    outlier_scale: float = 1000.0

    def __post_init__(self) -> None:
        if self.mode not in SERVICE_MODES:
            raise ConfigurationError(f"unknown service mode {self.mode!r}")
        if self.mean <= 0:
            raise ConfigurationError("service mean must be positive")
        if self.variance < 0:
            raise ConfigurationError("service variance cannot be negative")
        if not 0.0 <= self.outlier_probability <= 1.0:
            raise ConfigurationError("outlier probability must be in [0, 1]")
        if self.outlier_scale < 1.0:
            raise ConfigurationError("outlier scale must be at least 1")

    def draw_ns(self, u: float, g: float) -> int:
        """Map one uniform and one standard-normal variate to a duration.

        Every draw consumes exactly one of each regardless of mode, which
        keeps RNG streams aligned between runs that differ only in which
        model is active at a given packet.
        """
        if self.mode == "constant":
            value = self.mean
        elif self.mode == "gaussian":
            value = self.mean + math.sqrt(self.variance) * g
        else:
            if u < self.outlier_probability:
                value = self.mean * self.outlier_scale
            else:
                value = self.mean + math.sqrt(self.variance) * g
        ns = s_to_ns(value)
        return ns if ns >= MIN_SERVICE_NS else MIN_SERVICE_NS

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "mean": self.mean,
            "variance": self.variance,
            "outlier_probability": self.outlier_probability,
            "outlier_scale": self.outlier_scale,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "ServiceModel":
        try:
            return cls(
                mode=raw["mode"],
                mean=raw["mean"],
                variance=raw.get("variance", 0.0),
                outlier_probability=raw.get("outlier_probability", 0.0),
                outlier_scale=raw.get("outlier_scale", 1000.0),
            )
        except KeyError as exc:
            raise ConfigurationError(f"service model missing field {exc}") from exc


@dataclass(frozen=True)
class TrafficModel:
    """One packet source, active on ``[start, start + duration]`` seconds.

    * ``periodic``: a packet every ``1/rate`` seconds, optionally dithered
      by +-``jitter/2`` (clamped so packets stay inside the active window).
    * ``poisson``: exponential inter-arrival gaps with the given rate.
    * ``burst``: ``round(rate * duration)`` packets all at ``start`` -- the
      worst case a shaping gate can face.
    """

    kind: str
    rate: float
    duration: float
    start: float = 0.0
    jitter: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in TRAFFIC_KINDS:
            raise ConfigurationError(f"unknown traffic kind {self.kind!r}")
        if self.rate <= 0:
            raise ConfigurationError("rate must be positive")
        if self.duration <= 0:
            raise ConfigurationError("duration must be positive")
        if self.start < 0:
            raise ConfigurationError("start cannot be negative")
        if self.jitter < 0:
            raise ConfigurationError("jitter cannot be negative")

    @property
    def end(self) -> float:
        return self.start + self.duration

    def generate_ns(self, rng: random.Random) -> list[int]:
        """Arrival instants in nanoseconds, sorted."""
        start_ns = s_to_ns(self.start)
        end_ns = s_to_ns(self.start + self.duration)
        out: list[int] = []
        if self.kind == "burst":
            count = round(self.rate * self.duration)
            return [start_ns] * count
        if self.kind == "periodic":
            period_ns = 1e9 / self.rate
            half_jitter_ns = s_to_ns(self.jitter) // 2
            k = 0
            while True:
                base = start_ns + round(k * period_ns)
                if base >= end_ns:
                    break
                t = base
                if half_jitter_ns:
                    t += rng.randint(-half_jitter_ns, half_jitter_ns)
                    if t < start_ns:
                        t = start_ns
                    elif t > end_ns:
                        t = end_ns
                out.append(t)
                k += 1
            out.sort()
            return out
        # poisson
        t = self.start
        while True:
            t += rng.expovariate(self.rate)
            if t >= self.start + self.duration:
                break
            out.append(s_to_ns(t))
        return out

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "rate": self.rate,
            "jitter": self.jitter,
            "start": self.start,
            "duration": self.duration,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "TrafficModel":
        try:
            return cls(
                kind=raw["kind"],
                rate=raw["rate"],
                duration=raw["duration"],
                start=raw.get("start", 0.0),
                jitter=raw.get("jitter", 0.0),
            )
        except KeyError as exc:
            raise ConfigurationError(f"traffic model missing field {exc}") from exc


@dataclass(frozen=True)
class Scenario:
    """A complete reproducible experiment input."""

    normal_sources: tuple[TrafficModel, ...]
    service_no_attack: ServiceModel
    service_under_attack: ServiceModel
    seed: int
    horizon: float
    attack: Optional[TrafficModel] = None
    attack_labels: bool = True
    # The device switches to the degraded service model while more packets
    # than this are sitting in (or being processed by) its input queue.
    congestion_threshold: int = 100

    def __post_init__(self) -> None:
        object.__setattr__(self, "normal_sources", tuple(self.normal_sources))
        if self.horizon <= 0:
            raise ConfigurationError("horizon must be positive")
        if self.congestion_threshold < 1:
            raise ConfigurationError("congestion threshold must be at least 1")
        for src in self._all_sources():
            if src.end > self.horizon + 1e-12:
                raise ConfigurationError(
                    f"source active until {src.end} s exceeds horizon {self.horizon} s"
                )

    def _all_sources(self) -> list[TrafficModel]:
        srcs = list(self.normal_sources)
        if self.attack is not None:
            srcs.append(self.attack)
        return srcs

    @property
    def attack_window_ns(self) -> Optional[tuple[int, int]]:
        if self.attack is None:
            return None
        return (s_to_ns(self.attack.start), s_to_ns(self.attack.end))

    def to_dict(self) -> dict:
        return {
            "normal_sources": [s.to_dict() for s in self.normal_sources],
            "attack": self.attack.to_dict() if self.attack else None,
            "service_no_attack": self.service_no_attack.to_dict(),
            "service_under_attack": self.service_under_attack.to_dict(),
            "seed": self.seed,
            "horizon": self.horizon,
            "attack_labels": self.attack_labels,
            "congestion_threshold": self.congestion_threshold,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "Scenario":
        if not isinstance(raw, dict):
            raise ConfigurationError("scenario must be a JSON object")
        try:
            sources = raw["normal_sources"]
            if not isinstance(sources, list):
                raise ConfigurationError("normal_sources must be a list")
            attack_raw = raw.get("attack")
            return cls(
                normal_sources=tuple(TrafficModel.from_dict(s) for s in sources),
                attack=TrafficModel.from_dict(attack_raw) if attack_raw else None,
                service_no_attack=ServiceModel.from_dict(raw["service_no_attack"]),
                service_under_attack=ServiceModel.from_dict(raw["service_under_attack"]),
                seed=int(raw["seed"]),
                horizon=float(raw["horizon"]),
                attack_labels=bool(raw.get("attack_labels", True)),
                congestion_threshold=int(raw.get("congestion_threshold", 100)),
            )
        except KeyError as exc:
            raise ConfigurationError(f"scenario missing field {exc}") from exc
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"bad scenario field: {exc}") from exc

    @classmethod
    def from_json_file(cls, path) -> "Scenario":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: not valid JSON ({exc})") from exc
        return cls.from_dict(raw)

    def to_json_file(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")


@dataclass(frozen=True)
class LabeledArrivals:
    """Merged arrival stream with per-packet provenance."""

    arrivals: ArrivalSequence
    source_ids: tuple[int, ...]
    is_attack: tuple[bool, ...]

    def __post_init__(self) -> None:
        if not (len(self.arrivals) == len(self.source_ids) == len(self.is_attack)):
            raise ContractViolation("labeled arrival columns differ in length")

    def __len__(self) -> int:
        return len(self.arrivals)


def _child_seeds(scenario: Scenario) -> tuple[list[int], int, int]:
    """Per-source child seeds, derived in a fixed order from the master seed.

    The attack seed is drawn even when no attack is configured so that
    adding or removing the flood never shifts the benign sources' streams.
    """
    master = random.Random(scenario.seed)
    source_seeds = [master.getrandbits(63) for _ in scenario.normal_sources]
    attack_seed = master.getrandbits(63)
    service_seed = master.getrandbits(63)
    return source_seeds, attack_seed, service_seed


def generate_arrivals(scenario: Scenario) -> LabeledArrivals:
    """Generate and merge all sources of a scenario.

    Packets are tagged with the index of their source (the attack source,
    when present, comes last).  The merge is a stable sort on arrival time,
    so simultaneous packets keep source order.  Attack packets carry the
    attack flag only when the scenario says labels are available.
    """
    source_seeds, attack_seed, _ = _child_seeds(scenario)
    tagged: list[tuple[int, int, bool]] = []
    for idx, src in enumerate(scenario.normal_sources):
        rng = random.Random(source_seeds[idx])
        for t in src.generate_ns(rng):
            tagged.append((t, idx, False))
    if scenario.attack is not None:
        rng = random.Random(attack_seed)
        attack_id = len(scenario.normal_sources)
        flag = scenario.attack_labels
        for t in scenario.attack.generate_ns(rng):
            tagged.append((t, attack_id, flag))
    tagged.sort(key=lambda item: item[0])
    return LabeledArrivals(
        arrivals=ArrivalSequence(tuple(t for t, _, _ in tagged)),
        source_ids=tuple(s for _, s, _ in tagged),
        is_attack=tuple(f for _, _, f in tagged),
    )


class ServiceSampler:
    """Deterministic stream of per-packet processing times.

    Call :meth:`draw_ns` once per served packet, passing whether the device
    was congested at that moment; the appropriate model is applied to the
    next pair of variates.  Because each draw consumes exactly two variates,
    a run can be replayed from its recorded congestion flags and will
    reproduce the identical durations.
    """

    def __init__(self, scenario: Scenario):
        _, _, service_seed = _child_seeds(scenario)
        self._rng = random.Random(service_seed)
        self._normal = scenario.service_no_attack
        self._degraded = scenario.service_under_attack

    def draw_ns(self, congested: bool) -> int:
        u = self._rng.random()
        g = self._rng.gauss(0.0, 1.0)
        model = self._degraded if congested else self._normal
        return model.draw_ns(u, g)


def sample_services(scenario: Scenario, labels: Sequence[bool]) -> ServiceSequence:
    """Service durations for a sequence of congestion labels.

    ``labels[i]`` says whether packet ``i`` met a congested device; the
    matching model is sampled for it.  Feeding back the flags recorded by a
    simulation run reproduces the run's exact durations.
    """
    if len(labels) == 0:
        raise ContractViolation("need at least one label")
    sampler = ServiceSampler(scenario)
    return ServiceSequence(tuple(sampler.draw_ns(bool(x)) for x in labels))
