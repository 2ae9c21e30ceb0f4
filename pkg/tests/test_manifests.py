"""Manifest loading, validation, and the run-directory layout."""
import dataclasses
import json

import pytest

from qdtp.errors import ConfigurationError
from qdtp.manifests import (
    ExperimentManifest,
    bundled_manifest_names,
    bundled_scenario_names,
    load_manifest,
    resolve_scenario,
    run_manifest,
)

EXPECTED_MANIFESTS = {
    "fig3_no_sqf", "fig3_no_sqf_outliers", "fig7_with_sqf", "fig8_d2_7",
    "fig9_no_sqf_30s", "fig9_with_sqf_30s", "fig9_no_sqf_10s",
    "fig9_with_sqf_10s", "fig10_d3_2", "fig11_sqf_queue",
    "fig12_mitigation", "fig13_mitigation_60s",
}


def tiny_scenario_file(tmp_path):
    body = {
        "normal_sources": [
            {"kind": "burst", "rate": 100.0, "duration": 1.0, "start": 0.0},
        ],
        "attack": None,
        "service_no_attack": {"mode": "constant", "mean": 0.002},
        "service_under_attack": {"mode": "constant", "mean": 0.004},
        "seed": 7,
        "horizon": 1.0,
    }
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(body))
    return str(path)


def tiny_manifest(tmp_path, **overrides):
    kwargs = dict(
        name="tiny",
        scenario=tiny_scenario_file(tmp_path),
        seeds=(1,),
        out="runs/tiny",
        sqf_d_ms=3.0,
    )
    kwargs.update(overrides)
    return ExperimentManifest(**kwargs)


class TestBundledData:
    def test_expected_manifests_present(self):
        assert set(bundled_manifest_names()) == EXPECTED_MANIFESTS

    def test_expected_scenarios_present(self):
        assert set(bundled_scenario_names()) == {
            "no_attack", "flood_60s", "flood_60s_outliers",
            "flood_30s", "flood_10s",
        }

    def test_every_bundled_manifest_loads_and_resolves(self):
        for name in bundled_manifest_names():
            m = load_manifest(name)
            assert m.name == name
            assert m.seeds
            resolve_scenario(m.scenario)

    def test_unknown_manifest_name_rejected(self):
        with pytest.raises(ConfigurationError):
            load_manifest("fig99_nope")

    def test_unknown_scenario_name_rejected(self):
        with pytest.raises(ConfigurationError):
            resolve_scenario("not_a_scenario")

    def test_mitigation_manifests_carry_policy(self):
        assert load_manifest("fig12_mitigation").mitigation == (10, 3)
        assert load_manifest("fig3_no_sqf").mitigation is None


class TestManifestValidation:
    def test_empty_seeds_rejected(self, tmp_path):
        with pytest.raises(ConfigurationError):
            tiny_manifest(tmp_path, seeds=())

    def test_duplicate_seeds_rejected(self, tmp_path):
        with pytest.raises(ConfigurationError):
            tiny_manifest(tmp_path, seeds=(1, 1))

    def test_name_with_separator_rejected(self, tmp_path):
        with pytest.raises(ConfigurationError):
            tiny_manifest(tmp_path, name="a/b")

    def test_mitigation_without_gate_rejected(self, tmp_path):
        with pytest.raises(ConfigurationError):
            tiny_manifest(tmp_path, sqf_d_ms=None, mitigation=(10, 3))

    def test_nonpositive_spacing_rejected(self, tmp_path):
        with pytest.raises(ConfigurationError):
            tiny_manifest(tmp_path, sqf_d_ms=0.0)

    def test_from_dict_accepts_d_us_alias(self):
        m = ExperimentManifest.from_dict({
            "name": "x", "scenario": "no_attack", "seeds": [1],
            "sqf_d_us": 3200,
        })
        assert m.sqf_d_ms == 3.2
        assert m.qdtp_config.d_ns == 3_200_000

    def test_roundtrip_through_dict(self):
        m = load_manifest("fig7_with_sqf")
        assert ExperimentManifest.from_dict(m.to_dict()) == m


class TestRunManifest:
    def test_writes_standard_tree(self, tmp_path):
        m = tiny_manifest(tmp_path)
        dirs = run_manifest(m, base_dir=tmp_path)
        assert [d.name for d in dirs] == ["seed0001"]
        for fname in ("packets.csv", "queues.csv", "summary.json"):
            assert (dirs[0] / fname).is_file()
        marker = tmp_path / "runs" / "tiny" / "manifest.json"
        assert json.loads(marker.read_text()) == m.to_dict()

    def test_one_dir_per_seed(self, tmp_path):
        m = tiny_manifest(tmp_path, seeds=(3, 5))
        dirs, traces = run_manifest(m, base_dir=tmp_path, keep_traces=True)
        assert [d.name for d in dirs] == ["seed0003", "seed0005"]
        assert traces[0].seed == 3 and traces[1].seed == 5
        # burst arrivals are seed-independent but both runs completed
        assert len(traces[0].per_packet) == len(traces[1].per_packet) == 100

    def test_rerun_same_manifest_is_idempotent(self, tmp_path):
        m = tiny_manifest(tmp_path)
        first = (run_manifest(m, base_dir=tmp_path)[0] / "packets.csv").read_bytes()
        second = (run_manifest(m, base_dir=tmp_path)[0] / "packets.csv").read_bytes()
        assert first == second

    def test_same_name_different_settings_collides(self, tmp_path):
        m = tiny_manifest(tmp_path)
        run_manifest(m, base_dir=tmp_path)
        with pytest.raises(ConfigurationError):
            run_manifest(dataclasses.replace(m, sqf_d_ms=2.5), base_dir=tmp_path)

    def test_manifest_seed_overrides_scenario_seed(self, tmp_path):
        scenario_path = tmp_path / "jittered.json"
        scenario_path.write_text(json.dumps({
            "normal_sources": [
                {"kind": "poisson", "rate": 200.0, "duration": 1.0},
            ],
            "attack": None,
            "service_no_attack": {"mode": "constant", "mean": 0.001},
            "service_under_attack": {"mode": "constant", "mean": 0.002},
            "seed": 7,
            "horizon": 1.0,
        }))
        m = ExperimentManifest(name="j", scenario=str(scenario_path),
                               seeds=(11, 12), out="runs/j")
        _, traces = run_manifest(m, base_dir=tmp_path, keep_traces=True)
        a = [r.a_ns for r in traces[0].per_packet]
        b = [r.a_ns for r in traces[1].per_packet]
        assert a != b  # different seeds produce different poisson streams
