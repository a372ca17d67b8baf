import csv
import json
from pathlib import Path

import jsonschema
import numpy as np
import pytest

import boundary_ctrl.propagator as prop
from boundary_ctrl.exceptions import ConfigError
from boundary_ctrl.runner.cli import main
from boundary_ctrl.runner.config import (ExperimentConfig, config_from_mapping, load_config,
                                         parse_state_spec, resolve_state)
from boundary_ctrl.runner.io import format_float, read_binary_trajectory, sha256
from boundary_ctrl.spectral import FourierBasis, build_free_laplacian, eigendecompose

SCHEMA = json.loads((Path(__file__).parents[1] / "docs" / "schema.json").read_text())


def validate(path):
    schema = dict(SCHEMA["$defs"][Path(path).name])
    schema["$defs"] = SCHEMA["$defs"]
    jsonschema.validate(json.loads(Path(path).read_text()), schema)


def write_config(path, **fields):
    lines = ["# test configuration"] + [f"{k} = {v}" for k, v in fields.items()]
    path.write_text("\n".join(lines) + "\n")
    return path


def run(tmp_path, command, name="out", extra=(), **fields):
    cfg = write_config(tmp_path / f"{name}.cfg", **fields)
    out = tmp_path / name
    code = main([command, "--config", str(cfg), "--out", str(out), *extra])
    return code, out


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def check_outputs(out):
    manifest = json.loads((out / "manifest.json").read_text())
    for name, digest in manifest["files"].items():
        assert sha256(out / name) == digest
        if name.endswith(".json"):
            validate(out / name)
        if name.endswith(".csv"):
            assert (out / name).read_text().splitlines()[0][0].isalpha()
    validate(out / "manifest.json")
    validate(out / "timing.json")
    return manifest


class TestConfig:
    def test_key_value_file(self, tmp_path):
        cfg = load_config(write_config(tmp_path / "a.cfg", N=4, a="0.5  # inline comment",
                                       coupling_indices="1, 2", initial="mode:1"))
        assert cfg.N == 4 and cfg.a == 0.5 and cfg.coupling_indices == (1, 2)
        assert cfg.initial == "mode:1" and cfg.l == pytest.approx(2 * np.pi)

    def test_json_file(self, tmp_path):
        p = tmp_path / "a.json"
        p.write_text(json.dumps({"N": 3, "c": 2, "coupling_indices": [0]}))
        cfg = load_config(p)
        assert cfg.N == 3 and cfg.c == 2.0 and cfg.coupling_indices == (0,)

    @pytest.mark.parametrize("field,value", [("c", -1), ("N", 0), ("tolerance", 0), ("tau", float("inf")),
                                             ("rule", "right"), ("fidelity_target", 2.0)])
    def test_field_level_errors(self, field, value):
        with pytest.raises(ConfigError) as info:
            config_from_mapping({field: value})
        assert info.value.field == field and str(info.value).startswith(field)

    def test_unknown_and_unparsable(self, tmp_path):
        with pytest.raises(ConfigError, match="colour"):
            config_from_mapping({"colour": 1})
        with pytest.raises(ConfigError, match="N"):
            load_config(write_config(tmp_path / "b.cfg", N="eight"))
        with pytest.raises(ConfigError):
            load_config(tmp_path / "missing.cfg")

    def test_state_specifiers(self):
        b = FourierBasis.on_interval(1.0, 2)
        spec = eigendecompose(build_free_laplacian(b))
        assert np.array_equal(resolve_state("mode:-1", b, spec), b.mode_vector(-1))
        assert np.array_equal(resolve_state("eigenstate:0", b, spec), spec.eigenstate(0))
        v = resolve_state("vector:1,0,1j,0,0", b, spec)
        assert np.allclose(v, np.array([1, 0, 1j, 0, 0]) / np.sqrt(2))
        for bad in ("mode:3", "eigenstate:5", "vector:1,2", "vector:0,0,0,0,0"):
            with pytest.raises(ConfigError):
                resolve_state(bad, b, spec)
        for bad in ("ground", "orbital:1", "mode:x"):
            with pytest.raises(ConfigError):
                parse_state_spec(bad)

    def test_format_float(self):
        assert format_float(0.1) == "0.10000000000000001"
        assert float(format_float(np.pi)) == np.pi


class TestSpectrum:
    def test_free_first_eigenvalue_zero(self, tmp_path):
        code, out = run(tmp_path, "spectrum", N=4)
        assert code == 0
        rows = read_rows(out / "spectrum.csv")
        assert list(rows[0]) == ["index", "mode", "eigenvalue", "gap"]
        assert abs(float(rows[0]["eigenvalue"])) <= 1e-12 and len(rows) == 9
        check_outputs(out)

    def test_half_flux_second_eigenvalue(self, tmp_path):
        code, out = run(tmp_path, "spectrum", N=8, a=0.5)
        assert code == 0
        assert float(read_rows(out / "spectrum.csv")[1]["eigenvalue"]) == pytest.approx(0.25, abs=1e-12)

    def test_bad_config_exit_code(self, tmp_path, capsys):
        code, _ = run(tmp_path, "spectrum", c=-1)
        assert code == 1
        assert "c: must be > 0" in capsys.readouterr().err


class TestEvolve:
    def test_zero_envelope_constant_populations(self, tmp_path):
        code, out = run(tmp_path, "evolve", N=4, a=0.3, horizon=1.0, tau=0.5)
        assert code == 0
        rows = read_rows(out / "trajectory.csv")
        pops = np.array([[float(r[k]) for k in r if k.startswith("mag_pop")] for r in rows])
        assert np.max(np.abs(pops - pops[0])) <= 1e-12
        check_outputs(out)

    def test_constant_potential_phase(self, tmp_path):
        l, a = 2 * np.pi, 0.3
        vec = ["0"] * 9
        vec[4] = vec[5] = "1"
        state = "vector:" + ",".join(vec)
        code, out = run(tmp_path, "evolve", N=4, a=a, horizon=2.0, tau=0.5, initial=state, target=state)
        assert code == 0
        rows = read_rows(out / "trajectory.csv")
        t = np.array([float(r["t"]) for r in rows])
        lam0, lam1 = a ** 2, (2 * np.pi / l - a) ** 2
        expect = np.cos((lam1 - lam0) * t / 2) ** 2
        assert np.max(np.abs(np.array([float(r["fidelity"]) for r in rows]) - expect)) <= 1e-10

    def test_sawtooth_norm_and_binary(self, tmp_path):
        env = tmp_path / "env.csv"
        env.write_text("window,u\n0,1.5\n1,4.0\n2,0.5\n3,2.5\n")
        code, out = run(tmp_path, "evolve", N=4, a=0.25, tau=0.25, horizon=1.0,
                        extra=("--envelope", str(env), "--binary"))
        assert code == 0
        rows = read_rows(out / "trajectory.csv")
        assert max(abs(float(r["norm"]) - 1) for r in rows) <= 1e-9
        assert max(float(r["residual"]) for r in rows) <= 1e-6
        data = read_binary_trajectory(out / "trajectory.bct1", len(rows[0]))
        assert data.shape[0] == len(rows)
        assert np.array_equal(data[:, 0], [float(r["t"]) for r in rows])
        assert (out / "trajectory.bct1").read_bytes()[:4] == b"BCT1"
        check_outputs(out)

    def test_bad_envelope_file(self, tmp_path):
        env = tmp_path / "env.csv"
        env.write_text("window,v\n0,1\n")
        code, _ = run(tmp_path, "evolve", N=2, extra=("--envelope", str(env)))
        assert code == 1

    def test_non_convergence_exit(self, tmp_path, capsys):
        env = tmp_path / "env.csv"
        env.write_text("window,u\n0,1.5\n1,4.0\n")
        code, _ = run(tmp_path, "evolve", N=4, tau=0.5, horizon=1.0, tolerance=1e-30, max_k=64,
                      extra=("--envelope", str(env)))
        assert code == 3
        assert "last gap" in capsys.readouterr().err


class TestCheck:
    def test_free_laplacian_fails(self, tmp_path):
        code, out = run(tmp_path, "check", N=4)
        assert code == 2
        report = json.loads((out / "check.json").read_text())
        assert report["degenerate_spectrum"] and report["witnesses"]["gaps"][0]["kind"] == "zero_gap"
        check_outputs(out)

    def test_perturbed_passes(self, tmp_path):
        code, out = run(tmp_path, "check", N=16, mu0=1, Q=10000)
        assert code == 0
        report = json.loads((out / "check.json").read_text())
        assert report["passed"] and report["normal"] and report["verdict_kind"] == "screened"

    def test_unit_bound_documented(self, tmp_path):
        code, out = run(tmp_path, "check", N=4, mu0=1, Q=1)
        report = json.loads((out / "check.json").read_text())
        assert code == 0 and any("vacuous" in n for n in report["witnesses"]["notes"])


SMALL = dict(N=2, a=0.25, mu0=1, c=5, tau=0.25, horizon=8, fidelity_target=0.9)


class TestSynthesize:
    def test_identity_target(self, tmp_path):
        code, out = run(tmp_path, "synthesize", **{**SMALL, "target": "eigenstate:0"})
        assert code == 0
        s = json.loads((out / "synthesis.json").read_text())
        assert s["fidelity"] >= 1 - 1e-9 and s["windows"] == 0
        assert read_rows(out / "control.csv") == []
        check_outputs(out)

    def test_zero_budget_not_converged(self, tmp_path):
        code, out = run(tmp_path, "synthesize", **{**SMALL, "horizon": 0})
        assert code == 3
        s = json.loads((out / "synthesis.json").read_text())
        assert not s["converged"] and s["fidelity"] == pytest.approx(0.0, abs=1e-20)
        check_outputs(out)

    def test_small_system_and_determinism(self, tmp_path):
        code1, out1 = run(tmp_path, "synthesize", name="one", **SMALL)
        code2, out2 = run(tmp_path, "synthesize", name="two", **SMALL)
        assert code1 == code2 == 0
        m1, m2 = check_outputs(out1), check_outputs(out2)
        assert m1["files"] == m2["files"]
        assert (out1 / "manifest.json").read_bytes() == (out2 / "manifest.json").read_bytes()
        s = json.loads((out1 / "synthesis.json").read_text())
        assert s["fidelity"] >= 0.9 and s["converged"]
        env = read_rows(out1 / "envelope.csv")
        assert len(env) == 64 * s["windows"]
        assert max(abs(float(r["A"]) - 0.25) for r in env) <= 5 * 0.25

    def test_screen_failure_exit(self, tmp_path):
        code, _ = run(tmp_path, "synthesize", **{**SMALL, "mu0": 0})
        assert code == 2


class TestCertify:
    def test_identical_pairs(self, tmp_path):
        code, out = run(tmp_path, "certify", N=4, trials=3, noise=0)
        assert code == 0
        rows = read_rows(out / "certify.csv")
        assert all(float(r["bound"]) == 0 and float(r["measured"]) == 0 for r in rows)
        check_outputs(out)

    def test_seeded_batch(self, tmp_path):
        code, out = run(tmp_path, "certify", N=4, trials=3)
        assert code == 0
        assert all(float(r["margin"]) >= -1e-8 for r in read_rows(out / "certify.csv"))

    def test_corrupted_propagator(self, tmp_path, monkeypatch, capsys):
        real = prop._propagate_vectors
        calls = []

        def corrupted(path, k, vecs, rule="left"):
            calls.append(path)
            out = real(path, k, vecs, rule)
            return out * 1.5 if len(calls) % 2 == 0 else out

        monkeypatch.setattr(prop, "_propagate_vectors", corrupted)
        code, out = run(tmp_path, "certify", N=4, trials=2)
        assert code == 4
        assert "violates the bound" in capsys.readouterr().err
        summary = json.loads((out / "certify.json").read_text())
        assert not summary["all_certified"] and summary["worst_margin"] < 0
        check_outputs(out)

    def test_seed_override_changes_trials(self, tmp_path):
        _, out1 = run(tmp_path, "certify", name="a", N=2, trials=2)
        _, out2 = run(tmp_path, "certify", name="b", N=2, trials=2, extra=("--seed", "7"))
        assert (out1 / "certify.csv").read_bytes() != (out2 / "certify.csv").read_bytes()
        assert json.loads((out2 / "manifest.json").read_text())["config"]["seed"] == 7
