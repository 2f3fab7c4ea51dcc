import numpy as np
import pytest

from corrinv import cli
from corrinv.config import ConfigError, DEFAULT_CONFIG_TEXT, parse_config
from corrinv.csvio import read_csv, write_csv
from corrinv.forward import ExponentialLaw, LinearLaw
from corrinv.geometry import BoundaryTag

FAST_LINES = [
    "mesh.n = 32",
    "continuation.degree = 8",
    "samples.gamma1 = 61",
    "samples.gammad = 81",
]


def write_config(tmp_path, *lines, name="run.cfg"):
    path = tmp_path / name
    path.write_text("\n".join(lines) + "\n")
    return str(path)


def run(args):
    return cli.main(args)


class TestParseConfig:
    def test_empty_text_gives_defaults(self):
        s = parse_config(text="")
        assert s.mesh_n == 64
        assert isinstance(s.model, ExponentialLaw)
        assert s.model_kind == "exponential"
        assert s.noise_eps == 0.0
        assert s.basis_kind == "poly"
        assert s.domain.side_tags[0] == BoundaryTag.GAMMAD

    def test_defaults_text_is_self_consistent(self):
        # the documented default block parses to the same settings as the
        # empty file
        a = parse_config(text=DEFAULT_CONFIG_TEXT)
        b = parse_config(text="")
        for field in ("mesh_n", "model_kind", "noise_eps", "noise_seed",
                      "basis_kind", "basis_degree", "corner_terms",
                      "lift_passes", "mu0", "tau", "gamma1_samples",
                      "gammad_samples", "eta_factor", "trim_factor",
                      "sweep_eps_levels", "sweep_seeds", "check_trials",
                      "check_rho0", "check_center", "check_seed"):
            assert getattr(a, field) == getattr(b, field), field

    def test_exactly_one_source(self):
        with pytest.raises(ValueError):
            parse_config()
        with pytest.raises(ValueError):
            parse_config(path="x", text="")

    def test_unknown_key_with_line(self):
        with pytest.raises(ConfigError, match=r"<config>:2: unknown key"):
            parse_config(text="mesh.n = 32\nmesh.m = 5\n")

    def test_duplicate_key(self):
        with pytest.raises(ConfigError, match="duplicate key"):
            parse_config(text="mesh.n = 32\nmesh.n = 64\n")

    def test_transfer_coefficient_range(self):
        with pytest.raises(ConfigError,
                           match=r"must lie in \(0,1\)"):
            parse_config(text="model.a = 1.5\n")

    def test_requires_grounded_portion(self):
        with pytest.raises(ConfigError):
            parse_config(text="domain.tags = gamma1 gamma2 gamma1 gamma2\n")

    def test_bad_number_names_key_and_line(self):
        with pytest.raises(ConfigError, match=r"<config>:1: mesh.n"):
            parse_config(text="mesh.n = many\n")

    def test_tabulated_model_needs_knots(self):
        with pytest.raises(ConfigError, match="u_knots"):
            parse_config(text="model.kind = tabulated\n")

    def test_linear_model_with_slope(self):
        s = parse_config(text="model.kind = linear\nmodel.slope = 2.5\n")
        assert isinstance(s.model, LinearLaw)
        assert s.model(2.0) == pytest.approx(5.0)

    def test_constant_flux_needs_value(self):
        with pytest.raises(ConfigError, match="flux.value"):
            parse_config(text="flux.kind = constant\n")

    def test_comments_and_blank_lines(self):
        s = parse_config(text="# a comment\n\nmesh.n = 48  # trailing\n")
        assert s.mesh_n == 48

    def test_experiment_config_bridge(self):
        cfg = parse_config(text="").experiment_config()
        assert cfg.mesh_n == 64
        assert cfg.eps_levels == (3e-2, 1e-2, 3e-3, 1e-3)
        assert cfg.corner_terms


class TestPipeline:
    def test_exit_ok_and_outputs(self, tmp_path, capsys):
        cfg = write_config(tmp_path, *FAST_LINES, "noise.eps = 1e-3")
        out = tmp_path / "out"
        assert run(["pipeline", "--config", cfg, "--out", str(out)]) == 0
        for name in ("nodes.csv", "tris.csv", "field.csv", "cauchy.csv",
                     "gamma1.csv", "report.txt", "gamma1_rec.csv",
                     "fitreport.txt", "frec.csv", "segreport.txt",
                     "summary.txt"):
            assert (out / name).exists(), name
        summary = cli._read_report(out / "summary.txt")
        assert float(summary["V_hi"]) > float(summary["V_lo"])
        assert float(summary["sup_error"]) < 0.1
        assert "pipeline: sup error" in capsys.readouterr().out

    def test_reruns_byte_identical(self, tmp_path):
        cfg = write_config(tmp_path, *FAST_LINES, "noise.eps = 1e-3")
        outs = []
        for sub in ("a", "b"):
            out = tmp_path / sub
            assert run(["pipeline", "--config", cfg, "--out", str(out),
                        "--quiet"]) == 0
            outs.append(out)
        names = sorted(p.name for p in outs[0].iterdir())
        assert names == sorted(p.name for p in outs[1].iterdir())
        for name in names:
            assert (outs[0] / name).read_bytes() == \
                (outs[1] / name).read_bytes(), name

    def test_seed_changes_noise(self, tmp_path):
        cfg = write_config(tmp_path, *FAST_LINES, "noise.eps = 1e-2")
        a, b = tmp_path / "a", tmp_path / "b"
        run(["pipeline", "--config", cfg, "--out", str(a), "--quiet"])
        run(["pipeline", "--config", cfg, "--out", str(b), "--quiet",
             "--seed", "5"])
        assert (a / "cauchy.csv").read_bytes() != \
            (b / "cauchy.csv").read_bytes()


class TestStageComposition:
    def test_forward_continue_reconstruct(self, tmp_path):
        cfg = write_config(tmp_path, *FAST_LINES, "noise.eps = 1e-3")
        out = tmp_path / "out"
        assert run(["forward", "--config", cfg, "--out", str(out),
                    "--quiet"]) == 0
        assert (out / "cauchy.csv").exists()
        assert run(["continue", "--config", cfg, "--out", str(out),
                    "--quiet"]) == 0
        assert (out / "gamma1_rec.csv").exists()
        assert run(["reconstruct", "--config", cfg, "--out", str(out),
                    "--quiet"]) == 0
        rec = read_csv(out / "frec.csv")
        assert np.all(np.diff(rec.column("u")) > 0)

    def test_stages_match_pipeline(self, tmp_path):
        cfg = write_config(tmp_path, *FAST_LINES, "noise.eps = 1e-3")
        staged, piped = tmp_path / "staged", tmp_path / "piped"
        for sub in ("forward", "continue", "reconstruct"):
            assert run([sub, "--config", cfg, "--out", str(staged),
                        "--quiet"]) == 0
        assert run(["pipeline", "--config", cfg, "--out", str(piped),
                    "--quiet"]) == 0
        for name in ("cauchy.csv", "gamma1_rec.csv", "frec.csv"):
            assert (staged / name).read_bytes() == \
                (piped / name).read_bytes(), name


class TestExitCodes:
    def test_config_error(self, tmp_path, capsys):
        cfg = write_config(tmp_path, "model.a = 2.0")
        assert run(["pipeline", "--config", cfg, "--out",
                    str(tmp_path / "o")]) == 1
        assert "model.a" in capsys.readouterr().err

    def test_missing_config_file(self, tmp_path, capsys):
        assert run(["pipeline", "--config", str(tmp_path / "nope.cfg"),
                    "--out", str(tmp_path / "o")]) == 1

    def test_negative_seed(self, tmp_path):
        cfg = write_config(tmp_path, *FAST_LINES)
        assert run(["pipeline", "--config", cfg, "--out",
                    str(tmp_path / "o"), "--seed", "-1"]) == 1

    def test_forward_divergence(self, tmp_path, capsys):
        cfg = write_config(
            tmp_path, "mesh.n = 16", "model.lam = 50.0",
            "model.umax = 50.0", "flux.kind = constant",
            "flux.value = 50.0")
        assert run(["pipeline", "--config", cfg, "--out",
                    str(tmp_path / "o")]) == 2
        assert "forward" in capsys.readouterr().err

    def test_under_resolved(self, tmp_path, capsys):
        # declared noise far below the discretization error
        cfg = write_config(tmp_path, *FAST_LINES, "noise.eps = 1e-9")
        assert run(["pipeline", "--config", cfg, "--out",
                    str(tmp_path / "o"), "--quiet"]) == 3
        assert "under-resolved" in capsys.readouterr().err

    def test_empty_recovery_interval(self, tmp_path, capsys):
        # noise of order one swamps the trace oscillation; the trimmed
        # value interval comes out empty
        cfg = write_config(tmp_path, *FAST_LINES, "noise.eps = 2.0")
        assert run(["pipeline", "--config", cfg, "--out",
                    str(tmp_path / "o"), "--quiet"]) == 4

    def test_mismatched_cauchy_data(self, tmp_path, capsys):
        cfg = write_config(tmp_path, *FAST_LINES)
        out = tmp_path / "out"
        assert run(["forward", "--config", cfg, "--out", str(out),
                    "--quiet"]) == 0
        # a taller domain stretches the gamma2 arc length, so the stored
        # sample parameters no longer match
        other = write_config(
            tmp_path, "domain.vertices = 0,0 1,0 1,2 0,2", name="other.cfg")
        assert run(["continue", "--config", other, "--out", str(out),
                    "--quiet"]) == 1
        assert "cauchy.csv" in capsys.readouterr().err


class TestCheckAndSweep:
    def test_check_outputs(self, tmp_path):
        cfg = write_config(tmp_path, *FAST_LINES, "check.trials = 12")
        out = tmp_path / "out"
        assert run(["check", "--config", cfg, "--out", str(out),
                    "--quiet"]) == 0
        taus = read_csv(out / "threespheres.csv").column("tau")
        assert taus.size == 12
        assert np.all(taus > 0)
        summary = cli._read_report(out / "check_summary.txt")
        assert summary["all_positive"] == "true"

    def test_sweep_outputs(self, tmp_path):
        cfg = write_config(
            tmp_path, "mesh.n = 16", "continuation.degree = 6",
            "samples.gamma1 = 41", "samples.gammad = 41",
            "sweep.eps_levels = 1e-2,1e-3,1e-4", "sweep.seeds = 5",
            "oscillation.magnitudes = 0.2,0.4,0.6,0.8")
        out = tmp_path / "out"
        assert run(["sweep", "--config", cfg, "--out", str(out),
                    "--quiet"]) == 0
        stab = read_csv(out / "stability.csv")
        assert stab.column("eps").size == 3
        osc = read_csv(out / "oscillation.csv")
        assert np.all(np.diff(osc.column("osc")) > 0)
        assert (out / "sweep_plot.dat").read_text().startswith("# block 0")


class TestCsvRoundtrip:
    def test_write_read_write_is_stable(self, tmp_path):
        rng = np.random.default_rng(0)
        rows = [(i, rng.uniform(-1e3, 1e3), rng.uniform(1e-12, 1.0))
                for i in range(50)]
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_csv(p1, ["i", "x", "y"], rows)
        table = read_csv(p1)
        write_csv(p2, table.header, table.rows)
        assert p1.read_bytes() == p2.read_bytes()
