import json
import subprocess
import sys

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from afdstc import __version__
from afdstc.analysis import SerCurve
from afdstc.cli import (
    EXIT_CAPABILITY,
    EXIT_INVALID,
    EXIT_OK,
    build_parser,
    main,
    parse_snr_range,
    preset,
    read_curve_csv,
    resolve_spec,
    snr_at_target,
    spec_from_dict,
    write_curve_csv,
)
from afdstc.errors import ConfigError
from afdstc.network import NetworkConfig, modulation_constants

NET = {"num_relays": 2, "src_antennas": 2, "dst_antennas": 1}


def _write_config(tmp_path, **extra):
    doc = {"network": NET, "schemes": ["opp-relay"], "outputs": ["exact"], "snr_db": "0:5:10"}
    doc.update(extra)
    path = tmp_path / "exp.json"
    path.write_text(json.dumps(doc))
    return path


class TestSnrRange:
    def test_inclusive(self):
        assert parse_snr_range("0:2:30") == tuple(float(x) for x in range(0, 31, 2))
        assert parse_snr_range("0:0.5:1") == (0.0, 0.5, 1.0)

    def test_comma_list(self):
        assert parse_snr_range("3,7.5") == (3.0, 7.5)

    @pytest.mark.parametrize("text", ["a:b:c", "0:0:5", "10:1:5", "1:2"])
    def test_rejects(self, text):
        with pytest.raises(ConfigError, match="snr_db"):
            parse_snr_range(text)


class TestCsv:
    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.tuples(st.floats(-10, 60), st.floats(0, 1), st.floats(0, 1)), min_size=1, max_size=8,
                    unique_by=lambda p: p[0]))
    def test_round_trip(self, tmp_path_factory, pts):
        pts = sorted(pts)
        curve = SerCurve(tuple(pts), "simulated")
        cfg = NetworkConfig(2, 2, 3)
        mod = modulation_constants("MPSK", 4)
        path = write_curve_csv(tmp_path_factory.mktemp("csv") / "c.csv", curve, "full-opp", cfg, mod)
        back, meta = read_curve_csv(path)
        assert meta == {"scheme": "full-opp", "R": 2, "Ns": 2, "Nd": 3, "M": 4, "family": "MPSK"}
        assert back.provenance == curve.provenance
        for (s0, v0, c0), (s1, v1, c1) in zip(curve.points, back.points):
            for x, y in ((s0, s1), (v0, v1), (c0, c1)):
                assert y == pytest.approx(x, rel=1e-11, abs=1e-300)

    def test_rejects_foreign_header(self, tmp_path):
        p = tmp_path / "x.csv"
        p.write_text("a,b\n1,2\n")
        with pytest.raises(ConfigError):
            read_curve_csv(p)


class TestSpec:
    def test_unknown_field_named(self):
        with pytest.raises(ConfigError, match="colour"):
            spec_from_dict({"network": NET, "colour": "red"})

    def test_bad_network_field_named(self):
        with pytest.raises(ConfigError, match="src_antennas"):
            spec_from_dict({"network": {"num_relays": 2, "src_antennas": 9, "dst_antennas": 1}})

    def test_presets(self):
        for name in ("fig2", "fig3", "fig4"):
            spec = spec_from_dict(preset(name), name)
            assert spec.networks and spec.schemes and spec.outputs
        with pytest.raises(ConfigError):
            preset("fig9")

    def test_flags_override_config(self, tmp_path):
        path = _write_config(tmp_path, seed=1, max_trials=5000)
        args = build_parser().parse_args(["--config", str(path), "--seed", "7", "--scheme", "dstc,opp-source",
                                          "--outputs", "simulated", "--snr-db", "1,2"])
        spec = resolve_spec(args)
        assert spec.seed == 7 and spec.max_trials == 5000
        assert [s.value for s in spec.schemes] == ["dstc", "opp-source"]
        assert spec.snr_db_grid == (1.0, 2.0)

    def test_config_overrides_preset(self, tmp_path):
        path = _write_config(tmp_path)
        spec = resolve_spec(build_parser().parse_args(["--preset", "fig2", "--config", str(path)]))
        assert len(spec.networks) == 1 and [s.value for s in spec.schemes] == ["opp-relay"]


class TestSnrAtTarget:
    def test_log_linear(self):
        curve = SerCurve(((0, 1e-1, 0), (10, 1e-3, 0)), "exact")
        assert snr_at_target(curve, 1e-2) == pytest.approx(5.0)
        assert snr_at_target(curve, 1e-5) is None


class TestMain:
    def test_exact_run_writes_files(self, tmp_path):
        out = tmp_path / "out"
        rc = main(["--config", str(_write_config(tmp_path)), "--out", str(out)])
        assert rc == EXIT_OK
        summary = json.loads((out / "summary.json").read_text())
        assert summary["version"] == __version__
        assert summary["spec"]["seed"] == 0
        curve, meta = read_curve_csv(out / "opp-relay_R2_Ns2_Nd1_exact.csv")
        assert list(curve.snr_db) == [0.0, 5.0, 10.0] and meta["scheme"] == "opp-relay"

    def test_simulated_run_records_diversity(self, tmp_path):
        out = tmp_path / "sim"
        rc = main(["--config", str(_write_config(tmp_path)), "--outputs", "simulated,exact", "--scheme", "opp-relay",
                   "--snr-db", "0:4:12", "--trials", "20000", "--min-errors", "100", "--out", str(out)])
        assert rc == EXIT_OK
        summary = json.loads((out / "summary.json").read_text())
        assert {c["output"] for c in summary["curves"]} == {"simulated", "exact"}
        assert all("diversity_order" in c for c in summary["curves"])
        assert (out / "opp-relay_R2_Ns2_Nd1_simulated_ber.csv").exists()

    def test_invalid_field_exit_code(self, tmp_path, capsys):
        rc = main(["--config", str(_write_config(tmp_path, tau=1.5)), "--out", str(tmp_path / "o")])
        assert rc == EXIT_INVALID
        assert "tau" in capsys.readouterr().err

    def test_unknown_scheme_exit_code(self, tmp_path, capsys):
        rc = main(["--config", str(_write_config(tmp_path)), "--scheme", "best", "--out", str(tmp_path / "o")])
        assert rc == EXIT_INVALID
        assert "schemes" in capsys.readouterr().err

    def test_capability_exit_code(self, tmp_path):
        rc = main(["--config", str(_write_config(tmp_path)), "--scheme", "dstc", "--outputs", "exact",
                   "--out", str(tmp_path / "o")])
        assert rc == EXIT_CAPABILITY
        assert not (tmp_path / "o" / "summary.json").exists()

    def test_missing_network(self, tmp_path):
        assert main(["--out", str(tmp_path / "o")]) == EXIT_INVALID

    def test_module_entry_point(self, tmp_path):
        proc = subprocess.run([sys.executable, "-m", "afdstc", "--config", str(_write_config(tmp_path)),
                               "--out", str(tmp_path / "m")], capture_output=True, text=True, timeout=300)
        assert proc.returncode == 0, proc.stderr
