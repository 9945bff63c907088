import json
import subprocess
import sys

import pytest

from tvdpm.cli import main
from tvdpm.config import ConfigError, build_policy, load_config, validate_config
from tvdpm.smc import WalkUniform
from tvdpm.urn import MixturePolicy, SlidingWindow, UniformDeletion

GOOD_CONFIG = {
    "seed": 7,
    "theta": 3.0,
    "model": {"type": "gaussian_nig", "mu0": 0.0, "kappa0": 0.1, "nu0": 2.0, "lambda0": 1.0},
    "policy": {
        "type": "mixture",
        "alpha": 0.98,
        "a": {"type": "uniform", "rho": "walk"},
        "b": {"type": "size_biased"},
    },
    "inference": {
        "method": "smc",
        "n_particles": 30,
        "proposal": "conjugate",
        "rho_walk": {"a_rho": 1000.0, "rho0": 0.9},
        "grid": {"lo": -8.0, "hi": 8.0, "points": 50},
    },
}


class TestConfig:
    def test_valid_config(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps(GOOD_CONFIG))
        cfg = load_config(p)
        assert cfg.seed == 7 and cfg.method == "smc"

    def test_unknown_key_rejected(self):
        bad = dict(GOOD_CONFIG, extra_key=1)
        with pytest.raises(ConfigError):
            validate_config(bad)

    def test_unknown_nested_key_rejected(self):
        bad = json.loads(json.dumps(GOOD_CONFIG))
        bad["inference"]["mystery"] = True
        with pytest.raises(ConfigError):
            validate_config(bad)

    def test_walk_without_rho_walk_rejected(self):
        from tvdpm.config import build_filter_config

        bad = json.loads(json.dumps(GOOD_CONFIG))
        del bad["inference"]["rho_walk"]
        cfg = validate_config(bad)
        with pytest.raises(ConfigError):
            build_filter_config(cfg)

    def test_build_policy(self):
        pol = build_policy(GOOD_CONFIG["policy"])
        assert isinstance(pol, MixturePolicy)
        assert isinstance(pol.policy_a, WalkUniform)
        assert build_policy({"type": "sliding_window", "r": 3}) == SlidingWindow(3)
        assert build_policy({"type": "uniform", "rho": 0.4}) == UniformDeletion(0.4)


def run_cli(args):
    import io
    from contextlib import redirect_stderr, redirect_stdout

    out = io.StringIO()
    err = io.StringIO()
    with redirect_stdout(out), redirect_stderr(err):
        code = main(args)
    return code, out.getvalue(), err.getvalue()


class TestCli:
    def test_gen_data_line_count_and_determinism(self, tmp_path):
        a = tmp_path / "a.jsonl"
        b = tmp_path / "b.jsonl"
        code, _, _ = run_cli(["gen-data", "--preset", "paper-4.1", "--seed", "3", "--out", str(a)])
        assert code == 0
        run_cli(["gen-data", "--preset", "paper-4.1", "--seed", "3", "--out", str(b)])
        assert a.read_bytes() == b.read_bytes()
        assert len(a.read_text().splitlines()) == 1000

    def test_gen_data_topic(self, tmp_path):
        data = tmp_path / "corpus.jsonl"
        vocab = tmp_path / "vocab.txt"
        code, _, _ = run_cli(
            [
                "gen-data", "--preset", "topic-synthetic", "--seed", "5",
                "--out", str(data), "--vocab-out", str(vocab),
            ]
        )
        assert code == 0
        assert len(vocab.read_text().splitlines()) == 20

    def test_simulate_deterministic(self, tmp_path):
        args = [
            "simulate", "--theta", "1.5", "--policy", '{"type":"uniform","rho":0.7}',
            "--n", "3", "--steps", "5", "--seed", "11",
        ]
        code, out1, _ = run_cli(args)
        assert code == 0
        _, out2, _ = run_cli(args)
        assert out1 == out2
        recs = [json.loads(line) for line in out1.splitlines()]
        assert [r["t"] for r in recs] == [1, 2, 3, 4, 5]

    def test_simulate_bad_policy_is_usage_error(self):
        code, _, err = run_cli(
            ["simulate", "--theta", "1.0", "--policy", '{"type":"nope"}', "--n", "1",
             "--steps", "1", "--seed", "0"]
        )
        assert code == 2

    def test_unknown_subcommand_exits_2(self):
        proc = subprocess.run(
            [sys.executable, "-m", "tvdpm.cli", "frobnicate"], capture_output=True
        )
        assert proc.returncode == 2

    def test_smc_run_and_determinism(self, tmp_path):
        data = tmp_path / "data.jsonl"
        run_cli(["gen-data", "--preset", "paper-4.1-scaled", "--seed", "3", "--out", str(data)])
        # keep only the first 15 steps for speed
        lines = data.read_text().splitlines()[:15]
        data.write_text("\n".join(lines) + "\n")
        cfg_path = tmp_path / "c.json"
        cfg = json.loads(json.dumps(GOOD_CONFIG))
        cfg["data"] = {"path": str(data)}
        cfg_path.write_text(json.dumps(cfg))
        out1 = tmp_path / "o1.jsonl"
        out2 = tmp_path / "o2.jsonl"
        code, _, _ = run_cli(["smc", "--config", str(cfg_path), "--seed", "7", "--out", str(out1)])
        assert code == 0
        run_cli(["smc", "--config", str(cfg_path), "--seed", "7", "--out", str(out2)])
        assert out1.read_bytes() == out2.read_bytes()
        rec = json.loads(out1.read_text().splitlines()[-1])
        assert set(rec) >= {"t", "ess", "n_alive", "rho_post", "density"}
        assert len(rec["density"]["grid"]) == 50

    def test_mcmc_run_with_checkpoints(self, tmp_path):
        data = tmp_path / "corpus.jsonl"
        vocab = tmp_path / "vocab.txt"
        run_cli(
            ["gen-data", "--preset", "topic-synthetic", "--seed", "5",
             "--out", str(data), "--vocab-out", str(vocab)]
        )
        cfg = {
            "seed": 3,
            "theta": 0.5,
            "model": {"type": "topic", "theta_v": 0.5, "vocab_size": 20},
            "policy": {"type": "uniform", "rho": 0.4},
            "inference": {
                "method": "mcmc",
                "rho": 0.4,
                "sweeps": 10,
                "mode": "collapsed",
                "checkpoint_every": 5,
            },
            "data": {"path": str(data), "vocab_path": str(vocab)},
            "output": {"checkpoint_path": str(tmp_path / "ck")},
        }
        cfg_path = tmp_path / "m.json"
        cfg_path.write_text(json.dumps(cfg))
        out = tmp_path / "sweeps.jsonl"
        code, _, _ = run_cli(["mcmc", "--config", str(cfg_path), "--out", str(out)])
        assert code == 0
        recs = [json.loads(line) for line in out.read_text().splitlines()]
        assert len(recs) == 10
        assert set(recs[0]) == {"sweep", "K_alive_per_t", "loglik"}
        assert len(recs[0]["K_alive_per_t"]) == 10
        ck = json.loads((tmp_path / "ck.sweep5.json").read_text())
        assert set(ck) >= {"c", "d", "sweep", "rng_state", "T", "n"}

    def test_correlation_csv(self, tmp_path):
        out = tmp_path / "corr.csv"
        code, _, _ = run_cli(
            ["correlation", "--theta", "3.0", "--rho", "0.9", "--rho", "0.0",
             "--taus", "0,1", "--n-mc", "400", "--burn-in", "20", "--seed", "2",
             "--out", str(out)]
        )
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "tau,correlation,rho,theta"
        assert len(lines) == 5

    def test_validate_quick_exit_zero(self, tmp_path):
        report = tmp_path / "report.json"
        code, out, _ = run_cli(["validate", "--quick", "--seed", "3", "--out", str(report)])
        assert code == 0
        assert "OK" in out
        data = json.loads(report.read_text())
        assert data["passed"] is True
