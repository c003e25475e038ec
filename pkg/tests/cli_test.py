import os

import pytest

from corner import cli
from corner.cli import EXIT_FAIL, EXIT_PASS, EXIT_RUNTIME, EXIT_USAGE, main, parse_config


def test_parse_flags():
    config = parse_config(["udist", "--lambda", "0.9", "--rho", "0.1", "--replicas", "40", "--seed", "5",
                           "--threads", "2", "--format", "json", "--resume"])

    assert (config.lam, config.rho) == (0.9, 0.1)
    assert (config.replicas, config.seed, config.threads) == (40, 5, 2)
    assert config.format == "json"
    assert config.resume
    assert config.n == 2000


def test_flags_override_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("lambda = 0.4\nn = 50\nreplicas = 7\n")

    config = parse_config(["direction", "--n", "70", "--config", str(path)])
    assert (config.lam, config.n, config.replicas) == (0.4, 70, 7)

    # a file passed by the caller is used when argv names none
    assert parse_config(["direction"], file=str(path)).n == 50


@pytest.mark.parametrize("argv", (["shape", "--rho", "1.5"],
                                  ["clt", "--lambda", "0.6", "--rho", "0.2"],
                                  ["udist", "--replicas", "5"],
                                  ["direction", "--n", "ten"],
                                  ["bogus"],
                                  []))
def test_usage_errors(argv, tmp_path):
    assert main(argv + (["--out", str(tmp_path)] if argv and argv[0] != "bogus" else [])) == EXIT_USAGE


def test_help():
    assert main(["tasep", "--help"]) == EXIT_PASS


def test_pass(tmp_path):
    out = str(tmp_path)
    code = main(["duality", "--lambda", "0.3", "--rho", "0.6", "--n", "20", "--replicas", "2", "--threads", "1",
                 "--out", out])

    assert code == EXIT_PASS
    assert os.path.exists(os.path.join(out, "report.json"))
    assert os.path.exists(os.path.join(out, "replicas.csv"))


def test_failed_verdict(tmp_path):
    # passage times on a box of side 10 are far below the asymptotic shape
    code = main(["shape", "--n", "10", "--replicas", "5", "--out", str(tmp_path)])

    assert code == EXIT_FAIL


def test_runtime_error(tmp_path, monkeypatch):
    def broken(config):
        raise RuntimeError("out of clocks")

    monkeypatch.setattr(cli, "run_experiment", broken)

    assert main(["tasep", "--out", str(tmp_path)]) == EXIT_RUNTIME
