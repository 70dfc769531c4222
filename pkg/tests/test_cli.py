import io
import json
import subprocess
import sys

import pytest

from ruinlab.cli import run
from ruinlab.paths import load_paths


def call(argv):
    out = io.StringIO()
    code = run(argv, stdout=out)
    return code, (json.loads(out.getvalue()) if code == 0 else None), out.getvalue()


def test_classify_example():
    code, d, _ = call(["classify", "--rho", "-0.5", "--a", "1"])
    assert code == 0
    assert d["regime"].startswith("Case3") and d["A_a"] == -0.5 and d["t_star"] == 1


def test_exact_ruin_example():
    code, d, _ = call(["exact-ruin", "--c", "0", "--u", "1", "--T", "1"])
    assert code == 0 and d["value"] == pytest.approx(0.3173105, abs=5e-8)
    assert d["inputs"] == {"c": 0.0, "u": 1.0, "T": 1.0}


def test_qopt():
    code, d, _ = call(["qopt", "--rho", "-0.8", "--a", "1", "--c2", "1"])
    assert code == 0 and len(d["minimizers"]) == 2 and d["regime"].startswith("Case5")


def test_constant_example_and_cache(tmp_path):
    argv = ["constant", "--kind", "P", "--w1", "1", "--w2", "1", "--s", "0", "--n", "100000", "--seed", "7",
            "--cache-dir", str(tmp_path)]
    code, d, raw = call(argv)
    assert code == 0 and not d["cached"]
    assert abs(d["estimate"] - 2) < 3 * d["stderr"]
    assert d["seed"] == 7 and d["n"] == 100000 and len(d["config_hash"]) == 64 and "dt" in d["config"]
    code, d2, raw2 = call(argv)
    assert d2["cached"] and d2["estimate"] == d["estimate"] and d2["stderr"] == d["stderr"]
    assert "provenance" in d2["details"]
    code, lst, _ = call(["cache", "list", "--cache-dir", str(tmp_path)])
    assert lst["entries"] == [d["config_hash"]]
    code, cl, _ = call(["cache", "clear", "--cache-dir", str(tmp_path)])
    assert cl["removed"] == 1


def test_floats_have_seventeen_digits():
    _, _, raw = call(["exact-ruin", "--c", "1", "--u", "1"])
    assert '"value": 0.09041777356648556' in raw
    _, _, raw = call(["exact-ruin", "--c", "0", "--u", "1"])
    assert json.loads(raw)["value"] == float(format(json.loads(raw)["value"], ".17g"))


@pytest.mark.parametrize(
    "argv",
    [["mc-ratio", "--rho", "0.5", "--a", "0.8", "--c1", "1", "--c2", "1", "--u", "1.5", "--s1", "1", "--s2", "1",
      "--n", "20000", "--steps", "256", "--seed", "3"],
     ["constant", "--kind", "H", "--w1", "1", "--w2", "2", "--s", "0.5", "--n", "5000", "--seed", "2", "--no-cache"],
     ["constant", "--kind", "R", "--rho", "0.5", "--a", "0.8", "--s", "1", "--s2", "1", "--n", "5000", "--no-cache"],
     ["limit", "--rho", "0.9", "--a", "0.5", "--s1", "1", "--n", "5000", "--no-cache"]],
)
def test_replay_is_bit_exact(argv):
    code, d, raw = call(argv)
    assert code == 0
    assert "seed" in d and "n" in d
    code2, d2, raw2 = call(d["replay"]["argv"])
    assert raw2 == raw


def test_stochastic_outputs_carry_provenance():
    _, d, _ = call(["mc-ratio", "--rho", "0.5", "--a", "0.8", "--u", "1.5", "--n", "10000", "--steps", "128"])
    assert d["seed"] == 0 and d["n"] == 10000 and d["n_steps"] == 128 and len(d["config_hash"]) == 64
    _, d, _ = call(["limit", "--rho", "0.5", "--a", "0.8", "--s1", "1", "--s2", "1", "--n", "4000", "--no-cache"])
    assert d["regime"] == "Case1_Supercritical"
    assert all(c["seed"] == 0 and len(c["config_hash"]) == 64 for c in d["constants_used"])
    assert isinstance(d["warnings"], list)


def test_converge_writes_csv(tmp_path):
    out = tmp_path / "c.csv"
    code, d, _ = call(["converge", "--rho", "0.5", "--a", "0.8", "--c1", "1", "--c2", "1", "--s1", "1", "--s2", "1",
                       "--u-list", "1.5,2", "--n", "10000", "--steps", "128", "--limit-n", "4000", "--out", str(out),
                       "--no-cache"])
    assert code == 0 and len(d["rows"]) == 2
    lines = out.read_text().splitlines()
    assert lines[0] == "u,pi_hat,pi_se,s_hat,s_se,ratio,ratio_lo,ratio_hi,limit,regime"
    assert len(lines) == 3


def test_simulate_paths_dump(tmp_path):
    out = tmp_path / "p.bin"
    code, d, _ = call(["simulate-paths", "--rho", "0.3", "--n", "4", "--steps", "8", "--out", str(out)])
    assert code == 0 and d["bytes"] == 24 + 4 * 2 * 9 * 8
    with open(out, "rb") as fh:
        h, n, w1, w2 = load_paths(fh)
    assert (h, n, w1.shape) == (1.0, 8, (4, 9))


@pytest.mark.parametrize(
    "argv,code",
    [(["classify", "--rho", "0", "--a", "1", "--bogus", "1"], 1),
     (["nosuch"], 1),
     (["classify", "--rho", "2", "--a", "1"], 1),
     (["exact-ruin", "--c", "0", "--u", "-1"], 1),
     (["constant", "--kind", "P", "--w1", "1", "--w2", "3", "--n", "1000"], 1),
     (["constant", "--kind", "R", "--s", "0"], 1),
     (["classify", "--rho", "0", "--a", "1", "--force-case", "9"], 1),
     (["limit", "--rho", "0.2", "--a", "0.9", "--force-case", "4", "--n", "1000", "--no-cache"], 2)],
)
def test_exit_codes(argv, code, capsys):
    assert run(argv, stdout=io.StringIO()) == code
    assert capsys.readouterr().err


def test_console_entry_point():
    p = subprocess.run([sys.executable, "-m", "ruinlab", "classify", "--rho", "0.9", "--a", "1"],
                       capture_output=True, text=True, check=False)
    assert p.returncode == 0 and json.loads(p.stdout)["regime"] == "Case1_Supercritical"
    p = subprocess.run([sys.executable, "-m", "ruinlab", "classify", "--rho", "0.9"], capture_output=True, text=True)
    assert p.returncode == 1 and "usage" in p.stderr
