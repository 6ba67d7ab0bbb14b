import json
import math

import numpy as np
import pytest

from qpmkit import __version__
from qpmkit.cli import load_points, main
from qpmkit.errors import NonFiniteInput, ParseError
from qpmkit.measures import DiscreteMeasure, PointSet


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, json.loads(out)


def test_load_points_plain(tmp_path):
    ps = load_points(write(tmp_path / "a.csv", "0,0\n1,0\n"))
    assert isinstance(ps, PointSet)
    np.testing.assert_array_equal(ps.data, [[0, 0], [1, 0]])


def test_load_points_header_and_blank_lines(tmp_path):
    ps = load_points(write(tmp_path / "a.csv", "x,y\n0,0\n\n1,2\n"), skip_header=True)
    assert ps.n_samples == 2


def test_load_points_ragged(tmp_path):
    with pytest.raises(ParseError) as info:
        load_points(write(tmp_path / "a.csv", "0,0\n1,0\n1\n2,2\n"))
    assert info.value.row == 3


def test_load_points_bad_number(tmp_path):
    with pytest.raises(ParseError) as info:
        load_points(write(tmp_path / "a.csv", "0,0\n1,abc\n"))
    assert (info.value.row, info.value.column) == (2, 2)


def test_load_points_nonfinite(tmp_path):
    with pytest.raises(NonFiniteInput):
        load_points(write(tmp_path / "a.csv", "0,nan\n"))


def test_load_points_weights(tmp_path):
    m = load_points(write(tmp_path / "a.csv", "0,0.25\n1,0.75\n"), weight_column=True)
    assert isinstance(m, DiscreteMeasure)
    np.testing.assert_array_equal(m.weights, [0.25, 0.75])


@pytest.fixture
def pair(tmp_path):
    return write(tmp_path / "a.csv", "0\n"), write(tmp_path / "b.csv", "1\n")


def test_distance_point_masses(pair, capsys):
    a, b = pair
    code, doc = run(capsys, "distance", "--a", a, "--b", b, "--statistic", "qpm",
                    "--kernel", "gaussian", "--length-scale", "1", "--sqrt-kernel", "on")
    assert code == 0
    assert doc["value"] == pytest.approx(math.sqrt(1 - math.exp(-1)), abs=1e-15)
    assert len(doc["eigenvalues"]) == 2
    assert doc["tool"] == "qpmkit" and doc["version"] == __version__
    assert doc["seed"] == 0 and doc["config"]["length_scale"] == 1.0
    assert doc["epsilon_used"] == 0.0


def test_distance_mmd_and_isometric(pair, capsys):
    a, b = pair
    _, mmd = run(capsys, "distance", "--a", a, "--b", b, "--statistic", "mmd", "--sigma", "1")
    assert mmd["value"] == pytest.approx(math.sqrt(2 - 2 * math.exp(-0.5)), abs=1e-15)
    assert "eigenvalues" not in mmd
    _, iso = run(capsys, "distance", "--a", a, "--b", b, "--length-scale", "1", "--isometric", "on")
    assert iso["value"] == pytest.approx(math.sqrt(2 * (1 - math.exp(-1))), abs=1e-15)


def test_distance_identical_files(pair, capsys):
    a, _ = pair
    code, doc = run(capsys, "distance", "--a", a, "--b", a, "--length-scale", "1")
    assert code == 0 and doc["value"] == 0.0


def test_mixture_with_sqrt_kernel_is_an_error(pair, capsys):
    a, b = pair
    code, doc = run(capsys, "distance", "--a", a, "--b", b, "--kernel", "mixture")
    assert code != 0
    assert doc["error"]["type"] == "SqrtKernelUnavailable"
    code, doc = run(capsys, "distance", "--a", a, "--b", b, "--kernel", "mixture", "--sqrt-kernel", "off")
    assert code == 0 and 0 < doc["value"] < 1


def test_parse_error_reports_location(tmp_path, pair, capsys):
    _, b = pair
    bad = write(tmp_path / "bad.csv", "0,1\n2\n")
    code, doc = run(capsys, "distance", "--a", bad, "--b", b, "--length-scale", "1")
    assert code != 0
    assert doc["error"]["type"] == "ParseError" and doc["error"]["row"] == 2


def test_missing_file(pair, capsys):
    _, b = pair
    code, doc = run(capsys, "distance", "--a", "/nonexistent.csv", "--b", b, "--length-scale", "1")
    assert code != 0 and doc["error"]["type"] == "FileNotFoundError"


def test_gaussian_needs_a_scale(pair, capsys):
    a, b = pair
    code, doc = run(capsys, "distance", "--a", a, "--b", b)
    assert code != 0 and "length-scale" in doc["error"]["message"]


def test_auto_kernel_is_median_rule(tmp_path, capsys):
    a = write(tmp_path / "a.csv", "0\n2\n")
    b = write(tmp_path / "b.csv", "4\n")
    code, doc = run(capsys, "distance", "--a", a, "--b", b, "--kernel", "auto")
    assert code == 0
    # pairwise distances {2, 4, 2}: median 2, half of it 1, lambda = 1
    assert doc["kernel"] == {"family": "gaussian", "length_scale": 1.0}
    assert "median" in doc["kernel_resolution"]["rule"]
    err = capsys.readouterr().err
    assert err == "" or "length_scale" in err


def test_weights_column(tmp_path, capsys):
    a = write(tmp_path / "a.csv", "0,0.25\n1,0.75\n")
    b = write(tmp_path / "b.csv", "1,1\n")
    code, doc = run(capsys, "distance", "--a", a, "--b", b, "--weights-last-column",
                    "--statistic", "mmd", "--length-scale", "1")
    # mass 0.25 at 0 against 1: MMD = 0.25 * sqrt(2 - 2/e)
    assert doc["value"] == pytest.approx(0.25 * math.sqrt(2 - 2 * math.exp(-1)), abs=1e-15)


def test_distance_is_reproducible_from_echoed_config(tmp_path, capsys):
    rng = np.random.default_rng(0)
    np.savetxt(tmp_path / "x.csv", rng.normal(size=(10, 3)), delimiter=",")
    np.savetxt(tmp_path / "y.csv", rng.normal(size=(8, 3)), delimiter=",")
    args = ["distance", "--a", str(tmp_path / "x.csv"), "--b", str(tmp_path / "y.csv"),
            "--kernel", "imq", "--length-scale", "2", "--alpha", "0.5"]
    _, first = run(capsys, *args)
    cfg = first["config"]
    replay = ["distance", "--a", cfg["a"], "--b", cfg["b"], "--kernel", cfg["kernel"],
              "--length-scale", repr(cfg["length_scale"]), "--alpha", repr(cfg["alpha"])]
    _, second = run(capsys, *replay)
    assert second["value"] == first["value"]
    assert second["eigenvalues"] == first["eigenvalues"]


@pytest.fixture
def separated(tmp_path):
    rng = np.random.default_rng(2)
    np.savetxt(tmp_path / "x.csv", rng.normal(size=(25, 2)), delimiter=",")
    np.savetxt(tmp_path / "y.csv", rng.normal(size=(25, 2)) + 10, delimiter=",")
    return str(tmp_path / "x.csv"), str(tmp_path / "y.csv")


def test_test_command_separated(separated, capsys):
    a, b = separated
    code, doc = run(capsys, "test", "--a", a, "--b", b, "--statistic", "mmd", "--kernel", "auto",
                    "--permutations", "999", "--seed", "4")
    assert code == 0
    assert doc["r"] == 0 and doc["p_value"] == 0.001
    assert doc["n_perm"] == 999 and doc["seed"] == 4
    assert sum(doc["permutation_summary"]["counts"]) == 999


def test_test_command_identical(separated, capsys):
    a, _ = separated
    code, doc = run(capsys, "test", "--a", a, "--b", a, "--statistic", "qpm", "--length-scale", "2",
                    "--permutations", "50")
    assert code == 0 and doc["p_value"] >= 1 / 51


def test_test_command_jobs_do_not_change_result(separated, capsys):
    a, b = separated
    base = ["test", "--a", a, "--b", b, "--statistic", "qpm", "--length-scale", "50",
            "--permutations", "30"]
    _, one = run(capsys, *base)
    _, four = run(capsys, *base, "--jobs", "4")
    assert one["p_value"] == four["p_value"]
    assert one["permutation_summary"] == four["permutation_summary"]


def test_bench_csv_matches_json(tmp_path, capsys):
    csv_path = tmp_path / "bench.csv"
    code, doc = run(capsys, "bench", "--sizes", "32,64", "--repeats", "1", "--csv", str(csv_path))
    assert code == 0
    from qpmkit.bench import CSV_FIELDS, read_csv
    rows = read_csv(csv_path)
    assert [{k: getattr(r, k) for k in CSV_FIELDS} for r in rows] == doc["records"]
    assert set(doc["fitted_exponents"]) == {"mmd", "qpm"}


def test_bench_single_size_has_no_slope(capsys):
    code, doc = run(capsys, "bench", "--sizes", "32", "--repeats", "1")
    assert code == 0 and doc["fitted_exponents"] == {}


def test_bench_rejects_descending_sizes(capsys):
    with pytest.raises(SystemExit) as info:
        main(["bench", "--sizes", "64,32"])
    assert info.value.code != 0


def test_verify_escape(capsys):
    code, doc = run(capsys, "verify", "--suite", "escape")
    assert code == 0 and doc["passed"]
    at_max = next(c for c in doc["checks"] if c["name"] == "escape.hs_norm_at_max_n")
    assert at_max["value"] < 0.05
    table = at_max["details"]["table"]
    assert table[-1][0] == 200


def test_verify_exit_code_tracks_failures(capsys, monkeypatch):
    from qpmkit import verify as V
    monkeypatch.setattr(V, "run_suite", lambda suite, quick=False: [V._le("dummy", 2.0, 1.0)])
    code, doc = run(capsys, "verify", "--suite", "fock")
    assert code == 1 and not doc["passed"]


def test_verify_unknown_suite():
    with pytest.raises(SystemExit) as info:
        main(["verify", "--suite", "nope"])
    assert info.value.code != 0


def test_module_entry_point():
    import subprocess
    import sys
    out = subprocess.run([sys.executable, "-m", "qpmkit", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and __version__ in out.stdout
