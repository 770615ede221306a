import json

import numpy as np
import pytest

from subunit.channel_io import dump_channel
from subunit.cli import config_hash, main, parse_grid, read_csv
from subunit.zoo import make_rng, random_bipartite


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_measures_on_swap(capsys):
    code, out, _ = run(capsys, "measures", "--channel", "swap")
    assert code == 0
    doc = json.loads(out)
    vals = {r["quantity"]: r["value"] for r in doc["data"]}
    assert vals["u_c"] == pytest.approx(1, abs=1e-12)
    assert doc["metadata"]["command"] == "measures"
    assert doc["metadata"]["config_hash"] == config_hash(doc["metadata"]["config"])


def test_measures_from_file(tmp_path, capsys):
    path = tmp_path / "ch.json"
    dump_channel(random_bipartite(2, 2, 1, make_rng(3)), path, "choi")
    code, out, _ = run(capsys, "measures", "--channel", str(path))
    assert code == 0
    assert json.loads(out)["data"]


@pytest.mark.parametrize(
    "argv",
    [
        ["measures", "--channel", "no-such-file.json"],
        ["histogram", "--n", "0"],
        ["histogram", "--seed", "-1"],
        ["convergence", "--grid", "0:1"],
        ["convergence", "--grid", "0:2:3"],
        ["sweep-reset", "--k-max", "4"],
        ["sweep-reset", "--monte-carlo"],
        ["sweep-reset", "--monte-carlo", "--seqs", "1", "--seed", "1"],
        ["sweep-reset", "--bloch", "0,0,0"],
        ["sweep-reset", "--keep-samples", "--monte-carlo", "--seqs", "2", "--seed", "1", "--reset-p", "1", "--k-max", "8"],
        ["witness-contour", "--t-grid", "1.5"],
        ["compare-addressability", "--ranks", "1,x"],
        ["compare-addressability", "--rank", "17"],
    ],
)
def test_invalid_input_exits_2(capsys, argv):
    code, out, err = run(capsys, *argv)
    assert code == 2
    assert err.startswith("error:")
    assert out == ""


def test_malformed_channel_file_exits_2(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{"d_a": 2,\n "d_b" 2}')
    code, _, err = run(capsys, "measures", "--channel", str(path))
    assert code == 2
    assert "bad.json:2:" in err


def test_argparse_errors_exit_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["measures"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["sweep-reset", "--exact", "--monte-carlo"])
    assert exc.value.code == 2


def test_fit_failure_exits_3(capsys):
    # the identity channel leaves a flat reset-protocol curve with no decay to fit
    code, _, err = run(capsys, "sweep-reset", "--channel", "identity", "--reset-p", "1")
    assert code == 3
    assert err.startswith("fit error:")


def test_output_is_deterministic(tmp_path, capsys):
    argv = ["compare-addressability", "--n", "5", "--ranks", "1,4", "--seed", "9"]
    a = run(capsys, *argv)[1]
    b = run(capsys, *argv)[1]
    assert a == b
    c = run(capsys, *argv[:-1], "10")[1]
    assert c != a
    meta_a, _ = read_csv(a)
    meta_c, _ = read_csv(c)
    assert meta_a["config_hash"] != meta_c["config_hash"]
    out = tmp_path / "o.csv"
    assert main(argv + ["--out", str(out)]) == 0
    assert out.read_text() == a


def test_csv_and_json_agree(capsys):
    argv = ["convergence", "--grid", "0:1:3", "--seed", "2"]
    _, csv_text, _ = run(capsys, *argv)
    _, json_text, _ = run(capsys, *argv, "--format", "json")
    meta, rows = read_csv(csv_text)
    doc = json.loads(json_text)
    assert meta == doc["metadata"]
    assert len(rows) == len(doc["data"])
    for r, d in zip(rows, doc["data"]):
        assert r.keys() == d.keys()
        for k in r:
            assert r[k] == pytest.approx(d[k], rel=1e-14)


def test_histogram(capsys):
    code, out, _ = run(capsys, "histogram", "--n", "300", "--seed", "4")
    assert code == 0
    meta, rows = read_csv(out)
    u = np.array([r["u_c"] for r in rows])
    assert len(u) == 300
    assert u.min() >= -1e-12 and u.max() <= 1 + 1e-12
    assert meta["reference_bound_exact"] == "7/12"
    assert meta["fraction_above"] == pytest.approx(np.mean(u > 7 / 12))
    assert meta["fraction_above"] > 0


def test_convergence_gap_closes_at_p_one(capsys):
    code, out, _ = run(capsys, "convergence", "--grid", "0:1:5", "--n", "3", "--seed", "5", "--rank", "2")
    assert code == 0
    _, rows = read_csv(out)
    assert [r["p"] for r in rows] == sorted(r["p"] for r in rows)
    for r in rows:
        if r["p"] == 1:
            assert r["gap"] < 1e-9


def test_sweep_reset_exact(capsys):
    code, out, _ = run(capsys, "sweep-reset", "--grid", "0.5:1:6")
    assert code == 0
    meta, rows = read_csv(out)
    err = [r["rel_error"] for r in rows]
    assert rows[-1]["coordinate"] == 1
    assert err[-1] < 0.01
    assert all(a >= b for a, b in zip(err, err[1:]))
    assert meta["u_aa_true"] == pytest.approx(0.203606983633434)


def test_sweep_reset_bloch(capsys):
    code, out, _ = run(capsys, "sweep-reset", "--bloch", "0,0,1", "--grid", "0:0.2:3", "--format", "json")
    assert code == 0
    doc = json.loads(out)
    assert all(r["reset"] == "bloch" for r in doc["data"])
    assert all(r["rel_error"] < 0.1 for r in doc["data"])
    assert doc["metadata"]["orthogonal_prep_bound"] >= doc["metadata"]["u_aa_true"]


def test_sweep_reset_monte_carlo_keeps_samples(capsys):
    argv = ["sweep-reset", "--monte-carlo", "--seqs", "30", "--seed", "3", "--reset-p", "1", "--k-max", "10"]
    code, out, _ = run(capsys, *argv, "--keep-samples", "--format", "json")
    assert code == 0
    doc = json.loads(out)
    assert doc["metadata"]["config"]["mode"] == "monte-carlo"
    ds = doc["samples"][0]["datasets"]
    assert len(ds) == 3 and len(ds[0]["samples"]) == 10 and len(ds[0]["samples"][0]) == 30
    again = run(capsys, *argv, "--keep-samples", "--format", "json")[1]
    assert again == out


def test_witness_contour(capsys):
    code, out, _ = run(capsys, "witness-contour", "--t-grid", "0:1:2")
    assert code == 0
    meta, rows = read_csv(out)
    assert "axes" in meta
    by_t = {r["t"]: r for r in rows}
    assert by_t[1.0]["witnessed"] is True
    assert by_t[0.0]["witnessed"] is False


def test_compare_addressability(capsys):
    code, out, _ = run(capsys, "compare-addressability", "--n", "20", "--ranks", "1,16", "--seed", "1")
    assert code == 0
    _, rows = read_csv(out)
    assert rows[0]["label"] == "cnot"
    assert rows[0]["a"] == pytest.approx(0, abs=1e-12)
    assert rows[0]["u_c"] > 0.1
    assert len(rows) == 41


def test_parse_grid():
    np.testing.assert_allclose(parse_grid("0:1:5"), [0, 0.25, 0.5, 0.75, 1])
    np.testing.assert_allclose(parse_grid("0.3"), [0.3])
