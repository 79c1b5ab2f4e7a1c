import numpy as np
import pytest

from appca.cli import main
from appca.data_io import load_matrix_csv, read_manifest


def _files(d, names):
    return {n: (d / n).read_bytes() for n in names}


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("data")
    assert main(["generate", "--D", "8", "--k-plus", "3", "--n", "120", "--seed", "4",
                 "--out-dir", str(out)]) == 0
    return out


def test_generate_outputs(dataset):
    assert load_matrix_csv(dataset / "Y.csv").shape == (8, 120)
    assert load_matrix_csv(dataset / "W_true.csv").shape == (8, 3)
    assert load_matrix_csv(dataset / "Z_true.csv").shape == (3, 120)
    m = read_manifest(dataset / "manifest.txt")
    assert m["code_version"] and m["seed"] == "4"


def test_generate_defaults_match_benchmark_configuration(tmp_path):
    assert main(["generate", "--out-dir", str(tmp_path)]) == 0
    m = read_manifest(tmp_path / "manifest.txt")
    assert (m["sigma_x"], m["sigma_y"], m["N"], m["D"]) == ("1.5", "0.5", "1000", "15")


def test_generate_deterministic(tmp_path):
    names = ["Y.csv", "W_true.csv", "X_true.csv", "Z_true.csv"]
    for sub in ("a", "b"):
        main(["generate", "--seed", "2", "--n", "50", "--out-dir", str(tmp_path / sub)])
    assert _files(tmp_path / "a", names) == _files(tmp_path / "b", names)


@pytest.mark.parametrize("sampler", ["hybrid", "collapsed"])
def test_fit_writes_artifacts_and_is_reproducible(dataset, tmp_path, sampler):
    names = ["W.csv", "Z.csv", "X.csv", "trace.csv", "metrics.txt"]
    for sub in ("a", "b"):
        args = ["fit", "--input", str(dataset / "Y.csv"), "--sampler", sampler,
                "--max-iter", "5", "--seed", "3", "--out-dir", str(tmp_path / sub)]
        assert main(args) == 0
    assert _files(tmp_path / "a", names) == _files(tmp_path / "b", names)
    metrics = read_manifest(tmp_path / "a" / "metrics.txt")
    for key in ("k_plus", "mae", "orthonormality_loss"):
        assert key in metrics
    W = load_matrix_csv(tmp_path / "a" / "W.csv")
    assert W.shape[1] == int(metrics["k_plus"])
    assert load_matrix_csv(tmp_path / "a" / "Z.csv").shape == (W.shape[1], 120)
    if sampler == "collapsed":
        assert float(metrics["orthonormality_loss"]) < 1e-4


def test_fit_alpha_sweep(dataset, tmp_path):
    assert main(["fit", "--input", str(dataset / "Y.csv"), "--alpha", "0.1", "0.4",
                 "--max-iter", "3", "--out-dir", str(tmp_path)]) == 0
    rows = (tmp_path / "alpha_sweep.csv").read_text().splitlines()
    assert rows[0] == "alpha,k_plus,mae,orthonormality_loss_deg" and len(rows) == 3
    assert (tmp_path / "alpha_0.1" / "metrics.txt").exists()


def test_fit_points_by_dims_orientation(dataset, tmp_path):
    Y = load_matrix_csv(dataset / "Y.csv")
    np.savetxt(tmp_path / "Yt.csv", Y.T, delimiter=",", fmt="%.17g")
    assert main(["fit", "--input", str(tmp_path / "Yt.csv"), "--orientation",
                 "points_by_dims", "--max-iter", "2", "--out-dir", str(tmp_path / "o")]) == 0
    assert load_matrix_csv(tmp_path / "o" / "Z.csv").shape[1] == 120


def test_fit_bad_input_exits_nonzero(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("1,2\n3,oops\n")
    assert main(["fit", "--input", str(bad), "--out-dir", str(tmp_path / "o")]) == 1
    assert "row 2, column 2" in capsys.readouterr().err
    with pytest.raises(SystemExit) as exc:
        main(["fit", "--input", str(bad), "--sampler", "nope", "--out-dir", "x"])
    assert exc.value.code != 0


def test_evaluate_and_export(dataset, tmp_path):
    fit_dir = tmp_path / "fit"
    main(["fit", "--input", str(dataset / "Y.csv"), "--max-iter", "3", "--out-dir",
          str(fit_dir)])
    assert main(["evaluate", "--fit-dir", str(fit_dir), "--pca-dim", "4"]) == 0
    report = read_manifest(fit_dir / "evaluation.txt")
    assert float(report["pca_mae"]) > 0 and "mppca_mae" in report

    W = load_matrix_csv(fit_dir / "W.csv")
    assert main(["export", "--fit-dir", str(fit_dir), "--what", "w-heatmap",
                 "--absolute"]) == 0
    heat = load_matrix_csv(fit_dir / "w-heatmap.csv")
    assert heat.shape == (W.size, 3)
    assert np.allclose(heat[:, 2], np.abs(W).ravel())

    assert main(["export", "--fit-dir", str(fit_dir), "--what", "reconstruction-error"]) == 0
    err = load_matrix_csv(fit_dir / "reconstruction-error.csv")
    assert err.shape == (120, 2) and np.all(err[:, 1] >= 0)


def test_export_missing_artifacts(tmp_path, capsys):
    assert main(["export", "--fit-dir", str(tmp_path), "--what", "w-heatmap"]) == 1
    assert "missing fit artifacts" in capsys.readouterr().err


def test_reproduce_tables_small(tmp_path):
    assert main(["reproduce-tables", "--table", "3", "--replicates", "1", "--n-points", "60",
                 "--max-iter", "2", "--out-dir", str(tmp_path)]) == 0
    rows = (tmp_path / "table3.csv").read_text().splitlines()
    methods = {r.split(",")[0] for r in rows[1:]}
    assert methods == {"pca", "mppca", "mppca_m3", "hybrid"}
    ks = [int(r.split(",")[1]) for r in rows[1:] if r.startswith("hybrid")]
    assert ks == [2, 6, 8, 16, 18]
