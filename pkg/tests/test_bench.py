import csv

import numpy as np
import pytest

from funcunit.bench import METHODS, LabelledData, load_dataset, median_ac, run_benchmark, write_csv
from funcunit.core_io import save_labels, save_tensor


def test_all_methods_on_scenario_c(tmp_path):
    res = run_benchmark("synth3d:C", "all", seeds=(1, 2))
    assert len(res) == 2 * len(METHODS)
    assert [r.method for r in res[:2]] == ["kmeans", "kmeans"]
    assert median_ac(res, "gsnmf_ncut") >= 99.0
    out = tmp_path / "t.csv"
    write_csv(res, out)
    rows = list(csv.DictReader(out.open()))
    assert list(rows[0]) == ["dataset", "method", "k", "seed", "ac", "seconds"]
    assert len(rows) == len(res)


@pytest.mark.xfail(reason="k-means on raw features is already perfect on scenario D; "
                          "NMF local minima leave the full method a fraction of a percent short",
                   strict=False)
def test_full_method_not_below_kmeans_on_c_and_d():
    for ds in ("synth3d:C", "synth3d:D"):
        res = run_benchmark(ds, ["kmeans", "gsnmf_ncut"])
        assert median_ac(res, "gsnmf_ncut") >= median_ac(res, "kmeans")


def test_single_cluster_scores_100():
    data = LabelledData("files:x", np.random.default_rng(0).random((4, 12)), np.zeros(12, dtype=np.int64))
    res = run_benchmark(data, ["kmeans", "gsnmf_ncut"], seeds=(1,))
    assert all(r.ac == 100.0 and r.k == 1 for r in res)


def test_files_dataset(tmp_path):
    r = np.random.default_rng(0)
    U = np.hstack([np.full((6, 20), 1.0), np.full((6, 20), 8.0)]) + r.random((6, 40))
    save_tensor(U, tmp_path / "U.mtf")
    save_labels(np.repeat([0, 1], 20), tmp_path / "y.csv")
    data = load_dataset(f"files:{tmp_path / 'U.mtf'},{tmp_path / 'y.csv'}")
    res = run_benchmark(data, ["kmeans", "ncut"], seeds=(1,))
    assert all(r.ac == 100.0 for r in res)


def test_unknown_names():
    with pytest.raises(ValueError):
        load_dataset("mnist:1")
    with pytest.raises(ValueError):
        run_benchmark("synth3d:A", ["svm"], seeds=(1,))
