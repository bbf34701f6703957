import csv

import numpy as np
import pytest

from hamlearn.estimator import fit
from hamlearn.evaluation import (
    GridSpec,
    convergence_study,
    model_potential_grid,
    noise_sweep,
    potential_grid,
    shifted_error,
    write_convergence_csv,
    write_grid_csv,
    write_noise_csv,
)
from hamlearn.kernel import GaussianKernel
from hamlearn.systems import builtin, sample_dataset


def test_grid_spec_validation():
    with pytest.raises(ValueError):
        GridSpec(lo=1.0, hi=-1.0)
    with pytest.raises(ValueError):
        GridSpec(resolution=1)
    with pytest.raises(ValueError):
        GridSpec(resolution=2.5)
    g = GridSpec(lo=(-1.0, 0.0), hi=(1.0, 2.0), resolution=(3, 5))
    q1, q2 = g.axes()
    assert q1.size == 3 and q2.size == 5
    assert q1[0] == -1.0 and q2[-1] == 2.0


def test_potential_grid_constant():
    g = GridSpec(-1, 1, 4)
    M = potential_grid(lambda pts: np.full(pts.shape[0], 5.0), g)
    np.testing.assert_array_equal(M, np.full((4, 4), 5.0))


def test_potential_grid_henon_heiles_nodes():
    hh = builtin("henon_heiles")
    g = GridSpec(-1, 1, 3)
    M = potential_grid(hh.h, g)
    assert M[1, 1] == 0.0  # center node, V(0, 0)
    assert M[2, 2] == pytest.approx(7.0 / 3.0, rel=1e-14)  # V(1, 1)


def test_potential_grid_orientation():
    # rows follow q2, columns follow q1: out[i, j] = h(q1[j], q2[i], 0, 0)
    g = GridSpec(lo=(0.0, 10.0), hi=(1.0, 11.0), resolution=2)
    M = potential_grid(lambda pts: pts[:, 0] + 100.0 * pts[:, 1], g)
    np.testing.assert_array_equal(M, [[1000.0, 1001.0], [1100.0, 1101.0]])


def test_potential_grid_marks_singular_nodes_nan():
    tb = builtin("two_body")
    g = GridSpec(-1, 1, 3)  # center node sits exactly on the singularity
    M = potential_grid(tb.h, g)
    assert np.isnan(M[1, 1])
    assert np.isfinite(np.delete(M.reshape(-1), 4)).all()


def test_shifted_error_constant_offset():
    truth = np.arange(12.0).reshape(3, 4)
    rep = shifted_error(truth, truth + 7.0)
    assert rep.shift == -7.0
    assert rep.sup_error == 0.0 and rep.mean_error == 0.0 and rep.rmse == 0.0


def test_shifted_error_identical():
    truth = np.arange(12.0).reshape(3, 4)
    rep = shifted_error(truth, truth)
    assert rep.shift == 0.0 and rep.sup_error == 0.0


def test_shifted_error_alternating():
    truth = np.zeros((2, 2))
    learned = np.array([[0.1, -0.1], [-0.1, 0.1]])
    rep = shifted_error(truth, learned)
    assert rep.shift == 0.0
    assert rep.sup_error == pytest.approx(0.1)
    assert rep.mean_error == pytest.approx(0.1)
    assert rep.rmse == pytest.approx(0.1)


def test_shifted_error_excludes_nan_symmetrically():
    truth = np.array([[np.nan, 1.0], [2.0, 3.0]])
    learned = np.array([[0.0, 1.5], [2.5, np.nan]])
    rep = shifted_error(truth, learned)
    assert rep.n_excluded == 2
    assert rep.shift == -0.5
    assert np.isnan(rep.grid_abs_error[0, 0]) and np.isnan(rep.grid_abs_error[1, 1])
    assert rep.sup_error == 0.0


def test_shifted_error_all_nan_raises():
    with pytest.raises(ValueError):
        shifted_error(np.full((2, 2), np.nan), np.zeros((2, 2)))
    with pytest.raises(ValueError):
        shifted_error(np.zeros((2, 2)), np.zeros((3, 2)))


def test_mean_shift_minimizes_l2(rng):
    truth = rng.standard_normal((6, 6))
    learned = truth + rng.standard_normal((6, 6)) * 0.3
    rep = shifted_error(truth, learned)
    base = np.sum((learned + rep.shift - truth) ** 2)
    for eps in (1e-3, -1e-3):
        assert np.sum((learned + rep.shift + eps - truth) ** 2) >= base


def test_report_invariants(rng):
    truth = rng.standard_normal((5, 5))
    learned = truth + 0.1 * rng.standard_normal((5, 5))
    rep = shifted_error(truth, learned)
    assert rep.sup_error >= rep.mean_error >= 0.0
    assert rep.sup_error >= rep.rmse


def small_study(**overrides):
    hh = builtin("henon_heiles")
    kwargs = dict(
        system=hh,
        n_list=[20, 40],
        alpha=0.4,
        c=5e-6,
        eta=2.0,
        sigma=0.0,
        seeds=[0],
        box=(-1, 1),
        grid=GridSpec(-1, 1, 12),
    )
    kwargs.update(overrides)
    return convergence_study(**kwargs)


def test_convergence_single_n_has_no_slope():
    res = small_study(n_list=[20])
    assert res.slope is None
    assert len(res.rows) == 1


def test_convergence_schema_stable_under_c_change():
    a = small_study()
    b = small_study(c=1e-5)
    assert len(a.rows) == len(b.rows)
    for ra, rb in zip(a.rows, b.rows):
        assert ra[0] == rb[0] and ra[2] == rb[2]  # same N, same seed
        assert ra[1] != rb[1]  # lambda scales with c
    assert [agg[0] for agg in a.aggregates] == [agg[0] for agg in b.aggregates]


def test_convergence_deterministic():
    a = small_study(seeds=[0, 1])
    b = small_study(seeds=[0, 1])
    assert a == b


def test_convergence_validation():
    with pytest.raises(ValueError):
        small_study(n_list=[40, 20])
    with pytest.raises(ValueError):
        small_study(alpha=0.6)
    with pytest.raises(ValueError):
        small_study(c=-1.0)
    with pytest.raises(ValueError):
        small_study(seeds=[])


def test_convergence_full_space_flag():
    res = small_study(full_space=True)
    assert all(np.isfinite(row[3]) and np.isfinite(row[4]) for row in res.rows)


def test_noise_sweep_empty_list():
    hh = builtin("henon_heiles")
    res = noise_sweep(hh, 20, [], eta=2.0, c=5e-6, alpha=0.4, seeds=[0],
                      box=(-1, 1), grid=GridSpec(-1, 1, 8))
    assert res.rows == () and res.aggregates == ()


def test_noise_sweep_zero_sigma_matches_direct_fit():
    hh = builtin("henon_heiles")
    grid = GridSpec(-1, 1, 10)
    res = noise_sweep(hh, 30, [0.0], eta=2.0, c=5e-6, alpha=0.4, seeds=[3],
                      box=(-1, 1), grid=grid)
    ds = sample_dataset(hh, 30, (-1, 1), 0.0, 3)
    model = fit(ds, GaussianKernel(2.0), 5e-6 * 30 ** (-0.4))
    rep = shifted_error(potential_grid(hh.h, grid), model_potential_grid(model, grid))
    assert res.rows[0][2] == rep.sup_error
    assert res.rows[0][3] == rep.mean_error


def test_grid_csv_layout(tmp_path):
    g = GridSpec(0.0, 1.0, 3)
    M = np.arange(9.0).reshape(3, 3)
    path = str(tmp_path / "grid.csv")
    write_grid_csv(path, M, g)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0][0] == "q2\\q1"
    assert [float(v) for v in rows[0][1:]] == [0.0, 0.5, 1.0]
    assert [float(v) for v in rows[1]] == [0.0, 0.0, 1.0, 2.0]
    assert [float(v) for v in rows[3]] == [1.0, 6.0, 7.0, 8.0]


def test_convergence_csv(tmp_path):
    res = small_study()
    path = str(tmp_path / "conv.csv")
    write_convergence_csv(path, res)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["N", "lambda", "seed", "sup_error", "mean_error"]
    assert len(rows) == 1 + len(res.rows) + len(res.aggregates)
    assert rows[-1][2] == "mean"


def test_noise_csv(tmp_path):
    hh = builtin("henon_heiles")
    res = noise_sweep(hh, 20, [0.0, 0.1], eta=2.0, c=5e-6, alpha=0.4, seeds=[0],
                      box=(-1, 1), grid=GridSpec(-1, 1, 8))
    path = str(tmp_path / "noise.csv")
    write_noise_csv(path, res)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["sigma", "seed", "sup_error", "mean_error"]
    assert len(rows) == 1 + 2 + 2
