import math

import numpy as np
import pytest

from ltrj import (Architecture, Dataset, Params, apply_to_params, barrier, dot, drift_diagnostic, evaluate, gmt,
                  init_params, linear_path_scan, plane_scan, random_perm, linear_trajectory)
from ltrj.landscape import DegenerateBasisError, PathScan, plane_basis


def _toy(v):
    return Params.from_layers([(np.array([[v]]), np.array([0.0])), (np.array([[0.0]]), np.array([0.0]))])


def _square(p):
    w = float(p.weights[0][0, 0])
    return w * w, 0.0


def _blobs(k=3, n=30, d=5, seed=0):
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(k), n)
    labels[-(n // 2):] = 0  # class 0 is the majority
    return Dataset(rng.standard_normal((len(labels), d)).astype(np.float32), labels, k)


def test_evaluate_zero_params():
    ds = _blobs()
    loss, acc = evaluate(Params.zeros(Architecture((5, 4, 3))), ds)
    assert loss == pytest.approx(math.log(3))
    assert acc == pytest.approx(np.bincount(ds.labels).max() / len(ds))


def test_evaluate_invariance():
    ds = _blobs()
    arch = Architecture((5, 16, 3))
    theta = init_params(arch, 0)
    a = evaluate(theta, ds)
    b = evaluate(apply_to_params(random_perm(arch, 1), theta), ds)
    assert b[0] == pytest.approx(a[0], rel=1e-5) and b[1] == a[1]
    assert 0 <= a[1] <= 1


def test_path_constant_when_endpoints_equal():
    ds = _blobs()
    theta = init_params(Architecture((5, 8, 3)), 0)
    scan = linear_path_scan(theta, theta, 7, ds)
    assert np.allclose(scan.losses, scan.losses[0]) and barrier(scan) == pytest.approx(0.0, abs=1e-7)


def test_path_endpoints_exact():
    ds = _blobs()
    arch = Architecture((5, 8, 3))
    a, b = init_params(arch, 0), init_params(arch, 1)
    scan = linear_path_scan(a, b, 5, ds)
    assert scan.losses[0] == evaluate(a, ds)[0] and scan.losses[-1] == evaluate(b, ds)[0]
    assert scan.lambdas[0] == 0.0 and scan.lambdas[-1] == 1.0 and np.all(np.diff(scan.lambdas) > 0)


def test_quadratic_toy_path():
    scan = linear_path_scan(_toy(-1.0), _toy(1.0), 21, evaluator=_square)
    i = int(np.argmin(scan.losses))
    assert scan.lambdas[i] == 0.5 and scan.losses[i] == 0.0
    # convex in lambda, so no barrier
    assert barrier(scan) == 0.0


def test_path_validation():
    with pytest.raises(ValueError):
        linear_path_scan(_toy(0.0), _toy(1.0), 1, evaluator=_square)
    with pytest.raises(ValueError):
        linear_path_scan(_toy(0.0), _toy(1.0), 3)


@pytest.mark.parametrize("losses,expected", [([1.0, 1.0, 1.0], 0.0), ([0.0, 1.0, 0.0], 1.0),
                                             ([1.0, 0.25, 0.0], 0.0), ([0.0, 2.0, 2.0], 1.0)])
def test_barrier_values(losses, expected):
    scan = PathScan(np.array([0.0, 0.5, 1.0]), np.array(losses), np.zeros(3))
    assert barrier(scan) == expected


def test_plane_basis_properties():
    arch = Architecture((4, 6, 3))
    t1, t2, t3 = (init_params(arch, s) for s in range(3))
    o, u, v, anchors = plane_basis(t1, t2, t3)
    assert abs(dot(u, u) - 1) < 1e-6 and abs(dot(v, v) - 1) < 1e-6 and abs(dot(u, v)) < 1e-6
    d = t2.astype(np.float64) - t1.astype(np.float64)
    w = t3.astype(np.float64) - t1.astype(np.float64)
    assert anchors[0].tolist() == [0.0, 0.0]
    assert anchors[1, 0] == pytest.approx(math.sqrt(dot(d, d))) and anchors[1, 1] == 0.0
    assert anchors[2, 0] == pytest.approx(dot(w, u))
    for (x, y), t in zip(anchors, (t1, t2, t3)):
        assert np.allclose((o + u * x + v * y).flat(), t.flat(), atol=1e-6)


def test_plane_scan_grid_reconstructs_anchor():
    ds = _blobs()
    arch = Architecture((5, 8, 3))
    t1, t2, t3 = (init_params(arch, s) for s in range(3))
    ps = plane_scan(t1, t2, t3, grid_n=5, margin=0.0, dataset=ds)
    assert ps.losses.shape == (5, 5) and len(list(ps.rows())) == 25
    # with zero margin the grid corner (max x, min y) is theta2
    assert ps.xs[-1] == pytest.approx(ps.anchors[1, 0]) and ps.ys[0] == 0.0
    assert ps.losses[0, -1] == pytest.approx(evaluate(t2, ds)[0], rel=1e-5)


def test_plane_degenerate():
    arch = Architecture((4, 6, 3))
    t1, t2 = init_params(arch, 0), init_params(arch, 1)
    with pytest.raises(DegenerateBasisError):
        plane_basis(t1, t1, t2)
    mid = t1.astype(np.float64) * 0.5 + t2.astype(np.float64) * 0.5
    with pytest.raises(DegenerateBasisError):
        plane_basis(t1, t2, mid)


def _source(arch, T=4):
    return linear_trajectory(init_params(arch, 0), init_params(arch, 1), T)


def test_drift_constant_perms_zero():
    arch = Architecture((5, 8, 3))
    src = _source(arch)
    pi = random_perm(arch, 2)
    rep = drift_diagnostic(src, init_params(arch, 3), [pi] * src.T)
    assert rep.max_distance == 0.0 and all(r[3] == 0.0 for r in rep.rows)
    assert math.isnan(rep.K_hat)


def test_drift_symmetric_and_zero_diagonal():
    arch = Architecture((5, 8, 3))
    src = _source(arch)
    perms = [random_perm(arch, s) for s in range(src.T)]
    rep = drift_diagnostic(src, init_params(arch, 3), perms)
    assert all(r[3] >= 0 for r in rep.rows) and rep.max_distance > 0
    assert rep.distance(1, 3, 1) == rep.distance(3, 1, 1)
    assert rep.distance(2, 2, 1) == 0.0
    with pytest.raises(ValueError):
        drift_diagnostic(src, init_params(arch, 3), perms[:-1])


def test_drift_planted_is_zero_with_estimates():
    ds = _blobs(n=40)
    arch = Architecture((5, 8, 3))
    src = _source(arch, 3)
    pstar = random_perm(arch, 5)
    theta2_0 = apply_to_params(pstar, src[0])
    r = gmt(src, theta2_0, ds, batch_size=32)
    rep = drift_diagnostic(src, theta2_0, r.perms, ds, batch_size=32)
    assert rep.max_distance == 0.0
    assert math.isfinite(rep.K_hat) and math.isfinite(rep.eps_hat) and rep.match_residual < 1e-5
