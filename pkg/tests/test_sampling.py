import numpy as np
import pytest

from hjdc import sampling as sp


def test_delta_copies():
    out = sp.draw(sp.Delta(point=(1.0, -2.0)), 3, seed=0)
    assert out.shape == (3, 2)
    assert np.all(out == [1.0, -2.0])


def test_gaussian_statistics():
    spec = sp.Gaussian(mean=(3.0, 3.0), cov_scale=(1.0, 1.0))
    x = sp.draw(spec, 10**5, seed=11)
    assert np.all(np.abs(x.mean(axis=0) - 3.0) < 0.02)
    cov = np.cov(x.T)
    assert np.all(np.abs(cov - np.eye(2)) < 0.03)


def test_gaussian_cov_scale_is_variance():
    spec = sp.Gaussian(mean=(0.0, 0.0), cov_scale=(0.25, 0.25))
    x = sp.draw(spec, 10**5, seed=12)
    assert np.all(np.abs(x.std(axis=0) - 0.5) < 0.01)


def test_uniform_box_support():
    spec = sp.UniformBox(lo=(-1.0, 0.0), hi=(1.0, 2.0))
    x = sp.draw(spec, 10**4, seed=13)
    assert np.all(x[:, 0] >= -1) and np.all(x[:, 0] <= 1)
    assert np.all(x[:, 1] >= 0) and np.all(x[:, 1] <= 2)
    assert np.all(np.abs(x.mean(axis=0) - [0.0, 1.0]) < 0.03)


def test_mixture_statistics():
    spec = sp.GaussianMixture(components=(
        (0.5, (-2.0, 0.0), (1.0, 1.0)),
        (0.5, (2.0, 0.0), (1.0, 1.0))))
    x = sp.draw(spec, 10**5, seed=14)
    assert abs(x[:, 0].mean()) < 0.03
    frac = np.mean(x[:, 0] < 0)
    assert abs(frac - 0.5) < 0.01


def test_mixture_weights_validated():
    bad = sp.GaussianMixture(components=((0.5, (0.0,), (1.0,)),
                                         (0.4, (1.0,), (1.0,))))
    with pytest.raises(ValueError):
        sp.draw(bad, 10, seed=0)


def test_piecewise_halves_fraction():
    e = np.pi / np.sqrt(2)
    spec = sp.PiecewiseUniformHalves(lo=(-e, -e), hi=(e, e), normal=(1.0, 1.0),
                                     lam1=1 / 11, lam2=10 / 11)
    x = sp.draw(spec, 10**5, seed=15)
    frac = np.mean(x.sum(axis=1) < 0)
    assert abs(frac - 1 / 11) < 0.005
    assert np.all(np.abs(x) <= e)


def test_product_blocks():
    spec = sp.Product(blocks=(
        sp.Gaussian(mean=(0.0, 0.0), cov_scale=(0.04, 0.04)),
        sp.UniformBox(lo=(-0.1,), hi=(0.1,))))
    x = sp.draw(spec, 10**4, seed=16)
    assert x.shape == (10**4, 3)
    assert np.all(np.abs(x[:, 2]) <= 0.1)
    assert np.all(np.abs(x[:, :2].std(axis=0) - 0.2) < 0.01)


def test_determinism_bitwise():
    spec = sp.Gaussian(mean=(1.0, 2.0, 3.0), cov_scale=(1.0, 1.0, 1.0))
    a = sp.draw(spec, 1000, seed=42)
    b = sp.draw(spec, 1000, seed=42)
    assert np.array_equal(a, b)


def test_adjacent_seeds_disjoint():
    spec = sp.UniformBox(lo=(0.0,), hi=(1.0,))
    a = sp.draw(spec, 10**4, seed=7)
    b = sp.draw(spec, 10**4, seed=8)
    assert np.mean(a != b) >= 0.99


def test_invalid_specs():
    with pytest.raises(ValueError):
        sp.draw(sp.UniformBox(lo=(1.0,), hi=(0.0,)), 5, seed=0)
    with pytest.raises(ValueError):
        sp.draw(sp.Delta(point=(0.0,)), 0, seed=0)


def test_spec_dict_round_trip():
    e = np.pi / np.sqrt(2)
    specs = [
        sp.Gaussian(mean=(3.0, 3.0), cov_scale=(1.0, 1.0)),
        sp.UniformBox(lo=(-4.5, -4.5), hi=(4.5, 4.5)),
        sp.GaussianMixture(components=((0.5, (0.0,), (1.0,)), (0.5, (1.0,), (2.0,)))),
        sp.PiecewiseUniformHalves(lo=(-e, -e), hi=(e, e), normal=(1.0, 1.0),
                                  lam1=1 / 11, lam2=10 / 11),
        sp.Delta(point=(1.0, 2.0)),
        sp.Product(blocks=(sp.Gaussian(mean=(0.0,), cov_scale=(1.0,)),
                           sp.UniformBox(lo=(0.0,), hi=(1.0,)))),
    ]
    for spec in specs:
        rt = sp.spec_from_dict(sp.spec_to_dict(spec))
        a = sp.draw(spec, 100, seed=3)
        b = sp.draw(rt, 100, seed=3)
        assert np.array_equal(a, b)
