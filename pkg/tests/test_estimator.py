import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from hslod.coeff import random_piecewise_constant
from hslod.estimator import HSLODSolver
from hslod.experiments import smooth_rhs
from hslod.mesh import build_hierarchy
from hslod.oracle import GlobalFineSystem


def test_params_roundtrip():
    est = HSLODSolver(order=3, stage="bar")
    assert est.get_params()["order"] == 3
    assert clone(est).get_params() == est.get_params()
    est.set_params(order=1)
    assert est.order == 1


def test_not_fitted():
    with pytest.raises(NotFittedError):
        HSLODSolver().transform(smooth_rhs)


def test_fit_predict_score():
    c = random_piecewise_constant(5, 1, 100, 0)
    est = HSLODSolver(num_levels=3, fine_exponent=5, order=2).fit(c)
    coeffs = est.transform(smooth_rhs)
    assert coeffs.shape == (est.n_features_out_,) == (64,)
    h = build_hierarchy(2, 0, 3, 5)
    ref = GlobalFineSystem(h, c).fine_solve(smooth_rhs).values
    u = est.predict(smooth_rhs)
    assert u.shape == ref.shape
    assert -0.1 < est.score(smooth_rhs, ref) <= 0.0


def test_rejects_bad_input():
    with pytest.raises(TypeError):
        HSLODSolver().fit(np.ones(4))
    c = random_piecewise_constant(3, 1, 10, 0)
    with pytest.raises(ValueError):
        HSLODSolver(num_levels=2, fine_exponent=3, stage="tilde").fit(c)
