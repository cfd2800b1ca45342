"""scikit-learn style facade: fit a basis to a coefficient, then map sources to solutions."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .coeff import CoefficientField
from .compress import DEFAULT_CG_ITERS, DEFAULT_EPSILON, STAGES, CompressedOperator
from .hslod import build_basis
from .mesh import ConfigurationError, build_hierarchy
from .slod import DEFAULT_DELTA_S, MODES


class HSLODSolver(BaseEstimator):
    """Compressed multilevel solver for ``-div(A grad u) = f`` with zero Dirichlet data.

    ``fit`` takes a :class:`CoefficientField`; ``transform`` returns basis coefficients
    of the stage solution for a source, ``predict`` its fine nodal values.
    """

    def __init__(self, num_levels=4, fine_exponent=7, coarse_exponent=0, order=2, delta_s=DEFAULT_DELTA_S,
                 mode="slod", rows="full", stage="check", cg_iters=DEFAULT_CG_ITERS, epsilon=DEFAULT_EPSILON,
                 n_jobs=1):
        self.num_levels = num_levels
        self.fine_exponent = fine_exponent
        self.coarse_exponent = coarse_exponent
        self.order = order
        self.delta_s = delta_s
        self.mode = mode
        self.rows = rows
        self.stage = stage
        self.cg_iters = cg_iters
        self.epsilon = epsilon
        self.n_jobs = n_jobs

    def fit(self, X: CoefficientField, y=None):
        if not isinstance(X, CoefficientField):
            raise TypeError("fit expects a CoefficientField")
        if self.mode not in MODES:
            raise ConfigurationError(f"mode must be one of {MODES}")
        if self.stage not in STAGES:
            raise ConfigurationError(f"stage must be one of {STAGES}")
        hierarchy = build_hierarchy(X.dim, self.coarse_exponent, self.num_levels, self.fine_exponent)
        self.coefficient_ = X
        self.basis_ = build_basis(hierarchy, X, self.order, self.delta_s, mode=self.mode, rows=self.rows,
                                  n_jobs=self.n_jobs)
        stages = ("check",) if self.stage == "check" else ("check", self.stage)
        if self.stage == "eps":
            stages = ("check", "bar", "eps")
        self.operator_ = CompressedOperator(self.basis_, X, self.cg_iters, self.epsilon, stages=stages)
        self.n_features_out_ = len(self.basis_)
        return self

    def transform(self, f) -> np.ndarray:
        check_is_fitted(self, "operator_")
        return self.operator_.coefficients(self.stage, self.operator_.load(f))

    def predict(self, f) -> np.ndarray:
        return self.operator_.synthesize(self.transform(f)).values

    def fit_transform(self, X, y=None, f=None):
        if f is None:
            raise ValueError("fit_transform needs a source f")
        return self.fit(X).transform(f)

    def score(self, f, reference) -> float:
        """Negative relative energy error against fine nodal ``reference`` values."""
        from .fem import FineFunction, energy_norm

        check_is_fitted(self, "operator_")
        h = self.operator_.hierarchy
        ref = FineFunction(h.fine_exponent, h.domain_box_fine(), np.asarray(reference, dtype=np.float64))
        err = FineFunction(h.fine_exponent, h.domain_box_fine(), ref.values - self.predict(f))
        return -energy_norm(err, self.coefficient_) / energy_norm(ref, self.coefficient_)
