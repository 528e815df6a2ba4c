"""scikit-learn style facade: fit a transport map to a density, then move
points with it.

    >>> est = PrescribedJacobianMap(method="auto")
    >>> est.fit(f)                  # f: ScalarField (or array + domain=)
    >>> y = est.transform(x)        # push points forward
    >>> x2 = est.inverse_transform(y)

The fitted map phi satisfies det grad(phi) = f up to the report's residual
and is the identity near the boundary when supp(f-1) keeps its distance.
"""

from __future__ import annotations

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .fields import jacobian_det
from .solvers import FixedPointConfig, solve
from .transport import FlowConfig, eval_map, invert
from .validation import as_density, check_points


class PrescribedJacobianMap(BaseEstimator, TransformerMixin):
    """Estimator wrapper around the determinant solvers.

    Parameters mirror the solver knobs; `method` is one of auto, oned,
    moser, fixedpoint, full, general.  After `fit`, the attributes `map_`,
    `report_` and `domain_` hold the solution.
    """

    def __init__(
        self,
        method="auto",
        distance=None,
        collar_epsilon=0.15,
        time_steps=16,
        interp="bilinear",
        gamma=0.5,
        epsilon_threshold=0.05,
        max_iter=30,
        contraction_tol=1e-9,
        bump_eta=0.05,
        mollify_radius=None,
    ):
        self.method = method
        self.distance = distance
        self.collar_epsilon = collar_epsilon
        self.time_steps = time_steps
        self.interp = interp
        self.gamma = gamma
        self.epsilon_threshold = epsilon_threshold
        self.max_iter = max_iter
        self.contraction_tol = contraction_tol
        self.bump_eta = bump_eta
        self.mollify_radius = mollify_radius

    def fit(self, X, y=None, domain=None):
        """Solve det grad(phi) = X.  X is a ScalarField, or an array with
        `domain` given."""
        f = as_density(X, domain)
        cfg = FixedPointConfig(
            gamma=self.gamma,
            epsilon_threshold=self.epsilon_threshold,
            max_iter=self.max_iter,
            contraction_tol=self.contraction_tol,
        )
        flow_cfg = FlowConfig(time_steps=self.time_steps, interp=self.interp)
        self.map_, self.report_ = solve(
            f,
            method=self.method,
            distance=self.distance,
            collar_epsilon=self.collar_epsilon,
            cfg=cfg,
            flow_cfg=flow_cfg,
            bump_eta=self.bump_eta,
            mollify_radius=self.mollify_radius,
        )
        self.domain_ = f.domain
        self.density_ = f
        self._inverse = None
        return self

    def _check_fitted(self):
        if not hasattr(self, "map_"):
            raise NotFittedError("call fit before transform")

    def transform(self, X):
        """Map points forward through the fitted diffeomorphism."""
        self._check_fitted()
        pts = check_points(X, self.domain_.dim)
        return eval_map(self.map_, pts)

    def inverse_transform(self, X):
        self._check_fitted()
        if self._inverse is None:
            self._inverse = invert(self.map_)
        pts = check_points(X, self.domain_.dim)
        return eval_map(self._inverse, pts)

    def achieved_determinant(self):
        """Jacobian determinant field of the fitted map."""
        self._check_fitted()
        return jacobian_det(self.map_)

    def score(self, X=None, y=None):
        """Negative determinant residual (higher is better)."""
        self._check_fitted()
        return -self.report_.det_residual_inf
