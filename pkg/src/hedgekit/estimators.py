"""scikit-learn style wrappers around the functional core.

These give ``get_params``/``set_params``, ``clone`` support and the usual
fit/transform/predict entry points.  All numerical work is delegated.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import ConfigurationError
from .hedgetune import CalibrationResult, HedgeData, find_threshold
from .policies import PolicyKind, PolicySpec
from .quantiles import QuantileMap
from .samplers import CandidatePool, select_many
from .softmax import McConfig


class EmpiricalQuantileTransformer(TransformerMixin, BaseEstimator):
    """Map scores to quantiles of the scores seen in ``fit``.

    Accepts a 1-D array or a single-column 2-D array.  On the fitted scores
    ``fit_transform`` equals :func:`hedgekit.quantiles.to_quantiles`.
    """

    def __init__(self, rule: str = "midpoint"):
        self.rule = rule

    @staticmethod
    def _column(X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        X = check_array(X[:, None] if X.ndim == 1 else X)
        if X.shape[1] != 1:
            raise ConfigurationError(f"expected a single score column, got {X.shape[1]}")
        return X[:, 0]

    def fit(self, X, y=None):
        self.map_ = QuantileMap.from_scores(self._column(X), rule=self.rule)
        self.n_features_in_ = 1
        return self

    def transform(self, X):
        check_is_fitted(self, "map_")
        return self.map_.transform(self._column(X))


class HedgeTuner(BaseEstimator):
    """Calibrate the hacking threshold on pools with true scores.

    Attributes:
        theta_dagger_: located threshold (or recommended bracket end).
        regime_: shape of the true-reward curve.
        result_: the full :class:`CalibrationResult`.
    """

    def __init__(
        self,
        method: str = "bon",
        bracket: tuple[float, float] | None = None,
        tol: float = 1e-3,
        n: int | None = None,
        samples: int = 4000,
        seed: int = 0,
    ):
        self.method = method
        self.bracket = bracket
        self.tol = tol
        self.n = n
        self.samples = samples
        self.seed = seed

    def fit(self, X: Sequence[CandidatePool] | HedgeData, y=None):
        data = X if isinstance(X, HedgeData) else HedgeData.from_pools(X)
        cfg = McConfig(samples=self.samples, seed=self.seed)
        res: CalibrationResult = find_threshold(self.method, data, self.bracket, self.tol, cfg, n=self.n)
        self.result_ = res
        self.theta_dagger_ = res.theta_dagger
        self.regime_ = res.regime
        return self


class PolicySelector(BaseEstimator):
    """Apply a selection policy to candidate pools.

    ``predict`` returns the chosen candidate index for every pool (one
    repetition), reproducible for a fixed ``seed``.
    """

    def __init__(self, kind: str = "bon", n: int | None = None, mu: float | None = None,
                 lam: float | None = None, seed: int = 0):
        self.kind = kind
        self.n = n
        self.mu = mu
        self.lam = lam
        self.seed = seed

    def _spec(self) -> PolicySpec:
        return PolicySpec(PolicyKind(self.kind), n=self.n, mu=self.mu, lam=self.lam)

    def fit(self, X=None, y=None):
        self.policy_ = self._spec()
        return self

    def predict(self, X: Sequence[CandidatePool]) -> np.ndarray:
        check_is_fitted(self, "policy_")
        sels = select_many(self.policy_, list(X), self.seed)
        return np.array([s.chosen_index for s in sels], dtype=int)
