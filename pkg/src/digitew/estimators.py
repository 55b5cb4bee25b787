"""Thin scikit-learn transformers over the digit machinery.

Nothing here is learned from data: ``fit`` only validates the
parameters, so the wrappers are stateless and safe inside pipelines.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .additive import builtin
from .numeration import NumerationSystem, expand


def _column(X):
    a = np.asarray(X)
    if a.ndim == 2:
        if a.shape[1] != 1:
            raise ValueError("expected a single column of integers")
        a = a[:, 0]
    if a.size and (not np.issubdtype(a.dtype, np.integer) or a.min() < 0):
        raise ValueError("expected nonnegative integers")
    return a


class AdditiveTransformer(TransformerMixin, BaseEstimator):
    """Maps integers n to f(n) for a built-in additive function."""

    def __init__(self, system="qary:2", function="sum_of_digits"):
        self.system = system
        self.function = function

    def fit(self, X, y=None):
        self.system_ = NumerationSystem.parse(self.system)
        self.function_ = builtin(self.function, self.system_)
        self.n_features_in_ = 1
        return self

    def transform(self, X):
        check_is_fitted(self, "function_")
        return self.function_.eval_many(_column(X)).reshape(-1, 1)


class DigitExpander(TransformerMixin, BaseEstimator):
    """One column per digit position (least significant first), zero padded."""

    def __init__(self, system="qary:2", n_digits=None):
        self.system = system
        self.n_digits = n_digits

    def fit(self, X, y=None):
        self.system_ = NumerationSystem.parse(self.system)
        col = _column(X)
        width = max((len(expand(int(n), self.system_).digits) for n in col), default=0)
        self.n_digits_ = self.n_digits if self.n_digits is not None else width
        self.n_features_in_ = 1
        return self

    def transform(self, X):
        check_is_fitted(self, "n_digits_")
        col = _column(X)
        out = np.zeros((len(col), self.n_digits_), dtype=np.int64)
        for i, n in enumerate(col):
            d = expand(int(n), self.system_).digits
            if len(d) > self.n_digits_:
                raise ValueError(f"{n} needs {len(d)} digits, transformer has {self.n_digits_}")
            out[i, : len(d)] = d
        return out

    def get_feature_names_out(self, input_features=None):
        start = NumerationSystem.parse(self.system).start_index
        return np.array([f"digit_{j}" for j in range(start, start + self.n_digits_)], dtype=object)
