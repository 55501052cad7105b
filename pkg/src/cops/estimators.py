"""Estimator-style front ends for the solvers.

``TabuSearchSolver`` and ``ExactSolver`` follow the scikit-learn estimator
protocol: hyper-parameters go to ``__init__`` (so ``get_params``,
``set_params`` and ``clone`` work), ``fit`` takes an :class:`Instance` and
stores the result in trailing-underscore attributes.
"""
from __future__ import annotations

from numbers import Integral

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .core import Instance, Solution, check_instance, validate
from .exact import solve_exact
from .tabu import SearchParams, solve_tabu_best_of


def check_cops_instance(X) -> Instance:
    """Validate the ``X`` passed to ``fit``: an :class:`Instance` satisfying every structural rule."""
    if not isinstance(X, Instance):
        raise TypeError(f"expected a cops Instance, got {type(X).__name__}")
    return check_instance(X)


def _check_positive_int(name: str, value, allow_none: bool = False) -> None:
    if value is None and allow_none:
        return
    if not isinstance(value, Integral) or value < 1:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")


class _SolverMixin:
    def predict(self, X=None) -> tuple[int, ...]:
        """Route of the fitted solution (``X`` must be the fitted instance, if given)."""
        check_is_fitted(self, "solution_")
        if X is not None and X != self.instance_:
            raise ValueError("predict() only answers for the instance passed to fit()")
        return self.solution_.route

    def fit_predict(self, X, y=None) -> tuple[int, ...]:
        return self.fit(X).predict()

    def score(self, X=None, y=None) -> float:
        """Collected reward of the fitted solution."""
        check_is_fitted(self, "solution_")
        return self.solution_.reward

    def _store(self, X: Instance, sol: Solution) -> None:
        self.instance_ = X
        self.solution_ = sol
        self.route_ = sol.route
        self.reward_ = sol.reward
        self.cost_ = sol.cost
        self.selected_subgroups_ = sol.selected
        self.violations_ = validate(X, sol)


class TabuSearchSolver(_SolverMixin, BaseEstimator):
    """Tabu search, best of ``n_runs`` seeds (``seed``, ``seed+1``, ...).

    Parameters mirror :class:`cops.tabu.SearchParams`; ``lambda_`` is the
    number of consecutive over-budget insertions that end the greedy start.
    """

    def __init__(
        self,
        alpha=10,
        beta=300,
        old_removal_threshold=None,
        lambda_=5,
        seed=0,
        max_iterations=None,
        n_runs=1,
    ):
        self.alpha = alpha
        self.beta = beta
        self.old_removal_threshold = old_removal_threshold
        self.lambda_ = lambda_
        self.seed = seed
        self.max_iterations = max_iterations
        self.n_runs = n_runs

    def _params(self) -> SearchParams:
        _check_positive_int("n_runs", self.n_runs)
        return SearchParams(
            alpha=self.alpha,
            beta=self.beta,
            old_removal_threshold=self.old_removal_threshold,
            lambda_=self.lambda_,
            seed=self.seed,
            max_iterations=self.max_iterations,
        )

    def fit(self, X, y=None, record_trace=False):
        X = check_cops_instance(X)
        params = self._params()
        sol, stats, runs = solve_tabu_best_of(X, params, self.n_runs, record_trace=record_trace)
        self._store(X, sol)
        self.stats_ = stats
        self.runs_ = runs
        self.n_iter_ = stats.iterations
        return self


class ExactSolver(_SolverMixin, BaseEstimator):
    """Provably optimal solver for small instances (enumeration + Held-Karp)."""

    def __init__(self, vertex_limit=20):
        self.vertex_limit = vertex_limit

    def fit(self, X, y=None):
        X = check_cops_instance(X)
        _check_positive_int("vertex_limit", self.vertex_limit)
        self._store(X, solve_exact(X, vertex_limit=self.vertex_limit))
        return self
