"""Problem feature vectors and corpus diversity."""
from __future__ import annotations

from collections import Counter

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.feature_selection import VarianceThreshold
from sklearn.metrics import pairwise_distances
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import MinMaxScaler

from ..pddl import DomainModel, ProblemInstance


def feature_names(domain: DomainModel) -> list[str]:
    names = ["objects"]
    names += [f"objects({t})" for t in domain.hierarchy.types if t != "object"]
    names.append("init_atoms")
    names += [f"init({p.name})" for p in domain.predicates]
    names += ["goal_atoms", "goal_init_ratio", "atoms_per_object", "distinct_predicates", "static_atoms", "dynamic_atoms"]
    return names


def features(problem: ProblemInstance) -> np.ndarray:
    """Fixed-order feature vector; see :func:`feature_names`."""
    domain = problem.domain
    types = Counter(o.type for o in problem.objects)
    preds = Counter(a.pred for a in problem.init)
    n_obj = len(problem.objects)
    n_init = len(problem.init)
    static = sum(preds[p] for p in domain.static_predicates)
    row = [n_obj]
    row += [types[t] for t in domain.hierarchy.types if t != "object"]
    row.append(n_init)
    row += [preds[i] for i in range(len(domain.predicates))]
    row += [
        len(problem.goal),
        len(problem.goal) / n_init if n_init else 0.0,
        n_init / n_obj if n_obj else 0.0,
        len(preds),
        static,
        n_init - static,
    ]
    return np.array(row, dtype=float)


class ProblemFeaturizer(TransformerMixin, BaseEstimator):
    """Featurize problems, drop corpus-constant features, min-max scale the rest."""

    def fit(self, problems, y=None):
        x = self._raw(problems)
        self.n_features_in_ = x.shape[1]
        self.support_ = x.max(axis=0) > x.min(axis=0)
        self.pipeline_ = None
        if self.support_.any():
            self.pipeline_ = make_pipeline(VarianceThreshold(0.0), MinMaxScaler()).fit(x)
        return self

    def transform(self, problems):
        x = self._raw(problems)
        if self.pipeline_ is None:
            return np.zeros((len(x), 0))
        return self.pipeline_.transform(x)

    @staticmethod
    def _raw(problems):
        rows = [p if isinstance(p, np.ndarray) else features(p) for p in problems]
        if not rows:
            raise ValueError("no problems given")
        return np.vstack(rows)


def diversity(corpus) -> float:
    """Mean over problems of the mean Euclidean distance to the other problems.

    ``corpus`` holds problems or precomputed raw feature vectors.
    """
    if len(corpus) < 2:
        raise ValueError("diversity needs at least two problems")
    x = ProblemFeaturizer().fit_transform(corpus)
    if x.shape[1] == 0:
        return 0.0
    d = pairwise_distances(x, metric="euclidean")
    n = len(x)
    return float((d.sum(axis=1) / (n - 1)).mean())
