"""scikit-learn style wrappers so the stages compose in a ``Pipeline``.

Typical use::

    from sklearn.pipeline import Pipeline
    net = Pipeline([("panel", PanelBuilder(roster)), ("net", OverlapNetwork())])
    timeseries = net.fit_transform(events)
"""
from __future__ import annotations

import pandas as pd
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import graphmetrics, overlap, panel as panel_mod, states, stats
from ._validation import check_events, check_horizons, check_panel, check_roster, check_window
from .ingest import AGENCY, INDEPENDENT, SEGMENT_NAMES


class PanelBuilder(TransformerMixin, BaseEstimator):
    """Events -> :class:`~fanflow.panel.FanMonthPanel`."""

    def __init__(self, roster=None, window_start=None, window_end=None):
        self.roster = roster
        self.window_start = window_start
        self.window_end = window_end

    def fit(self, X, y=None):
        self.roster_ = check_roster(self.roster)
        self.window_ = check_window(self.window_start, self.window_end)
        return self

    def transform(self, X):
        check_is_fitted(self, "roster_")
        return panel_mod.build_panel(check_events(X), self.roster_, self.window_)


class CommitmentMetrics(TransformerMixin, BaseEstimator):
    """Creator-level retention, switching and run-length metrics of a panel."""

    def __init__(self, horizons=(2, 3)):
        self.horizons = horizons

    def fit(self, X, y=None):
        p = check_panel(X)
        self.retention_table_ = panel_mod.retention_table(p, check_horizons(self.horizons))
        self.creator_metrics_ = panel_mod.creator_metrics(p)
        return self

    def transform(self, X):
        check_is_fitted(self, "creator_metrics_")
        return panel_mod.creator_metrics(check_panel(X))


class FlowDecomposer(TransformerMixin, BaseEstimator):
    """Same/Retain/Cross/Drop path tables for both origin segments."""

    def __init__(self, horizon=3, origin_months=None):
        self.horizon = horizon
        self.origin_months = origin_months

    def fit(self, X, y=None):
        p = check_panel(X)
        self.tables_ = {SEGMENT_NAMES[s]: states.flow_distribution(p, s, self.origin_months,
                                                                   self.horizon)
                        for s in (AGENCY, INDEPENDENT)}
        return self

    def transform(self, X):
        check_is_fitted(self, "tables_")
        self.fit(X)
        return pd.concat([t.to_frame() for t in self.tables_.values()], ignore_index=True)


class OverlapNetwork(TransformerMixin, BaseEstimator):
    """Monthly overlap graphs, their unified aggregate and per-segment metrics."""

    def __init__(self, theta=0.05, n_min=10, tau_u=25, include_subthreshold=False, threads=1):
        self.theta = theta
        self.n_min = n_min
        self.tau_u = tau_u
        self.include_subthreshold = include_subthreshold
        self.threads = threads

    def fit(self, X, y=None):
        p = check_panel(X)
        self.config_ = overlap.OverlapConfig(self.theta, self.n_min, self.tau_u)
        self.monthly_graphs_ = overlap.build_month_graphs(p, self.config_, threads=self.threads)
        self.unified_ = overlap.unified_graph(self.monthly_graphs_, self.include_subthreshold)
        return self

    def transform(self, X):
        check_is_fitted(self, "monthly_graphs_")
        if X is not None:
            self.fit(X)
        return graphmetrics.metrics_timeseries(self.monthly_graphs_)

    def node_metrics(self) -> pd.DataFrame:
        check_is_fitted(self, "unified_")
        return graphmetrics.node_metrics(self.unified_)


class SegmentComparison(BaseEstimator):
    """Gated two-sample (or paired) comparison of Agency vs Independent values."""

    def __init__(self, paired=False, alpha=stats.ALPHA):
        self.paired = paired
        self.alpha = alpha

    def fit(self, X, y):
        fn = stats.compare_paired if self.paired else stats.compare_unpaired
        self.result_ = fn(X, y, alpha=self.alpha)
        return self
