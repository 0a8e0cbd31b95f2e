"""Run configuration and the stage runners behind the command-line interface."""
from __future__ import annotations

import hashlib
import json
import math
import platform
import shutil
import tempfile
from dataclasses import dataclass, field, fields
from functools import cached_property
from pathlib import Path
from typing import Mapping, Optional

import numpy as np
import pandas as pd

from . import __version__
from .errors import ConfigError, FanflowError
from .graphmetrics import metrics_timeseries, node_metrics
from .ingest import (AGENCY, INDEPENDENT, SEGMENT_NAMES, dedupe, parse_events, parse_roster,
                     write_events, write_roster)
from .months import MonthKey, MonthWindow
from .overlap import (OverlapConfig, build_month_graphs, monthly_edge_frame, node_frame,
                      unified_graph)
from .panel import CREATOR_METRICS, build_panel, creator_metrics, retention_table
from .states import default_origin_months, export_sankey, flow_distribution
from .stats import compare_paired, compare_unpaired
from .synth import SynthConfig, acceptance_config, generate

COMMANDS = ("ingest", "panel", "states", "network", "metrics", "stats", "synth", "report")
NETWORK_METRICS = ("n_nodes", "n_edges", "density", "avg_degree", "clustering", "lcc")


@dataclass
class RunConfig:
    events: Optional[str] = None
    roster: Optional[str] = None
    start: Optional[str] = None   # key "from"
    end: Optional[str] = None     # key "to"
    theta: float = 0.05
    n_min: int = 10
    tau_u: int = 25
    retention_horizons: tuple = (2, 3)
    horizon: int = 3
    origin_months: Optional[tuple] = None
    out: str = "fanflow-out"
    seed: Optional[int] = None
    threads: int = 1
    format: str = "csv"
    alpha: float = 0.05
    unified_subthreshold: bool = False
    synth: dict = field(default_factory=dict)

    # -- construction ----------------------------------------------------
    @classmethod
    def resolve(cls, *layers: Mapping[str, object]) -> "RunConfig":
        """Merge key/value layers (later wins) over the defaults and validate."""
        merged: dict = {}
        synth: dict = {}
        for layer in layers:
            for key, value in layer.items():
                if value is None:
                    continue
                key = key.strip().replace("-", "_")
                if key.startswith("synth."):
                    synth[key[len("synth."):]] = value
                else:
                    merged[_ALIASES.get(key, key)] = value
        known = {f.name for f in fields(cls)} - {"synth"}
        unknown = sorted(set(merged) - known)
        if unknown:
            raise ConfigError(f"unknown configuration key(s): {', '.join(unknown)}")
        cfg = cls(synth=synth)
        for key, value in merged.items():
            setattr(cfg, key, _coerce(key, value))
        cfg.validate()
        return cfg

    def validate(self) -> None:
        OverlapConfig(self.theta, self.n_min, self.tau_u)
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        if not self.retention_horizons or min(self.retention_horizons) < 1:
            raise ConfigError("retention horizons must be positive")
        if self.format not in ("csv", "json"):
            raise ConfigError(f"format must be csv or json, got {self.format!r}")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")
        if (self.start is None) != (self.end is None):
            raise ConfigError("give both --from and --to, or neither")
        if self.start is not None:
            MonthWindow.parse(self.start, self.end)

    @property
    def window(self) -> Optional[MonthWindow]:
        return None if self.start is None else MonthWindow.parse(self.start, self.end)

    @property
    def overlap(self) -> OverlapConfig:
        return OverlapConfig(self.theta, self.n_min, self.tau_u)

    def synth_config(self) -> SynthConfig:
        values = dict(self.synth)
        if self.seed is not None:
            values["seed"] = self.seed
        return SynthConfig.from_mapping(values, base=acceptance_config())

    def as_mapping(self) -> dict:
        out = {}
        for f in fields(self):
            if f.name in ("synth", "out"):
                continue
            v = getattr(self, f.name)
            key = _REVERSE_ALIASES.get(f.name, f.name)
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            out[key] = v
        for k, v in sorted(self.synth.items()):
            out[f"synth.{k}"] = v
        return out

    def to_text(self) -> str:
        """Serialise as a config file that reproduces this run (``out`` excluded)."""
        lines = []
        for k, v in self.as_mapping().items():
            if v is None:
                continue
            if isinstance(v, bool):
                v = "true" if v else "false"
            lines.append(f"{k} = {v}")
        return "\n".join(lines) + "\n"


_ALIASES = {"from": "start", "to": "end", "from_": "start"}
_REVERSE_ALIASES = {"start": "from", "end": "to"}


def _parse_bool(v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {v!r}")


def parse_origin_months(value) -> tuple:
    """'2023-01,2023-03' or ranges like '2023-01:2023-06'."""
    if isinstance(value, (list, tuple)):
        items = [str(v) for v in value]
    else:
        items = [p for p in str(value).split(",") if p.strip()]
    months = []
    for item in items:
        if ":" in item:
            a, b = item.split(":", 1)
            months.extend(str(m) for m in MonthWindow.parse(a, b))
        else:
            months.append(str(MonthKey.parse(item)))
    return tuple(sorted(set(months)))


def _coerce(key: str, value):
    try:
        if key in ("theta", "alpha"):
            return float(value)
        if key in ("n_min", "tau_u", "horizon", "threads"):
            f = float(value)
            if f != int(f):
                raise ValueError(value)
            return int(f)
        if key == "seed":
            return int(str(value), 0)
        if key == "retention_horizons":
            if isinstance(value, (list, tuple)):
                return tuple(int(v) for v in value)
            return tuple(int(v) for v in str(value).split(",") if v.strip())
        if key == "origin_months":
            return parse_origin_months(value)
        if key == "unified_subthreshold":
            return _parse_bool(value)
        if key in ("start", "end"):
            return str(MonthKey.parse(value))
        return str(value)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad value for {key}: {value!r}") from None


def read_config_file(path) -> dict:
    """Plain ``key = value`` lines; '#' starts a comment."""
    values = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        k, v = line.split("=", 1)
        values[k.strip()] = v.strip()
    return values


# ---------------------------------------------------------------------------
# serialisation helpers

def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return None if math.isnan(f) or math.isinf(f) else f
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def dumps_json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, allow_nan=False) + "\n"


def _write_table(df: pd.DataFrame, outdir: Path, stem: str, fmt: str) -> str:
    if fmt == "json":
        name = f"{stem}.json"
        records = df.astype(object).where(pd.notna(df), None).to_dict(orient="records")
        (outdir / name).write_text(dumps_json(records), encoding="utf-8")
    else:
        name = f"{stem}.csv"
        df.to_csv(outdir / name, index=False, lineterminator="\n")
    return name


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _versions() -> dict:
    import polars
    import scipy
    import sklearn
    return {"fanflow": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__, "pandas": pd.__version__,
            "polars": polars.__version__, "scikit-learn": sklearn.__version__}


# ---------------------------------------------------------------------------
# lazily computed pipeline state

class Analysis:
    """Caches each stage's product for one configuration."""

    def __init__(self, config: RunConfig):
        self.config = config

    @cached_property
    def roster(self):
        if not self.config.roster:
            raise ConfigError("no roster given (--roster)")
        if not Path(self.config.roster).is_file():
            raise ConfigError(f"roster not found: {self.config.roster}")
        return parse_roster(self.config.roster)

    @cached_property
    def _ingested(self):
        if not self.config.events:
            raise ConfigError("no events given (--events)")
        if not Path(self.config.events).is_file():
            raise ConfigError(f"events not found: {self.config.events}")
        table, report = parse_events(self.config.events, window=self.config.window,
                                     roster=self.roster)
        deduped = dedupe(table)
        summary = report.as_dict()
        summary["duplicates_removed"] = len(table) - len(deduped)
        summary["events"] = len(deduped)
        summary["roster"] = self.roster.report.as_dict()
        return deduped, summary

    @property
    def events(self):
        return self._ingested[0]

    @property
    def ingest_report(self) -> dict:
        return self._ingested[1]

    @cached_property
    def panel(self):
        return build_panel(self.events, self.roster, self.config.window)

    @cached_property
    def creator_metrics(self) -> pd.DataFrame:
        return creator_metrics(self.panel)

    @cached_property
    def retention(self) -> pd.DataFrame:
        return retention_table(self.panel, self.config.retention_horizons)

    @cached_property
    def origin_months(self) -> list:
        if self.config.origin_months is not None:
            return list(self.config.origin_months)
        return [str(m) for m in default_origin_months(self.panel, self.config.horizon)]

    @cached_property
    def flows(self) -> dict:
        return {s: flow_distribution(self.panel, s, self.origin_months, self.config.horizon)
                for s in (AGENCY, INDEPENDENT)}

    @cached_property
    def graphs(self) -> list:
        return build_month_graphs(self.panel, self.config.overlap, threads=self.config.threads)

    @cached_property
    def unified(self):
        return unified_graph(self.graphs, self.config.unified_subthreshold)

    @cached_property
    def timeseries(self) -> pd.DataFrame:
        return metrics_timeseries(self.graphs)

    @cached_property
    def node_metrics(self) -> pd.DataFrame:
        return node_metrics(self.unified)

    # -- statistics ------------------------------------------------------
    def commitment_stats(self) -> dict:
        cm = self.creator_metrics
        descriptive, tests = [], []
        for metric in CREATOR_METRICS:
            a = cm.loc[cm.affiliation == AGENCY, metric].dropna().to_numpy()
            b = cm.loc[cm.affiliation == INDEPENDENT, metric].dropna().to_numpy()
            ma = float(a.mean()) if len(a) else None
            mb = float(b.mean()) if len(b) else None
            descriptive.append({"metric": metric, "n_agency": len(a), "n_independent": len(b),
                                "mean_agency": ma, "mean_independent": mb,
                                "delta": None if ma is None or mb is None else ma - mb})
            tests.append({"metric": metric, **_safe(compare_unpaired, a, b, self.config.alpha)})
        return {"descriptive": descriptive, "tests": tests}

    def network_stats(self) -> dict:
        ts = self.timeseries
        ag = ts[ts.segment == SEGMENT_NAMES[AGENCY]].set_index("month")
        ind = ts[ts.segment == SEGMENT_NAMES[INDEPENDENT]].set_index("month")
        both = [m for m in ag.index if m in ind.index and not ag.at[m, "empty"]
                and not ind.at[m, "empty"]]
        descriptive, tests = [], []
        for metric in NETWORK_METRICS:
            a = ag.loc[both, metric].to_numpy(dtype=float)
            b = ind.loc[both, metric].to_numpy(dtype=float)
            descriptive.append({"metric": metric, "n": len(both),
                                "mean_agency": float(a.mean()) if len(a) else None,
                                "mean_independent": float(b.mean()) if len(b) else None,
                                "delta": float((a - b).mean()) if len(a) else None})
            tests.append({"metric": metric, "n": len(both),
                          **_safe(compare_paired, a, b, self.config.alpha)})
        return {"months_paired": both, "descriptive": descriptive, "tests": tests}

    def unified_summary(self) -> dict:
        nm = self.node_metrics
        by_seg = {}
        for name, grp in nm.groupby("affiliation", sort=True):
            by_seg[name] = {c: float(grp[c].mean()) for c in
                            ("weighted_degree", "degree", "clustering", "betweenness")}
            by_seg[name]["nodes"] = int(len(grp))
        return {"nodes": self.unified.n_nodes, "edges": self.unified.n_edges,
                "mode": "all co-chatted pairs" if self.config.unified_subthreshold
                else "retained monthly edges",
                "node_metric_means": by_seg}


def _safe(fn, a, b, alpha) -> dict:
    try:
        res = fn(a, b, alpha=alpha).as_dict()
    except FanflowError as exc:
        return {"test": None, "error": str(exc)}
    out = {"test": res["test"], "statistic": res["statistic"], "p_value": res["p_value"],
           "effect_size_kind": res["effect_size_kind"], "effect_size": res["effect_size"],
           "sample_sizes": res["n"], "method": res["method"]}
    if "shapiro_diff" in res["gate_p"]:
        out["p_sw"] = res["gate_p"]["shapiro_diff"]
    else:
        out["p_sw_agency"] = res["gate_p"].get("shapiro_a")
        out["p_sw_independent"] = res["gate_p"].get("shapiro_b")
    return out


# ---------------------------------------------------------------------------
# stage writers; each returns the list of files written

def stage_ingest(an: Analysis, out: Path) -> list:
    ext = "jsonl" if an.config.format == "json" else "csv"
    write_events(an.events, out / f"events.{ext}", ext)
    (out / "ingest_report.json").write_text(dumps_json(an.ingest_report), encoding="utf-8")
    return [f"events.{ext}", "ingest_report.json"]


def stage_panel(an: Analysis, out: Path) -> list:
    fmt = an.config.format
    files = [_write_table(an.retention, out, "retention", fmt),
             _write_table(an.creator_metrics, out, "creator_metrics", fmt)]
    return files


def stage_states(an: Analysis, out: Path) -> list:
    files = []
    frames = []
    for seg, table in an.flows.items():
        name = f"sankey_{SEGMENT_NAMES[seg].lower()}.json"
        payload = export_sankey(table) if not table.empty else {
            "origin_segment": SEGMENT_NAMES[seg], "empty": True,
            "metadata": {"origin_months": table.origin_months, "cohort_size": 0,
                         "excluded_not_evaluable": table.excluded}}
        (out / name).write_text(dumps_json(payload), encoding="utf-8")
        files.append(name)
        frames.append(table.to_frame())
    files.append(_write_table(pd.concat(frames, ignore_index=True), out, "flow_paths",
                              an.config.format))
    return files


def stage_network(an: Analysis, out: Path) -> list:
    fmt = an.config.format
    return [_write_table(monthly_edge_frame(an.graphs), out, "edges_monthly", fmt),
            _write_table(an.unified.edge_frame(), out, "edges_unified", fmt),
            _write_table(node_frame(an.graphs), out, "nodes", fmt)]


def stage_metrics(an: Analysis, out: Path) -> list:
    fmt = an.config.format
    return [_write_table(an.timeseries, out, "network_metrics", fmt),
            _write_table(an.node_metrics, out, "node_metrics", fmt)]


def stage_stats(an: Analysis, out: Path) -> list:
    payload = {"commitment": an.commitment_stats(), "network": an.network_stats()}
    (out / "stats.json").write_text(dumps_json(payload), encoding="utf-8")
    return ["stats.json"]


def stage_synth(an: Analysis, out: Path) -> list:
    cfg = an.config.synth_config()
    events, roster = generate(cfg)
    ext = "jsonl" if an.config.format == "json" else "csv"
    write_events(events, out / f"events.{ext}", ext)
    write_roster(roster, out / "roster.csv")
    lines = [f"synth.{k} = {str(v).lower() if isinstance(v, bool) else v}"
             for k, v in cfg.to_mapping().items()]
    (out / "synth.conf").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return [f"events.{ext}", "roster.csv", "synth.conf"]


def stage_report(an: Analysis, out: Path) -> list:
    files = stage_ingest(an, out) + stage_panel(an, out) + stage_states(an, out)
    files += stage_network(an, out) + stage_metrics(an, out)
    report = {
        "window": str(an.panel.window),
        "ingest": an.ingest_report,
        "panel": {"fans": an.panel.n_users, "channels": an.panel.n_channels,
                  "months": an.panel.n_months, "cells": len(an.panel.count),
                  "messages": an.panel.total_messages()},
        "commitment": an.commitment_stats(),
        "flows": {SEGMENT_NAMES[s]: {
            "cohort_size": t.cohort_size, "excluded_not_evaluable": t.excluded,
            "origin_months": t.origin_months,
            "marginal_shares": {f"T{i + 1}": dict(zip(("Same", "Retain", "Cross", "Drop"), row))
                                for i, row in enumerate(t.marginals().tolist())}}
            for s, t in an.flows.items()},
        "network": an.network_stats(),
        "unified": an.unified_summary(),
        "conventions": {
            "clustering": "mean local clustering over all nodes, degree<2 counted as 0",
            "betweenness": "unweighted, unnormalised, each unordered pair once",
            "creator_run_metric": "longest active run",
            "unified_weights": "sum of retained monthly Simpson weights"
            if not an.config.unified_subthreshold else "sum of all monthly Simpson values",
        },
    }
    (out / "report.json").write_text(dumps_json(report), encoding="utf-8")
    return files + ["report.json"]


STAGES = {"ingest": stage_ingest, "panel": stage_panel, "states": stage_states,
          "network": stage_network, "metrics": stage_metrics, "stats": stage_stats,
          "synth": stage_synth, "report": stage_report}


def run(command: str, config: RunConfig) -> list:
    """Run one stage, writing atomically into ``config.out``.

    Outputs are staged in a temporary sibling directory and moved into place
    only when the stage succeeds, together with ``manifest.json`` and
    ``run.conf`` (the resolved configuration, reusable via ``--config``).
    """
    if command not in STAGES:
        raise ConfigError(f"unknown command {command!r}")
    out = Path(config.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=".fanflow-", dir=out.parent))
    try:
        an = Analysis(config)
        files = STAGES[command](an, tmp)
        (tmp / "run.conf").write_text(config.to_text(), encoding="utf-8")
        inputs = {}
        if command != "synth":
            for key in ("events", "roster"):
                path = getattr(config, key)
                if path:
                    inputs[key] = {"path": str(path), "sha256": _sha256(Path(path))}
        manifest = {
            "command": command,
            "parameters": config.as_mapping(),
            "inputs": inputs,
            "outputs": {name: _sha256(tmp / name) for name in sorted(files + ["run.conf"])},
            "versions": _versions(),
        }
        (tmp / "manifest.json").write_text(dumps_json(manifest), encoding="utf-8")
        out.mkdir(parents=True, exist_ok=True)
        for name in sorted(files + ["run.conf", "manifest.json"]):
            (tmp / name).replace(out / name)
        return files
    finally:
        shutil.rmtree(tmp, ignore_errors=True)
