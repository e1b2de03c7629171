"""Configuration and delimited-text formats used by the command-line tool."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .loss import LossSpec, node_prioritization
from .priors import PriorSpec, prior_from_risk
from .supply_model import (
    ConfigurationError,
    Dataset,
    IngestionError,
    Network,
    SourcingMatrix,
    TestRecord,
)
from .utility import SamplingPlan


class InputError(ValueError):
    """Malformed input file; the message cites the file and line."""


_FLOAT_KEYS = {
    "threshold_l": 0.2,
    "underestimation_v": 1.0,
    "weight_slope_m": 0.6,
    "prior_variance_nu": 2.0,
    "sensitivity": 1.0,
    "specificity": 1.0,
    "confidence_level": 0.95,
}
_INT_KEYS = {
    "budget": None,
    "interval": 10,
    "h1": 5000,
    "h2": 300,
    "seed": 0,
    "default_risk": 4,
    "bootstrap_draws": 44,
    "sourcing_seed": None,
    "savings_budget": None,
    "mcmc_chains": 4,
    "mcmc_thin": 5,
    "oracle_h2": 50,
}
_STR_KEYS = {"score": "assessment", "weight": "auto"}
_BOOL_KEYS = {"use_prioritization": False}
_LIST_KEYS = ("test_nodes", "supply_nodes", "reference_plan")
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)
    risk: dict = field(default_factory=dict)
    catchments: dict = field(default_factory=dict)
    lines: dict = field(default_factory=dict)
    path: str = "<config>"

    def __getattr__(self, name):
        try:
            return self.__dict__["values"][name]
        except KeyError:
            raise AttributeError(name) from None

    def with_overrides(self, **kw) -> "RunConfig":
        vals = dict(self.values)
        vals.update({k: v for k, v in kw.items() if v is not None})
        return RunConfig(vals, dict(self.risk), dict(self.catchments), dict(self.lines), self.path)

    def loss_spec(self, network: Network | None = None, sourcing: SourcingMatrix | None = None) -> LossSpec:
        prio = None
        if self.use_prioritization:
            if network is None or sourcing is None:
                raise ConfigurationError("prioritization needs the network and sourcing matrix")
            prio = node_prioritization(network, sourcing)
        return LossSpec(
            self.score,
            self.threshold_l,
            self.underestimation_v,
            self.weight_slope_m,
            prio,
            self.weight,
        )

    def prior(self, network: Network) -> PriorSpec:
        return prior_from_risk(network, self.risk, self.default_risk, self.prior_variance_nu)


def _convert(key: str, raw: str, where: str):
    try:
        if key in _FLOAT_KEYS:
            return float(raw)
        if key in _INT_KEYS:
            return int(raw)
        if key in _BOOL_KEYS:
            low = raw.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(raw)
        if key in _LIST_KEYS:
            items = [s.strip() for s in raw.split(",") if s.strip()]
            return [int(s) for s in items] if key == "reference_plan" else items
        return raw
    except ValueError:
        raise InputError(f"{where}: invalid value {raw!r} for {key}") from None


def read_config(path: str | Path | None) -> RunConfig:
    """Flat ``key = value`` file; '#' starts a comment. Unknown keys are rejected."""
    values = {**_FLOAT_KEYS, **_INT_KEYS, **_STR_KEYS, **_BOOL_KEYS}
    values.update({k: None for k in _LIST_KEYS})
    cfg = RunConfig(values, path=str(path) if path else "<defaults>")
    if path is None:
        return cfg
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc.strerror}") from None
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        where = f"{path} line {lineno}"
        if "=" not in body:
            raise InputError(f"{where}: expected 'key = value'")
        key, raw = (s.strip() for s in body.split("=", 1))
        if key in cfg.lines:
            raise InputError(f"{where}: duplicate key {key!r} (first on line {cfg.lines[key]})")
        cfg.lines[key] = lineno
        if key.startswith("risk."):
            try:
                cfg.risk[key[5:]] = int(raw)
            except ValueError:
                raise InputError(f"{where}: risk level must be an integer, got {raw!r}") from None
        elif key.startswith("catchment."):
            try:
                cfg.catchments[key[10:]] = float(raw)
            except ValueError:
                raise InputError(f"{where}: catchment must be a number, got {raw!r}") from None
        elif key in values:
            values[key] = _convert(key, raw, where)
        else:
            raise InputError(f"{where}: unknown key {key!r}")
    if values["sourcing_seed"] is None:
        values["sourcing_seed"] = values["seed"]
    return cfg


def read_records(path: str | Path, s_default: float = 1.0, r_default: float = 1.0) -> Dataset:
    """Test records: header test_node,supply_node,result[,sensitivity,specificity]."""
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise InputError(f"cannot read data {path}: {exc.strerror}") from None
    records = []
    with fh:
        reader = csv.DictReader(fh)
        required = {"test_node", "supply_node", "result"}
        if reader.fieldnames is None:
            return Dataset(())
        missing = required - {f.strip() for f in reader.fieldnames}
        if missing:
            raise InputError(f"{path} line 1: missing columns {sorted(missing)}")
        for row in reader:
            row = {(k or "").strip(): (v or "").strip() for k, v in row.items()}
            where = f"{path} line {reader.line_num}"
            try:
                result = int(row["result"])
                s = float(row["sensitivity"]) if row.get("sensitivity") else s_default
                r = float(row["specificity"]) if row.get("specificity") else r_default
                if not row["test_node"] or not row["supply_node"]:
                    raise IngestionError("empty node identifier")
                records.append(TestRecord(row["test_node"], row["supply_node"], result, s, r))
            except (ValueError, IngestionError) as exc:
                raise InputError(f"{where}: {exc}") from None
    return Dataset(tuple(records))


def build_network(cfg: RunConfig, dataset: Dataset) -> Network:
    """Nodes from the config lists, else in first-seen order from the data."""
    tests = list(cfg.test_nodes or [])
    supplies = list(cfg.supply_nodes or [])
    declared_t, declared_s = bool(tests), bool(supplies)
    for i, rec in enumerate(dataset.records):
        if rec.test_node not in tests:
            if declared_t:
                raise InputError(f"record {i + 1}: unknown test node {rec.test_node!r}")
            tests.append(rec.test_node)
        if rec.supply_node not in supplies:
            if declared_s:
                raise InputError(f"record {i + 1}: unknown supply node {rec.supply_node!r}")
            supplies.append(rec.supply_node)
    if not tests or not supplies:
        raise InputError("no nodes: list test_nodes and supply_nodes in the config or supply data")
    catch = dict(cfg.catchments) or None
    for label, keys in (("risk", cfg.risk), ("catchment", cfg.catchments)):
        unknown = set(keys) - set(tests) - set(supplies)
        if unknown:
            raise InputError(f"{label} given for unknown nodes {sorted(unknown)}")
    return Network(tuple(tests), tuple(supplies), catch, dict(cfg.risk) or None)


def read_plans(path: str | Path, network: Network) -> dict[str, np.ndarray]:
    """Named relative allocations: header plan,node,weight."""
    plans: dict[str, np.ndarray] = {}
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise InputError(f"cannot read plans {path}: {exc.strerror}") from None
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or {"plan", "node", "weight"} - set(reader.fieldnames):
            raise InputError(f"{path} line 1: header must be plan,node,weight")
        for row in reader:
            where = f"{path} line {reader.line_num}"
            name, node = row["plan"].strip(), row["node"].strip()
            if node not in network.test_nodes:
                raise InputError(f"{where}: plan {name!r} names unknown test node {node!r}")
            try:
                w = float(row["weight"])
            except ValueError:
                raise InputError(f"{where}: plan {name!r} has a non-numeric weight") from None
            if w < 0:
                raise InputError(f"{where}: plan {name!r} has a negative weight")
            plans.setdefault(name, np.zeros(network.n_test))[network.test_index(node)] += w
    for name, w in plans.items():
        if not np.any(w > 0):
            raise InputError(f"plan {name!r} allocates nothing")
    return plans


def write_rows(path: Path, header: Iterable[str], rows: Iterable[Iterable]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(header))
        writer.writerows(rows)


def write_plan_table(path: Path, budgets: Iterable[int], plans: Iterable[SamplingPlan], network: Network) -> None:
    rows = [
        (b, node, int(k))
        for b, plan in zip(budgets, plans)
        for node, k in zip(network.test_nodes, plan.alloc)
    ]
    write_rows(path, ("budget", "node", "allocation"), rows)


def read_plan_table(path: str | Path, network: Network) -> dict[int, SamplingPlan]:
    """Inverse of ``write_plan_table``."""
    allocs: dict[int, np.ndarray] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            where = f"{path} line {reader.line_num}"
            try:
                b = int(row["budget"])
                k = int(row["allocation"])
                a = network.test_index(row["node"])
            except (ValueError, KeyError):
                raise InputError(f"{where}: malformed plan-table row") from None
            allocs.setdefault(b, np.zeros(network.n_test, np.int64))[a] = k
    return {b: SamplingPlan(a) for b, a in allocs.items()}


def fmt(x) -> str:
    """Round-trippable float formatting."""
    return repr(float(x))


__all__ = [
    "InputError",
    "RunConfig",
    "read_config",
    "read_records",
    "build_network",
    "read_plans",
    "write_rows",
    "write_plan_table",
    "read_plan_table",
    "fmt",
]
