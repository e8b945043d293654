"""Jurisdiction-level aggregation: flow centralities, tallies, regressions.

Capital flows between jurisdictions are proxied by counting substantial
links that cross a border (an optional per-edge value array switches to
value mode). The sink score rewards jurisdictions that retain much more
inbound than outbound flow relative to their GDP share; the conduit score
rewards pass-through volume toward sink-flagged jurisdictions.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats

from .components import REGION_NAMES, BowTie
from .errors import LoadError
from .keyfirms import ClassificationReport, Role, ROLE_NAMES

SINK_THRESHOLD = 10.0
CONDUIT_THRESHOLD = 1.0

PROFILE_HEADER = ["code", "gdp", "gdp_year", "statutory_rate", "wtc"]

TALLY_DIMENSIONS = ("hq", "holding", "hc", "conduit", "affiliates")

_DIMENSION_ROLE = {
    "holding": Role.HOLDING,
    "hc": Role.HOLDING_AND_CONDUIT,
    "conduit": Role.CONDUIT,
}


@dataclass(frozen=True)
class JurisdictionProfile:
    code: str
    gdp: float | None
    gdp_year: int | None = None
    statutory_rate: float | None = None
    wtc: float | None = None


def load_profiles(path) -> dict[str, JurisdictionProfile]:
    """Read ``code,gdp,gdp_year,statutory_rate,wtc`` profile rows."""
    path = Path(path)
    profiles: dict[str, JurisdictionProfile] = {}
    try:
        handle = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise LoadError(str(exc), path) from exc
    with handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != PROFILE_HEADER:
            raise LoadError(f"expected header {','.join(PROFILE_HEADER)}", path, 1)
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(PROFILE_HEADER):
                raise LoadError(f"expected {len(PROFILE_HEADER)} fields", path, line)
            code = row[0].strip()
            if not code:
                raise LoadError("empty jurisdiction code", path, line)
            if code in profiles:
                raise LoadError(f"duplicate jurisdiction {code!r}", path, line)

            def opt_float(raw, name):
                raw = raw.strip()
                if raw == "":
                    return None
                try:
                    return float(raw)
                except ValueError:
                    raise LoadError(f"cannot parse {name} {raw!r}", path, line) from None

            gdp = opt_float(row[1], "gdp")
            if gdp is not None and gdp <= 0:
                raise LoadError(f"gdp must be positive, got {gdp}", path, line)
            year_raw = row[2].strip()
            wtc = opt_float(row[4], "wtc")
            if wtc is not None and wtc < 0:
                raise LoadError(f"wtc must be nonnegative, got {wtc}", path, line)
            profiles[code] = JurisdictionProfile(
                code=code,
                gdp=gdp,
                gdp_year=int(year_raw) if year_raw else None,
                statutory_rate=opt_float(row[3], "statutory_rate"),
                wtc=wtc,
            )
    return profiles


VALUE_HEADER = ["subsidiary_id", "shareholder_id", "value"]


def load_edge_values(path, view) -> np.ndarray:
    """Per-edge values aligned with the view's canonical edge order.

    Rows name an edge by its endpoints (``subsidiary_id,shareholder_id,
    value``); repeated rows add up, edges without a row get 0, and rows for
    pairs absent from the view (e.g. below the threshold) are ignored.
    """
    path = Path(path)
    g = view.graph
    n = np.int64(view.n_nodes)
    keys = view.src.astype(np.int64) * n + view.dst.astype(np.int64)
    order = np.argsort(keys, kind="stable")
    sorted_keys = keys[order]
    values = np.zeros(view.n_edges, dtype=np.float64)
    try:
        handle = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise LoadError(str(exc), path) from exc
    with handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != VALUE_HEADER:
            raise LoadError(f"expected header {','.join(VALUE_HEADER)}", path, 1)
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise LoadError("expected 3 fields", path, line)
            try:
                sub = g.index_of(row[0].strip())
                sh = g.index_of(row[1].strip())
            except Exception:
                raise LoadError(f"unknown node in value row", path, line) from None
            try:
                value = float(row[2])
            except ValueError:
                raise LoadError(f"cannot parse value {row[2]!r}", path, line) from None
            if value < 0:
                raise LoadError(f"value must be nonnegative, got {value}", path, line)
            key = np.int64(sub) * n + np.int64(sh)
            lo = int(np.searchsorted(sorted_keys, key, side="left"))
            hi = int(np.searchsorted(sorted_keys, key, side="right"))
            # parallel edges share the pair: spread the value over them
            if hi > lo:
                values[order[lo:hi]] += value / (hi - lo)
    return values


@dataclass(frozen=True)
class FlowAggregate:
    """Per-jurisdiction inbound/outbound/pass-through flow totals."""

    v_in: dict[str, float]
    v_out: dict[str, float]
    v_pass: dict[str, float] | None = None

    @property
    def total_in(self) -> float:
        return sum(self.v_in.values())

    @property
    def total_pass(self) -> float:
        return sum(self.v_pass.values()) if self.v_pass else 0.0


def link_flows(view, edge_values=None) -> FlowAggregate:
    """Cross-border flow totals per jurisdiction over the view's edges.

    An edge contributes to the source jurisdiction's outbound and the
    target jurisdiction's inbound total only when the two bucket labels
    differ ("n.a." is its own bucket). ``edge_values`` (aligned with the
    view's canonical edge order) switches from link counts to value mode.
    """
    g = view.graph
    weights = np.ones(view.n_edges) if edge_values is None else np.asarray(edge_values, dtype=np.float64)
    if weights.shape[0] != view.n_edges:
        raise ValueError("edge_values must align with the view's edges")
    jsrc = g.jurisdiction_index[view.src]
    jdst = g.jurisdiction_index[view.dst]
    cross = jsrc != jdst
    n_labels = len(g.jurisdiction_labels)
    out_totals = np.bincount(jsrc[cross], weights=weights[cross], minlength=n_labels)
    in_totals = np.bincount(jdst[cross], weights=weights[cross], minlength=n_labels)
    labels = g.jurisdiction_labels
    v_in = {labels[i]: float(in_totals[i]) for i in range(n_labels) if in_totals[i]}
    v_out = {labels[i]: float(out_totals[i]) for i in range(n_labels) if out_totals[i]}
    return FlowAggregate(v_in=v_in, v_out=v_out)


@dataclass(frozen=True)
class CentralityScores:
    scores: dict[str, float]
    flagged: list[str]
    skipped: list[str]
    threshold: float


def _gdp_table(profiles) -> tuple[dict[str, float], float]:
    gdp = {p.code: p.gdp for p in profiles.values() if p.gdp is not None}
    return gdp, sum(gdp.values())


def sink_centrality(flows: FlowAggregate, profiles: dict[str, JurisdictionProfile]) -> CentralityScores:
    """GDP-normalised net capital retention score; flagged above 10."""
    total_in = flows.total_in
    if total_in <= 0:
        raise ValueError("total inbound flow is zero; sink centrality undefined")
    gdp, gdp_sum = _gdp_table(profiles)
    codes = sorted(set(flows.v_in) | set(flows.v_out))
    scores: dict[str, float] = {}
    skipped: list[str] = []
    for code in codes:
        if code not in gdp:
            skipped.append(code)
            continue
        net = flows.v_in.get(code, 0.0) - flows.v_out.get(code, 0.0)
        scores[code] = net / total_in * (gdp_sum / gdp[code])
    flagged = [c for c, s in scores.items() if s > SINK_THRESHOLD]
    return CentralityScores(scores, flagged, skipped, SINK_THRESHOLD)


def pass_flows(view, sink_codes, edge_values=None) -> dict[str, float]:
    """Pass-through volume per jurisdiction.

    A node accrues one unit for every two-edge path u -> x -> w where both
    endpoints sit outside x's jurisdiction and the terminal jurisdiction is
    sink-flagged; in value mode the unit becomes (inbound value sum) *
    (outbound value sum).
    """
    g = view.graph
    weights = np.ones(view.n_edges) if edge_values is None else np.asarray(edge_values, dtype=np.float64)
    jsrc = g.jurisdiction_index[view.src]
    jdst = g.jurisdiction_index[view.dst]
    labels = g.jurisdiction_labels
    sink_mask_by_label = np.array([label in set(sink_codes) for label in labels], dtype=bool)

    foreign = jsrc != jdst
    n = g.n_nodes
    inbound = np.bincount(view.dst[foreign], weights=weights[foreign], minlength=n)
    to_sink = foreign & sink_mask_by_label[jdst]
    outbound = np.bincount(view.src[to_sink], weights=weights[to_sink], minlength=n)

    per_node = inbound * outbound
    totals = np.bincount(g.jurisdiction_index, weights=per_node, minlength=len(labels))
    return {labels[i]: float(totals[i]) for i in range(len(labels)) if totals[i]}


def with_pass_flows(flows: FlowAggregate, view, sink_codes, edge_values=None) -> FlowAggregate:
    return FlowAggregate(flows.v_in, flows.v_out, pass_flows(view, sink_codes, edge_values))


def conduit_outward_centrality(flows: FlowAggregate, profiles: dict[str, JurisdictionProfile]) -> CentralityScores:
    """GDP-normalised pass-through score; flagged strictly above 1."""
    if flows.v_pass is None:
        raise ValueError("flows carry no pass-through totals; call with_pass_flows first")
    total = flows.total_pass
    if total <= 0:
        raise ValueError("total pass-through flow is zero; conduit centrality undefined")
    gdp, gdp_sum = _gdp_table(profiles)
    scores: dict[str, float] = {}
    skipped: list[str] = []
    codes = sorted(set(flows.v_in) | set(flows.v_out) | set(flows.v_pass))
    for code in codes:
        if code not in gdp:
            skipped.append(code)
            continue
        scores[code] = flows.v_pass.get(code, 0.0) / total * (gdp_sum / gdp[code])
    flagged = [c for c, s in scores.items() if s > CONDUIT_THRESHOLD]
    return CentralityScores(scores, flagged, skipped, CONDUIT_THRESHOLD)


# -- tallies over classification output -----------------------------------

def _ranked(counts: dict[str, int], top_k: int | None = None) -> list[tuple[str, int, float]]:
    total = sum(counts.values())
    rows = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    if top_k is not None:
        rows = rows[:top_k]
    return [(code, cnt, 100.0 * cnt / total) for code, cnt in rows]


def tally_by_jurisdiction(report: ClassificationReport, dimension: str,
                          top_k: int | None = None) -> list[tuple[str, int, float]]:
    """Ranked (code, count, percent) rows for one tally dimension."""
    if dimension not in TALLY_DIMENSIONS:
        raise ValueError(f"dimension must be one of {TALLY_DIMENSIONS}, got {dimension!r}")
    g = report.graph
    counts: dict[str, int] = {}

    def bump(node: int):
        jur = g.jurisdiction_of(node)
        counts[jur] = counts.get(jur, 0) + 1

    for cls in report.classifications:
        if dimension == "hq":
            if cls.hq_index >= 0:
                bump(cls.hq_index)
            continue
        for rec in cls.records:
            if dimension == "affiliates":
                bump(rec.index)
            elif rec.role == _DIMENSION_ROLE[dimension]:
                bump(rec.index)
    if not counts:
        return []
    return _ranked(counts, top_k)


def tally_by_bowtie(report: ClassificationReport, bowtie: BowTie) -> dict[str, dict[str, int]]:
    """Bow-tie region counts for headquarters and each key-company role."""
    out: dict[str, dict[str, int]] = {}

    def bump(category: str, node: int):
        region = REGION_NAMES[int(bowtie.region[node])]
        bucket = out.setdefault(category, {})
        bucket[region] = bucket.get(region, 0) + 1

    for cls in report.classifications:
        if cls.hq_index >= 0:
            bump("hq", cls.hq_index)
        for rec in cls.records:
            if rec.role != Role.NONE:
                bump(ROLE_NAMES[rec.role], rec.index)
    return out


@dataclass(frozen=True)
class ChainTable:
    """Jurisdiction shares of direct subsidiaries and shareholders."""

    role: str
    jurisdiction: str
    subsidiaries: list[tuple[str, int, float]]
    shareholders: list[tuple[str, int, float]]


def chain_tables(report: ClassificationReport, view, role: Role, jurisdiction: str,
                 top_k: int = 5) -> ChainTable:
    """Where the key companies of one role in one jurisdiction connect to.

    Direct subsidiaries are the firms' in-neighbors over the substantial
    view, direct shareholders their out-neighbors; firms appearing under
    several MNCs are counted once.
    """
    if role == Role.NONE:
        raise ValueError("role must be Holding, Conduit, or HoldingAndConduit")
    g = view.graph
    firms: set[int] = set()
    for cls in report.classifications:
        for rec in cls.records:
            if rec.role == role and g.jurisdiction_of(rec.index) == jurisdiction:
                firms.add(rec.index)

    subs: dict[str, int] = {}
    share: dict[str, int] = {}
    for firm in sorted(firms):
        for s in view.in_neighbors(firm):
            code = g.jurisdiction_of(int(s))
            subs[code] = subs.get(code, 0) + 1
        for s in view.out_neighbors(firm):
            code = g.jurisdiction_of(int(s))
            share[code] = share.get(code, 0) + 1
    return ChainTable(
        role=ROLE_NAMES[role],
        jurisdiction=jurisdiction,
        subsidiaries=_ranked(subs, top_k) if subs else [],
        shareholders=_ranked(share, top_k) if share else [],
    )


@dataclass(frozen=True)
class HqTables:
    """HQ-jurisdiction shares per role, and key-firm locations per HQ home."""

    by_role: dict[str, list[tuple[str, int, float]]]
    locations: dict[tuple[str, str], list[tuple[str, int, float]]]


def hq_tables(report: ClassificationReport, top_k: int = 5) -> HqTables:
    g = report.graph
    by_role_counts: dict[str, dict[str, int]] = {}
    loc_counts: dict[tuple[str, str], dict[str, int]] = {}
    for cls in report.classifications:
        if cls.hq_index < 0:
            continue
        hq_jur = g.jurisdiction_of(cls.hq_index)
        for rec in cls.records:
            if rec.role == Role.NONE:
                continue
            role_name = ROLE_NAMES[rec.role]
            bucket = by_role_counts.setdefault(role_name, {})
            bucket[hq_jur] = bucket.get(hq_jur, 0) + 1
            loc = loc_counts.setdefault((hq_jur, role_name), {})
            code = g.jurisdiction_of(rec.index)
            loc[code] = loc.get(code, 0) + 1
    return HqTables(
        by_role={r: _ranked(c, top_k) for r, c in sorted(by_role_counts.items())},
        locations={k: _ranked(c, top_k) for k, c in sorted(loc_counts.items())},
    )


# -- regression ------------------------------------------------------------

@dataclass(frozen=True)
class RegressionResult:
    intercept: float
    slope: float
    t_intercept: float
    t_slope: float
    p_intercept: float
    p_slope: float
    r_squared: float
    adj_r_squared: float
    n: int


def ols_regression(x, y) -> RegressionResult:
    """Ordinary least squares of y on x with intercept.

    Exact-t p-values with n-2 degrees of freedom. Requires n >= 3 and a
    non-constant regressor.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = x.shape[0]
    if y.shape[0] != n:
        raise ValueError("x and y must have equal length")
    if n < 3:
        raise ValueError(f"need at least 3 observations, got {n}")
    if np.ptp(x) == 0:
        raise ValueError("constant regressor: singular design")

    xm, ym = x.mean(), y.mean()
    sxx = float(((x - xm) ** 2).sum())
    sxy = float(((x - xm) * (y - ym)).sum())
    slope = sxy / sxx
    intercept = ym - slope * xm

    resid = y - (intercept + slope * x)
    ssr = float((resid**2).sum())
    sst = float(((y - ym) ** 2).sum())
    df = n - 2
    sigma2 = ssr / df
    se_slope = math.sqrt(sigma2 / sxx)
    se_intercept = math.sqrt(sigma2 * (1.0 / n + xm * xm / sxx))

    def t_and_p(coef, se):
        if se == 0.0:
            return (math.inf if coef > 0 else (-math.inf if coef < 0 else 0.0),
                    0.0 if coef != 0 else 1.0)
        t = coef / se
        return t, 2.0 * float(stats.t.sf(abs(t), df))

    t_int, p_int = t_and_p(intercept, se_intercept)
    t_slo, p_slo = t_and_p(slope, se_slope)
    r2 = 1.0 - ssr / sst if sst > 0 else 0.0
    adj = 1.0 - (1.0 - r2) * (n - 1) / (n - 2)
    return RegressionResult(intercept, slope, t_int, t_slo, p_int, p_slo, r2, adj, n)
