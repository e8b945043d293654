"""End-to-end pipeline: ingest through jurisdiction reports, with manifest.

Stages run in dependency order and write their artifacts under the output
directory; ``manifest.json`` records every artifact with a sha256 content
hash. Outputs carry no timestamps, so identical inputs and seeds reproduce
identical bytes.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import components as comp
from . import jurisdiction as jur
from . import netstats
from .community import community_size_histogram, detect_communities
from .errors import FitError, OwnetError, PipelineError
from .graph import (
    OwnershipGraph,
    induced_subgraph,
    load_cache,
    load_graph,
    save_cache,
    substantial_view,
    write_csv_rows,
)
from .keyfirms import ROLE_NAMES, Role, classify_all
from .mnc import build_subtree, load_hq_list

STAGES = ("ingest", "bowtie", "stats", "communities", "extract", "identify", "jurisdiction")

MANIFEST_VERSION = 1


@dataclass
class RunConfig:
    """Inputs, knobs, and stage toggles for one pipeline run."""

    nodes: Path
    edges: Path
    outdir: Path
    hqs: Path | None = None
    profiles: Path | None = None
    threshold: float = 10.0
    seed: int = 0
    stages: tuple[str, ...] = STAGES
    bin_ratio: float = 2.0
    damping: float = 0.85
    communities_scope: str = "gwcc"
    threads: int = 1
    cache: Path | None = None
    rebuild_cache: bool = False

    @classmethod
    def from_json(cls, path) -> "RunConfig":
        with open(path, encoding="utf-8") as handle:
            raw = json.load(handle)
        base = Path(path).parent
        paths = {}
        for key in ("nodes", "edges", "outdir", "hqs", "profiles", "cache"):
            if raw.get(key) is not None:
                value = Path(raw.pop(key))
                paths[key] = value if value.is_absolute() else base / value
            elif key in raw:
                raw.pop(key)
        if "stages" in raw:
            raw["stages"] = tuple(raw["stages"])
        try:
            return cls(**raw, **paths)
        except TypeError as exc:
            raise PipelineError(f"bad config: {exc}") from exc

    def validate(self) -> None:
        """Fail fast: every input referenced by an enabled stage must exist."""
        unknown = set(self.stages) - set(STAGES)
        if unknown:
            raise PipelineError(f"unknown stages: {sorted(unknown)}")
        required = [("nodes", self.nodes), ("edges", self.edges)]
        if {"extract", "identify", "jurisdiction"} & set(self.stages):
            required.append(("hqs", self.hqs))
        if "jurisdiction" in self.stages:
            required.append(("profiles", self.profiles))
        for name, path in required:
            if path is None:
                raise PipelineError(f"stage inputs incomplete: {name} file not configured")
            if not Path(path).exists():
                raise PipelineError(f"missing input file: {name} ({path})")


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


class _Manifest:
    def __init__(self, outdir: Path, config: RunConfig):
        self.outdir = outdir
        self.data = {
            "version": MANIFEST_VERSION,
            "config": {
                "threshold": config.threshold,
                "seed": config.seed,
                "stages": list(config.stages),
                "bin_ratio": config.bin_ratio,
                "damping": config.damping,
                "communities_scope": config.communities_scope,
            },
            "stages": {},
            "status": "running",
        }

    def add(self, stage: str, path: Path) -> None:
        entry = self.data["stages"].setdefault(stage, {"artifacts": {}})
        entry["artifacts"][str(path.relative_to(self.outdir))] = _sha256(path)

    def finish(self, status: str) -> Path:
        self.data["status"] = status
        target = self.outdir / "manifest.json"
        with open(target, "w", encoding="utf-8") as handle:
            json.dump(self.data, handle, indent=2, sort_keys=True)
            handle.write("\n")
        return target


def _fmt(value: float) -> str:
    return repr(float(value))


def run_pipeline(config: RunConfig) -> Path:
    """Execute the configured stages; returns the manifest path.

    Any stage failure is re-raised as :class:`PipelineError` after the
    partial manifest is written.
    """
    config.validate()
    outdir = Path(config.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    manifest = _Manifest(outdir, config)
    state: dict[str, object] = {}
    try:
        for stage in STAGES:
            if stage in config.stages:
                _STAGE_FUNCS[stage](config, outdir, manifest, state)
    except OwnetError:
        manifest.finish("failed")
        raise
    except Exception as exc:
        manifest.finish("failed")
        raise PipelineError(f"stage failure: {exc}") from exc
    return manifest.finish("ok")


def _get_graph(config: RunConfig, state: dict) -> OwnershipGraph:
    if "graph" not in state:
        cache = Path(config.cache) if config.cache else Path(config.outdir) / "graph.npz"
        if cache.exists() and not config.rebuild_cache:
            state["graph"] = load_cache(cache)
        else:
            state["graph"] = load_graph(config.nodes, config.edges)
    return state["graph"]


def _stage_ingest(config, outdir, manifest, state):
    graph = _get_graph(config, state)
    cache = Path(config.cache) if config.cache else outdir / "graph.npz"
    save_cache(graph, cache)
    if cache.is_relative_to(outdir):
        manifest.add("ingest", cache)
    summary = outdir / "ingest_summary.json"
    with open(summary, "w", encoding="utf-8") as handle:
        json.dump(
            {
                "nodes": graph.n_nodes,
                "edges": graph.n_edges,
                "counters": graph.ingest_counters,
            },
            handle, indent=2, sort_keys=True,
        )
        handle.write("\n")
    manifest.add("ingest", summary)


def _stage_bowtie(config, outdir, manifest, state):
    graph = _get_graph(config, state)
    bowtie = comp.bowtie_decompose(graph)
    state["bowtie"] = bowtie

    path = outdir / "bowtie.csv"
    region = bowtie.region
    write_csv_rows(
        path, ["node_id", "region"],
        ((graph.ids[i], comp.REGION_NAMES[int(region[i])]) for i in range(graph.n_nodes)),
    )
    manifest.add("bowtie", path)

    path = outdir / "bowtie_summary.csv"
    write_csv_rows(path, ["component", "companies", "ratio"], bowtie.summary_rows())
    manifest.add("bowtie", path)

    for direction in ("in", "out"):
        hist = comp.distance_distribution(bowtie, direction)
        path = outdir / f"distances_{direction}.csv"
        write_csv_rows(
            path, ["distance", "count", "ratio"],
            ((d, c, _fmt(c / hist.total)) for d, c, _ in hist.rows()),
        )
        manifest.add("bowtie", path)

    weak = comp.weak_components(graph)
    hist = comp.component_size_histogram(weak)
    path = outdir / "component_sizes.csv"
    write_csv_rows(path, ["size", "count"], sorted(hist.items()))
    manifest.add("bowtie", path)


def _stage_stats(config, outdir, manifest, state):
    graph = _get_graph(config, state)
    stats_dir = outdir / "stats"
    stats_dir.mkdir(exist_ok=True)

    fits = {}
    for direction in ("in", "out"):
        hist = netstats.degree_histogram(graph, direction, config.bin_ratio)
        path = stats_dir / f"pk_{direction}.csv"
        write_csv_rows(
            path, ["bin_lo", "bin_hi", "count", "density"],
            ((_fmt(lo), _fmt(hi), c, _fmt(d)) for lo, hi, c, d in hist.rows()),
        )
        manifest.add("stats", path)

        deg = graph.in_degrees() if direction == "in" else graph.out_degrees()
        try:
            fit = netstats.fit_power_law(deg, x_min=None)
            fits[direction] = {
                "gamma": fit.gamma,
                "x_min": fit.x_min,
                "n_tail": fit.n_tail,
                "loglik": fit.loglik,
                "ks": fit.ks,
                "binned_slope": netstats.binned_fit_slope(deg, config.bin_ratio),
            }
        except FitError as exc:
            fits[direction] = {"error": str(exc)}

    curve = netstats.clustering_by_degree(graph)
    path = stats_dir / "ck.csv"
    write_csv_rows(
        path, ["k", "mean_clustering", "n"],
        ((int(k), _fmt(v), int(c)) for k, v, c in zip(curve.degrees, curve.values, curve.counts)),
    )
    manifest.add("stats", path)

    curve = netstats.knn_by_degree(graph)
    path = stats_dir / "knn.csv"
    write_csv_rows(
        path, ["k", "mean_knn", "n"],
        ((int(k), _fmt(v), int(c)) for k, v, c in zip(curve.degrees, curve.values, curve.counts)),
    )
    manifest.add("stats", path)

    path = stats_dir / "fits.json"
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(fits, handle, indent=2, sort_keys=True)
        handle.write("\n")
    manifest.add("stats", path)


def _stage_communities(config, outdir, manifest, state):
    graph = _get_graph(config, state)
    if config.communities_scope == "gwcc":
        weak = comp.weak_components(graph)
        keep = np.flatnonzero(weak.labels == weak.largest)
        scope = induced_subgraph(graph, [graph.ids[i] for i in keep])
    else:
        scope = graph
    partition = detect_communities(scope, seed=config.seed, damping=config.damping)

    path = outdir / "communities.csv"
    write_csv_rows(
        path, ["node_id", "community_id"],
        ((scope.ids[i], int(partition.labels[i])) for i in range(scope.n_nodes)),
    )
    manifest.add("communities", path)

    hist = community_size_histogram(partition, bin_ratio=config.bin_ratio)
    path = outdir / "dsizes.csv"
    rows = []
    for i in range(hist.counts.shape[0]):
        rows.append((_fmt(hist.bin_edges[i]), _fmt(hist.bin_edges[i + 1]),
                     int(hist.counts[i]), _fmt(hist.densities[i])))
    write_csv_rows(path, ["size_lo", "size_hi", "count", "density"], rows)
    manifest.add("communities", path)

    path = outdir / "communities_summary.json"
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(
            {"communities": partition.n_communities, "codelength": partition.codelength,
             "scope": config.communities_scope},
            handle, indent=2, sort_keys=True,
        )
        handle.write("\n")
    manifest.add("communities", path)


def _get_view(config, state):
    if "view" not in state:
        state["view"] = substantial_view(_get_graph(config, state), config.threshold)
    return state["view"]


def _get_report(config, state):
    if "report" not in state:
        view = _get_view(config, state)
        hq_list = load_hq_list(config.hqs)
        state["hq_list"] = hq_list
        state["report"] = classify_all(view, hq_list, threads=config.threads)
    return state["report"]


def _stage_extract(config, outdir, manifest, state):
    view = _get_view(config, state)
    graph = view.graph
    hq_list = state.get("hq_list") or load_hq_list(config.hqs)
    state["hq_list"] = hq_list
    mnc_dir = outdir / "mnc"
    mnc_dir.mkdir(exist_ok=True)
    for hq_id, name in hq_list:
        try:
            subtree = build_subtree(view, graph.index_of(hq_id))
        except OwnetError:
            continue
        path = mnc_dir / f"{name.replace('/', '_')}.csv"
        rows = [
            (graph.ids[int(a)], int(subtree.layers[i]), int(subtree.k_in[i]), int(subtree.k_out[i]))
            for i, a in enumerate(subtree.affiliates)
        ]
        write_csv_rows(path, ["node_id", "layer", "k_in", "k_out"], rows)
        manifest.add("extract", path)


def _stage_identify(config, outdir, manifest, state):
    report = _get_report(config, state)
    graph = report.graph

    path = outdir / "keyfirms.csv"
    rows = []
    for cls in report.classifications:
        for rec in cls.records:
            rows.append(
                (
                    cls.mnc,
                    rec.affiliate,
                    rec.layer,
                    rec.k_in,
                    rec.k_out,
                    _fmt(rec.holding) if rec.holding is not None else "",
                    _fmt(rec.conduit) if rec.conduit is not None else "",
                    "1" if rec.third_country else "0",
                    ROLE_NAMES[rec.role],
                )
            )
    write_csv_rows(
        path,
        ["mnc", "affiliate_id", "layer", "k_in", "k_out", "H", "T", "third_country", "role"],
        rows,
    )
    manifest.add("identify", path)

    path = outdir / "mnc_summary.csv"
    rows = []
    for cls in report.classifications:
        counts = {Role.HOLDING: 0, Role.HOLDING_AND_CONDUIT: 0, Role.CONDUIT: 0}
        for rec in cls.records:
            if rec.role != Role.NONE:
                counts[rec.role] += 1
        rows.append(
            (cls.mnc, graph.jurisdiction_of(cls.hq_index), len(cls.records),
             counts[Role.HOLDING], counts[Role.HOLDING_AND_CONDUIT], counts[Role.CONDUIT])
        )
    write_csv_rows(
        path, ["mnc", "hq_jurisdiction", "affiliates", "holding", "holding_and_conduit", "conduit"], rows
    )
    manifest.add("identify", path)

    path = outdir / "identify_summary.json"
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(
            {"tallies": report.tallies, "affiliates": report.n_affiliates,
             "failures": report.failures},
            handle, indent=2, sort_keys=True,
        )
        handle.write("\n")
    manifest.add("identify", path)


def _stage_jurisdiction(config, outdir, manifest, state):
    view = _get_view(config, state)
    report = _get_report(config, state)
    profiles = jur.load_profiles(config.profiles)
    edge_values = state.get("edge_values")
    reports_dir = outdir / "reports"
    (reports_dir / "tallies").mkdir(parents=True, exist_ok=True)
    (reports_dir / "chains").mkdir(exist_ok=True)

    flows = jur.link_flows(view, edge_values=edge_values)
    sink = jur.sink_centrality(flows, profiles)
    path = reports_dir / "sink.csv"
    write_csv_rows(
        path, ["code", "score", "flagged"],
        ((c, _fmt(s), "1" if c in sink.flagged else "0") for c, s in sorted(sink.scores.items())),
    )
    manifest.add("jurisdiction", path)

    flows = jur.with_pass_flows(flows, view, sink.flagged, edge_values=edge_values)
    try:
        conduit = jur.conduit_outward_centrality(flows, profiles)
        rows = [
            (c, _fmt(s), "1" if c in conduit.flagged else "0")
            for c, s in sorted(conduit.scores.items())
        ]
    except ValueError:
        rows = []
    path = reports_dir / "conduit.csv"
    write_csv_rows(path, ["code", "score", "flagged"], rows)
    manifest.add("jurisdiction", path)

    for dimension in jur.TALLY_DIMENSIONS:
        rows = jur.tally_by_jurisdiction(report, dimension)
        path = reports_dir / "tallies" / f"{dimension}.csv"
        write_csv_rows(
            path, ["code", "count", "percent"],
            ((c, n, _fmt(p)) for c, n, p in rows),
        )
        manifest.add("jurisdiction", path)

    if "bowtie" in state:
        regions = jur.tally_by_bowtie(report, state["bowtie"])
        path = reports_dir / "tallies" / "bowtie_regions.csv"
        rows = [
            (category, region, count)
            for category, buckets in sorted(regions.items())
            for region, count in sorted(buckets.items())
        ]
        write_csv_rows(path, ["category", "region", "count"], rows)
        manifest.add("jurisdiction", path)

    for role, tag in ((Role.HOLDING, "holding"), (Role.HOLDING_AND_CONDUIT, "hc"), (Role.CONDUIT, "conduit")):
        tally = jur.tally_by_jurisdiction(report, tag, top_k=3)
        for code, _, _ in tally:
            table = jur.chain_tables(report, view, role, code)
            path = reports_dir / "chains" / f"{tag}_{code}.csv"
            rows = [("subsidiary", c, n, _fmt(p)) for c, n, p in table.subsidiaries]
            rows += [("shareholder", c, n, _fmt(p)) for c, n, p in table.shareholders]
            write_csv_rows(path, ["side", "code", "count", "percent"], rows)
            manifest.add("jurisdiction", path)

    hq_t = jur.hq_tables(report)
    path = reports_dir / "hq_tables.json"
    payload = {
        "by_role": {
            role: [{"code": c, "count": n, "percent": p} for c, n, p in rows]
            for role, rows in hq_t.by_role.items()
        },
        "locations": {
            f"{hq}/{role}": [{"code": c, "count": n, "percent": p} for c, n, p in rows]
            for (hq, role), rows in hq_t.locations.items()
        },
    }
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")
    manifest.add("jurisdiction", path)

    # withholding-tax regressions per role
    regressions = {}
    wtc = {code: p.wtc for code, p in profiles.items() if p.wtc is not None}
    for tag in ("holding", "hc", "conduit"):
        counts = {c: n for c, n, _ in jur.tally_by_jurisdiction(report, tag)}
        codes = sorted(wtc)
        x = [wtc[c] for c in codes]
        y = [counts.get(c, 0) for c in codes]
        try:
            res = jur.ols_regression(x, y)
            regressions[tag] = {
                "intercept": res.intercept, "slope": res.slope,
                "t_intercept": res.t_intercept, "t_slope": res.t_slope,
                "p_intercept": res.p_intercept, "p_slope": res.p_slope,
                "r_squared": res.r_squared, "adj_r_squared": res.adj_r_squared,
                "n": res.n,
            }
        except ValueError as exc:
            regressions[tag] = {"error": str(exc)}
    path = reports_dir / "regression.json"
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(regressions, handle, indent=2, sort_keys=True)
        handle.write("\n")
    manifest.add("jurisdiction", path)


_STAGE_FUNCS = {
    "ingest": _stage_ingest,
    "bowtie": _stage_bowtie,
    "stats": _stage_stats,
    "communities": _stage_communities,
    "extract": _stage_extract,
    "identify": _stage_identify,
    "jurisdiction": _stage_jurisdiction,
}


def verify_manifest(manifest_path) -> dict:
    """Load a manifest and re-hash every artifact; raises on mismatch."""
    manifest_path = Path(manifest_path)
    with open(manifest_path, encoding="utf-8") as handle:
        data = json.load(handle)
    outdir = manifest_path.parent
    for stage, entry in data.get("stages", {}).items():
        for rel, digest in entry["artifacts"].items():
            target = outdir / rel
            if not target.exists():
                raise PipelineError(f"manifest artifact missing: {rel}")
            if _sha256(target) != digest:
                raise PipelineError(f"manifest hash mismatch: {rel}")
    return data


def write_report(manifest_path, report_dir=None) -> Path:
    """Human-readable summary composed from the manifest's artifacts."""
    manifest_path = Path(manifest_path)
    data = verify_manifest(manifest_path)
    outdir = manifest_path.parent
    report_dir = Path(report_dir) if report_dir else outdir / "report"
    report_dir.mkdir(parents=True, exist_ok=True)

    lines: list[str] = ["ownership-network analysis report", ""]

    ingest = outdir / "ingest_summary.json"
    if ingest.exists():
        with open(ingest, encoding="utf-8") as handle:
            info = json.load(handle)
        lines.append(f"graph: {info['nodes']} nodes, {info['edges']} edges")
        lines.append(f"ingest counters: {info['counters']}")
        lines.append("")

    summary = outdir / "bowtie_summary.csv"
    if summary.exists():
        lines.append("bow-tie structure (component, companies, ratio %):")
        lines.extend("  " + line for line in summary.read_text().splitlines()[1:])
        lines.append("")
        for direction in ("in", "out"):
            dist = outdir / f"distances_{direction}.csv"
            if dist.exists():
                label = "IN -> GSCC" if direction == "in" else "GSCC -> OUT"
                lines.append(f"shortest distances {label} (distance, count, ratio):")
                lines.extend("  " + line for line in dist.read_text().splitlines()[1:])
                lines.append("")

    identify = outdir / "identify_summary.json"
    if identify.exists():
        with open(identify, encoding="utf-8") as handle:
            info = json.load(handle)
        lines.append(f"affiliates classified: {info['affiliates']}")
        lines.append(f"key-company tallies: {info['tallies']}")
        if info["failures"]:
            lines.append(f"failures: {info['failures']}")
        lines.append("")

    mnc_summary = outdir / "mnc_summary.csv"
    if mnc_summary.exists():
        lines.append("per-MNC key companies (mnc, hq, affiliates, holding, h&c, conduit):")
        lines.extend("  " + line for line in mnc_summary.read_text().splitlines()[1:])
        lines.append("")

    regression = outdir / "reports" / "regression.json"
    if regression.exists():
        with open(regression, encoding="utf-8") as handle:
            info = json.load(handle)
        lines.append("withholding-tax regressions (count ~ wtc):")
        for tag, res in sorted(info.items()):
            if "error" in res:
                lines.append(f"  {tag}: {res['error']}")
            else:
                lines.append(
                    f"  {tag}: y = {res['intercept']:.3f} + {res['slope']:.3f} x"
                    f" (adj R^2 = {res['adj_r_squared']:.4f}, n = {res['n']})"
                )
        lines.append("")

    lines.append(f"pipeline status: {data['status']}")
    target = report_dir / "summary.txt"
    target.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return target
