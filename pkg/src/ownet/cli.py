"""Command-line front end: `ownet <subcommand>`."""

from __future__ import annotations

import os
import sys
from pathlib import Path

import click

from . import components as comp
from . import pipeline as pl
from .community import community_size_histogram, detect_communities
from .errors import OwnetError
from .graph import load_cache, load_graph, save_cache, substantial_view, write_csv_rows
from .keyfirms import classify_all, load_keyfirms_csv
from .mnc import build_subtree, load_hq_list
from .synth import SynthSpec, build_corpus, write_corpus


def _cache_dir() -> Path:
    return Path(os.environ.get("OWNET_CACHE_DIR", "."))


def _load(graph_path: str):
    path = Path(graph_path)
    if not path.exists():
        candidate = _cache_dir() / graph_path
        if candidate.exists():
            path = candidate
    return load_cache(path)


@click.group()
@click.option("--threads", type=int, default=1, show_default=True, help="Worker cap for parallel stages.")
@click.option("--seed", type=int, default=0, show_default=True, help="Seed for seeded subcommands.")
@click.pass_context
def main(ctx, threads, seed):
    """Ownership-network analytics pipeline."""
    ctx.obj = {"threads": threads, "seed": seed}


@main.command()
@click.option("--nodes", required=True, type=click.Path(exists=True))
@click.option("--edges", required=True, type=click.Path(exists=True))
@click.option("--out", default=None, help="Cache path (default: $OWNET_CACHE_DIR/graph.npz).")
@click.option("--rebuild", is_flag=True, help="Rebuild even if the cache exists.")
def ingest(nodes, edges, out, rebuild):
    """Parse CSVs and write the binary graph cache."""
    target = Path(out) if out else _cache_dir() / "graph.npz"
    if target.exists() and not rebuild:
        click.echo(f"cache exists: {target} (use --rebuild to refresh)")
        return
    graph = load_graph(nodes, edges)
    target.parent.mkdir(parents=True, exist_ok=True)
    save_cache(graph, target)
    click.echo(f"nodes={graph.n_nodes} edges={graph.n_edges} counters={graph.ingest_counters}")
    click.echo(f"cache written: {target}")


@main.command()
@click.option("--graph", "graph_path", required=True)
@click.option("--out", default="bowtie.csv", show_default=True)
@click.option("--summary", default=None, help="Also write the region-size summary CSV here.")
def bowtie(graph_path, out, summary):
    """Bow-tie decomposition of the giant weakly connected component."""
    graph = _load(graph_path)
    result = comp.bowtie_decompose(graph)
    write_csv_rows(
        out, ["node_id", "region"],
        ((graph.ids[i], comp.REGION_NAMES[int(result.region[i])]) for i in range(graph.n_nodes)),
    )
    for name, count, ratio in result.summary_rows():
        click.echo(f"{name:>5}  {count:>12}  {ratio}")
    if summary:
        write_csv_rows(summary, ["component", "companies", "ratio"], result.summary_rows())


@main.command()
@click.option("--graph", "graph_path", required=True)
@click.option("--direction", type=click.Choice(["in", "out"]), required=True)
@click.option("--out", default=None, help="Output CSV (default: distances_<direction>.csv).")
@click.option("--reverse-orientation", is_flag=True, help="Measure hops along flipped edges.")
def distances(graph_path, direction, out, reverse_orientation):
    """Shortest-distance distribution between bow-tie regions."""
    graph = _load(graph_path)
    result = comp.bowtie_decompose(graph)
    hist = comp.distance_distribution(result, direction, reverse_orientation)
    target = out or f"distances_{direction}.csv"
    write_csv_rows(
        target, ["distance", "count", "ratio"],
        ((d, c, repr(c / hist.total)) for d, c, _ in hist.rows()),
    )
    click.echo(f"{target}: {len(hist.counts)} distance levels over {hist.total} nodes")


@main.command()
@click.option("--graph", "graph_path", required=True)
@click.option("--out", "outdir", default="stats", show_default=True)
@click.option("--bin-ratio", default=2.0, show_default=True)
def stats(graph_path, outdir, bin_ratio):
    """Degree distributions, exponent fits, clustering, and k_nn curves."""
    graph = _load(graph_path)
    config = pl.RunConfig(nodes=Path("."), edges=Path("."), outdir=Path(outdir), bin_ratio=bin_ratio)
    outpath = Path(outdir)
    outpath.mkdir(parents=True, exist_ok=True)
    manifest = pl._Manifest(outpath, config)
    pl._stage_stats(config, outpath, manifest, {"graph": graph})
    click.echo(f"stats written under {outpath / 'stats'}")


@main.command()
@click.option("--graph", "graph_path", required=True)
@click.option("--seed", type=int, default=None, help="Override the global seed.")
@click.option("--out", default="communities.csv", show_default=True)
@click.option("--scope", type=click.Choice(["gwcc", "full"]), default="gwcc", show_default=True)
@click.option("--damping", default=0.85, show_default=True)
@click.pass_context
def communities(ctx, graph_path, seed, out, scope, damping):
    """Two-level map-equation communities and their size distribution."""
    import numpy as np

    from .graph import induced_subgraph

    graph = _load(graph_path)
    if scope == "gwcc":
        weak = comp.weak_components(graph)
        keep = np.flatnonzero(weak.labels == weak.largest)
        graph = induced_subgraph(graph, [graph.ids[i] for i in keep])
    use_seed = seed if seed is not None else ctx.obj["seed"]
    partition = detect_communities(graph, seed=use_seed, damping=damping)
    write_csv_rows(
        out, ["node_id", "community_id"],
        ((graph.ids[i], int(partition.labels[i])) for i in range(graph.n_nodes)),
    )
    hist = community_size_histogram(partition)
    dsizes = Path(out).parent / "dsizes.csv"
    rows = [
        (repr(float(hist.bin_edges[i])), repr(float(hist.bin_edges[i + 1])),
         int(hist.counts[i]), repr(float(hist.densities[i])))
        for i in range(hist.counts.shape[0])
    ]
    write_csv_rows(dsizes, ["size_lo", "size_hi", "count", "density"], rows)
    click.echo(f"{partition.n_communities} communities, codelength {partition.codelength:.6f} bits")


@main.command()
@click.option("--graph", "graph_path", required=True)
@click.option("--hqs", required=True, type=click.Path(exists=True))
@click.option("--threshold", default=10.0, show_default=True)
@click.option("--out", "outdir", default="mnc", show_default=True)
def extract(graph_path, hqs, threshold, outdir):
    """Per-MNC affiliate files (node_id, layer, within-MNC degrees)."""
    graph = _load(graph_path)
    view = substantial_view(graph, threshold)
    outpath = Path(outdir)
    outpath.mkdir(parents=True, exist_ok=True)
    for hq_id, name in load_hq_list(hqs):
        try:
            subtree = build_subtree(view, graph.index_of(hq_id))
        except OwnetError as exc:
            click.echo(f"skipping {name}: {exc}", err=True)
            continue
        rows = [
            (graph.ids[int(a)], int(subtree.layers[i]), int(subtree.k_in[i]), int(subtree.k_out[i]))
            for i, a in enumerate(subtree.affiliates)
        ]
        write_csv_rows(outpath / f"{name.replace('/', '_')}.csv", ["node_id", "layer", "k_in", "k_out"], rows)
    click.echo(f"affiliate files under {outpath}")


@main.command()
@click.option("--graph", "graph_path", required=True)
@click.option("--hqs", required=True, type=click.Path(exists=True))
@click.option("--threshold", default=10.0, show_default=True)
@click.option("--out", default="keyfirms.csv", show_default=True)
@click.option("--global-degrees", is_flag=True,
              help="Count affiliate degrees over the whole view, not the member subgraph.")
@click.pass_context
def identify(ctx, graph_path, hqs, threshold, out, global_degrees):
    """Hierarchical key-company identification for every listed MNC."""
    from .keyfirms import ROLE_NAMES

    graph = _load(graph_path)
    view = substantial_view(graph, threshold)
    report = classify_all(
        view, load_hq_list(hqs), threads=ctx.obj["threads"], global_degrees=global_degrees
    )
    rows = []
    for cls in report.classifications:
        for rec in cls.records:
            rows.append(
                (cls.mnc, rec.affiliate, rec.layer, rec.k_in, rec.k_out,
                 repr(rec.holding) if rec.holding is not None else "",
                 repr(rec.conduit) if rec.conduit is not None else "",
                 "1" if rec.third_country else "0",
                 ROLE_NAMES[rec.role])
            )
    write_csv_rows(
        out, ["mnc", "affiliate_id", "layer", "k_in", "k_out", "H", "T", "third_country", "role"], rows
    )
    click.echo(f"tallies: {report.tallies}")
    for name, reason in report.failures:
        click.echo(f"failed {name}: {reason}", err=True)


@main.command()
@click.option("--graph", "graph_path", required=True)
@click.option("--keyfirms", "keyfirms_path", required=True, type=click.Path(exists=True))
@click.option("--profiles", required=True, type=click.Path(exists=True))
@click.option("--hqs", default=None, type=click.Path(exists=True),
              help="HQ list; enables the headquarters tables.")
@click.option("--values", "values_path", default=None, type=click.Path(exists=True),
              help="Per-edge value CSV; switches flows from link counts to value mode.")
@click.option("--threshold", default=10.0, show_default=True)
@click.option("--out", "outdir", default="reports", show_default=True)
def jurisdiction(graph_path, keyfirms_path, profiles, hqs, values_path, threshold, outdir):
    """Jurisdiction centralities, tallies, chains, and regressions."""
    from .jurisdiction import load_edge_values

    graph = _load(graph_path)
    view = substantial_view(graph, threshold)
    hq_map = dict((name, hq) for hq, name in load_hq_list(hqs)) if hqs else None
    report = load_keyfirms_csv(keyfirms_path, graph, hq_map)
    state = {"graph": graph, "view": view, "report": report}
    if values_path:
        state["edge_values"] = load_edge_values(values_path, view)
    config = pl.RunConfig(
        nodes=Path("."), edges=Path("."), outdir=Path(outdir),
        profiles=Path(profiles), threshold=threshold,
    )
    outpath = Path(outdir)
    outpath.mkdir(parents=True, exist_ok=True)
    manifest = pl._Manifest(outpath, config)
    pl._stage_jurisdiction(config, outpath, manifest, state)
    click.echo(f"jurisdiction reports under {outpath / 'reports'}")


@main.command()
@click.option("--spec", "spec_path", required=True, type=click.Path(exists=True))
@click.option("--out", "outdir", default="data", show_default=True)
def synth(spec_path, outdir):
    """Generate a synthetic corpus from a JSON spec."""
    spec = SynthSpec.from_json(spec_path)
    bundle = build_corpus(spec)
    paths = write_corpus(bundle, outdir)
    click.echo(
        f"nodes={len(bundle.node_rows)} edges={len(bundle.edge_rows)} "
        f"mncs={len(bundle.hq_rows)} region={bundle.target_region}"
    )
    for name, path in paths.items():
        click.echo(f"{name}: {path}")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.pass_context
def run(ctx, config_path):
    """Run the full pipeline from a JSON config."""
    config = pl.RunConfig.from_json(config_path)
    if ctx.obj["threads"] > 1:
        config.threads = ctx.obj["threads"]
    try:
        manifest = pl.run_pipeline(config)
    except OwnetError as exc:
        click.echo(f"pipeline failed: {exc}", err=True)
        sys.exit(1)
    click.echo(f"manifest: {manifest}")


@main.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--out", "outdir", default=None, help="Report directory (default: <outdir>/report).")
def report(manifest_path, outdir):
    """Verify artifact hashes and write the human-readable summary."""
    try:
        target = pl.write_report(manifest_path, outdir)
    except OwnetError as exc:
        click.echo(f"report failed: {exc}", err=True)
        sys.exit(1)
    click.echo(target.read_text(), nl=False)
    click.echo(f"summary: {target}")


if __name__ == "__main__":
    main()
