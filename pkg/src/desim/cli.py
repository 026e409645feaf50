"""``desim`` command line.

Exit codes: 0 success, 1 input error, 2 internal error.
"""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from .analysis import worst_case_utilization
from .controller import ControllerState, Leg, PlacementError, PlacementRequest, place
from .fixtures import load_topology
from .harness import SUBSET_MODES, StudyConfig, parse_algorithms, run_study
from .model import (
    FailureSetSpec,
    ModelError,
    Topology,
    TrafficMatrix,
    dump_demands,
    enumerate_scenarios,
    parse_demands,
    parse_topology,
)
from .service import check as check_service
from .service import decision_to_dict, load_config, serve as run_server

BUILTIN_PREFIX = "builtin:"


class InputError(click.ClickException):
    exit_code = 1


def read_topology(spec: str) -> Topology:
    """Path to a JSON document, or ``builtin:<name>`` for a shipped fixture."""
    if spec.startswith(BUILTIN_PREFIX):
        name = spec[len(BUILTIN_PREFIX):]
        try:
            return load_topology(f"{name}.json")
        except FileNotFoundError:
            raise InputError(f"no built-in topology {name!r}") from None
    return parse_topology(_read(spec))


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from None


def read_demands(path: str | None, topo: Topology) -> TrafficMatrix:
    return parse_demands(_read(path), topo) if path else TrafficMatrix()


def _failures(text: str) -> FailureSetSpec:
    return FailureSetSpec.from_names([t for t in text.split(",") if t.strip()])


@click.group()
@click.option("-v", "--verbose", count=True, help="Repeat for more logging.")
def cli(verbose: int) -> None:
    """Demand-engineering placement controller and study harness."""
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


@cli.command()
@click.option("--topology", required=True, help="Topology JSON path or builtin:NAME.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--iterations", type=int, default=100, show_default=True)
@click.option("--algorithms", default="de,random,latency", show_default=True)
@click.option("--out", type=click.Path(file_okay=False), default=None, help="Write study.csv and traces/ here.")
@click.option("--bw-min", type=int, default=50, show_default=True)
@click.option("--bw-max", type=int, default=500, show_default=True)
@click.option("--util-cap", type=float, default=1.0, show_default=True)
@click.option("--failures", default="none", show_default=True, help="none,circuits,nodes,srlgs")
@click.option("--subset-mode", type=click.Choice(SUBSET_MODES), default="uniform_size", show_default=True)
@click.option("--baseline-retry/--no-baseline-retry", default=False, show_default=True)
@click.option("--max-workloads", type=int, default=10_000, show_default=True)
@click.option("--traces/--no-traces", default=True, show_default=True)
def study(topology, seed, iterations, algorithms, out, bw_min, bw_max, util_cap, failures,
          subset_mode, baseline_retry, max_workloads, traces):
    """Compare placement algorithms until saturation over many random runs."""
    config = StudyConfig(
        read_topology(topology), seed=seed, iterations=iterations, algorithms=parse_algorithms(algorithms),
        bw_min_mbps=bw_min, bw_max_mbps=bw_max, util_cap=util_cap, failure_spec=_failures(failures),
        subset_mode=subset_mode, baseline_retry=baseline_retry, max_workloads=max_workloads,
    )
    report = run_study(config)
    click.echo(report.to_table(), nl=False)
    if out:
        report.write(out, traces=traces)
        click.echo(f"wrote {Path(out) / 'study.csv'}")


@cli.command()
@click.option("--topology", required=True)
@click.option("--demands", default=None, help="Demand CSV.")
@click.option("--failures", default="none,circuits", show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="CSV output (default stdout).")
def report(topology, demands, failures, out):
    """Per-scenario link loads and worst-case utilisation as CSV."""
    topo = read_topology(topology)
    matrix = read_demands(demands, topo)
    rep = worst_case_utilization(topo, matrix, enumerate_scenarios(topo, _failures(failures)))
    text = rep.to_csv()
    if out:
        Path(out).write_text(text)
        click.echo(f"network worst-case utilisation {rep.network_wc_util:.4f}; wrote {out}")
    else:
        click.echo(text, nl=False)


@cli.command("place")
@click.option("--topology", required=True)
@click.option("--demands", default=None)
@click.option("--a-ends", required=True, help="Comma-separated A-end sites.")
@click.option("--candidates", default=None, help="Comma-separated DC sites (default: all DC sites).")
@click.option("--mbps", type=float, default=None, help="Bandwidth for every leg in both directions.")
@click.option("--up", type=float, default=None, help="A-end to site Mbps (overrides --mbps).")
@click.option("--down", type=float, default=None, help="Site to A-end Mbps (overrides --mbps).")
@click.option("--l-max", type=float, default=None, help="Maximum latency in ms (default: no bound).")
@click.option("--threshold", type=float, default=0.95, show_default=True)
@click.option("--failures", default="none", show_default=True)
@click.option("--request-id", default="cli", show_default=True)
@click.option("--commit-out", type=click.Path(dir_okay=False), default=None,
              help="Write the updated demand CSV here when a site is chosen.")
def place_cmd(topology, demands, a_ends, candidates, mbps, up, down, l_max, threshold, failures,
              request_id, commit_out):
    """One-shot placement against a topology and demand matrix."""
    topo = read_topology(topology)
    state = ControllerState(topo, read_demands(demands, topo))
    up = up if up is not None else mbps
    down = down if down is not None else mbps
    if up is None or down is None:
        raise InputError("give --mbps or both --up and --down")
    sites = [s.strip() for s in a_ends.split(",") if s.strip()]
    cands = [s.strip() for s in candidates.split(",")] if candidates else topo.dc_sites
    request = PlacementRequest(
        request_id, tuple(Leg(a, up, down) for a in sites), tuple(cands),
        float("inf") if l_max is None else l_max, threshold, _failures(failures),
    )
    decision = place(state, request)
    click.echo(json.dumps(decision_to_dict(decision), indent=2))
    if commit_out and decision.committed:
        Path(commit_out).write_text(dump_demands(state.committed_matrix))


@cli.command()
@click.option("--topology", default=None)
@click.option("--demands", default=None)
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
              help="Service config; validates everything it references.")
def check(topology, demands, config_path):
    """Validate input files and exit."""
    if config_path:
        cfg = load_config(config_path)
        state = check_service(cfg)
        topo = state.topology
        n = len(state.committed_matrix)
    elif topology:
        topo = read_topology(topology)
        n = len(read_demands(demands, topo))
    else:
        raise InputError("give --topology or --config")
    click.echo(f"ok: {len(topo.nodes)} nodes, {len(topo.circuits)} circuits, {n} demands"
               + ("" if topo.is_connected() else " (warning: not connected)"))


@cli.command()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None)
@click.option("--listen", default=None, help="host:port (overrides config).")
@click.option("--check", "check_only", is_flag=True, help="Validate inputs and exit.")
def serve(config_path, listen, check_only):
    """Run the placement HTTP service."""
    cfg = load_config(config_path)
    if listen:
        cfg.listen = listen
    state = check_service(cfg)
    if check_only:
        click.echo(f"ok: {len(state.topology.nodes)} nodes, {len(state.committed_matrix)} committed demands")
        return
    run_server(cfg)


def main(argv: list[str] | None = None) -> int:
    try:
        cli.main(args=argv, prog_name="desim", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.Abort:
        click.echo("aborted", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except (ModelError, PlacementError, ValueError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    except Exception as exc:  # noqa: BLE001
        logging.getLogger(__name__).exception("internal error")
        click.echo(f"internal error: {exc}", err=True)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
