"""Command-line interface: JSON configuration in, JSON/CSV reports out.

Subcommands
-----------
check              metrisability verdict for a (connection, metric) pair
decompose          decomposition grids: |a|, |b|, B and phi components
sphere             great-circle family diagnostics for a linear map A
geodesic           trace one geodesic of a configured connection
verify-identities  structural identity sweep with per-identity residuals

Configuration files are JSON objects with up to three keys. "chart" sets
the domain and grid, "fields" holds expression strings for the metric
components (g11, g12, g22) and/or the connection components (G111, G112,
G122, G211, G212, G222), and "options" may fix tol, fd_step and
rk4_step. When connection components are omitted the metric's
Levi-Civita connection is used; a geodesic run with no configuration at
all uses the flat connection.

Every subcommand prints its JSON report to stdout (sorted keys, so runs
are byte-identical apart from the generated_at stamp) and exits 0 on
success, 1 on a failed verdict, 2 on malformed input or an evaluation
error; errors are emitted to stderr as a JSON object. With --out DIR the
report and the CSV grids are written into DIR, and --plot additionally
renders PNG figures next to them. The geodesic subcommand is the one
exception to the stdout rule: without --out it prints its trace CSV
instead of a report.

METRISE_THREADS caps worker parallelism. All computation here is
single-process vectorised numpy, so any positive cap is honoured
trivially; the value is validated and recorded in the report.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import geodesic as geodesics
from . import projective, sphere
from .expr import ExprError
from .fields import DEFAULT_FD_STEP, Chart
from .frame import equivariance_sweep, projective_change_residual
from .tensor import (
    ConnectionField,
    DegenerateMetricError,
    MetricField,
    OneForm,
    flat_connection,
    round_gnomonic_metric,
)

_METRIC_KEYS = ("g11", "g12", "g22")
_CONNECTION_KEYS = ("G111", "G112", "G122", "G211", "G212", "G222")
_OPTION_KEYS = ("tol", "fd_step", "rk4_step")

# contract tolerances for the identity sweep, at the default step
_IDENTITY_TOLERANCES = (
    ("omega_right_translation", 1e-12),
    ("theta_right_translation", 1e-12),
    ("omega_complex_scaling", 1e-12),
    ("shear_complex_scaling", 1e-12),
    ("projective_change_shear", 1e-10),
    ("structure_equations_fd", 1e-5),
    ("structure_equation_order", 0.5),
)


class CliError(Exception):
    """Malformed input or failed evaluation; maps to exit code 2."""


# --------------------------------------------------------------------------
# plumbing


def _timestamp() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _threads():
    raw = os.environ.get("METRISE_THREADS")
    if raw is None:
        return None
    try:
        value = int(raw)
    except ValueError:
        raise CliError(f"METRISE_THREADS must be an integer, got {raw!r}")
    if value < 1:
        raise CliError("METRISE_THREADS must be positive")
    return value


def _jsonify(obj):
    if isinstance(obj, dict):
        return {k: _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonify(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    return obj


def _emit_report(report: dict, args, name: str = "report"):
    text = json.dumps(_jsonify(report), sort_keys=True, indent=2)
    print(text)
    if args.out:
        _out_dir(args).joinpath(f"{name}.json").write_text(text + "\n")


def _out_dir(args) -> Path:
    path = Path(args.out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) for v in row])


def _grid_rows(X, Y, *columns):
    flats = [np.ravel(c) for c in (X, Y) + columns]
    return zip(*flats)


# --------------------------------------------------------------------------
# configuration


def _load_config(args) -> dict:
    if not args.config:
        raise CliError("this subcommand requires --config")
    try:
        raw = json.loads(Path(args.config).read_text())
    except OSError as err:
        raise CliError(f"cannot read config: {err}")
    except json.JSONDecodeError as err:
        raise CliError(f"config is not valid JSON: {err}")
    return _parse_config(raw)


def _parse_config(raw) -> dict:
    if not isinstance(raw, dict):
        raise CliError("config must be a JSON object")
    unknown = set(raw) - {"chart", "fields", "options"}
    if unknown:
        raise CliError(f"unknown config keys: {sorted(unknown)}")

    chart_raw = raw.get("chart", {})
    if not isinstance(chart_raw, dict) or set(chart_raw) - {"domain", "grid"}:
        raise CliError("chart must be an object with keys domain and/or grid")
    domain = chart_raw.get("domain", [-1.0, 1.0, -1.0, 1.0])
    grid = chart_raw.get("grid", [64, 64])
    try:
        x0, x1, y0, y1 = (float(v) for v in domain)
        nx, ny = (int(v) for v in grid)
        chart = Chart(x0, x1, y0, y1, nx=nx, ny=ny)
    except (TypeError, ValueError) as err:
        raise CliError(f"bad chart block: {err}")

    fields = raw.get("fields", {})
    if not isinstance(fields, dict):
        raise CliError("fields must be an object of expression strings")
    unknown = set(fields) - set(_METRIC_KEYS) - set(_CONNECTION_KEYS)
    if unknown:
        raise CliError(f"unknown field names: {sorted(unknown)}")
    for name, text in fields.items():
        if not isinstance(text, str):
            raise CliError(f"field {name} must be an expression string")

    have_metric = [k for k in _METRIC_KEYS if k in fields]
    if have_metric and len(have_metric) < len(_METRIC_KEYS):
        raise CliError("metric requires all of g11, g12, g22")
    have_conn = [k for k in _CONNECTION_KEYS if k in fields]
    if have_conn and len(have_conn) < len(_CONNECTION_KEYS):
        raise CliError("connection requires all six components G111..G222")

    try:
        metric = (
            MetricField(*(fields[k] for k in _METRIC_KEYS)) if have_metric else None
        )
        connection = (
            ConnectionField.from_sources([fields[k] for k in _CONNECTION_KEYS])
            if have_conn
            else None
        )
    except ExprError as err:
        raise CliError(f"bad field expression: {err}")

    options = raw.get("options", {})
    if not isinstance(options, dict) or set(options) - set(_OPTION_KEYS):
        raise CliError(f"options may only set {list(_OPTION_KEYS)}")
    try:
        options = {k: float(v) for k, v in options.items()}
    except (TypeError, ValueError) as err:
        raise CliError(f"bad option value: {err}")

    return {
        "chart": chart,
        "metric": metric,
        "connection": connection,
        "options": options,
    }


def _pick(flag_value, options: dict, key: str, default: float) -> float:
    if flag_value is not None:
        return float(flag_value)
    return float(options.get(key, default))


def _chart_for(cfg: dict, args) -> Chart:
    chart = cfg["chart"]
    if args.grid:
        chart = chart.with_grid(*args.grid)
    return chart


def _structure_pair(cfg: dict, chart: Chart):
    """Metric plus connection from a config, defaulting to Levi-Civita."""
    metric = cfg["metric"]
    if metric is None:
        raise CliError("config must supply metric components g11, g12, g22")
    try:
        metric.validate_on(chart)
    except (DegenerateMetricError, ExprError, ValueError) as err:
        raise CliError(f"metric rejected: {err}")
    connection = cfg["connection"]
    if connection is None:
        connection = metric.levi_civita()
    return metric, connection


def _parse_grid(text: str):
    parts = text.lower().split("x")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("grid must look like 64x64")
    try:
        nx, ny = int(parts[0]), int(parts[1])
    except ValueError:
        raise argparse.ArgumentTypeError("grid must look like 64x64")
    if nx < 2 or ny < 2:
        raise argparse.ArgumentTypeError("grid must be at least 2x2")
    return nx, ny


def _parse_matrix(text: str) -> np.ndarray:
    try:
        entries = [float(v) for v in text.replace(";", ",").split(",")]
    except ValueError:
        raise CliError("--A must be nine comma-separated numbers, row-major")
    if len(entries) != 9:
        raise CliError("--A must be nine comma-separated numbers, row-major")
    return np.array(entries).reshape(3, 3)


def _parse_pair(text: str, flag: str) -> np.ndarray:
    try:
        parts = [float(v) for v in text.split(",")]
    except ValueError:
        parts = []
    if len(parts) != 2:
        raise CliError(f"{flag} must be two comma-separated numbers")
    return np.array(parts)


def _require_plot_dir(args):
    if args.plot and not args.out:
        raise CliError("--plot requires --out to place the figures")


# --------------------------------------------------------------------------
# subcommands


def cmd_check(args) -> int:
    _require_plot_dir(args)
    cfg = _load_config(args)
    chart = _chart_for(cfg, args)
    metric, connection = _structure_pair(cfg, chart)
    tol = _pick(args.tol, cfg["options"], "tol", 1e-6)

    report = projective.check_metrisable_by(connection, metric, chart, tol=tol)
    report.update(command="check", generated_at=_timestamp(), threads=_threads())

    if args.out or args.plot:
        X, Y = chart.grid()
        a_field, b_field = projective.residual_fields(connection, metric)
        abs_a, abs_b = np.abs(a_field(X, Y)), np.abs(b_field(X, Y))
        if args.out:
            _write_csv(
                _out_dir(args) / "residuals.csv",
                ("x", "y", "abs_a", "abs_b"),
                _grid_rows(X, Y, abs_a, abs_b),
            )
        if args.plot:
            from . import plots

            plots.residual_heatmaps(X, Y, abs_a, abs_b, _out_dir(args) / "residuals.png")
    _emit_report(report, args)
    return 0 if report["verdict"] else 1


def cmd_decompose(args) -> int:
    _require_plot_dir(args)
    cfg = _load_config(args)
    chart = _chart_for(cfg, args)
    metric, connection = _structure_pair(cfg, chart)
    tol = _pick(args.tol, cfg["options"], "tol", 1e-6)

    decomposition = projective.weyl_decompose(connection, metric)
    X, Y = chart.grid()
    a, b = projective.frame_residuals(decomposition, X, Y)
    b_vec = decomposition.b_vector.values(X, Y)
    phi = decomposition.phi.values(X, Y)

    sup_a = float(np.max(np.abs(a)))
    sup_b = float(np.max(np.abs(b)))
    report = {
        "command": "decompose",
        "sup_a": sup_a,
        "sup_b": sup_b,
        "sup_B": float(np.max(np.abs(b_vec))),
        "sup_phi": float(np.max(np.abs(phi))),
        "weyl_only_verdict": sup_a < tol,
        "verdict": sup_a < tol and sup_b < tol,
        "grid": [chart.nx, chart.ny],
        "tol": tol,
        "generated_at": _timestamp(),
        "threads": _threads(),
    }

    if args.out:
        out = _out_dir(args)
        _write_csv(out / "abs_a.csv", ("x", "y", "value"), _grid_rows(X, Y, np.abs(a)))
        _write_csv(out / "abs_b.csv", ("x", "y", "value"), _grid_rows(X, Y, np.abs(b)))
        for i in range(2):
            _write_csv(
                out / f"B_{i + 1}.csv",
                ("x", "y", "value"),
                _grid_rows(X, Y, b_vec[..., i]),
            )
        for i in range(2):
            for jk, pair in (("11", (0, 0)), ("12", (0, 1)), ("22", (1, 1))):
                _write_csv(
                    out / f"phi_{i + 1}_{jk}.csv",
                    ("x", "y", "value"),
                    _grid_rows(X, Y, phi[..., i, pair[0], pair[1]]),
                )
        if args.plot:
            from . import plots

            plots.residual_heatmaps(X, Y, np.abs(a), np.abs(b), out / "residuals.png")
    _emit_report(report, args)
    return 0


def _latlong_grid(nx: int, ny: int):
    # polar angle stays off the poles so the coordinate frame is defined
    theta = np.pi * (np.arange(ny) + 0.5) / ny
    phi = 2.0 * np.pi * np.arange(nx) / nx
    P, T = np.meshgrid(phi, theta, indexing="ij")
    sin_t, cos_t = np.sin(T), np.cos(T)
    n = np.stack([sin_t * np.cos(P), sin_t * np.sin(P), cos_t], axis=-1)
    v = np.stack([cos_t * np.cos(P), cos_t * np.sin(P), -sin_t], axis=-1)
    return T, P, sphere.UnitTangent(n, v)


def cmd_sphere(args) -> int:
    _require_plot_dir(args)
    A = _parse_matrix(args.A) if args.A else np.eye(3)
    try:
        solution = sphere.LiouvilleSolution.from_linear_map(A)
    except (ValueError, np.linalg.LinAlgError) as err:
        raise CliError(f"bad linear map: {err}")

    nx, ny = args.grid or (64, 32)
    fd_step = args.fd_step if args.fd_step is not None else DEFAULT_FD_STEP
    rk4_step = args.rk4_step if args.rk4_step is not None else 1e-3
    t_total = 2.0 * np.pi

    T, P, tangents = _latlong_grid(nx, ny)
    p, q, r = solution.metric_components(tangents)
    mu = sphere.beltrami_coefficient(p, q, r)

    rng = np.random.default_rng(7)
    probes = sphere.random_unit_tangents(rng, 200)
    liouville = sphere.liouville_residual(
        solution.frame_components_fn(), probes, fd_step=fd_step
    )
    times, traces, planarity = sphere.great_circle_traces(
        A,
        n_curves=3,
        t_total=t_total,
        step=rk4_step,
        sample_every=max(1, int(round(0.01 / rk4_step))),
    )
    residuals, ratios = sphere.structure_equation_order_check(h0=fd_step)

    report = {
        "command": "sphere",
        "A": A.tolist(),
        "epsilon": solution.epsilon,
        "frame_convention": sphere.frame_convention(),
        "liouville_residual": liouville,
        "great_circle_residual": planarity,
        "structure_order": {"residuals": list(residuals), "ratios": list(ratios)},
        "beltrami_sup": float(np.max(np.abs(mu))),
        "grid": [nx, ny],
        "fd_step": fd_step,
        "rk4_step": rk4_step,
        "t_total": t_total,
        "generated_at": _timestamp(),
        "threads": _threads(),
    }

    if args.out:
        out = _out_dir(args)
        _write_csv(
            out / "sphere_grid.csv",
            ("theta", "phi", "p", "q", "r", "mu_re", "mu_im"),
            _grid_rows(T, P, p, q, r, mu.real, mu.imag),
        )
        for k, curve in enumerate(traces):
            _write_csv(
                out / f"trace_{k}.csv",
                ("t", "x", "y", "z"),
                zip(times, curve[:, 0], curve[:, 1], curve[:, 2]),
            )
        if args.plot:
            from . import plots

            plots.sphere_heatmap(T, P, np.abs(mu), "|mu|", out / "beltrami.png")
            plots.trace_figure(traces, out / "traces.png")
    _emit_report(report, args)
    return 0


def cmd_geodesic(args) -> int:
    _require_plot_dir(args)
    if args.config:
        cfg = _load_config(args)
        chart = _chart_for(cfg, args)
        connection = cfg["connection"]
        if connection is None and cfg["metric"] is not None:
            _, connection = _structure_pair(cfg, chart)
        if connection is None:
            connection = flat_connection()
        options = cfg["options"]
    else:
        chart = None
        connection = flat_connection()
        options = {}

    start = _parse_pair(args.x0, "--x0")
    velocity = _parse_pair(args.v0, "--v0")
    step = _pick(args.rk4_step, options, "rk4_step", 1e-3)
    try:
        path = geodesics.integrate(
            connection, start, velocity, args.T, step=step, chart=chart
        )
    except (ValueError, ExprError) as err:
        raise CliError(f"integration failed: {err}")

    header = ("t", "x", "y", "xdot", "ydot")
    rows = zip(
        path.times,
        path.points[:, 0],
        path.points[:, 1],
        path.velocities[:, 0],
        path.velocities[:, 1],
    )
    if not args.out:
        writer = csv.writer(sys.stdout)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) for v in row])
        return 0

    out = _out_dir(args)
    _write_csv(out / "geodesic.csv", header, rows)
    if args.plot:
        from . import plots

        plots.chart_paths_figure([(path.points, "geodesic")], out / "geodesic.png")
    report = {
        "command": "geodesic",
        "samples": len(path.times),
        "t_final": float(path.times[-1]),
        "end": path.end.tolist(),
        "arc_length": path.arc_length(),
        "diverged": path.diverged,
        "left_chart": path.left_chart,
        "rk4_step": step,
        "generated_at": _timestamp(),
        "threads": _threads(),
    }
    _emit_report(report, args)
    return 0


def cmd_verify_identities(args) -> int:
    if args.config:
        cfg = _load_config(args)
        chart = cfg["chart"]
        _, connection = _structure_pair(cfg, chart)
    else:
        connection = round_gnomonic_metric().levi_civita()
    trials = args.trials
    if trials < 1:
        raise CliError("--trials must be positive")
    fd_step = args.fd_step if args.fd_step is not None else 1e-3

    sweep = equivariance_sweep(connection, n=trials)
    xi = OneForm("0.4 + 0.1*x", "-0.3 + 0.2*y")
    residuals = {k: v for k, v in sweep.items() if k != "samples"}
    residuals["projective_change_shear"] = projective_change_residual(
        connection, xi, n=trials
    )
    residuals["structure_equations_fd"] = sphere.structure_equation_residual(
        n=20, h=fd_step
    )
    _, ratios = sphere.structure_equation_order_check(h0=fd_step)
    residuals["structure_equation_order"] = float(np.max(np.abs(np.array(ratios) - 4.0)))

    identities = []
    for name, tolerance in _IDENTITY_TOLERANCES:
        value = residuals[name]
        identities.append(
            {
                "name": name,
                "residual": value,
                "tolerance": tolerance,
                "pass": value < tolerance,
            }
        )
    verdict = all(item["pass"] for item in identities)
    report = {
        "command": "verify-identities",
        "trials": trials,
        "fd_step": fd_step,
        "identities": identities,
        "verdict": verdict,
        "generated_at": _timestamp(),
        "threads": _threads(),
    }
    _emit_report(report, args)
    return 0 if verdict else 1


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="metrise",
        description="Metrisability diagnostics for planar projective structures.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    def add(name, handler, help_text):
        sub = commands.add_parser(name, help=help_text)
        sub.set_defaults(handler=handler)
        sub.add_argument("--config", help="JSON problem configuration")
        sub.add_argument("--tol", type=float, help="verdict tolerance")
        sub.add_argument(
            "--fd-step", type=float, dest="fd_step", help="finite-difference step"
        )
        sub.add_argument(
            "--rk4-step", type=float, dest="rk4_step", help="integrator step"
        )
        sub.add_argument(
            "--grid", type=_parse_grid, help="sampling grid, e.g. 64x64"
        )
        sub.add_argument("--out", help="directory for reports, CSV grids, figures")
        sub.add_argument(
            "--plot",
            action="store_true",
            help="render PNG figures next to the CSV output (needs --out)",
        )
        return sub

    add("check", cmd_check, "metrisability verdict for a configured pair")
    add("decompose", cmd_decompose, "decomposition grids and suprema")

    sub = add("sphere", cmd_sphere, "great-circle family diagnostics")
    sub.add_argument("--A", help="nine comma-separated entries, row-major")

    sub = add("geodesic", cmd_geodesic, "trace one geodesic")
    sub.add_argument("--x0", default="0,0", help="start point, e.g. 0,0")
    sub.add_argument("--v0", default="1,0", help="start velocity, e.g. 1,0")
    sub.add_argument("--T", type=float, default=1.0, help="integration time")

    sub = add("verify-identities", cmd_verify_identities, "identity sweep")
    sub.add_argument("--trials", type=int, default=100, help="random samples")

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except CliError as err:
        print(json.dumps({"error": str(err)}), file=sys.stderr)
        return 2
    except Exception as err:  # noqa: BLE001  (CLI boundary)
        print(
            json.dumps({"error": f"{type(err).__name__}: {err}"}), file=sys.stderr
        )
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
