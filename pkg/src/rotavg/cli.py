"""Command-line surface: solve, synth, bench and diagnose subcommands.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Failures print a machine-readable JSON error record to stderr. Every
subcommand is deterministic given its flags (all randomised paths are
seeded); wall-clock fields are the only thing that varies between
identical runs.
"""

import argparse
import json
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import io as gio
from . import so3, synth
from .errors import (
    DegenerateInputError,
    DisconnectedGraphError,
    IndefiniteInputError,
    InfeasibleDensityError,
    InvalidGraphError,
    IsolatedVertexError,
    MalformedLineError,
    NonUnitQuaternionError,
    NotARotationError,
    NotRankThreeError,
    NotSymmetricError,
    NumericalBreakdownError,
    ZeroQuaternionError,
)
from .graph import (
    CameraGraph,
    MeasurementMatrix,
    alpha_max,
    check_connected,
    fiedler_value,
    graph_density,
    identity_stack,
    spanning_tree_init,
)
from .local import LocalConfig, rcdl_solve
from .solver import SolveConfig, bcd_solve, error_stats, rcd_solve, sdp_from_stack

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

_DATA_ERRORS = (
    InvalidGraphError,
    DisconnectedGraphError,
    MalformedLineError,
    NonUnitQuaternionError,
    NotARotationError,
    InfeasibleDensityError,
    IsolatedVertexError,
    OSError,
)
_NUMERIC_ERRORS = (
    NumericalBreakdownError,
    NotRankThreeError,
    DegenerateInputError,
    NotSymmetricError,
    IndefiniteInputError,
    ZeroQuaternionError,
)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


@dataclass
class RunManifest:
    """Echo of everything that determines a run's output."""

    subcommand: str
    input_path: str | None
    synth_spec: dict | None
    solver: str | None
    init: str | None
    config: dict | None
    local_sweeps: int | None
    seed: int
    out: str | None
    format: str | None


def _rng(seed: int, purpose: int) -> np.random.Generator:
    """Purpose-keyed Philox stream so e.g. init draws never alias synth draws."""
    return np.random.Generator(
        np.random.Philox(key=np.array([seed & 0xFFFFFFFFFFFFFFFF, purpose], dtype=np.uint64))
    )


def _load_graph(path: str, fmt: str):
    """Returns (graph, id_map or None)."""
    p = Path(path)
    if fmt == "auto":
        fmt = "g2o" if p.suffix == ".g2o" else "native"
    text = p.read_text()
    if fmt == "g2o":
        parsed = gio.parse_g2o(text)
        return parsed.graph, parsed.id_map
    return gio.parse_native(text), None


def _parse_synth_spec(text: str, seed: int) -> synth.SynthSpec:
    fields = {}
    for part in text.split(","):
        if "=" not in part:
            raise _UsageError(f"bad synth spec item {part!r} (expected key=value)")
        key, value = part.split("=", 1)
        fields[key.strip()] = value.strip()
    known = {"n", "density", "sigma", "style", "seed"}
    unknown = set(fields) - known
    if unknown:
        raise _UsageError(f"unknown synth spec keys {sorted(unknown)}")
    if "n" not in fields or "density" not in fields:
        raise _UsageError("synth spec needs at least n=... and density=...")
    try:
        return synth.SynthSpec(
            n=int(fields["n"]),
            target_density=float(fields["density"]),
            sigma=float(fields.get("sigma", "0")),
            style=fields.get("style", "sfm"),
            seed=int(fields.get("seed", str(seed))),
        )
    except ValueError as exc:
        raise _UsageError(f"bad synth spec: {exc}") from exc


def _initial_stack(init: str, graph: CameraGraph, seed: int) -> np.ndarray:
    if init == "identity":
        return identity_stack(graph.n)
    if init == "random":
        return so3.random_rotations(graph.n, _rng(seed, 2))
    if init == "spanning-tree":
        return spanning_tree_init(graph, seed)
    raise _UsageError(f"unknown init {init!r}")


def _run_solver(solver: str, M: MeasurementMatrix, R0: np.ndarray, cfg: SolveConfig):
    if solver == "rcd":
        return rcd_solve(M, R0, cfg)
    if solver == "bcd":
        _, report = bcd_solve(M, sdp_from_stack(R0), cfg)
        return report
    if solver == "rcdl":
        return rcdl_solve(M, R0, cfg, LocalConfig(sweeps=cfg.local_sweeps))
    raise _UsageError(f"unknown solver {solver!r}")


def _add_solver_flags(p):
    p.add_argument("--solver", choices=("bcd", "rcd", "rcdl"), default="rcd")
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--max-epochs", type=int, default=10000)
    p.add_argument("--k-order", choices=("random", "cyclic"), default="random")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--init", choices=("identity", "random", "spanning-tree"), default="random")
    p.add_argument("--local-sweeps", type=int, default=30)


def _add_input_flags(p):
    p.add_argument("--input", help="graph file (g2o or native)")
    p.add_argument("--input-format", choices=("auto", "g2o", "native"), default="auto")


def cmd_solve(args) -> int:
    if bool(args.input) == bool(args.synth):
        raise _UsageError("exactly one of --input and --synth is required")
    cfg = SolveConfig(
        tolerance=args.tol,
        max_epochs=args.max_epochs,
        k_order=args.k_order,
        seed=args.seed,
        use_local=args.solver == "rcdl",
        local_sweeps=args.local_sweeps,
    )
    gt = None
    id_map = None
    if args.synth:
        if args.gt:
            raise _UsageError("--gt cannot be combined with --synth (ground truth is implied)")
        spec = _parse_synth_spec(args.synth, args.seed)
        instance = synth.generate(spec)
        graph, gt = instance.graph, instance.ground_truth
        synth_echo = asdict(spec)
        input_path = None
    else:
        graph, id_map = _load_graph(args.input, args.input_format)
        synth_echo = None
        input_path = args.input
        if args.gt:
            gt = gio.parse_rotations(Path(args.gt).read_text())
    if not check_connected(graph):
        raise DisconnectedGraphError("input camera graph is not connected")
    M = MeasurementMatrix(graph)
    R0 = _initial_stack(args.init, graph, args.seed)
    report = _run_solver(args.solver, M, R0, cfg)
    manifest = RunManifest(
        subcommand="solve",
        input_path=input_path,
        synth_spec=synth_echo,
        solver=args.solver,
        init=args.init,
        config=asdict(cfg),
        local_sweeps=args.local_sweeps,
        seed=args.seed,
        out=args.out,
        format=args.format,
    )
    summary = {
        "manifest": asdict(manifest),
        "n": graph.n,
        "m": graph.m,
        "final_objective": report.final_objective,
        "epochs": report.epochs,
        "iterations": report.iterations,
        "termination": report.termination,
        "wall_time": report.wall_time,
        "block_multiplies": report.block_multiplies,
    }
    if gt is not None:
        mean, median, worst = error_stats(report.rotations, gt)
        summary["error_deg"] = {"mean": mean, "median": median, "max": worst}
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ext = "csv" if args.format == "csv" else "jsonl"
    with open(out / f"result.{ext}", "w") as fh:
        gio.write_results(report, fh, format=args.format, id_map=id_map)
    with open(out / "rotations.rotavg", "w") as fh:
        gio.write_rotations(report.rotations, fh)
    if id_map is not None:
        (out / "id_map.json").write_text(json.dumps(id_map, sort_keys=True))
    (out / "summary.json").write_text(json.dumps(summary, sort_keys=True))
    print(
        f"{args.solver}: objective {report.final_objective:.10g} after "
        f"{report.epochs} epochs ({report.termination}, {report.wall_time:.3f}s)"
    )
    if "error_deg" in summary:
        e = summary["error_deg"]
        print(
            f"error vs reference [deg]: mean {e['mean']:.4f} "
            f"median {e['median']:.4f} max {e['max']:.4f}"
        )
    return EXIT_OK


def cmd_synth(args) -> int:
    spec = synth.SynthSpec(
        n=args.n,
        target_density=args.density,
        sigma=args.sigma,
        style=args.style,
        seed=args.seed,
    )
    instance = synth.generate(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "graph.rotavg", "w") as fh:
        gio.write_native(instance.graph, fh)
    with open(out / "gt.rotavg", "w") as fh:
        gio.write_rotations(instance.ground_truth, fh)
    (out / "spec.json").write_text(json.dumps(asdict(spec), sort_keys=True))
    print(
        f"wrote {instance.graph.n} cameras, {instance.graph.m} edges "
        f"(d_G {graph_density(instance.graph.n, instance.graph.m):.5f}) to {out}"
    )
    return EXIT_OK


def cmd_bench(args) -> int:
    solvers = args.solvers.split(",")
    ns = [int(x) for x in args.n.split(",")]
    densities = [float(x) for x in args.density.split(",")]
    sigmas = [float(x) for x in args.sigma.split(",")]
    seeds = [int(x) for x in args.seeds.split(",")]
    cols = "solver,n,m,d_g,sigma,seed,epochs,iterations,objective,seconds,status"
    rows = []
    for n in ns:
        for density in densities:
            for sigma in sigmas:
                for seed in seeds:
                    spec = synth.SynthSpec(
                        n=n, target_density=density, sigma=sigma, style=args.style, seed=seed
                    )
                    instance = synth.generate(spec)
                    M = MeasurementMatrix(instance.graph)
                    R0 = so3.random_rotations(n, _rng(seed, 2))
                    d_g = graph_density(n, instance.graph.m)
                    for solver in solvers:
                        cfg = SolveConfig(
                            tolerance=args.tol,
                            max_epochs=args.max_epochs,
                            k_order=args.k_order,
                            seed=seed,
                            use_local=solver == "rcdl",
                            local_sweeps=args.local_sweeps,
                        )
                        base = (
                            f"{solver},{n},{instance.graph.m},{d_g:.17g},"
                            f"{sigma:.17g},{seed}"
                        )
                        try:
                            report = _run_solver(solver, M, R0, cfg)
                        except (_DATA_ERRORS + _NUMERIC_ERRORS) as exc:
                            rows.append(f"{base},,,,," + type(exc).__name__)
                            continue
                        rows.append(
                            f"{base},{report.epochs},{report.iterations},"
                            f"{report.final_objective:.17g},{report.wall_time:.17g},ok"
                        )
    text = cols + "\n" + "\n".join(rows) + "\n"
    Path(args.out).write_text(text)
    print(f"wrote {len(rows)} bench rows to {args.out}")
    return EXIT_OK


def cmd_diagnose(args) -> int:
    graph, _ = _load_graph(args.input, args.input_format)
    if not check_connected(graph):
        raise DisconnectedGraphError("input camera graph is not connected")
    degrees = graph.degrees()
    try:
        d_g = f"{graph_density(graph.n, graph.m):.6f}"
    except ValueError:
        d_g = "n/a"
    bound = alpha_max(graph)
    print(f"n: {graph.n}")
    print(f"m: {graph.m}")
    print(f"d_g: {d_g}")
    print(f"max_degree: {int(degrees.max())}")
    print(f"fiedler_value: {fiedler_value(graph):.9g}")
    print(f"alpha_max_deg: {np.degrees(bound):.6f}")
    if args.solution:
        R = gio.parse_rotations(Path(args.solution).read_text())
        if R.shape[0] != graph.n:
            raise InvalidGraphError(
                f"solution has {R.shape[0]} cameras, graph has {graph.n}"
            )
        rel = np.einsum("eab,ecb->eac", R[graph.edge_j - 1], R[graph.edge_i - 1])
        residuals = so3.angular_distances(rel, graph.edge_rot)
        frac = float(np.mean(residuals > bound))
        print(f"residuals_over_alpha_max: {frac:.6f}")
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="rotavg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve a rotation-averaging instance")
    _add_input_flags(p)
    p.add_argument("--synth", help='inline instance, e.g. "n=50,density=0.3,sigma=0.1,style=sfm"')
    p.add_argument("--gt", help="reference rotation-stack file for error stats")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    _add_solver_flags(p)
    p.set_defaults(fn=cmd_solve)

    p = sub.add_parser("synth", help="generate a synthetic instance")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--density", type=float, required=True)
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--style", choices=("sfm", "slam"), default="sfm")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("bench", help="sweep solvers over synthetic instances")
    p.add_argument("--solvers", default="rcd")
    p.add_argument("--n", default="100")
    p.add_argument("--density", default="0.3")
    p.add_argument("--sigma", default="0.1")
    p.add_argument("--seeds", default="0")
    p.add_argument("--style", choices=("sfm", "slam"), default="sfm")
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--max-epochs", type=int, default=10000)
    p.add_argument("--k-order", choices=("random", "cyclic"), default="random")
    p.add_argument("--local-sweeps", type=int, default=30)
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("diagnose", help="graph statistics and the residual bound")
    _add_input_flags(p)
    p.add_argument("--solution", help="rotation-stack file to check residuals against")
    p.set_defaults(fn=cmd_diagnose)
    return parser


def _error_record(exc) -> str:
    return json.dumps({"error": type(exc).__name__, "message": str(exc)})


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except (_UsageError, ValueError) as exc:
        print(_error_record(exc), file=sys.stderr)
        return EXIT_USAGE
    except _DATA_ERRORS as exc:
        print(_error_record(exc), file=sys.stderr)
        return EXIT_DATA
    except _NUMERIC_ERRORS as exc:
        print(_error_record(exc), file=sys.stderr)
        return EXIT_NUMERIC


def entry():
    raise SystemExit(main())


if __name__ == "__main__":
    entry()
