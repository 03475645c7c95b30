"""Command-line front end.

Problems are described in TOML files with sections [scale], [problem],
[boundary], [constraint], [params], and optionally [oracle]. Commands:

    solve FILE       minimize (or extremize) and print a summary
    residual FILE    residual report for a trajectory given with --y
    check FILE       exit 0 iff all residual maxima pass --tol
    dual FILE        emit the reflected problem in the same file format
    gen-scale FILE   emit the scale points, one per line
    oracle FILE      exhaustive small-instance search over [oracle] grid

Exit codes: 0 success (check: pass), 1 check failure, 2 usage or
configuration error, 3 numeric failure.

Expression grammar (the stable contract for L, g, F):

    expr    = term { ("+" | "-") term } ;
    term    = unary { ("*" | "/") unary } ;
    unary   = "-" unary | power ;
    power   = atom [ "^" unary ] ;
    atom    = number | name | name "(" expr ")" | "(" expr ")" ;

with functions sin, cos, exp, log, sqrt, abs; "^" binds tighter than
prefix minus, so -x^2 reads -(x^2).
"""

from __future__ import annotations

import argparse
import re
import sys

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import expressions as ex
from .duality import dualize_problem
from .errors import (
    BadParameters,
    DomainError,
    EmptyFeasibleSet,
    EndpointNotFree,
    ExpressionSyntaxError,
    FlavorMismatch,
    LineSearchFailure,
    NonFiniteInput,
    NoPointBelowA,
    NoPointBeyondB,
    NotConverged,
    ParseError,
    PointNotInScale,
    ScaleKindMismatch,
    ScaleMismatch,
    SearchSpaceTooLarge,
    TooFewPoints,
    TrajectoryDomainError,
    UnboundVariable,
    UnknownIdentifier,
    ValidationError,
)
from .problem import ProblemSpec, carried_indices, make_trajectory, validate
from .residuals import ResidualReport, el_residual
from .solve import Solution, SolveOptions, brute_force_oracle, solve_isoperimetric, solve_unconstrained
from .timescale import TimeScale, build_scale, generate_scale, read_scale_file

__all__ = ["load_config", "run_command", "emit_csv", "main"]

_CONFIG_ERRORS = (
    ParseError,
    ValidationError,
    BadParameters,
    TooFewPoints,
    NonFiniteInput,
    ExpressionSyntaxError,
    UnknownIdentifier,
    PointNotInScale,
    OSError,
)
_NUMERIC_ERRORS = (
    DomainError,
    TrajectoryDomainError,
    UnboundVariable,
    LineSearchFailure,
    NotConverged,
    SearchSpaceTooLarge,
    EmptyFeasibleSet,
    ScaleKindMismatch,
    ScaleMismatch,
    FlavorMismatch,
    EndpointNotFree,
    NoPointBeyondB,
    NoPointBelowA,
)

_KNOWN_KEYS = {
    "scale": {"kind", "a", "b", "n", "h", "q", "points", "file"},
    "problem": {"flavor", "L", "g", "F", "z_anchor"},
    "boundary": {"a", "b", "left", "right"},
    "constraint": {"gamma"},
    "params": None,  # free-form
    "oracle": {"lo", "hi", "values_per_coord", "slack"},
}


def _key_line(text: str, key: str) -> int | None:
    pat = re.compile(rf"^\s*(\[)?\s*\"?{re.escape(key)}\"?\s*[=\]]")
    for i, line in enumerate(text.splitlines(), start=1):
        if pat.match(line):
            return i
    return None


def _check_keys(data: dict, text: str) -> None:
    for section, content in data.items():
        if section not in _KNOWN_KEYS:
            raise ParseError(f"unknown section [{section}]", line=_key_line(text, section))
        allowed = _KNOWN_KEYS[section]
        if allowed is None:
            continue
        if not isinstance(content, dict):
            raise ParseError(f"[{section}] must be a table", line=_key_line(text, section))
        for key in content:
            if key not in allowed:
                raise ParseError(
                    f"unknown key {key!r} in [{section}]", line=_key_line(text, key)
                )


def _need(table: dict, section: str, key: str, text: str):
    if key not in table:
        raise ParseError(f"missing key {key!r} in [{section}]", line=_key_line(text, section))
    return table[key]


def _build_scale(cfg: dict, text: str) -> TimeScale:
    given = [k for k in ("kind", "points", "file") if k in cfg]
    if len(given) != 1:
        raise ParseError(
            "section [scale] needs exactly one of: kind, points, file",
            line=_key_line(text, "scale"),
        )
    if "points" in cfg:
        return build_scale(cfg["points"])
    if "file" in cfg:
        return read_scale_file(cfg["file"])
    kind = cfg["kind"]
    kw = {k: v for k, v in cfg.items() if k != "kind"}
    return generate_scale(kind, **kw)


def _parse_bc(value, section_text: str):
    if value == "free":
        return None
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    raise ParseError(f"boundary value must be a number or \"free\", got {value!r}",
                     line=_key_line(section_text, "boundary"))


def _load(path: str) -> tuple[ProblemSpec, dict]:
    with open(path, "rb") as fh:
        raw = fh.read()
    text = raw.decode("utf-8")
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as err:
        m = re.search(r"line (\d+)", str(err))
        raise ParseError(str(err), line=int(m.group(1)) if m else None) from None
    _check_keys(data, text)
    for required in ("scale", "problem", "boundary"):
        if required not in data:
            raise ParseError(f"missing section [{required}]")
    scale = _build_scale(data["scale"], text)
    prob = data["problem"]
    params = {k: float(v) for k, v in data.get("params", {}).items()}
    lf_vars = ("t", "y", "v", "z") + tuple(params)
    g_vars = ("t", "y", "v") + tuple(params)
    flavor = _need(prob, "problem", "flavor", text)
    L = ex.parse_expression(_need(prob, "problem", "L", text), lf_vars)
    g = ex.parse_expression(_need(prob, "problem", "g", text), g_vars)
    F = ex.parse_expression(prob["F"], lf_vars) if "F" in prob else None
    bnd = data["boundary"]
    spec = ProblemSpec(
        scale=scale,
        a=float(_need(bnd, "boundary", "a", text)),
        b=float(_need(bnd, "boundary", "b", text)),
        flavor=flavor,
        L=L,
        g=g,
        F=F,
        gamma=float(data["constraint"]["gamma"]) if "constraint" in data
        and "gamma" in data["constraint"] else None,
        left_bc=_parse_bc(_need(bnd, "boundary", "left", text), text),
        right_bc=_parse_bc(_need(bnd, "boundary", "right", text), text),
        params=params,
        z_anchor=prob.get("z_anchor", "left"),
    )
    diagnostics = validate(spec)
    if diagnostics:
        raise ValidationError(diagnostics)
    return spec, data.get("oracle", {})


def load_config(path: str) -> ProblemSpec:
    """Parse and validate a problem file."""
    return _load(path)[0]


def _fmt(v: float) -> str:
    return f"{v:.17g}"


def emit_csv(obj, path: str | None = None) -> None:
    """Write a solution (t,y,z) or residual report (t,residual) as CSV.

    Solutions carry data rows only; reports append their summary values as
    rows prefixed with '#'. Writes to stdout when no path is given.
    """
    lines = []
    if isinstance(obj, Solution):
        lines.append("t,y,z")
        yg, zg = obj.y.y, obj.y.z
        for t, yv, zv in zip(yg.domain_points, yg.values, zg.values):
            lines.append(f"{_fmt(t)},{_fmt(yv)},{_fmt(zv)}")
    elif isinstance(obj, ResidualReport):
        lines.append("t,residual")
        pw = obj.pointwise
        for t, rv in zip(pw.domain_points, pw.values):
            lines.append(f"{_fmt(t)},{_fmt(rv)}")
        if len(pw.values):
            lines.append(f"# max_abs = {_fmt(obj.max_abs)}")
            if obj.boundary_left is not None:
                lines.append(f"# boundary_left = {_fmt(obj.boundary_left)}")
            if obj.boundary_right is not None:
                lines.append(f"# boundary_right = {_fmt(obj.boundary_right)}")
            lines.append(f"# integral_form_deviation = {_fmt(obj.integral_form_deviation)}")
            lines.append(f"# tol_suggested = {_fmt(obj.tol_suggested)}")
            lam0, lam = obj.multipliers_used
            lines.append(f"# lam0 = {_fmt(lam0)}")
            lines.append(f"# lam = {_fmt(lam)}")
    else:
        raise BadParameters(f"cannot serialize {type(obj).__name__} to CSV")
    body = "\n".join(lines) + "\n"
    if path is None:
        sys.stdout.write(body)
    else:
        with open(path, "w", newline="\n") as fh:
            fh.write(body)


def _read_trajectory(spec: ProblemSpec, path: str):
    """Trajectory values from a CSV with columns t,y (extra columns ignored;
    z is always recomputed). Every carried point must be present."""
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            cells = line.split(",")
            if lineno == 1 and cells[0].strip().lower() == "t":
                continue
            if len(cells) < 2:
                raise ParseError(f"{path}: need at least columns t,y", line=lineno)
            try:
                t, yv = float(cells[0]), float(cells[1])
            except ValueError:
                raise ParseError(f"{path}: bad number in row", line=lineno) from None
            values[spec.scale.index(t)] = yv
    lo, hi = carried_indices(spec)
    missing = [i for i in range(lo, hi + 1) if i not in values]
    if missing:
        pts = ", ".join(_fmt(spec.scale.points[i]) for i in missing)
        raise ParseError(f"{path}: no value for scale point(s) {pts}")
    return np.array([values[i] for i in range(lo, hi + 1)])


def _solution_summary(sol: Solution) -> str:
    rep = sol.report
    rows = [
        f"objective = {_fmt(sol.objective)}",
        f"lam0 = {_fmt(sol.lam0)}",
        f"lam = {'-' if sol.lam is None else _fmt(sol.lam)}",
        f"residual max_abs = {_fmt(rep.max_abs)}",
    ]
    if rep.boundary_left is not None:
        rows.append(f"boundary_left = {_fmt(rep.boundary_left)}")
    if rep.boundary_right is not None:
        rows.append(f"boundary_right = {_fmt(rep.boundary_right)}")
    if sol.constraint_value is not None:
        rows.append(f"constraint = {_fmt(sol.constraint_value)}")
    rows.append(f"iterations = {sol.iterations}")
    rows.append(f"converged = {'yes' if sol.converged else 'no'}")
    return "\n".join(rows)


def _emit_problem_file(spec: ProblemSpec) -> str:
    out = ["[scale]"]
    pts = ", ".join(_fmt(p) for p in spec.scale.points)
    out.append(f"points = [{pts}]")
    out.append("")
    out.append("[problem]")
    out.append(f'flavor = "{spec.flavor}"')
    out.append(f'L = "{ex.to_string(spec.L)}"')
    out.append(f'g = "{ex.to_string(spec.g)}"')
    if spec.F is not None:
        out.append(f'F = "{ex.to_string(spec.F)}"')
    if spec.z_anchor != "left":
        out.append(f'z_anchor = "{spec.z_anchor}"')
    out.append("")
    out.append("[boundary]")
    out.append(f"a = {_fmt(spec.a)}")
    out.append(f"b = {_fmt(spec.b)}")
    for name, bc in (("left", spec.left_bc), ("right", spec.right_bc)):
        out.append(f'{name} = "free"' if bc is None else f"{name} = {_fmt(bc)}")
    if spec.gamma is not None:
        out.append("")
        out.append("[constraint]")
        out.append(f"gamma = {_fmt(spec.gamma)}")
    if spec.params:
        out.append("")
        out.append("[params]")
        for k in sorted(spec.params):
            out.append(f"{k} = {_fmt(spec.params[k])}")
    return "\n".join(out) + "\n"


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tsvar",
        description="variational problems on finite time scales",
        epilog=__doc__.split("Expression grammar")[1].join(["Expression grammar", ""]),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, needs_y in (
        ("solve", False),
        ("residual", True),
        ("check", True),
        ("dual", False),
        ("gen-scale", False),
        ("oracle", False),
    ):
        p = sub.add_parser(name)
        p.add_argument("file", help="problem file (TOML)")
        p.add_argument("--out", help="output path (default: stdout)")
        p.add_argument("--tol", type=float, help="tolerance (check; solve gradient)")
        p.add_argument("--max-iter", type=int, dest="max_iter", help="iteration cap")
        p.add_argument("--lam0", type=float, default=1.0, help="multiplier on L")
        p.add_argument("--lam", type=float, default=0.0, help="multiplier on F")
        if needs_y:
            p.add_argument("--y", required=True, help="trajectory CSV with columns t,y")
    return parser


def _cmd_solve(spec: ProblemSpec, args) -> int:
    kw = {}
    if args.tol is not None:
        kw["tol_grad"] = args.tol
    if args.max_iter is not None:
        kw["max_iter"] = args.max_iter
    opts = SolveOptions(**kw)
    if spec.F is not None:
        sol = solve_isoperimetric(spec, None, opts)
    else:
        sol = solve_unconstrained(spec, None, opts)
    if args.out:
        emit_csv(sol, args.out)
    print(_solution_summary(sol))
    return 0 if sol.converged else 3


def _cmd_residual(spec: ProblemSpec, args) -> int:
    yv = _read_trajectory(spec, args.y)
    report = el_residual(spec, yv, args.lam0, args.lam)
    emit_csv(report, args.out)
    return 0


def _cmd_check(spec: ProblemSpec, args) -> int:
    yv = _read_trajectory(spec, args.y)
    report = el_residual(spec, yv, args.lam0, args.lam)
    tol = args.tol if args.tol is not None else report.tol_suggested
    quantities = [("max_abs", report.max_abs),
                  ("integral_form_deviation", report.integral_form_deviation)]
    if report.boundary_left is not None:
        quantities.append(("boundary_left", abs(report.boundary_left)))
    if report.boundary_right is not None:
        quantities.append(("boundary_right", abs(report.boundary_right)))
    ok = True
    for name, val in quantities:
        verdict = "ok" if val <= tol else "FAIL"
        ok = ok and val <= tol
        print(f"{name} = {_fmt(val)} (tol {_fmt(tol)}) {verdict}")
    print("PASS" if ok else "FAIL")
    return 0 if ok else 1


def _cmd_dual(spec: ProblemSpec, args) -> int:
    body = _emit_problem_file(dualize_problem(spec))
    if args.out:
        with open(args.out, "w", newline="\n") as fh:
            fh.write(body)
    else:
        sys.stdout.write(body)
    return 0


def _cmd_gen_scale(args) -> int:
    with open(args.file, "rb") as fh:
        text = fh.read().decode("utf-8")
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as err:
        raise ParseError(str(err)) from None
    if "scale" not in data:
        raise ParseError("missing section [scale]")
    _check_keys({"scale": data["scale"]}, text)
    ts = _build_scale(data["scale"], text)
    body = "".join(f"{_fmt(p)}\n" for p in ts.points)
    if args.out:
        with open(args.out, "w", newline="\n") as fh:
            fh.write(body)
    else:
        sys.stdout.write(body)
    return 0


def _cmd_oracle(spec: ProblemSpec, oracle_cfg: dict, args) -> int:
    if not oracle_cfg:
        raise ParseError("the oracle command needs an [oracle] section")
    lo = float(oracle_cfg.get("lo", -1.0))
    hi = float(oracle_cfg.get("hi", 1.0))
    count = int(oracle_cfg.get("values_per_coord", 11))
    slack = float(oracle_cfg.get("slack", 1e-6))
    from .solve import _free_local_indices

    nfree = _free_local_indices(spec).size
    grid = [np.linspace(lo, hi, count).tolist() for _ in range(nfree)]
    traj = brute_force_oracle(spec, grid, slack=slack)
    from .solve import evaluate_functionals

    lval, fval = evaluate_functionals(spec, traj)
    lines = ["t,y,z"]
    for t, yv, zv in zip(traj.y.domain_points, traj.y.values, traj.z.values):
        lines.append(f"{_fmt(t)},{_fmt(yv)},{_fmt(zv)}")
    body = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", newline="\n") as fh:
            fh.write(body)
    else:
        sys.stdout.write(body)
    print(f"objective = {_fmt(lval)}")
    if fval is not None:
        print(f"constraint = {_fmt(fval)}")
    return 0


def run_command(argv) -> int:
    """Dispatch a command line; returns the process exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        if args.command == "gen-scale":
            return _cmd_gen_scale(args)
        spec, oracle_cfg = _load(args.file)
        if args.command == "solve":
            return _cmd_solve(spec, args)
        if args.command == "residual":
            return _cmd_residual(spec, args)
        if args.command == "check":
            return _cmd_check(spec, args)
        if args.command == "dual":
            return _cmd_dual(spec, args)
        if args.command == "oracle":
            return _cmd_oracle(spec, oracle_cfg, args)
        parser.error(f"unknown command {args.command!r}")
    except ValidationError as err:
        for d in err.diagnostics:
            print(f"error: {d}", file=sys.stderr)
        return 2
    except ParseError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except _CONFIG_ERRORS as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except _NUMERIC_ERRORS as err:
        print(f"error: {err}", file=sys.stderr)
        return 3
    return 2


def main() -> None:
    sys.exit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()
