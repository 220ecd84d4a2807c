"""Command-line front end.

Exit codes: 0 success, 1 usage or parse error, 2 numerical failure,
3 domain or precondition error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import basins, dynamics, equilibria, invariants, plotting, specfile
from .errors import (
    CapacityError,
    ConfigurationError,
    ConstructionError,
    DimensionError,
    DomainError,
    NumericalFailure,
    PreconditionError,
    SpecParseError,
)
from .games import Game, MixedProfile

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_DOMAIN = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _positive_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def profile_from_values(game: Game, values: Sequence[float]) -> MixedProfile:
    """One value per player means 'probability of the first strategy' (two-strategy
    players only); otherwise the values are the flat profile."""
    vals = list(values)
    if len(vals) == game.player_count and all(k == 2 for k in game.shape):
        return MixedProfile.from_vectors([[v, 1 - v] for v in vals])
    if len(vals) != sum(game.shape):
        raise UsageError(
            f"--p0 needs {game.player_count} per-player values or {sum(game.shape)} flat values"
        )
    return MixedProfile(np.asarray(vals, dtype=float), game.shape)


def _integrator_args(p: argparse.ArgumentParser, horizon: float = 1e4) -> None:
    g = p.add_argument_group("integrator")
    g.add_argument("--T", type=_positive_float, default=horizon, help="time horizon")
    g.add_argument("--rtol", type=_positive_float, default=1e-8)
    g.add_argument("--atol", type=_positive_float, default=1e-10)
    g.add_argument("--converge-tol", type=float, default=1e-9, help="0 runs to the horizon")
    g.add_argument("--max-steps", type=_positive_int, default=200_000)
    g.add_argument("--mode", choices=("clamp", "log"), default="clamp")


def _options(a) -> dynamics.IntegratorOptions:
    return dynamics.IntegratorOptions(
        rtol=a.rtol, atol=a.atol, horizon=a.T, converge_tol=a.converge_tol,
        max_steps=a.max_steps, mode=a.mode,
    )


def _tracked(a, game: Game) -> list[invariants.InvariantSpec]:
    specs = []
    for kind in a.track or ():
        q = profile_from_values(game, a.q) if a.q else None
        partition = None
        if kind == "kl_bipartite":
            partition = (tuple(a.left), tuple(v for v in range(game.player_count) if v not in a.left)) if a.left else None
        leaves = tuple(a.leaves) if a.leaves else None
        specs.append(invariants.InvariantSpec(kind, q=q, partition=partition, leaves=leaves, w=a.w))
    return specs


def _tracking_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--track", action="append", choices=invariants.KINDS, help="invariant to track (repeatable)")
    p.add_argument("--q", type=_floats, help="reference profile for q-based invariants")
    p.add_argument("--w", type=_positive_float, help="parameter w for G(w) invariants")
    p.add_argument("--leaves", type=lambda s: [int(v) for v in s.split(",")], help="leaf pair i,j")
    p.add_argument("--left", type=lambda s: [int(v) for v in s.split(",")], help="left side of a bipartition")


def _write(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _json(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _complex_list(zs) -> list:
    return [[float(z.real), float(z.imag)] for z in zs]


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_simulate(a) -> int:
    game = specfile.load_game(a.game)
    p0 = profile_from_values(game, a.p0)
    traj = dynamics.integrate(game, p0, _options(a), _tracked(a, game))
    text = traj.to_csv()
    _write(text, a.out)
    if a.out:
        rep = dynamics.detect_limit(traj, a.snap_tol)
        print(_json({
            "status": traj.status, "t_final": float(traj.times[-1]), "samples": len(traj),
            "limit": rep.label, "classification": rep.classification, "residual": rep.residual,
        }), end="")
    return EXIT_OK


def _profile_arg(a, game: Game) -> MixedProfile:
    if a.profile:
        doc = json.loads(Path(a.profile).read_text(encoding="utf-8"))
        if isinstance(doc, dict) and "profile" in doc:
            return specfile.parse_profile(doc["profile"], game.shape, "$.profile")
        return specfile.parse_profile(doc, game.shape)
    if a.p is None:
        raise UsageError("classify needs --profile FILE or --p values")
    return profile_from_values(game, a.p)


def cmd_classify(a) -> int:
    game = specfile.load_game(a.game)
    p = _profile_arg(a, game)
    cert = equilibria.is_nash(game, p, a.tol)
    doc = {
        "nash": cert.is_nash,
        "nash_flags": list(cert.flags),
        "worst_violation": None if cert.worst is None else {
            "player": cert.worst[0], "strategy": cert.worst[1], "gap": cert.worst[2]},
        "weakly_stable": None, "weak_witness": None,
        "fixed_point": False, "field_norm": dynamics.field_norm(game, p),
        "stability": None, "max_real": None, "eigenvalues": None,
    }
    if cert.is_nash:
        ws = equilibria.is_weakly_stable(game, p, a.tol)
        doc["weakly_stable"] = ws.stable
        doc["weak_witness"] = list(ws.witness) if ws.witness else None
    if doc["field_norm"] < equilibria.FIXED_POINT_TOL:
        rep = equilibria.classify_stability(game, p, a.spectral_tol)
        doc.update(fixed_point=True, stability=rep.label, max_real=rep.max_real,
                   eigenvalues=_complex_list(rep.eigenvalues))
    if a.format == "json":
        sys.stdout.write(_json(doc))
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["field", "value"])
        for k in sorted(doc):
            v = doc[k]
            w.writerow([k, json.dumps(v) if isinstance(v, (list, dict)) or v is None else v])
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


def cmd_invariants(a) -> int:
    game = specfile.load_game(a.game)
    p0 = profile_from_values(game, a.p0)
    specs = _tracked(a, game)
    if not a.track:
        specs = [invariants.InvariantSpec("potential")]
    traj = dynamics.integrate(game, p0, _options(a), specs)
    rows = []
    for s in specs:
        v = traj.invariants[s.name]
        rows.append({"name": s.name, "initial": float(v[0]), "final": float(v[-1]),
                     "max_drift": invariants.drift(v), "conserved": s.conserved})
    if a.format == "json":
        sys.stdout.write(_json({"status": traj.status, "t_final": float(traj.times[-1]), "invariants": rows}))
    else:
        buf = io.StringIO()
        w = csv.DictWriter(buf, ["name", "initial", "final", "max_drift", "conserved"], lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


def _plot_options(a, legend: bool = True) -> plotting.PlotOptions:
    colors = ()
    if getattr(a, "color", None):
        pairs = []
        for item in a.color:
            if "=" not in item:
                raise UsageError(f"--color expects LABEL=#RRGGBB, got {item!r}")
            k, v = item.split("=", 1)
            pairs.append((k, v))
        colors = tuple(pairs)
    return plotting.PlotOptions(size=a.size, manifold=a.manifold, colors=colors, legend=legend)


def cmd_basin(a) -> int:
    game = specfile.load_game(a.game)
    raster = basins.basin_raster(game, a.resolution, _options(a))
    _write(raster.to_csv(), a.out)
    if a.svg:
        Path(a.svg).write_text(plotting.raster_svg(raster, _plot_options(a)), encoding="utf-8")
    return EXIT_OK


def cmd_apoa(a) -> int:
    game = specfile.load_game(a.game)
    est = basins.apoa_monte_carlo(
        game, a.samples, a.seed, _options(a), opt=a.opt, workers=a.workers
    )
    _write(_json(est.to_dict()), a.out)
    return EXIT_OK


def cmd_oracle(a) -> int:
    if len(a.x) != a.n:
        raise UsageError(f"--x has {len(a.x)} values but --n is {a.n}")
    ans = basins.star_oracle(a.x, a.y, a.w, a.eps)
    print(ans.label)
    if ans.x_solved is not None:
        print("x' = " + ",".join(repr(v) for v in ans.x_solved))
    return EXIT_OK


def cmd_plot(a) -> int:
    game = specfile.load_game(a.game)
    if a.kind == "vector":
        svg = plotting.vector_field_svg(game, a.density, _plot_options(a, legend=False))
    elif a.raster:
        raster = basins.BasinRaster.from_csv(Path(a.raster).read_text(encoding="utf-8"))
        svg = plotting.raster_svg(raster, _plot_options(a))
    else:
        svg = plotting.raster_svg(basins.basin_raster(game, a.resolution, _options(a)), _plot_options(a))
    _write(svg, a.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="replicator-atlas", description="Replicator dynamics on potential games.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="integrate one trajectory and write it as CSV")
    s.add_argument("--game", required=True)
    s.add_argument("--p0", type=_floats, required=True)
    s.add_argument("--out")
    s.add_argument("--snap-tol", type=_positive_float, default=1e-6)
    _integrator_args(s)
    _tracking_args(s)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("classify", help="Nash, weak-stability and spectral checks for a profile")
    s.add_argument("--game", required=True)
    s.add_argument("--profile", help="JSON file with per-player vectors")
    s.add_argument("--p", type=_floats, help="inline profile, same grammar as --p0")
    s.add_argument("--tol", type=_positive_float, default=1e-8)
    s.add_argument("--spectral-tol", type=_positive_float, default=equilibria.SPECTRAL_TOL)
    s.add_argument("--format", choices=("json", "csv"), default="json")
    s.set_defaults(func=cmd_classify)

    s = sub.add_parser("invariants", help="initial, final and max drift of tracked quantities")
    s.add_argument("--game", required=True)
    s.add_argument("--p0", type=_floats, required=True)
    s.add_argument("--format", choices=("json", "csv"), default="json")
    _integrator_args(s, horizon=50.0)
    _tracking_args(s)
    s.set_defaults(func=cmd_invariants)

    for name, helptext in (("basin", "label a grid of initial conditions"), ("plot", "emit an SVG figure")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--game", required=True)
        s.add_argument("--resolution", type=_positive_int, default=50)
        s.add_argument("--out")
        s.add_argument("--manifold", action="store_true", help="overlay the Stag Hunt manifold")
        s.add_argument("--size", type=_positive_int, default=400)
        s.add_argument("--color", action="append", help="LABEL=#RRGGBB (repeatable)")
        _integrator_args(s)
        if name == "basin":
            s.add_argument("--svg")
            s.set_defaults(func=cmd_basin)
        else:
            s.add_argument("--kind", choices=("vector", "basin"), default="vector")
            s.add_argument("--density", type=_positive_int, default=20)
            s.add_argument("--raster", help="basin CSV to render instead of recomputing")
            s.set_defaults(func=cmd_plot)

    s = sub.add_parser("apoa", help="Monte Carlo average price of anarchy")
    s.add_argument("--game", required=True)
    s.add_argument("--samples", type=_positive_int, required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out")
    s.add_argument("--opt", type=_positive_float, help="optimum, if enumeration is infeasible")
    s.add_argument("--workers", type=_positive_int)
    _integrator_args(s)
    s.set_defaults(func=cmd_apoa)

    s = sub.add_parser("oracle", help="predict the limit of a star Stag Hunt trajectory")
    s.add_argument("--n", type=_positive_int, required=True)
    s.add_argument("--w", type=_positive_float, required=True)
    s.add_argument("--x", type=_floats, required=True)
    s.add_argument("--y", type=float, required=True)
    s.add_argument("--eps", type=_positive_float, default=1e-10)
    s.set_defaults(func=cmd_oracle)
    return p


def run(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if getattr(args, "converge_tol", 0) < 0:
            raise UsageError("--converge-tol must be non-negative")
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SpecParseError as exc:
        print(f"error: invalid game spec at {exc.path}: {exc.message}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalFailure as exc:
        print(f"numerical failure: {exc} (last good t={exc.last_time})", file=sys.stderr)
        return EXIT_NUMERICAL
    except (DomainError, PreconditionError, DimensionError, ConstructionError,
            ConfigurationError, CapacityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except SystemExit as exc:
        return int(exc.code or 0)


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
