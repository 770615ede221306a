"""Command line driver: measures of a channel file and the figure data sets.

Every command writes a metadata block (package version, seed, sha256 of
the canonical configuration) followed by the data rows.  CSV output puts
the metadata on ``# key: value`` lines; JSON output is
``{"metadata": ..., "data": [...]}``.  Floats are written with 15
significant digits in both formats, so one round-trips into the other.

Exit codes: 0 success, 2 invalid input, 3 fit failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .channel_io import load_channel
from .exceptions import FitError, InvalidInputError, SubunitError
from .liouville import BipartiteChannel, Channel
from .measures import addressability, correlated_unitarity, measure_report, sub_unitarity, witness_bound_exact
from .protocols import (
    NoiseModel,
    ResetModel,
    _threads,
    decay_spectrum,
    estimate_local_unitarity,
    orthogonal_prep_bound,
    witness_pipeline,
)
from .twirl import estimate_C, twirl_matrix
from .zoo import (
    identity_channel,
    make_rng,
    named_channel,
    random_bipartite,
    random_channel,
    random_unitary_channel,
    spawn_rngs,
    swap_unitary,
)

EXIT_OK, EXIT_INVALID, EXIT_FIT = 0, 2, 3

# seeded stand-in for the unspecified test channel of the reset sweep
PINNED_SEED, PINNED_RANK = 1, 2

NAMED = ("swap", "identity", "cnot", "pinned", "random", "product")


def pinned_channel() -> BipartiteChannel:
    return random_bipartite(2, 2, rank=PINNED_RANK, rng=make_rng(PINNED_SEED))


def swap_mixture(t: float, d: int = 2) -> BipartiteChannel:
    """``t * SWAP + (1 - t) * id`` on two ``d``-level systems."""
    sw = Channel.from_unitary(swap_unitary(d))
    return BipartiteChannel(sw.mix(identity_channel(d * d), t), d, d)


def resolve_channel(spec: str, seed: int | None = None, rank: int | None = None) -> BipartiteChannel:
    """A two-qubit channel by name, or a bipartite channel from a JSON file."""
    if spec in ("swap", "identity", "cnot"):
        return named_channel(spec, 2, 2)
    if spec == "pinned":
        return pinned_channel()
    if spec == "random":
        return random_bipartite(2, 2, rank=rank, rng=make_rng(seed))
    if spec == "product":
        rng = make_rng(seed)
        return BipartiteChannel.product(random_channel(2, 2, rank, rng), random_channel(2, 2, rank, rng))
    path = Path(spec)
    if not path.exists():
        raise InvalidInputError(f"--channel {spec!r} is neither a file nor one of {', '.join(NAMED)}")
    return load_channel(path)


# -- argument parsing ------------------------------------------------------


def parse_grid(text: str) -> np.ndarray:
    """``start:stop:steps`` (inclusive ends) or a single value."""
    parts = text.split(":")
    try:
        if len(parts) == 1:
            return np.array([float(parts[0])])
        if len(parts) != 3:
            raise ValueError
        start, stop, steps = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise InvalidInputError(f"grid {text!r} must be start:stop:steps") from None
    if steps < 1:
        raise InvalidInputError("grid needs at least one step")
    return np.linspace(start, stop, steps)


def parse_vector(text: str) -> np.ndarray:
    try:
        v = np.array([float(x) for x in text.split(",")])
    except ValueError:
        raise InvalidInputError(f"{text!r} is not a comma separated vector") from None
    if v.size != 3:
        raise InvalidInputError("Bloch vectors have three components")
    return v


def _common(p: argparse.ArgumentParser, seed_default: int | None = 0) -> None:
    p.add_argument("--seed", type=int, default=seed_default, help="root seed (unsigned 64-bit)")
    p.add_argument("--out", help="output file (default stdout)")
    p.add_argument("--format", choices=("json", "csv"), default=None)


def _protocol_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--k-max", type=int, default=30, help="longest sequence; lengths run 1..k-max")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--exact", dest="monte_carlo", action="store_false", help="exact expectation (default)")
    mode.add_argument("--monte-carlo", dest="monte_carlo", action="store_true", help="sample random sequences")
    p.add_argument("--seqs", type=int, default=None, help="sequences per length (Monte Carlo)")
    p.set_defaults(monte_carlo=False)
    p.add_argument("--keep-samples", action="store_true", help="include per-sequence values (JSON)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="subunit", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"subunit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("measures", help="all measures of one channel")
    p.add_argument("--channel", required=True, help=f"JSON file or one of {', '.join(NAMED)}")
    p.add_argument("--rank", type=int, default=None)
    _common(p)

    p = sub.add_parser("histogram", help="u_c of Haar-random two-qubit unitaries")
    p.add_argument("--n", type=int, default=20000)
    _common(p)

    p = sub.add_parser("convergence", help="gap |u_c - C| along F = p E_A(x)E_B + (1-p) G")
    p.add_argument("--grid", default="0:1:11", help="values of p")
    p.add_argument("--rank", type=int, default=None, help="Kraus rank of every random factor")
    p.add_argument("--n", type=int, default=1, help="independent channel draws")
    _common(p)

    p = sub.add_parser("sweep-reset", help="reset protocol estimate of u_A->A against reset error")
    p.add_argument("--channel", default="pinned")
    p.add_argument("--rank", type=int, default=None)
    p.add_argument("--grid", default="0:1:11", help="reset strength p, or Bloch length with --bloch")
    p.add_argument("--bloch", default=None, help="direction x,y,z of the reset state; grid scales it")
    p.add_argument("--reset-p", type=float, default=None, help="single reset strength instead of a grid")
    _protocol_flags(p)
    _common(p, seed_default=None)

    p = sub.add_parser("witness-contour", help="witness verdicts for t*SWAP + (1-t)*id against reset errors")
    p.add_argument("--grid", "--t-grid", dest="t_grid", default="0:1:11", help="mixing weight t")
    p.add_argument("--p-grid", default="1", help="reset strength used when estimating u_A->A")
    p.add_argument("--q-grid", default="1", help="reset strength used when estimating u_B->B")
    p.add_argument("--reset-p", type=float, default=None, help="same strength for both resets")
    _protocol_flags(p)
    _common(p, seed_default=None)

    p = sub.add_parser("compare-addressability", help="u_c against the trace-based measure a")
    p.add_argument("--n", type=int, default=200, help="channels per rank")
    p.add_argument("--ranks", default="1,2,4,16")
    p.add_argument("--rank", type=int, default=None, help="a single rank instead of --ranks")
    _common(p)
    return parser


# -- output --------------------------------------------------------------------


def _round(x):
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return float(f"{float(x):.15g}")
    if isinstance(x, dict):
        return {str(k): _round(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_round(v) for v in x]
    return x


def _cell(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return f"{x:.15g}"
    if x is None:
        return ""
    return str(x)


def config_hash(config: dict) -> str:
    canon = json.dumps(_round(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def render(metadata: dict, rows: list[dict], fmt: str, extra: dict | None = None) -> str:
    metadata, rows = _round(metadata), _round(rows)
    if fmt == "json":
        doc = {"metadata": metadata, "data": rows}
        if extra:
            doc.update(_round(extra))
        return json.dumps(doc, indent=1, sort_keys=False) + "\n"
    buf = io.StringIO()
    for key, val in metadata.items():
        text = json.dumps(val, sort_keys=True) if isinstance(val, (dict, list)) else _cell(val)
        buf.write(f"# {key}: {text}\n")
    if rows:
        cols = list(rows[0])
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([_cell(r[c]) for c in cols])
    return buf.getvalue()


def read_csv(text: str) -> tuple[dict, list[dict]]:
    """Parse CSV output back into ``(metadata, rows)`` with numbers as floats."""
    meta, body = {}, []
    for line in text.splitlines():
        if line.startswith("# "):
            key, _, val = line[2:].partition(": ")
            try:
                meta[key] = json.loads(val)
            except json.JSONDecodeError:
                meta[key] = val
        else:
            body.append(line)
    rows = []
    for r in csv.DictReader(body):
        out = {}
        for k, v in r.items():
            if v in ("true", "false"):
                out[k] = v == "true"
            else:
                try:
                    out[k] = float(v)
                except ValueError:
                    out[k] = v
        rows.append(out)
    return meta, rows


def _emit(args, config: dict, rows: list[dict], default_fmt: str = "csv", info: dict | None = None, extra=None):
    fmt = args.format or default_fmt
    metadata = {
        "version": __version__,
        "command": args.command,
        "seed": config.get("seed"),
        "config_hash": config_hash(config),
        "config": config,
    }
    metadata.update(info or {})
    text = render(metadata, rows, fmt, extra)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _pool_map(fn, items):
    """Map over grid points on a thread pool; results keep input order."""
    items = list(items)
    n = min(_threads(None), max(len(items), 1))
    if n <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(n) as ex:
        return list(ex.map(fn, items))


def _flatten(d: dict, prefix: str = "") -> list[dict]:
    rows = []
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            rows += _flatten(v, key + ".")
        else:
            rows.append({"quantity": key, "value": v})
    return rows


def _k_list(args) -> list[int]:
    if args.k_max < 8:
        raise InvalidInputError("--k-max must be at least 8 for the decay fits")
    return list(range(1, args.k_max + 1))


def _mc_settings(args) -> dict:
    if not args.monte_carlo:
        return {"exact": True}
    if args.seqs is None or args.seed is None:
        raise InvalidInputError("--monte-carlo requires --seqs and --seed")
    if args.seqs < 2:
        raise InvalidInputError("--seqs must be at least 2")
    return {"exact": False, "seqs_per_k": args.seqs}


# -- commands --------------------------------------------------------------------


def cmd_measures(args) -> None:
    bch = resolve_channel(args.channel, args.seed, args.rank)
    rep = measure_report(bch)
    config = {"command": "measures", "channel": args.channel, "seed": args.seed, "rank": args.rank}
    _emit(args, config, _flatten(rep.to_dict()), default_fmt="json")


def cmd_histogram(args) -> None:
    if args.n < 1:
        raise InvalidInputError("--n must be >= 1")
    rng = make_rng(args.seed)
    rows = [{"index": i, "u_c": correlated_unitarity(random_unitary_channel(2, 2, rng))} for i in range(args.n)]
    bound = witness_bound_exact(2, 2)
    config = {"command": "histogram", "n": args.n, "seed": args.seed}
    frac = float(np.mean([r["u_c"] > float(bound) for r in rows]))
    _emit(args, config, rows, info={"reference_bound": float(bound), "reference_bound_exact": str(bound), "fraction_above": frac})


def convergence_rows(p_grid, seed: int, rank: int | None, n: int = 1) -> list[dict]:
    """Per draw and p: exact ``u_c`` and the sorted-decay estimate ``C`` of ``p E_A(x)E_B + (1-p) G``."""
    p_grid = np.asarray(p_grid, dtype=float)
    if np.any(p_grid < 0) or np.any(p_grid > 1):
        raise InvalidInputError("p values must lie in [0, 1]")
    rows = []
    for draw, rng in enumerate(spawn_rngs(seed, n)):
        local = random_channel(2, 2, rank, rng).tensor(random_channel(2, 2, rank, rng))
        glob = random_channel(4, 4, rank, rng)
        for p in p_grid:
            bch = BipartiteChannel(local.mix(glob, float(p)), 2, 2)
            u_c = correlated_unitarity(bch)
            eig = np.linalg.eigvals(twirl_matrix(bch).S)
            c = estimate_C(eig)
            rows.append({"p": float(p), "draw": draw, "u_c": u_c, "C": c.value, "gap": abs(u_c - c.value), "in_regime": c.in_regime})
    rows.sort(key=lambda r: (r["p"], r["draw"]))
    return rows


def cmd_convergence(args) -> None:
    if args.n < 1:
        raise InvalidInputError("--n must be >= 1")
    grid = parse_grid(args.grid)
    rows = convergence_rows(grid, args.seed, args.rank, args.n)
    config = {"command": "convergence", "grid": args.grid, "rank": args.rank, "n": args.n, "seed": args.seed}
    _emit(args, config, rows)


def sweep_reset_rows(bch, resets, k_list, settings: dict, seed=None, keep_samples=False):
    """Reset protocol on subsystem A for each ``(coordinate, ResetModel)``."""
    u_true = sub_unitarity(bch, "A", "A")
    gens = spawn_rngs(0 if seed is None else seed, len(resets))
    mc = {} if settings["exact"] else {"seqs_per_k": settings["seqs_per_k"], "workers": 1, "keep_samples": keep_samples}

    def point(i):
        coord, reset = resets[i]
        kw = dict(mc, rng=gens[i]) if mc else {}
        fit, data = estimate_local_unitarity(NoiseModel(bch, reset=reset), "A", k_list, settings["exact"], True, **kw)
        if not fit.converged:
            raise FitError(f"reset-protocol fit failed at {coord}: {'; '.join(fit.warnings)}")
        est = float(fit.decays[0])
        if keep_samples:
            samples.append({"coordinate": float(coord), "datasets": [d.to_dict(keep_samples=True) for d in data]})
        return {
            "coordinate": float(coord),
            "reset": reset.kind,
            "u_aa_est": est,
            "u_aa_stderr": float(fit.decay_stderr[0]),
            "u_aa_true": u_true,
            "rel_error": abs(est - u_true) / u_true if u_true > 0 else float("nan"),
            "chi2_dof": fit.chi2_dof,
        }

    samples: list = []
    rows = _pool_map(point, range(len(resets)))
    rows.sort(key=lambda r: r["coordinate"])
    samples.sort(key=lambda r: r["coordinate"])
    return (rows, samples) if keep_samples else rows


def cmd_sweep_reset(args) -> None:
    bch = resolve_channel(args.channel, args.seed, args.rank)
    if (bch.d_a, bch.d_b) != (2, 2):
        raise InvalidInputError("sweep-reset needs a two-qubit channel")
    settings = _mc_settings(args)
    grid = np.array([args.reset_p]) if args.reset_p is not None else parse_grid(args.grid)
    if args.bloch is not None:
        direction = parse_vector(args.bloch)
        norm = np.linalg.norm(direction)
        if norm == 0:
            raise InvalidInputError("--bloch direction must be nonzero")
        direction = direction / norm
        if np.any(grid < 0) or np.any(grid > 1):
            raise InvalidInputError("Bloch lengths must lie in [0, 1]")
        resets = [(r, ResetModel.bloch_state(r * direction)) for r in grid]
        info = {"orthogonal_prep_bound": orthogonal_prep_bound(bch, direction)}
    else:
        if np.any(grid < 0) or np.any(grid > 1):
            raise InvalidInputError("reset strengths must lie in [0, 1]")
        resets = [(p, ResetModel.depolarizing(p)) for p in grid]
        info = {}
    k_list = _k_list(args)
    extra = None
    if args.keep_samples:
        rows, samples = sweep_reset_rows(bch, resets, k_list, settings, args.seed, True)
        extra = {"samples": samples}
    else:
        rows = sweep_reset_rows(bch, resets, k_list, settings, args.seed)
    config = {
        "command": "sweep-reset",
        "channel": args.channel,
        "rank": args.rank,
        "grid": args.grid if args.reset_p is None else None,
        "reset_p": args.reset_p,
        "bloch": args.bloch,
        "k_max": args.k_max,
        "mode": "exact" if settings["exact"] else "monte-carlo",
        "seqs": settings.get("seqs_per_k"),
        "seed": args.seed,
    }
    info["u_aa_true"] = sub_unitarity(bch, "A", "A")
    if extra and (args.format or "csv") == "csv":
        raise InvalidInputError("--keep-samples needs --format json")
    _emit(args, config, rows, info=info, extra=extra)


def witness_contour_rows(t_grid, p_grid, q_grid, k_list, settings: dict, seed=None) -> list[dict]:
    """Witness verdicts on ``t SWAP + (1-t) id``; ``p``/``q`` are the reset strengths on the A/B runs."""
    for name, g in (("t", t_grid), ("p", p_grid), ("q", q_grid)):
        if np.any(np.asarray(g) < 0) or np.any(np.asarray(g) > 1):
            raise InvalidInputError(f"{name} values must lie in [0, 1]")
    mc = {} if settings["exact"] else {"seqs_per_k": settings["seqs_per_k"], "workers": 1}
    t_gens = spawn_rngs(0 if seed is None else seed, len(t_grid))

    def column(i):
        t = float(t_grid[i])
        bch = swap_mixture(t)
        point_gens = t_gens[i].spawn(1 + len(p_grid) * len(q_grid))
        spec = decay_spectrum(bch, k_list, settings["exact"], **(dict(mc, rng=point_gens[0]) if mc else {}))
        out = []
        for j, (p, q) in enumerate((p, q) for p in p_grid for q in q_grid):
            kw = dict(mc, rng=point_gens[j + 1]) if mc else {}
            est = witness_pipeline(
                bch, ResetModel.depolarizing(p), ResetModel.depolarizing(q), k_list, settings["exact"], spectrum=spec, **kw
            )
            out.append({"t": t, "p": float(p), "q": float(q), **{k: v for k, v in est.to_dict().items() if k != "lambdas" and k != "multiplicities"}})
        return out

    rows = [r for col in _pool_map(column, range(len(t_grid))) for r in col]
    rows.sort(key=lambda r: (r["t"], r["p"], r["q"]))
    return rows


def cmd_witness_contour(args) -> None:
    settings = _mc_settings(args)
    t_grid = parse_grid(args.t_grid)
    if args.reset_p is not None:
        p_grid = q_grid = np.array([args.reset_p])
    else:
        p_grid, q_grid = parse_grid(args.p_grid), parse_grid(args.q_grid)
    rows = witness_contour_rows(t_grid, p_grid, q_grid, _k_list(args), settings, args.seed)
    config = {
        "command": "witness-contour",
        "t_grid": args.t_grid,
        "p_grid": args.p_grid,
        "q_grid": args.q_grid,
        "reset_p": args.reset_p,
        "k_max": args.k_max,
        "mode": "exact" if settings["exact"] else "monte-carlo",
        "seqs": settings.get("seqs_per_k"),
        "seed": args.seed,
    }
    info = {"axes": "p: depolarizing reset of B while estimating u_A->A; q: reset of A while estimating u_B->B"}
    _emit(args, config, rows, info=info)


def addressability_rows(n: int, ranks, seed: int) -> list[dict]:
    for r in ranks:
        if not 1 <= r <= 16:
            raise InvalidInputError(f"Kraus rank {r} outside 1..16 for two qubits")
    rows = []
    for r, rng in zip(ranks, spawn_rngs(seed, len(ranks))):
        for i in range(n):
            bch = random_bipartite(2, 2, rank=r, rng=rng)
            rows.append({"label": f"rank{r}", "kraus_rank": r, "index": i, "u_c": correlated_unitarity(bch), "a": addressability(bch).a})
    cnot = named_channel("cnot", 2, 2)
    rows.append({"label": "cnot", "kraus_rank": 1, "index": 0, "u_c": correlated_unitarity(cnot), "a": addressability(cnot).a})
    rows.sort(key=lambda r: (r["label"] != "cnot", r["kraus_rank"], r["index"]))
    return rows


def cmd_compare_addressability(args) -> None:
    if args.n < 0:
        raise InvalidInputError("--n must be >= 0")
    if args.rank is not None:
        ranks = [args.rank]
    else:
        try:
            ranks = [int(x) for x in args.ranks.split(",")]
        except ValueError:
            raise InvalidInputError("--ranks must be comma separated integers") from None
    rows = addressability_rows(args.n, ranks, args.seed)
    config = {"command": "compare-addressability", "n": args.n, "ranks": ranks, "seed": args.seed}
    _emit(args, config, rows)


COMMANDS = {
    "measures": cmd_measures,
    "histogram": cmd_histogram,
    "convergence": cmd_convergence,
    "sweep-reset": cmd_sweep_reset,
    "witness-contour": cmd_witness_contour,
    "compare-addressability": cmd_compare_addressability,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_INVALID
    try:
        COMMANDS[args.command](args)
    except FitError as err:
        print(f"fit error: {err}", file=sys.stderr)
        return EXIT_FIT
    except (SubunitError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
