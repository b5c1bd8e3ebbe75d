"""Command-line driver.

    zakai simulate|estimate|grid|table [--config FILE] [--obs FILE] [--out FILE]
                                       [--workers N] [--seed U64]

Exit codes: 0 success, 1 validation error, 2 runtime or numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import io
import os
import sys
import tempfile
import time

import numpy as np

from .config import ConfigError, RunConfig, load_config, resolve_point
from .errors import DimensionError, InvalidParameterError, SimulationError
from .estimator import estimate_grid, write_estimates_csv, write_estimates_json
from .rng import StreamFamily, derive_seed
from .simulate import format_metadata, read_path_csv, simulate_signal_observation, write_path_csv

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


def _write_atomic(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".zakai-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _metadata(cfg: RunConfig, **run) -> dict:
    meta = cfg.to_sections()
    # the destination is not part of the result; keeps outputs byte-identical across paths
    meta["output"].pop("path", None)
    if run:
        meta["run"] = {k: v for k, v in run.items()}
    return meta


def _load_obs(args, cfg: RunConfig, model):
    if not args.obs:
        raise UsageError("--obs is required for this command")
    with open(args.obs, encoding="utf-8") as fh:
        obs, _ = read_path_csv(fh)
    if obs.d != model.d or obs.k != model.k:
        raise DimensionError(
            f"observation file has d={obs.d}, k={obs.k} but the configured model has d={model.d}, k={model.k}"
        )
    return obs


def _render_estimates(cfg: RunConfig, estimates, meta) -> str:
    buf = io.StringIO()
    if cfg.output.format == "json":
        write_estimates_json(estimates, buf, meta)
    else:
        write_estimates_csv(estimates, buf, meta)
    return buf.getvalue()


def cmd_simulate(cfg: RunConfig, args) -> int:
    model, alpha = cfg.model.build()
    seed = cfg.estimator.seed
    obs = simulate_signal_observation(model, cfg.grid, alpha, StreamFamily(seed))
    buf = io.StringIO()
    write_path_csv(obs, buf, _metadata(cfg, command="simulate"))
    _write_atomic(cfg.output.path, buf.getvalue())
    out = sys.stderr if cfg.output.path in (None, "-") else sys.stdout
    print("Y_N = " + " ".join(repr(float(v)) for v in obs.Y_N), file=out)
    if cfg.model.name == "example" and cfg.model.params.gamma != 0:
        naive = resolve_point("2Z_N", obs, cfg.model, cfg.grid.T)
        print("2Z_N = Z_N/(gamma T) = " + " ".join(repr(float(v)) for v in naive), file=out)
    return EXIT_OK


def _check_grid(cfg: RunConfig, obs) -> None:
    if obs.grid.N != cfg.grid.N or not np.isclose(obs.grid.T, cfg.grid.T, rtol=1e-12, atol=0):
        raise DimensionError(
            f"observation file has T={obs.grid.T}, N={obs.grid.N} but the config has "
            f"T={cfg.grid.T}, N={cfg.grid.N}"
        )


def cmd_estimate(cfg: RunConfig, args) -> int:
    model, _ = cfg.model.build()
    obs = _load_obs(args, cfg, model)
    _check_grid(cfg, obs)
    points = np.array([resolve_point(v, obs, cfg.model, obs.grid.T) for v in cfg.points.values])
    if points.shape[1] != model.d:
        raise DimensionError(f"points have {points.shape[1]} coordinates, model has d={model.d}")
    t0 = time.perf_counter()
    estimates = estimate_grid(model, obs, points, cfg.estimator, workers=args.workers)
    elapsed = time.perf_counter() - t0
    run = {"command": "estimate", "observation_file": os.path.basename(args.obs)}
    if cfg.output.format == "json":
        # wall-clock time is only recorded in JSON so CSV output stays byte-reproducible
        run["wall_clock_seconds"] = repr(elapsed)
    _write_atomic(cfg.output.path, _render_estimates(cfg, estimates, _metadata(cfg, **run)))
    return EXIT_OK


def grid_points(cfg: RunConfig, obs) -> tuple[np.ndarray, np.ndarray]:
    """Regular grid around the configured centre; returns ``(points, frozen_base)``.

    Free axes are swept over ``center +/- half_width``; the remaining
    coordinates stay at the centre. Points are ordered row-major; a
    resolution of one gives the centre itself.
    """
    spec = cfg.points
    center = resolve_point(spec.center, obs, cfg.model, obs.grid.T)
    d = center.size
    axes = [a - 1 for a in spec.axes]
    if any(not 0 <= a < d for a in axes):
        raise InvalidParameterError(f"grid axes {spec.axes} out of range for d={d}")
    if spec.resolution == 1:
        ticks = [center[a : a + 1] for a in axes]
    else:
        ticks = [np.linspace(center[a] - spec.half_width, center[a] + spec.half_width, spec.resolution) for a in axes]
    mesh = np.meshgrid(*ticks, indexing="ij")
    pts = np.tile(center, (mesh[0].size, 1))
    for a, m in zip(axes, mesh):
        pts[:, a] = m.ravel()
    return pts, center


def cmd_grid(cfg: RunConfig, args) -> int:
    model, _ = cfg.model.build()
    obs = _load_obs(args, cfg, model)
    _check_grid(cfg, obs)
    pts, center = grid_points(cfg, obs)
    t0 = time.perf_counter()
    estimates = estimate_grid(model, obs, pts, cfg.estimator, workers=args.workers)
    elapsed = time.perf_counter() - t0
    frozen = [i + 1 for i in range(center.size) if i + 1 not in cfg.points.axes]
    run = {
        "command": "grid",
        "observation_file": os.path.basename(args.obs),
        "frozen_coordinates": ", ".join(str(i) for i in frozen) or "none",
        "frozen_values": ", ".join(repr(float(center[i - 1])) for i in frozen) or "none",
    }
    if cfg.output.format == "json":
        run["wall_clock_seconds"] = repr(elapsed)
    _write_atomic(cfg.output.path, _render_estimates(cfg, estimates, _metadata(cfg, **run)))
    return EXIT_OK


TABLE_HEADER = [
    "d", "realization", "seed",
    "X_Y_N", "ci_lo_Y_N", "ci_hi_Y_N",
    "X_2Z_N", "ci_lo_2Z_N", "ci_hi_2Z_N",
    "avg_runtime_s",
]


def run_table(cfg: RunConfig, workers: int = 1, log=None) -> list[dict]:
    """Simulate several realizations per dimension and estimate at ``Y_N`` and ``2Z_N``.

    Realization ``r`` of dimension ``d`` uses seed ``derive_seed(seed, d, r)``
    for both the path and the Monte Carlo streams. The runtime column is the
    mean wall-clock time of all estimate calls for that dimension.
    """
    if cfg.model.name != "example":
        raise InvalidParameterError("the table workflow uses the built-in model")
    rows = []
    for d in cfg.table.dims:
        spec = dataclasses.replace(cfg.model, params=dataclasses.replace(cfg.model.params, d=d))
        model, alpha = spec.build()
        block, times = [], []
        for r in range(cfg.table.realizations):
            seed = derive_seed(cfg.estimator.seed, d, r)
            obs = simulate_signal_observation(model, cfg.grid, alpha, StreamFamily(seed))
            est_cfg = dataclasses.replace(cfg.estimator, seed=seed)
            row = {"d": d, "realization": r, "seed": seed}
            for label, token in (("Y_N", "Y_N"), ("2Z_N", "2Z_N")):
                x = resolve_point(token, obs, spec, cfg.grid.T)
                t0 = time.perf_counter()
                (e,) = estimate_grid(model, obs, x[None], est_cfg, workers=workers)
                times.append(time.perf_counter() - t0)
                row[f"X_{label}"] = e.value
                row[f"ci_lo_{label}"] = e.ci_lo
                row[f"ci_hi_{label}"] = e.ci_hi
            block.append(row)
            if log is not None:
                print(
                    f"d={d:>3} r={r}  X(Y_N)={row['X_Y_N']:.7f} [{row['ci_lo_Y_N']:.7f}, {row['ci_hi_Y_N']:.7f}]"
                    f"  X(2Z_N)={row['X_2Z_N']:.7f} [{row['ci_lo_2Z_N']:.7f}, {row['ci_hi_2Z_N']:.7f}]",
                    file=log,
                )
        avg = float(np.mean(times))
        for row in block:
            row["avg_runtime_s"] = avg
        rows.extend(block)
    return rows


def cmd_table(cfg: RunConfig, args) -> int:
    rows = run_table(cfg, workers=args.workers, log=sys.stderr)
    buf = io.StringIO()
    buf.write(format_metadata(_metadata(cfg, command="table")))
    buf.write(",".join(TABLE_HEADER) + "\n")
    for row in rows:
        buf.write(",".join(str(row[k]) if isinstance(row[k], int) else repr(float(row[k])) for k in TABLE_HEADER) + "\n")
    _write_atomic(cfg.output.path, buf.getvalue())
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "grid": cmd_grid,
    "table": cmd_table,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="zakai", description="Monte Carlo solver for Zakai filtering equations")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="INI configuration file (defaults: benchmark parameters)")
    parser.add_argument("--obs", help="observation path CSV written by 'zakai simulate'")
    parser.add_argument("--out", help="output file ('-' for stdout); overrides [output] path")
    parser.add_argument("--workers", type=int, default=1, help="worker threads (results do not depend on it)")
    parser.add_argument("--seed", type=int, help="overrides [estimator] seed")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise InvalidParameterError("--seed must be an unsigned 64-bit integer")
            cfg = dataclasses.replace(cfg, estimator=dataclasses.replace(cfg.estimator, seed=args.seed))
        if args.out is not None:
            cfg = dataclasses.replace(cfg, output=dataclasses.replace(cfg.output, path=args.out))
        if args.workers < 1:
            raise InvalidParameterError("--workers must be >= 1")
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, InvalidParameterError, DimensionError, UsageError, FileNotFoundError) as exc:
        print(f"zakai {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (SimulationError, OSError, ArithmeticError, RuntimeError) as exc:
        print(f"zakai {args.command}: failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
