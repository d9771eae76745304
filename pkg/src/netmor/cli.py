"""Command line front end: ``netmor simulate|reduce|compare|bench``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 reduction finished without converging (artifacts are still written).
"""

import argparse
import dataclasses
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, _kernels
from .config import (build_model, frequency_grid, input_schedule, parse_config, stepper_config,
                     tirka_config)
from .dae import linearize, sigma_max_sweep
from .errors import ConfigError, NetmorError
from .integrator import simulate
from .io import load_reduced, save_reduced, write_csv
from .mor import reduce, verify_interpolation

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_UNCONVERGED = 0, 2, 3, 4
#: relative sigma-max gap above which a reduction is reported as coarse
COARSE_GAP = 1e-3
#: interpolation residual above which a shift is flagged
RESIDUAL_FLAG = 1e-6
#: timing sweeps over the bench grid; the fastest run per cell is reported
BENCH_REPEATS = 5


@dataclass
class RunManifest:
    """What a command produced: artifacts, phase timings and summary values."""

    command: str
    config_path: str
    config_hash: str
    artifacts: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    version: str = __version__
    exit_code: int = EXIT_OK

    def write(self, out_dir):
        path = Path(out_dir) / "manifest.txt"
        lines = [f"tool = netmor {self.version}", f"command = {self.command}",
                 f"config = {self.config_path}", f"config_sha256 = {self.config_hash}",
                 f"backend = {_kernels.backend()}", f"exit_code = {self.exit_code}"]
        lines += [f"artifact = {a}" for a in self.artifacts + ["manifest.txt"]]
        lines += [f"time.{k} = {v:.6f}" for k, v in self.timings.items()]
        lines += [f"{k} = {v}" for k, v in self.summary.items()]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path


def _manifest(command, cfg, cfg_path):
    return RunManifest(command=command, config_path=str(cfg_path), config_hash=cfg.digest)


# ---------------------------------------------------------------- simulate

def _balance_labels(cfg, dae):
    rows = dae.meta.get("balance_rows", ())
    if cfg.domain == "gas":
        names = [n for n, nd in cfg.table("node").items() if nd["kind"] == "junction"]
        labels = [f"junction_balance[{n}]" for n in names]
    elif cfg.domain == "water":
        labels = [f"node_balance[{n}]" for n, nd in cfg.table("node").items() if nd["kind"] == "demand"]
    else:
        labels = [f"bus_constraint[{n}]" for n in cfg.table("bus")]
    return list(rows), labels[:len(rows)]


def trajectory_table(cfg, dae, res):
    """Header and rows for ``trajectory.csv``.

    Columns: time, every model output, one balance residual per junction
    (or demand node / bus), and the largest residual over all algebraic
    rows.
    """
    rows, labels = _balance_labels(cfg, dae)
    alg = np.flatnonzero(~dae.diff_mask)
    X, U = res.states, res.inputs
    R = X @ dae.A[alg].T + U @ dae.B[alg].T if alg.size else np.zeros((X.shape[0], 0))
    if alg.size and cfg.domain == "power":
        R = R + np.array([dae.G(x, u)[alg] for x, u in zip(X, U)])
    pos = {int(r): k for k, r in enumerate(alg)}
    bal = R[:, [pos[int(r)] for r in rows]] if rows else np.zeros((X.shape[0], 0))
    worst = np.max(np.abs(R), axis=1) if alg.size else np.zeros(X.shape[0])
    header = ["t", *dae.output_names, *labels, "algebraic_residual"]
    body = np.column_stack([res.t, res.outputs, bal, worst])
    return header, body


def cmd_simulate(cfg, out_dir, cfg_path="<memory>"):
    out_dir = Path(out_dir)
    man = _manifest("simulate", cfg, cfg_path)
    t0 = time.perf_counter()
    dae = build_model(cfg)
    man.timings["assemble"] = time.perf_counter() - t0
    res = simulate(dae, u=input_schedule(cfg, dae), cfg=stepper_config(cfg))
    man.timings.update(res.timings)
    header, body = trajectory_table(cfg, dae, res)
    write_csv(out_dir / "trajectory.csv", header, body)
    man.artifacts.append("trajectory.csv")
    man.summary.update(states=dae.n, steps=res.steps, settled=res.settled,
                       settle_step=res.settle_step, backend_used=res.backend)
    return man


# ------------------------------------------------------------------ reduce

def _relative_gap(full, red):
    full, red = np.asarray(full), np.asarray(red)
    return np.abs(full - red) / np.maximum(np.abs(full), np.finfo(float).tiny)


def _reduce_model(cfg, dae, man):
    t0 = time.perf_counter()
    red = reduce(dae, tirka_config(cfg))
    man.timings["reduce"] = time.perf_counter() - t0
    return red


def cmd_reduce(cfg, out_dir, cfg_path="<memory>"):
    out_dir = Path(out_dir)
    man = _manifest("reduce", cfg, cfg_path)
    dae = build_model(cfg)
    red = _reduce_model(cfg, dae, man)

    save_reduced(out_dir / "reduced_model.csv", red)
    write_csv(out_dir / "history.csv", ["iteration", "shift_change"],
              [(k + 1, v) for k, v in enumerate(red.history)])
    report = verify_interpolation(linearize(dae), red)
    worst = max((max(e["right"], e["left"], e["bitangential"]) for e in report), default=0.0)
    write_csv(out_dir / "interpolation.csv",
              ["shift_re", "shift_im", "right", "left", "bitangential", "flag"],
              [(e["shift"].real, e["shift"].imag, e["right"], e["left"], e["bitangential"],
                "large" if max(e["right"], e["left"], e["bitangential"]) > RESIDUAL_FLAG else "ok")
               for e in report])

    omegas = frequency_grid(cfg)
    t0 = time.perf_counter()
    full = [s for _, s in sigma_max_sweep(linearize(dae), omegas)]
    approx = [s for _, s in sigma_max_sweep(red.linear, omegas)]
    man.timings["sweep"] = time.perf_counter() - t0
    write_csv(out_dir / "bode.csv", ["omega", "sigma_max_full", "sigma_max_reduced"],
              zip(omegas, full, approx))
    man.artifacts += ["reduced_model.csv", "history.csv", "interpolation.csv", "bode.csv"]

    gap = float(np.max(_relative_gap(full, approx)))
    man.summary.update(
        full_order=dae.n, reduced_order=red.r, iterations=len(red.history), converged=red.converged,
        max_interpolation_residual=fmt_num(worst), max_relative_gap=fmt_num(gap),
        fidelity="coarse" if gap > COARSE_GAP or worst > RESIDUAL_FLAG else "ok",
    )
    if not red.converged:
        man.exit_code = EXIT_UNCONVERGED
    return man


def fmt_num(v):
    return repr(float(v))


# ----------------------------------------------------------------- compare

def output_errors(Y_full, Y_red):
    """Largest and mean output error, each channel scaled by its peak magnitude."""
    scale = np.max(np.abs(Y_full), axis=0)
    scale[scale == 0] = 1.0
    err = np.abs(Y_full - Y_red) / scale
    return float(err.max()), float(err.mean())


def cmd_compare(cfg, out_dir, cfg_path="<memory>", reduced_path=None):
    out_dir = Path(out_dir)
    man = _manifest("compare", cfg, cfg_path)
    dae = build_model(cfg)
    if reduced_path is not None:
        red = load_reduced(reduced_path, base=dae.G)
        man.summary["reduced_source"] = str(reduced_path)
    else:
        red = _reduce_model(cfg, dae, man)
        save_reduced(out_dir / "reduced_model.csv", red)
        man.artifacts.append("reduced_model.csv")
    if red.V.shape[0] != dae.n or red.B_hat.shape[1] != dae.m:
        raise ConfigError("reduced model does not match the configured network")
    rdae = red.to_dae(dae.input_names, dae.output_names)
    u = input_schedule(cfg, dae)
    scfg = stepper_config(cfg)

    full = simulate(dae, u=u, cfg=scfg)
    # identical step count for both runs keeps trajectories paired
    paired = dataclasses.replace(scfg, max_iter=full.steps, stop_on_settle=False)
    approx = simulate(rdae, u=u, cfg=paired)
    n = min(full.outputs.shape[0], approx.outputs.shape[0])
    Yf, Yr = full.outputs[:n], approx.outputs[:n]
    err_max, err_mean = output_errors(Yf, Yr)
    header = ["t", *[f"full:{nm}" for nm in dae.output_names], *[f"reduced:{nm}" for nm in dae.output_names]]
    write_csv(out_dir / "comparison.csv", header, np.column_stack([full.t[:n], Yf, Yr]))
    man.artifacts.append("comparison.csv")
    man.timings.update({"full_stepping": full.timings["stepping"],
                        "reduced_stepping": approx.timings["stepping"]})
    speedup = full.timings["stepping"] / max(approx.timings["stepping"], 1e-12)
    man.summary.update(full_order=dae.n, reduced_order=red.r, steps=full.steps,
                       max_relative_error=fmt_num(err_max), mean_relative_error=fmt_num(err_mean),
                       speedup=f"{speedup:.3f}", converged=red.converged)
    if not red.converged:
        man.exit_code = EXIT_UNCONVERGED
    return man


# ------------------------------------------------------------------- bench

def parse_steps(text):
    try:
        steps = [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"--steps: cannot parse {text!r}") from None
    check_steps(steps)
    return steps


def check_steps(steps):
    if not steps:
        raise ConfigError("--steps: need at least one step size")
    if any(not (np.isfinite(s) and s > 0) for s in steps):
        raise ConfigError("--steps: step sizes must be positive")
    if any(b >= a for a, b in zip(steps, steps[1:])):
        raise ConfigError("--steps: step sizes must be strictly descending")


def cmd_bench(cfg, step_list, out_dir, cfg_path="<memory>"):
    """Time a fixed horizon at each step size for both gas schemes.

    The horizon is ``solver.tau * solver.max_iter`` seconds; settling does
    not stop the run, so the step count scales as ``1 / tau``.
    """
    out_dir = Path(out_dir)
    check_steps(step_list)
    if cfg.domain != "gas":
        raise ConfigError("bench compares the fvm and fdm schemes and needs a gas network")
    man = _manifest("bench", cfg, cfg_path)
    horizon = cfg.solver["tau"] * cfg.solver["max_iter"]
    models = {s: build_model(dataclasses.replace(cfg, scheme=s)) for s in ("fvm", "fdm")}
    cells = []
    for tau in step_list:
        nsteps = max(1, int(round(horizon / tau)))
        scfg = dataclasses.replace(stepper_config(cfg), tau=tau, max_iter=nsteps, stop_on_settle=False,
                                   record_every=nsteps)
        cells.append((tau, nsteps, scfg))
    best = {(tau, s): np.inf for tau, _, _ in cells for s in models}
    # repeats sweep the whole grid round-robin, so slow drift in machine
    # load shifts every cell alike instead of skewing adjacent ratios
    for _ in range(BENCH_REPEATS):
        for tau, _, scfg in cells:
            for s, d in models.items():
                res = simulate(d, u=input_schedule(cfg, d), cfg=scfg)
                best[tau, s] = min(best[tau, s], res.timings["stepping"])
    rows = [(tau, nsteps, best[tau, "fvm"], best[tau, "fdm"]) for tau, nsteps, _ in cells]
    write_csv(out_dir / "bench.csv", ["tau", "steps", "wall_time_fvm", "wall_time_fdm"], rows)
    man.artifacts.append("bench.csv")
    man.summary.update(horizon=fmt_num(horizon), repeats=BENCH_REPEATS)
    return man


# -------------------------------------------------------------------- main

def _parser():
    p = argparse.ArgumentParser(prog="netmor", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"netmor {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, helptext in (("simulate", "run the semi-implicit integrator"),
                           ("reduce", "reduce the linearized model and sweep both"),
                           ("compare", "simulate full and reduced models side by side"),
                           ("bench", "time fvm and fdm runs over several step sizes")):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("--config", required=True, type=Path)
        sp.add_argument("--out", required=True, type=Path)
        if name == "bench":
            sp.add_argument("--steps", default="1.0,0.5,0.25,0.1",
                            help="comma-separated descending step sizes")
        if name == "compare":
            sp.add_argument("--reduced", type=Path, default=None,
                            help="reuse a saved reduced_model.csv instead of reducing")
    return p


def run(argv=None):
    """Execute a command and return ``(exit_code, manifest or None)``."""
    args = _parser().parse_args(argv)
    try:
        cfg = parse_config(args.config)
        args.out.mkdir(parents=True, exist_ok=True)
        if args.command == "simulate":
            man = cmd_simulate(cfg, args.out, args.config)
        elif args.command == "reduce":
            man = cmd_reduce(cfg, args.out, args.config)
        elif args.command == "compare":
            man = cmd_compare(cfg, args.out, args.config, reduced_path=args.reduced)
        else:
            man = cmd_bench(cfg, parse_steps(args.steps), args.out, args.config)
    except ConfigError as exc:
        print(f"netmor: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG, None
    except (NetmorError, np.linalg.LinAlgError) as exc:
        print(f"netmor: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC, None
    man.write(args.out)
    if man.exit_code == EXIT_UNCONVERGED:
        print("netmor: warning: reduction did not converge; artifacts written", file=sys.stderr)
    for k, v in man.summary.items():
        print(f"{k} = {v}")
    return man.exit_code, man


def main(argv=None):
    code, _ = run(argv)
    return code


if __name__ == "__main__":
    sys.exit(main())
