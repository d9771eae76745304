"""Compare the compiled and numpy step loops on the shipped gas presets.

Usage::

    python benchmarks/bench_kernels.py [--steps 4000] [--repeats 5]

Prints one line per (model, backend) with the fastest step-loop time and
the largest relative state difference between the two backends.
"""

import argparse
import dataclasses
from importlib import resources

import numpy as np

from netmor.config import build_model, parse_config, stepper_config, tirka_config
from netmor.integrator import simulate
from netmor.mor import reduce


def _preset(name):
    return parse_config(resources.files("netmor") / "presets" / name)


def _best(dae, scfg, use_numba, repeats):
    runs = [simulate(dae, cfg=scfg, use_numba=use_numba) for _ in range(repeats)]
    return min(r.timings["stepping"] for r in runs), runs[-1].final_state


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=4000)
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args(argv)

    models = []
    for name in ("table1_gas.cfg", "fork_gas.cfg"):
        cfg = _preset(name)
        dae = build_model(cfg)
        models.append((name.removesuffix(".cfg"), dae, cfg))
        models.append((name.removesuffix(".cfg") + "/reduced", reduce(dae, tirka_config(cfg)).to_dae(), cfg))

    print(f"{'model':<22}{'states':>7}{'numba [s]':>12}{'numpy [s]':>12}{'ratio':>8}{'rel diff':>11}")
    for label, dae, cfg in models:
        scfg = dataclasses.replace(stepper_config(cfg), max_iter=args.steps, stop_on_settle=False,
                                   record_every=args.steps)
        t_nb, x_nb = _best(dae, scfg, True, args.repeats)
        t_np, x_np = _best(dae, scfg, False, args.repeats)
        diff = float(np.max(np.abs(x_nb - x_np)) / max(np.max(np.abs(x_np)), 1.0))
        print(f"{label:<22}{dae.n:>7}{t_nb:>12.5f}{t_np:>12.5f}{t_np / t_nb:>8.1f}{diff:>11.2e}")


if __name__ == "__main__":
    main()
