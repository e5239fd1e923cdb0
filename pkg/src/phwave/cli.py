"""Command-line experiment runner.

Usage::

    phwave <subcommand> --config <path> [--out <dir>] [--deterministic]

Exit codes: 0 success, 1 configuration error, 2 numerical failure,
3 invariant violation.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np
import scipy.sparse.linalg as spla

from .config import Config, as_complex, load_config
from .equilibrium import solve_equilibrium
from .errors import ConfigError, InvariantViolation, NumericalError, PhwaveError
from .evolve import decay_profile, resolvent_norm_dense, simulate
from .fem import export_matrix_market
from .helmholtz import Resolvent, assemble_pencil, nondegeneracy_sweep, resolvent_defect, verify_garding
from .mesh import generate_rect_mesh, sample_coefficients, tag_boundary
from .output import write_csv, write_summary
from .spectral import (a0_kernel_field, certify_left_half_plane, compute_spectrum, conjugation_gap,
                       spectral_abscissa)
from .state import GeneratorMatrix, PHState, to_wv, stack

log = logging.getLogger("phwave")

RESIDUAL_LIMIT = 1e-8
ENERGY_SLACK = 1e-12
BALANCE_LIMIT = 1e-10


def _random_state(rng, n) -> PHState:
    return PHState(p=rng.standard_normal(n) + 1j * rng.standard_normal(n),
                   phi=rng.standard_normal(n) + 1j * rng.standard_normal(n))


def run_equilibrium(cfg: Config, out: Path, deterministic: bool) -> dict:
    disc = cfg.disc
    sol = solve_equilibrium(disc.space, disc.matrices, cfg["h"])
    v = disc.mesh.vertices
    write_csv(out / "equilibrium.csv", ["vertex_id", "x", "y", "we"],
              ((i, v[i, 0], v[i, 1], sol.we[i]) for i in range(disc.mesh.n_vertices)))
    if sol.residual > RESIDUAL_LIMIT:
        raise InvariantViolation(f"equilibrium residual {sol.residual:.3e} exceeds {RESIDUAL_LIMIT}")
    return {"residual": sol.residual, "we_min": sol.we.min(), "we_max": sol.we.max()}


def run_simulate(cfg: Config, out: Path, deterministic: bool) -> dict:
    t = cfg["time"]
    trace = simulate(cfg.disc, cfg["initial"]["w0"], cfg["initial"]["w1"], t["dt"], t["t_end"], cfg["h"])
    write_csv(out / "energy.csv", ["t", "H", "boundary_dissipation"],
              zip(trace.t, trace.H, trace.dissipation))
    write_csv(out / "observation.csv", ["t", "vertex_id", "y"],
              ((trace.t[k], vid, trace.observation[k, j])
               for k in range(len(trace.t)) for j, vid in enumerate(trace.observation_vertices)))
    H0 = trace.H[0]
    increase = float(np.max(np.diff(trace.H))) if len(trace.H) > 1 else 0.0
    balance = float(np.max(np.abs(trace.balance_defect)))
    summary = {"H0": H0, "H_end": trace.H[-1], "steps": len(trace.t) - 1,
               "max_energy_increase": increase, "max_balance_defect": balance,
               "certified": bool(t["certify"])}
    if t["certify"]:
        if increase > ENERGY_SLACK:
            raise InvariantViolation(f"energy increased by {increase:.3e} in one step")
        if balance > BALANCE_LIMIT * max(H0, np.finfo(float).tiny):
            raise InvariantViolation(f"power balance defect {balance:.3e} exceeds {BALANCE_LIMIT} H(0)")
    return summary


def run_spectrum(cfg: Config, out: Path, deterministic: bool) -> dict:
    s = cfg["spectral"]
    rep = compute_spectrum(cfg.disc.matrices, s["mode"], as_complex(s["shift"]), s["count"])
    write_csv(out / "spectrum.csv", ["re", "im", "residual", "trace_energy", "dissipation_defect"],
              zip(rep.eigenvalues.real, rep.eigenvalues.imag, rep.residuals, rep.trace_energy,
                  rep.dissipation_defect))
    summary = {"mode": rep.mode, "count": len(rep), "abscissa": spectral_abscissa(rep),
               "left_half_plane": certify_left_half_plane(rep),
               "max_residual": rep.residuals.max(), "max_dissipation_defect": rep.dissipation_defect.max(),
               "conjugation_gap": conjugation_gap(rep),
               "min_abs_eigenvalue": np.abs(rep.eigenvalues).min()}
    if summary["max_residual"] > RESIDUAL_LIMIT:
        raise InvariantViolation(f"eigenpair residual {summary['max_residual']:.3e} exceeds {RESIDUAL_LIMIT}")
    if s["certify"] and not summary["left_half_plane"]:
        raise InvariantViolation(f"spectral abscissa {summary['abscissa']:.6e} is not negative")
    return summary


def run_resolvent_check(cfg: Config, out: Path, deterministic: bool) -> dict:
    r = cfg["resolvent"]
    lam, mu = as_complex(r["lambda"]), as_complex(r["mu"])
    for name, val in (("lambda", lam), ("mu", mu)):
        if val == 0:
            raise ConfigError("must be nonzero", pointer=f"/resolvent/{name}")
    m = cfg.disc.matrices
    gen = GeneratorMatrix(m)
    R_lam, R_mu = Resolvent(m, lam), Resolvent(m, mu)
    rng = np.random.default_rng(cfg.seed)
    rows = []
    for j in range(r["samples"]):
        y = _random_state(rng, m.n)
        x = R_lam.apply(y)
        defect = resolvent_defect(m, lam, y, x, gen)
        xm = R_mu.apply(y)
        lhs = stack(*to_wv(m, x)) - stack(*to_wv(m, xm)) - (lam - mu) * stack(*to_wv(m, R_lam.apply(xm)))
        ident = gen.norm(lhs) / gen.norm(stack(*to_wv(m, y)))
        rows.append((j, defect, ident))
    write_csv(out / "resolvent.csv", ["sample", "defect", "identity_defect"], rows)
    summary = {"lambda": lam, "mu": mu, "samples": len(rows),
               "max_defect": max(row[1] for row in rows),
               "max_identity_defect": max(row[2] for row in rows)}
    if max(summary["max_defect"], summary["max_identity_defect"]) > RESIDUAL_LIMIT:
        raise InvariantViolation("resolvent defect exceeds 1e-8")
    return summary


def run_sweep(cfg: Config, out: Path, deterministic: bool) -> dict:
    m = cfg.disc.matrices
    etas = cfg["sweep"]["eta"]
    result = nondegeneracy_sweep(m, etas, deterministic=deterministic)
    write_csv(out / "sweep.csv", ["eta", "sigma_min"], result)
    sig = np.array([s for _, s in result])
    scale = max(spla.norm(assemble_pencil(m, 1j * max(abs(e) for e in etas)), 1), 1.0)
    summary = {"min_sigma": sig.min(), "eta_at_min": result[int(np.argmin(sig))][0],
               "singular_threshold": 1e-12 * scale}
    if sig.min() <= summary["singular_threshold"]:
        raise InvariantViolation(f"S(i eta) numerically singular at eta = {summary['eta_at_min']}")
    return summary


def run_decay(cfg: Config, out: Path, deterministic: bool) -> dict:
    t = cfg["time"]
    dt = t["dt"]
    grid = dt * np.rint(np.linspace(0.0, t["t_end"], t["decay_points"]) / dt)
    prof = decay_profile(cfg.disc.matrices, grid, dt)
    write_csv(out / "decay.csv", ["t", "sigma"], zip(prof.t, prof.sigma))
    oracle = resolvent_norm_dense(cfg.disc.matrices)
    rise = float(np.max(np.diff(prof.sigma))) if len(prof.sigma) > 1 else 0.0
    summary = {"sigma0": prof.sigma[0], "sigma_end": prof.sigma[-1],
               "ratio": prof.sigma[-1] / prof.sigma[0], "resolvent_norm": oracle,
               "sigma0_defect": abs(prof.sigma[0] - oracle) / oracle, "max_increase": rise}
    if t["certify"] and rise > ENERGY_SLACK:
        raise InvariantViolation(f"decay profile increased by {rise:.3e}")
    return summary


def run_a0_kernel(cfg: Config, out: Path, deterministic: bool) -> dict:
    a = cfg["a0"]
    spec = cfg["mesh"]
    if "file" in spec and a["levels"] > 1:
        raise ConfigError("refinement levels need a generated mesh", pointer="/a0/levels")
    rows = []
    for level in range(a["levels"]):
        if "file" in spec:
            mesh, partition = cfg.disc.mesh, cfg.disc.partition
        else:
            f = 2 ** level
            mesh = generate_rect_mesh(spec["nx"] * f, spec["ny"] * f, spec["lx"], spec["ly"])
            partition = tag_boundary(mesh, cfg["boundary"]["gamma0"])
        tables = sample_coefficients(mesh, partition, cfg.disc.coeffs, rule=a["rule"])
        wit = a0_kernel_field(mesh, a["center"], a["radius"], tables)
        rows.append((level, wit.mesh_size, wit.f_norm, wit.residual, wit.projection_rel))
    write_csv(out / "a0_kernel.csv", ["level", "h", "f_norm", "residual", "projection_rel"], rows)
    summary = {"f_norm": rows[0][2], "residual": [r[3] for r in rows],
               "projection_rel": [r[4] for r in rows]}
    if len(rows) > 1:
        summary["reduction"] = [rows[i][3] / rows[i + 1][3] for i in range(len(rows) - 1)]
    if rows[0][2] <= 0:
        raise InvariantViolation("bump field vanishes on this mesh")
    return summary


def run_garding(cfg: Config, out: Path, deterministic: bool) -> dict:
    g = cfg["garding"]
    res = [verify_garding(cfg.disc.matrices, eta, g["samples"], cfg.seed) for eta in g["eta"]]
    write_csv(out / "garding.csv", ["eta", "C1", "C2", "min_shifted_eig", "identity_defect"],
              ((r.eta, r.C1, r.C2, r.min_shifted_eig, r.identity_defect) for r in res))
    return {"C1": [r.C1 for r in res], "C2": [r.C2 for r in res],
            "max_identity_defect": max(r.identity_defect for r in res)}


SUBCOMMANDS = {
    "equilibrium": run_equilibrium,
    "simulate": run_simulate,
    "spectrum": run_spectrum,
    "resolvent-check": run_resolvent_check,
    "sweep": run_sweep,
    "decay": run_decay,
    "a0-kernel": run_a0_kernel,
    "garding": run_garding,
}


def run_subcommand(name: str, config, out=None, deterministic: bool = False) -> int:
    """Run one pipeline and write its CSVs and ``summary.json``; returns the exit code.

    ``config`` is a path or an already loaded :class:`Config`.
    """
    if name not in SUBCOMMANDS:
        raise ValueError(f"unknown subcommand {name!r}")
    summary = {"subcommand": name}
    out_dir = Path(out) if out is not None else None
    try:
        cfg = config if isinstance(config, Config) else load_config(config)
        if out_dir is None:
            out_dir = Path(cfg.raw.get("output", "phwave-out"))
            if not out_dir.is_absolute():
                out_dir = cfg.source.parent / out_dir
        out_dir.mkdir(parents=True, exist_ok=True)
        summary["warnings"] = list(cfg.warnings)
        for w in cfg.warnings:
            log.warning(w)
        summary["n_free"] = cfg.disc.space.n_free
        if cfg["export_matrices"]:
            export_matrix_market(cfg.disc.matrices, out_dir)
        summary.update(SUBCOMMANDS[name](cfg, out_dir, deterministic))
        code = 0
    except PhwaveError as exc:
        code = exc.exit_code
        summary["error"] = str(exc)
        log.error("%s", exc)
    except np.linalg.LinAlgError as exc:
        code = NumericalError.exit_code
        summary["error"] = f"linear algebra failure: {exc}"
        log.error("%s", summary["error"])
    summary["exit_code"] = code
    summary["status"] = "ok" if code == 0 else "error"
    if out_dir is not None:
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            write_summary(out_dir / "summary.json", summary)
        except (OSError, PhwaveError) as exc:
            log.error("cannot write summary: %s", exc)
            code = code or 1
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="phwave", description="Damped wave equation experiments on P1 meshes.")
    parser.add_argument("subcommand", choices=sorted(SUBCOMMANDS))
    parser.add_argument("--config", required=True, help="JSON configuration file")
    parser.add_argument("--out", help="output directory (default: config 'output' or ./phwave-out)")
    parser.add_argument("--deterministic", action="store_true",
                        help="single-threaded, byte-reproducible run")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="phwave: %(levelname)s: %(message)s", stream=sys.stderr)
    return run_subcommand(args.subcommand, args.config, args.out, args.deterministic)


if __name__ == "__main__":
    sys.exit(main())
