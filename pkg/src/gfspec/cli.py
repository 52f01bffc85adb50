"""Command-line experiment runner: ``gfspec {eigen,evolve,gap,gre,matrixlab}``.

Exit codes: 0 when every check passes, 1 on a configuration error, 2 on a
numerical failure or a failed check.  Reports name each check and its outcome.
"""
from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import matrixlab as ml
from .config import ConfigError, ExperimentConfig, load_config
from .evolution import CFLError, check_gre_identity, evolve, gre_recorders
from .grid import moment, pairing, tail_mass, weak_norm, weighted_norm
from .linalg import SolveError
from .operators import DiscreteOperator, assemble, matrix_operator
from .renewal import euler_lotka_root
from .spectral import (ConvergenceError, Eigentriple, Projector, eigentriple, random_modulation,
                       random_profile, spectral_gap_estimate)

NUMERIC_ERRORS = (ConvergenceError, CFLError, SolveError, ml.ContourError, ml.QuadratureError,
                  OverflowError, np.linalg.LinAlgError)


class Report:
    def __init__(self, title: str):
        self.lines = [f"# {title}"]
        self.failed = []

    def value(self, name: str, v) -> None:
        if isinstance(v, (float, np.floating)):
            v = f"{float(v):.10g}"
        self.lines.append(f"{name} = {v}")

    def check(self, name: str, ok: bool, detail: str = "") -> None:
        ok = bool(ok)
        self.lines.append(f"check {name}: {'PASS' if ok else 'FAIL'}" + (f" ({detail})" if detail else ""))
        if not ok:
            self.failed.append(name)

    def write(self, path: Path) -> None:
        path.write_text(self.text())

    def text(self) -> str:
        return "\n".join(self.lines) + "\n"

    @property
    def code(self) -> int:
        return 0 if not self.failed else 2


def _fmt(v) -> str:
    return f"{float(v):.17g}"


def build_operator(cfg: ExperimentConfig) -> DiscreteOperator:
    if cfg.kind == "matrix":
        return matrix_operator(cfg.matrix)
    return assemble(cfg.model, cfg.grid())


def _triple(cfg: ExperimentConfig, op: DiscreteOperator) -> Eigentriple:
    return eigentriple(op, tol=cfg.tol, max_iter=cfg.max_iter, shift=cfg.shift)


def cmd_eigen(cfg: ExperimentConfig, out: Path) -> Report:
    op = build_operator(cfg)
    t = _triple(cfg, op)
    g = op.grid
    r = Report(f"eigen {cfg.kind}")
    r.value("lambda", t.lam)
    r.value("primal_residual", t.residuals[0])
    r.value("dual_residual", t.residuals[1])
    norm = pairing(t.phi, t.f_inf, g)
    r.value("pairing_phi_f_inf", norm)
    r.value("min_f_inf", float(np.min(t.f_inf)))
    r.value("tail_mass_f_inf", tail_mass(t.f_inf, g))
    if cfg.kind == "age_structured":
        el = euler_lotka_root(cfg.model.rate)
        r.value("euler_lotka_lambda", el)
        r.value("abs_lambda_minus_euler_lotka", abs(t.lam - el))
    if cfg.kind == "matrix":
        # an explicit matrix may be reducible; only the sign survives
        r.check("f_inf_nonnegative", np.all(t.f_inf >= 0.0))
        r.check("phi_nonnegative", np.all(t.phi >= 0.0))
    else:
        r.check("f_inf_positive_interior", np.all(t.f_inf[1:-1] > 0.0))
        r.check("phi_positive_interior", np.all(t.phi[1:-1] > 0.0))
    r.check("normalisation", abs(norm - 1.0) <= 1e-8, f"|<phi,f_inf> - 1| = {abs(norm - 1.0):.2e}")
    r.check("residuals", max(t.residuals) <= cfg.tol, f"tol {cfg.tol:.1e}")
    t.to_csv(out / "eigen.csv")
    return r


def _evolve_seed(cfg, op, t, seed):
    g = op.grid
    f0 = random_profile(g, seed)
    P = Projector(t)
    target = P(f0)
    X = t.norm_spec
    rec = {"deflated_norm": lambda f: weighted_norm(f - target, g, X),
           "moment0": lambda f: moment(f, g, 0.0),
           "moment1": lambda f: moment(f, g, 1.0),
           "duality": lambda f: pairing(t.phi, f, g)}
    weak = cfg.model is not None and cfg.model.is_cell_division and cfg.model.rate.kind == "constant"
    if weak:
        rec["weak_norm"] = lambda f: weak_norm(f - target, g, 1.0)
    traj = evolve(op, f0, cfg.T, cfg.dt, cfg.scheme, rec, shift=t.lam, keep_states=True)
    return traj, weak


def _slope(times, y, T):
    sel = times >= T / 2.0 - 1e-12
    y = np.asarray(y)[sel]
    if y.size < 4 or np.any(y <= 0.0):
        return np.nan
    return float(np.polyfit(times[sel], np.log(y), 1)[0])


def cmd_evolve(cfg: ExperimentConfig, out: Path) -> Report:
    op = build_operator(cfg)
    t = _triple(cfg, op)
    r = Report(f"evolve {cfg.kind}")
    r.value("lambda", t.lam)
    r.value("scheme", cfg.scheme)
    rows = []
    names = None
    for seed in cfg.seeds:
        traj, weak = _evolve_seed(cfg, op, t, seed)
        names = list(traj.recorded)
        for k, time in enumerate(traj.times):
            rows.append([seed, time] + [traj.recorded[n][k] for n in names])
        T = traj.times[-1]
        slope = _slope(traj.times, traj.recorded["deflated_norm"], T)
        r.value(f"seed{seed}.deflated_norm_slope", slope)
        dual = traj.recorded["duality"]
        r.value(f"seed{seed}.duality_drift", float(np.max(np.abs(dual - dual[0]))))
        if cfg.kind == "self_similar":
            m1 = traj.recorded["moment1"]
            drift = float(np.max(np.abs(m1 - m1[0]))) / m1[0] / T
            r.value(f"seed{seed}.mass_drift_per_unit_time", drift)
            r.check(f"seed{seed}.mass_conservation", drift <= 1e-6, f"{drift:.2e} <= 1e-6")
        if weak:
            ws = _slope(traj.times, traj.recorded["weak_norm"], T)
            r.value(f"seed{seed}.weak_norm_slope", ws)
            r.check(f"seed{seed}.weak_norm_contraction", ws <= -t.lam + 0.1,
                    f"{ws:.4f} <= {-t.lam + 0.1:.4f}")
        if cfg.scheme == "implicit_euler":
            r.check(f"seed{seed}.positivity", np.min(traj.states) >= 0.0)
        if cfg.dump_states:
            traj.states_to_csv(out / f"states_seed{seed}.csv")
    with open(out / "trajectory.csv", "w") as fh:
        fh.write(",".join(["seed", "t"] + names) + "\n")
        for row in rows:
            fh.write(",".join([str(row[0])] + [_fmt(v) for v in row[1:]]) + "\n")
    return r


def cmd_gap(cfg: ExperimentConfig, out: Path) -> Report:
    op = build_operator(cfg)
    t = _triple(cfg, op)
    est = spectral_gap_estimate(op, t, cfg.T, cfg.dt, seeds=cfg.seeds)
    r = Report(f"gap {cfg.kind}")
    r.value("lambda", est.lam)
    r.value("a_ss", est.a_ss)
    r.value("gap", est.gap)
    for s, v in zip(cfg.seeds, est.slopes):
        r.value(f"seed{s}.abscissa", v)
    r.check("a_ss_below_lambda", est.a_ss < est.lam, f"{est.a_ss:.6g} < {est.lam:.6g}")
    with open(out / "gap.csv", "w") as fh:
        fh.write("seed,abscissa,raw_slope\n")
        for s, v, raw in zip(cfg.seeds, est.slopes, est.raw_slopes):
            fh.write(f"{s},{_fmt(v)},{_fmt(raw)}\n")
    return r


def _gre_run(cfg, N, dt, seed):
    g = replace(cfg, N=N).grid()
    op = assemble(cfg.model, g)
    t = _triple(cfg, op)
    init = cfg.gre["init"]
    if init == "equilibrium":
        f0 = t.f_inf.copy()
    elif init == "scaled":
        f0 = cfg.gre["factor"] * t.f_inf
    else:
        f0 = t.f_inf * (1.0 + random_modulation(g, seed, scale=g.L))
    j = cfg.gre["j"]
    traj = evolve(op, f0, cfg.T, dt, "implicit_euler", gre_recorders(t, cfg.model, g, j),
                  shift=t.lam, keep_states=cfg.dump_states)
    return traj, check_gre_identity(traj, t, cfg.model, g, j)


def cmd_gre(cfg: ExperimentConfig, out: Path) -> Report:
    if cfg.kind == "matrix":
        raise ConfigError("gre needs a fragmentation model, not model.kind = matrix")
    seed = cfg.seeds[0]
    traj, rep = _gre_run(cfg, cfg.N, cfg.dt, seed)
    r = Report(f"gre {cfg.kind} j={cfg.gre['j']} init={cfg.gre['init']}")
    r.value("J0", rep.J[0])
    r.value("J_final", rep.J[-1])
    r.value("residual", rep.residual)
    r.value("relative_residual", rep.relative)
    r.value("max_J_increase", rep.max_increase)
    if cfg.gre["init"] == "modulated":
        r.check("identity_residual", rep.relative <= 0.05, f"{rep.relative:.3e} <= 5% of J0")
    else:
        r.check("identity_residual", rep.residual <= 1e-10, f"{rep.residual:.3e} <= 1e-10")
    r.check("J_nonincreasing", rep.max_increase <= 1e-8, f"{rep.max_increase:.2e} <= 1e-8")
    if cfg.gre["refine"]:
        N2, dt2 = 2 * cfg.N - 1, cfg.dt / 2.0
        _, rep2 = _gre_run(cfg, N2, dt2, seed)
        ratio = rep.residual / rep2.residual if rep2.residual > 0.0 else np.inf
        r.lines.append("N,dt,residual,relative_residual")
        r.lines.append(f"{cfg.N},{cfg.dt:.6g},{rep.residual:.6e},{rep.relative:.6e}")
        r.lines.append(f"{N2},{dt2:.6g},{rep2.residual:.6e},{rep2.relative:.6e}")
        r.value("halving_ratio", ratio)
        if cfg.gre["init"] == "modulated":
            r.check("residual_halves", ratio >= 1.8, f"ratio {ratio:.3f} >= 1.8")
    with open(out / "gre.csv", "w") as fh:
        fh.write("t,J,D_J\n")
        for time, J, D in zip(traj.times, rep.J, rep.D):
            fh.write(f"{_fmt(time)},{_fmt(J)},{_fmt(D)}\n")
    if cfg.dump_states:
        traj.states_to_csv(out / f"states_seed{seed}.csv")
    return r


def _matrixlab_builtin(r: Report, rows: list, mcfg: dict) -> None:
    def add(case, value, tol):
        ok = bool(value <= tol)
        rows.append((case, value, tol, ok))
        r.check(case, ok, f"{value:.3e} <= {tol:.0e}")

    I2 = np.eye(2)
    add("exp_zero", np.max(np.abs(ml.matrix_exponential(np.zeros((2, 2)), 1.0) - I2)), 1e-15)
    lam, t = 0.7, 2.3
    jordan = np.exp(lam * t) * np.array([[1.0, t], [0.0, 1.0]])
    E = ml.matrix_exponential(np.array([[lam, 1.0], [0.0, lam]]), t)
    add("exp_jordan", np.max(np.abs(E - jordan)) / np.max(np.abs(jordan)), 1e-12)
    add("resolvent_zero", np.max(np.abs(ml.resolvent(np.zeros((2, 2)), 1.0) + I2)), 1e-14)
    P = ml.dunford_projector(np.diag([1.0, -1.0]), 1.0, 0.5)
    add("dunford_diag", np.max(np.abs(P - np.diag([1.0, 0.0]))), 1e-8)
    worst = 0.0
    for s in range(mcfg["count"]):
        M = ml.separated_random_matrix(mcfg["size"], mcfg["seed"] + s)
        D = ml.dunford_projector(M, 0.0, 1.0, nodes=mcfg["nodes"])
        worst = max(worst, float(np.linalg.norm(D - ml.eigen_projector(M, 0.0, 1.0))))
    add(f"dunford_vs_eig_{mcfg['count']}_seeds", worst, 1e-8)
    C = ml.decay_bound_check(np.diag([1.0, -2.0]), np.diag([1.0, 0.0]), -1.0, np.arange(0.0, 10.01, 0.5))
    add("decay_bound_diag", abs(C - 1.0), 1e-12)
    worst = 0.0
    for s in range(5):
        pair = ml.DenseOperatorPair.random(8, mcfg["seed"] + s)
        for n in (1, 2, 3):
            worst = max(worst, ml.duhamel_partial_sum(pair, 2.0, n, 256).error)
    add("duhamel_reconstruction", worst, 1e-6)
    M = np.random.default_rng(mcfg["seed"]).standard_normal((6, 6))
    xi = float(np.max(np.linalg.eigvals(M).real)) + 1.5
    add("hille_laplace", np.max(np.abs(ml.hille_laplace(M, xi) + ml.resolvent(M, xi))), 1e-6)
    w = ml.weyl_discrete_check(ml.DenseOperatorPair(np.diag([1.0, -1.0, -3.0]), np.zeros((3, 3))), 0.0)
    add("weyl_count", abs(w.count - 1), 0)


def cmd_matrixlab(cfg: ExperimentConfig | None, out: Path, seed: int | None = None) -> Report:
    mcfg = dict(cfg.matrixlab) if cfg is not None else {
        "suite": "builtin", "count": 50, "size": 10, "seed": 0, "center": 0.0, "radius": 1.0,
        "nodes": 64}
    if seed is not None:
        mcfg["seed"] = seed
    r = Report(f"matrixlab {mcfg['suite']}")
    rows: list = []
    if mcfg["suite"] == "builtin":
        _matrixlab_builtin(r, rows, mcfg)
    elif mcfg["suite"] == "random":
        for s in range(mcfg["count"]):
            M = ml.separated_random_matrix(mcfg["size"], mcfg["seed"] + s)
            D = ml.dunford_projector(M, mcfg["center"], mcfg["radius"], nodes=mcfg["nodes"])
            diff = float(np.linalg.norm(D - ml.eigen_projector(M, mcfg["center"], mcfg["radius"])))
            rows.append((f"dunford_seed{mcfg['seed'] + s}", diff, 1e-8, diff <= 1e-8))
            r.check(f"dunford_seed{mcfg['seed'] + s}", diff <= 1e-8, f"{diff:.3e}")
    else:
        # contour through the eigenvalue 1 of diag(1, -1): must be refused
        try:
            ml.dunford_projector(np.diag([1.0, -1.0]), 0.0, 1.0)
        except ml.ContourError as exc:
            r.check("contour_through_spectrum", False, f"flagged: {exc}")
            rows.append(("contour_through_spectrum", np.nan, 0.0, False))
        else:
            r.check("contour_through_spectrum_detected", False, "not flagged")
    with open(out / "matrixlab.csv", "w") as fh:
        fh.write("case,value,tol,pass\n")
        for case, value, tol, ok in rows:
            fh.write(f"{case},{_fmt(value)},{float(tol):.3g},{int(ok)}\n")
    return r


COMMANDS = {"eigen": cmd_eigen, "evolve": cmd_evolve, "gap": cmd_gap, "gre": cmd_gre}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gfspec", description="Growth-fragmentation spectral experiments")
    parser.add_argument("command", choices=[*COMMANDS, "matrixlab"])
    parser.add_argument("--config", type=Path, help="INI experiment file")
    parser.add_argument("--out", type=Path, help="output directory (GFSPEC_OUT overrides)")
    parser.add_argument("--seed", type=int, help="replace the configured seed list by this seed")
    parser.add_argument("--dump-states", action="store_true", help="write full state CSVs")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else None
        if cfg is None and args.command != "matrixlab":
            raise ConfigError(f"{args.command} needs --config")
        if cfg is not None:
            if args.seed is not None:
                cfg = replace(cfg, seeds=(args.seed,))
            if args.dump_states:
                cfg = replace(cfg, dump_states=True)
        out = os.environ.get("GFSPEC_OUT") or args.out or (cfg.directory if cfg else "out")
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "matrixlab":
            report = cmd_matrixlab(cfg, out, args.seed)
        else:
            report = COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except NUMERIC_ERRORS as exc:
        print(f"numerical failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    report.write(out / "report.txt")
    sys.stdout.write(report.text())
    if report.failed:
        print(f"failed checks: {', '.join(report.failed)}", file=sys.stderr)
    return report.code


if __name__ == "__main__":
    sys.exit(main())
