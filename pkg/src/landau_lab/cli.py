"""Command-line experiments: ``landau-lab <subcommand> --config FILE --out DIR``.

Configs are sectioned ``key = value`` text (configparser).  Every run writes
CSV tables and a plain-text ``report.txt`` into the output directory.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import hashlib
import io as _io
import logging
import sys
import time
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy import stats

from . import density_solver as ds
from . import equilibria as eq
from . import io as lio
from . import norms
from .errors import ConfigError, LandauLabError
from .spacetime import TimeGrid
from .spectral_field import NonlinearityA, PeriodicGrid

log = logging.getLogger("landau_lab")

SUBCOMMANDS = ("penrose", "linear", "flow", "simulate", "norms", "scatter")


# -- configuration -----------------------------------------------------------------

@dataclass
class EquilibriumSection:
    kind: str = "maxwellian"
    sigma: float = 1.0
    u0: tuple = (0.0, 0.0)
    table: str = ""
    v_max: float = 8.0


@dataclass
class GridSection:
    N: int = 32
    L: float = 8.0
    Nv: int = 32
    V: float = 8.0


@dataclass
class TimeSection:
    T: float = 20.0
    dt: float = 0.05
    T0: float = 0.5
    window: tuple = (5.0, 50.0)


@dataclass
class NonlinearitySection:
    kind: str = "massless-electron"


@dataclass
class InitialDataSection:
    kind: str = "gaussian"
    epsilon: float = 1e-3
    x_width: float = 1.0
    v_width: float = 1.0


@dataclass
class SolverSection:
    tol: float = 1e-6
    field_tol: float = 1e-10
    max_iter: int = 20
    gate: float = 0.1
    local_gate: float = 1.0
    eps1: float = 1.0
    flow_order: int = 2
    seed: int = 0


@dataclass
class NormsSection:
    a: float = 0.5
    J: int = 10
    h0: float = 0.0  # 0 -> L / 4


@dataclass
class OutputSection:
    snapshot_times: tuple = ()  # empty -> dyadic multiples of T0 plus T
    write_snapshots: bool = True


SECTIONS = {
    "equilibrium": EquilibriumSection,
    "grid": GridSection,
    "time": TimeSection,
    "nonlinearity": NonlinearitySection,
    "initial_data": InitialDataSection,
    "solver": SolverSection,
    "norms": NormsSection,
    "output": OutputSection,
}


def _parse_value(kind, text, name):
    text = text.strip()
    try:
        if kind is bool:
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return low in ("true", "1", "yes")
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        if kind is tuple:
            return tuple(float(p) for p in text.replace(",", " ").split()) if text else ()
        return text
    except ValueError:
        raise ConfigError(name, f"cannot parse {text!r} as {kind.__name__}") from None


def _format_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ", ".join(repr(float(x)) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass
class ExperimentConfig:
    equilibrium: EquilibriumSection = field(default_factory=EquilibriumSection)
    grid: GridSection = field(default_factory=GridSection)
    time: TimeSection = field(default_factory=TimeSection)
    nonlinearity: NonlinearitySection = field(default_factory=NonlinearitySection)
    initial_data: InitialDataSection = field(default_factory=InitialDataSection)
    solver: SolverSection = field(default_factory=SolverSection)
    norms: NormsSection = field(default_factory=NormsSection)
    output: OutputSection = field(default_factory=OutputSection)

    @classmethod
    def from_text(cls, text):
        cp = configparser.ConfigParser()
        cp.optionxform = str  # keys such as grid.N are case sensitive
        try:
            cp.read_string(text)
        except configparser.Error as err:
            raise ConfigError("config", str(err)) from None
        cfg = cls()
        for sec in cp.sections():
            if sec not in SECTIONS:
                raise ConfigError(sec, "unknown section")
            target = getattr(cfg, sec)
            types = {f.name: f.type for f in fields(target)}
            for key, raw in cp.items(sec):
                if key not in types:
                    raise ConfigError(f"{sec}.{key}", "unknown key")
                kind = {"int": int, "float": float, "str": str, "tuple": tuple, "bool": bool}[types[key]]
                setattr(target, key, _parse_value(kind, raw, f"{sec}.{key}"))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path):
        return cls.from_text(Path(path).read_text())

    def to_text(self):
        cp = configparser.ConfigParser()
        cp.optionxform = str
        for sec in SECTIONS:
            cp[sec] = {k: _format_value(v) for k, v in dataclasses.asdict(getattr(self, sec)).items()}
        buf = _io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def digest(self):
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]

    def validate(self):
        """Raise ConfigError naming the first offending key; return warnings."""
        g, t, s, n = self.grid, self.time, self.solver, self.norms
        positive = {
            "grid.N": g.N, "grid.L": g.L, "grid.Nv": g.Nv, "grid.V": g.V,
            "time.T": t.T, "time.dt": t.dt, "time.T0": t.T0,
            "solver.tol": s.tol, "solver.field_tol": s.field_tol, "solver.max_iter": s.max_iter,
            "solver.gate": s.gate, "solver.local_gate": s.local_gate, "solver.eps1": s.eps1,
            "equilibrium.sigma": self.equilibrium.sigma, "equilibrium.v_max": self.equilibrium.v_max,
            "initial_data.x_width": self.initial_data.x_width, "initial_data.v_width": self.initial_data.v_width,
            "norms.J": n.J,
        }
        for name, val in positive.items():
            if not val > 0:
                raise ConfigError(name, f"must be positive (got {val})")
        if g.N & (g.N - 1) or g.N < 8:
            raise ConfigError("grid.N", f"must be a power of two >= 8 (got {g.N})")
        if g.Nv % 2 or g.Nv < 4:
            raise ConfigError("grid.Nv", f"must be even and >= 4 (got {g.Nv})")
        if not 0 < n.a < 1:
            raise ConfigError("norms.a", f"must lie in (0, 1) (got {n.a})")
        if n.h0 < 0:
            raise ConfigError("norms.h0", "must be >= 0")
        if s.flow_order not in (1, 2):
            raise ConfigError("solver.flow_order", "must be 1 or 2")
        if self.equilibrium.kind not in ("maxwellian", "two-bump", "tabulated"):
            raise ConfigError("equilibrium.kind", f"unknown kind {self.equilibrium.kind!r}")
        if self.equilibrium.kind == "tabulated" and not self.equilibrium.table:
            raise ConfigError("equilibrium.table", "tabulated profile needs a table path")
        if len(self.equilibrium.u0) != 2:
            raise ConfigError("equilibrium.u0", "needs two components")
        if self.nonlinearity.kind not in ("massless-electron", "zero"):
            raise ConfigError("nonlinearity.kind", f"unknown kind {self.nonlinearity.kind!r}")
        if self.initial_data.kind not in ("gaussian", "zero"):
            raise ConfigError("initial_data.kind", f"unknown kind {self.initial_data.kind!r}")
        if self.initial_data.epsilon < 0:
            raise ConfigError("initial_data.epsilon", "must be >= 0")
        m = t.T0 / t.dt
        if abs(m - round(m)) > 1e-9 or round(m) < 2:
            raise ConfigError("time.T0", f"must be a multiple (>= 2) of time.dt = {t.dt}")
        k = t.T / t.T0
        if abs(k - round(k)) > 1e-9:
            raise ConfigError("time.T", f"must be a multiple of time.T0 = {t.T0}")
        if len(t.window) != 2 or not 0 < t.window[0] < t.window[1]:
            raise ConfigError("time.window", "needs 0 < t1 < t2")
        if s.seed < 0:
            raise ConfigError("solver.seed", "must be >= 0")
        warnings = []
        if not self.periodic_grid().window_ok(g.V, t.T):
            warnings.append(f"dispersive window: dxi = {np.pi / g.L:.3g} > pi / (V T); "
                            "decay beyond the box crossing time is a box effect")
        return warnings

    # builders
    def periodic_grid(self):
        return PeriodicGrid(self.grid.L, self.grid.N)

    def profile(self):
        e = self.equilibrium
        if e.kind == "maxwellian":
            return eq.maxwellian(e.sigma, e.v_max)
        if e.kind == "two-bump":
            return eq.two_bump(e.u0, e.sigma, e.v_max)
        return eq.load_table(e.table, v_max=e.v_max)

    def nonlinearity_A(self):
        return NonlinearityA(self.nonlinearity.kind)

    def initial(self):
        d = self.initial_data
        return ds.InitialData(d.epsilon, d.kind, d.x_width, d.v_width)

    def solver_config(self):
        s, t = self.solver, self.time
        return ds.SolverConfig(V=self.grid.V, Nv=self.grid.Nv, T0=t.T0, dt=t.dt, tol=s.tol, max_iter=s.max_iter,
                               a=self.norms.a, gate=s.gate, local_gate=s.local_gate, flow_order=s.flow_order,
                               field_tol=s.field_tol)

    def shifts(self):
        h0 = self.norms.h0 or self.grid.L / 4.0
        return norms.ShiftSet(h0, self.norms.J)


# -- reporting ------------------------------------------------------------------------

@dataclass
class RunReport:
    command: str
    config_hash: str
    constants: dict = field(default_factory=dict)  # name -> (value, tag)
    status: str = "ok"
    warnings: list = field(default_factory=list)
    wall_time: float = 0.0

    def add(self, name, value, tag):
        self.constants[name] = (value, tag)

    def text(self):
        lines = [f"command = {self.command}", f"config_hash = {self.config_hash}", f"status = {self.status}",
                 f"wall_time_s = {self.wall_time:.2f}"]
        for w in self.warnings:
            lines.append(f"warning = {w}")
        width = max((len(k) for k in self.constants), default=0)
        for k, (v, tag) in self.constants.items():
            val = f"{v:.6e}" if isinstance(v, (float, np.floating)) else str(v)
            lines.append(f"{k.ljust(width)} = {val}  [{tag}]")
        return "\n".join(lines) + "\n"

    def write(self, out_dir):
        Path(out_dir, "report.txt").write_text(self.text())


def fit_decay_exponent(t, values, window):
    """Least-squares slope of log(value) against log(t) on the window.

    Returns (exponent, half-width of the 95% confidence interval).
    """
    t = np.asarray(t, dtype=float)
    values = np.asarray(values, dtype=float)
    sel = (t >= window[0]) & (t <= window[1])
    if np.count_nonzero(sel) < 4:
        raise LandauLabError("insufficient-window", f"fewer than 4 samples in [{window[0]}, {window[1]}]")
    if np.any(values[sel] <= 0):
        raise LandauLabError("nonpositive-series", "values must be positive on the window")
    x, y = np.log(t[sel]), np.log(values[sel])
    res = stats.linregress(x, y)
    dof = int(sel.sum()) - 2
    width = float(stats.t.ppf(0.975, dof) * res.stderr) if dof > 0 else float("inf")
    return float(res.slope), width


# -- subcommands ---------------------------------------------------------------------------

def run_penrose(cfg, out, report, args):
    prof = cfg.profile()
    scan = eq.penrose_margin(prof, check=False)
    lio.write_csv(out / "penrose_scan.csv", ["tau", "xi", "re_K", "im_K", "gap"], scan.table)
    report.add("penrose_margin", scan.margin, "penrose:scan")
    report.add("penrose_drift", scan.drift, "penrose:refinement")
    report.add("penrose_refinements", scan.refinements, "penrose:refinement")
    xi = np.geomspace(0.05, 10.0, 25)
    slice0 = np.array([abs(1.0 - eq.kernel_hat_K(prof, 0.0, (k, 0.0))) for k in xi])
    if prof.kind == "maxwellian":
        closed = (2 + xi**2) / (1 + xi**2)
        report.add("tau0_closed_form_error", float(np.max(np.abs(slice0 - closed))), "penrose:tau0")
    if scan.violation:
        report.status = "penrose-violation"
        return 1
    return 0


def run_linear(cfg, out, report, args):
    prof = cfg.profile()
    f0 = cfg.initial()
    times = TimeGrid(cfg.time.T, int(round(cfg.time.T / cfg.time.dt)))
    if prof.radial and f0.kind == "gaussian":
        sx, sv, eps = f0.x_width, f0.v_width, f0.epsilon
        src = lambda k, t: eps * 2 * np.pi * sx**2 * np.exp(-k**2 * (sx**2 + (t * sv) ** 2) / 2)
        res = ds_linear_radial(prof, src, times)
        linf, l1 = res.norm_inf(), res.norm_1()
    else:
        from .linear_response import linear_density_evolve
        grid = cfg.periodic_grid()
        rho = linear_density_evolve(f0.free_density_hat, prof, grid, times)
        linf = np.max(np.abs(rho.values), axis=(1, 2))
        l1 = np.sum(np.abs(rho.values), axis=(1, 2)) * grid.dx**2
    t = times.t
    lio.write_csv(out / "linear_decay.csv", ["t", "Linf", "L1"], zip(t, linf, l1))
    if f0.kind != "zero":
        e_inf, w_inf = fit_decay_exponent(t, linf, cfg.time.window)
        e_1, w_1 = fit_decay_exponent(t, l1, cfg.time.window)
        report.add("decay_exponent_Linf", e_inf, "linear:fit")
        report.add("decay_exponent_Linf_ci", w_inf, "linear:fit")
        report.add("decay_exponent_L1", e_1, "linear:fit")
        report.add("decay_exponent_L1_ci", w_1, "linear:fit")
    return 0


def ds_linear_radial(prof, src, times):
    from .linear_response import radial_linear_density
    return radial_linear_density(prof, src, times, nr=3000)


def run_flow(cfg, out, report, args):
    from . import characteristics as ch
    grid = cfg.periodic_grid()
    times = TimeGrid(min(cfg.time.T, 12.0), int(round(min(cfg.time.T, 12.0) / 0.2)))
    g = ch.manufactured_g(grid, times, amplitude=1.0)
    scale = norms.trajectory_norm(g, 1, cfg.norms.a, cfg.shifts()).total
    amp = 1e-2 / scale
    g = ch.manufactured_g(grid, times, amplitude=amp)
    sampler = ch.FieldSampler(ch.field_from_g(g))
    rng = np.random.default_rng(cfg.solver.seed)
    z = rng.uniform(-2.0, 2.0, size=(64, 2))
    v = rng.uniform(-2.0, 2.0, size=(64, 2))
    rows, maxima = ch.flow_diagnostics(sampler, times.T, z, v, cfg.norms.a, v_max=2.0)
    names = list(ch.DIAGNOSTIC_NAMES)
    lio.write_csv(out / "flow_diagnostics.csv", ["s", "t"] + names, ([r["s"], r["t"]] + [r[k] for k in names] for r in rows))
    report.add("g_norm", 1e-2, "flow:manufactured")
    for k in names:
        report.add(f"C_{k}", maxima[k] / 1e-2, "flow:diagnostics")
    return 0


def _solver(cfg):
    snaps = cfg.output.snapshot_times or None
    return ds.DensitySolver(cfg.periodic_grid(), cfg.profile(), cfg.solver_config(), cfg.nonlinearity_A(), snaps)


def _simulate(cfg, out, report):
    solver = _solver(cfg)
    f0 = cfg.initial()
    traj, state = solver.continuation(f0, cfg.time.T, eps1=cfg.solver.eps1)
    report.add("horizon_reached", state.T, "simulate:bootstrap")
    report.add("bootstrap_status", state.status, "simulate:bootstrap")
    if state.reason:
        report.add("bootstrap_reason", state.reason, "simulate:bootstrap")
    if traj is None:
        return solver, f0, None, state
    t = traj.times.t
    ps = traj.ps
    l1 = np.sum(np.abs(traj.rho), axis=(1, 2)) * ps.grid.dx**2
    linf = np.max(np.abs(traj.rho), axis=(1, 2))
    lr, lu = traj.ledger("rho"), traj.ledger("U")
    lio.write_csv(out / "rho_norms.csv", ["t", "L1", "Linf", "ledger_rho", "ledger_U", "mass"],
                  zip(t, l1, linf, lr, lu, traj.mass()))
    lio.write_csv(out / "slabs.csv", ["t_start", "iterations", "last_update", "seam", "flow_bound", "displacement"],
                  ([s.t_start, s.iterations, s.updates[-1], s.seam, s.flow_bound, s.max_displacement]
                   for s in traj.slabs))
    tn = ds.triple_norm(f0, ps, cfg.norms.a).total if f0.kind != "zero" else 0.0
    total = float(lr[-1] + lu[-1])
    report.add("triple_norm_f0", tn, "simulate:norms")
    report.add("ledger_max", total, "simulate:ledger")
    report.add("ledger_U_over_rho", float(lu[-1] / lr[-1]) if lr[-1] > 0 else 0.0, "simulate:ledger")
    report.add("C1", total / tn if tn > 0 else 0.0, "simulate:ledger")
    m = traj.mass()
    report.add("mass_drift_rel", float(np.max(np.abs(m - m[0])) / abs(m[0])) if m[0] else 0.0, "simulate:mass")
    report.add("max_slab_iterations", max(traj.iterations), "simulate:picard")
    report.add("max_seam", max(s.seam for s in traj.slabs), "simulate:picard")
    if cfg.output.write_snapshots:
        for tt, snap in sorted(traj.snapshots.items()):
            f = ds.shear_to_physical(snap.h, ps, snap.t)
            lio.write_vpf4(out / f"f_t{snap.t:g}.vpf4", np.moveaxis(f, (0, 1), (2, 3)), ps.grid.L, ps.V, snap.t)
            lio.write_vpf2(out / f"rho_t{snap.t:g}.vpf2", traj.rho[int(round(snap.t / traj.times.dt))],
                           ps.grid.L, snap.t)
    return solver, f0, traj, state


def run_simulate(cfg, out, report, args):
    _, _, traj, state = _simulate(cfg, out, report)
    if state.status == "threshold-breach":
        report.warnings.append(f"bootstrap-breach: {state.reason}")
    return 0


def run_scatter(cfg, out, report, args):
    solver, f0, traj, state = _simulate(cfg, out, report)
    if traj is None:
        report.status = "no-trajectory"
        return 1
    sc = ds.scattering_profile(traj, f0, solver.profile)
    lio.write_csv(out / "scattering.csv", ["t", "distance", "weighted_distance"],
                  zip(sc.times, sc.distance, sc.weighted_distance))
    tn = report.constants["triple_norm_f0"][0]
    report.add("shift_size", sc.shift_size, "scatter:limits")
    report.add("C_shift", sc.shift_size / tn if tn > 0 else 0.0, "scatter:limits")
    report.add("limit_change", sc.limit_change, "scatter:limits")
    return 0


def run_norms(cfg, out, report, args):
    if not args.snapshot:
        raise ConfigError("--snapshot", "the norms subcommand needs a snapshot file")
    snap = lio.read_snapshot(args.snapshot)
    a = args.a if args.a is not None else cfg.norms.a
    if snap["kind"] == "VPF2":
        vals, L = snap["values"], snap["L"]
        N = vals.shape[0]
        grid = PeriodicGrid(L, N)
        sh = norms.ShiftSet(cfg.norms.h0 or L / 4, cfg.norms.J)
        grad = norms.spectral_gradient(vals, L)
        comps = {
            "L1": norms.lp_norm(vals, grid.dx, 1), "Linf": norms.lp_norm(vals, grid.dx, np.inf),
            "B1": norms.besov_values(vals, L, a, 1, sh), "Binf": norms.besov_values(vals, L, a, np.inf, sh),
            "B1[grad]": norms.besov_values(grad, L, a, 1, sh, 1),
            "Binf[grad]": norms.besov_values(grad, L, a, np.inf, sh, 1),
        }
        rep = norms.NormReport(comps, {"a": a, "time": snap["time"]})
    else:
        vals = snap["values"]
        pg = norms.PhaseGrid(snap["L"], vals.shape[0], snap["v_max"], vals.shape[2])
        rep = norms.triple_norm_values(vals, pg, a)
    text = "\n".join(rep.lines())
    print(text)
    if out is not None:
        lio.write_csv(out / "norms.csv", ["component", "value"], list(rep.components.items()) + [("total", rep.total)])
    report.add("norm_total", rep.total, "norms:snapshot")
    return 0


RUNNERS = {"penrose": run_penrose, "linear": run_linear, "flow": run_flow, "simulate": run_simulate,
           "norms": run_norms, "scatter": run_scatter}


def run_subcommand(name, cfg, out, args=None):
    """Run one experiment; returns (exit code, RunReport)."""
    if name not in RUNNERS:
        raise ConfigError("command", f"unknown subcommand {name!r}")
    args = args or argparse.Namespace(snapshot=None, a=None)
    report = RunReport(name, cfg.digest())
    report.warnings.extend(cfg.validate())
    out = Path(out) if out is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    try:
        code = RUNNERS[name](cfg, out, report, args)
    except LandauLabError as err:
        report.status = f"error: {err}"
        code = 2
    report.wall_time = time.perf_counter() - t0
    if out is not None:
        report.write(out)
    return code, report


def build_parser():
    p = argparse.ArgumentParser(prog="landau-lab", description="Landau damping experiments on the density equation")
    p.add_argument("command", choices=SUBCOMMANDS)
    p.add_argument("--config", help="sectioned key = value config file (defaults if omitted)")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--threads", type=int, default=1, help="worker threads for FFTs")
    p.add_argument("--seed", type=int, default=None, help="overrides solver.seed")
    p.add_argument("--snapshot", help="VPF2/VPF4 file for the norms subcommand")
    p.add_argument("--a", type=float, default=None, help="Besov index for the norms subcommand")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed", "must be >= 0")
            cfg.solver.seed = args.seed
        if args.threads < 1:
            raise ConfigError("--threads", "must be >= 1")
    except LandauLabError as err:
        print(f"landau-lab: {err}", file=sys.stderr)
        return 2
    import scipy.fft as sfft
    with sfft.set_workers(args.threads):
        code, report = run_subcommand(args.command, cfg, args.out, args)
    sys.stdout.write(report.text())
    return code


if __name__ == "__main__":
    sys.exit(main())
