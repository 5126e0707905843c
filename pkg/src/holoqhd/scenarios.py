"""Building simulation objects from a validated scenario and running it to disk.

Output directory layout::

    manifest.json          file list with sha256 hashes, snapshot index, status
    diagnostics.csv        one row per output time
    residuals.csv          hydrodynamic residuals over the last step before each output
    snapshots/psi_NNNNN.hqhd, snapshots/filament_NNNNN.csv
    filament_trajectory.csv, trajectory.csv   (filament and nuclear kinds)

Nothing time- or host-dependent is written, so identical inputs give
identical bytes.
"""
import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from holoqhd import born_oppenheimer as bo
from holoqhd import fields, madelung, propagator, snapshot
from holoqhd.config import BO_KINDS, SPINOR_KINDS, VORTEX_KINDS, serialize
from holoqhd.errors import HoloQHDError, NumericalAbort, ProximityError
from holoqhd.filament import CoupledSystem, FilamentCurve, step_coupled
from holoqhd.gauge import GaugeField, biot_savart_lambda

EXIT_OK, EXIT_CONFIG, EXIT_ABORT, EXIT_IO = 0, 2, 3, 4


def _fmt(x):
    return repr(float(x))


# ---------------------------------------------------------------------------
# construction


def build_grid(s):
    return fields.Grid(s.get("grid.dims"), s.get("grid.extents"))


def _center(vals, nd):
    return np.zeros(nd) if not vals else np.asarray(vals, dtype=float)


def _displacement(grid, center):
    return [x - c for x, c in zip(grid.mesh(), center)]


def periodic_bump(grid, dx, width):
    """``exp(sum_i kappa_i (cos(2 pi x_i / L_i) - 1))``: a smooth bump that is exactly periodic.

    ``kappa_i = (L_i / (2 pi width))^2`` matches a Gaussian of the given
    width near its centre.
    """
    expo = 0.0
    for d, length in zip(dx, grid.extents):
        kappa = (length / (2 * np.pi * width)) ** 2
        expo = expo + kappa * (np.cos(2 * np.pi * d / length) - 1.0)
    return np.exp(expo)


def scalar_state(s, grid):
    st = s.config["state"]
    nd = grid.ndim
    dx = _displacement(grid, _center(st["center"], nd))
    r2 = sum(d * d for d in dx)
    k = _center(st["momentum"], nd)
    wave = np.exp(1j * sum(ki * x for ki, x in zip(k, grid.mesh())))
    if st["family"] == "gaussian":
        env = np.exp(-r2 / (4 * st["width"] ** 2))
    elif st["family"] == "plane_wave":
        env = np.ones(grid.dims)
    else:
        env = 1.0 + st["amplitude"] * periodic_bump(grid, dx, st["width"])
    psi = env * wave
    if st["noise"] > 0:
        rng = np.random.default_rng(s.get("scenario.seed"))
        psi = psi + st["noise"] * env * (rng.standard_normal(grid.dims) + 1j * rng.standard_normal(grid.dims))
    return propagator.normalize(grid, psi)


def spinor_texture(grid, center, strength, width):
    """Pointwise-normalized spinor ``(1, c zeta bump)`` with a smooth, exactly periodic spin texture.

    ``zeta = (L/2pi) (sin(2 pi x/Lx) + i sin(2 pi y/Ly))`` behaves like
    ``x + i y`` near the centre and ``bump`` is :func:`periodic_bump`.
    """
    dx = _displacement(grid, center)
    per = [length / (2 * np.pi) * np.sin(2 * np.pi * d / length) for d, length in zip(dx, grid.extents)]
    z = per[0] + 1j * (per[1] if grid.ndim > 1 else 0.0)
    lower = strength * z * periodic_bump(grid, dx, width)
    upper = np.ones(grid.dims, dtype=complex)
    nrm = np.sqrt(1 + np.abs(lower) ** 2)
    return np.stack([upper / nrm, lower / nrm])


def initial_state(s, grid):
    psi = scalar_state(s, grid)
    if s.kind not in SPINOR_KINDS:
        return psi
    st = s.config["state"]
    if st["spinor"] == "texture":
        chi = spinor_texture(grid, _center(st["center"], grid.ndim), st["texture_strength"],
                             st["texture_width"])
    else:
        th, ph = st["spin_polar"], st["spin_azimuth"]
        chi = np.array([math.cos(th / 2), np.exp(1j * ph) * math.sin(th / 2)]).reshape(
            (2,) + (1,) * grid.ndim)
    return chi * psi[None]


def build_potential(s, grid):
    pot = s.config["potential"]
    if pot["kind"] == "none":
        return None
    if pot["kind"] == "harmonic":
        dx = _displacement(grid, _center(pot["center"], grid.ndim))
        m = s.get("physics.mass")
        return 0.5 * m * pot["omega"] ** 2 * sum(d * d for d in dx)
    ax = pot["axis"]
    return pot["amplitude"] * np.cos(2 * np.pi * pot["mode"] * grid.mesh()[ax] / grid.extents[ax])


def potential_gradient(s, grid):
    """Analytic gradient of the harmonic trap (its minimum-image form has kinks at the faces)."""
    pot = s.config["potential"]
    if pot["kind"] != "harmonic":
        return None
    dx = _displacement(grid, _center(pot["center"], grid.ndim))
    return s.get("physics.mass") * pot["omega"] ** 2 * np.stack(dx)


def external_potential(s, grid):
    """Periodic ``A = a (sin(2 pi y / Ly), cos(2 pi x / Lx), 0)``, or None."""
    amp = s.get("magnetic.a_amplitude")
    if amp == 0:
        return None
    mesh = grid.mesh()
    a = np.zeros((grid.ndim,) + grid.dims)
    a[0] = amp * np.sin(2 * np.pi * mesh[1] / grid.extents[1])
    a[1] = amp * np.cos(2 * np.pi * mesh[0] / grid.extents[0])
    return a


def ring_filament(s):
    g = s.config["gauge"]
    return FilamentCurve.ring(g["ring_radius"], g["ring_center"], g["ring_normal"], g["ring_nodes"],
                              g["strength"], g["kappa"])


def gauge_for(s, grid, filament=None):
    g = s.config["gauge"]
    a = external_potential(s, grid)
    if g["source"] == "constant":
        return GaugeField.constant(grid, g["lambda"], a)
    if g["source"] == "ring":
        fil = ring_filament(s) if filament is None else filament
        gf = biot_savart_lambda(fil, grid, s.get("physics.mass"), s.get("physics.hbar"), g["reg"],
                                boundary="periodic")
        gf.external_a = a
        return gf
    gf = GaugeField.zero(grid)
    gf.external_a = a
    return gf


def magnetic_field(s, grid, gf):
    if s.kind not in SPINOR_KINDS:
        return None
    b = np.asarray(s.get("magnetic.b_uniform"), dtype=float).reshape((3,) + (1,) * grid.ndim)
    b = np.broadcast_to(b, (3,) + grid.dims).copy()
    if gf.external_a is not None:
        b = b + propagator._curl_of_potential(grid, gf.external_a)
    if not np.any(b):
        return None
    return b


def build_params(s, grid, gf):
    ph, it = s.config["physics"], s.config["integrator"]
    return propagator.PropagatorParams(
        grid, ph["hbar"], ph["mass"], build_potential(s, grid), gf, magnetic_field(s, grid, gf),
        it["dt"], it["t_end"], it["output_stride"], it["stability_c"], it["renormalize"],
        potential_gradient(s, grid))


def build_loops(s):
    return {name: fields.Loop.circle(lp["center"], lp["radius"], lp["normal"], lp["points"], lp["turns"])
            for name, lp in s.loops.items()}


def build_model(s):
    nuc = s.config["nuclear"]
    flags = dict(neglect_second_order_coupling=nuc["neglect_second_order"],
                 real_eigenstate=nuc["real_eigenstate"],
                 neglect_quantum_potential=nuc["neglect_quantum_potential"])
    nd = len(s.get("grid.dims"))
    if nuc["model"] == "spin_boson":
        coupling = nuc["coupling"] or (1.0,) + (0.0,) * (nd - 1)
        return bo.ElectronicModel.spin_boson(nuc["mass"], nuc["omega"], coupling, nuc["tunnel"], **flags)
    if nuc["model"] == "cone":
        return bo.ElectronicModel.cone(nuc["slope"], nuc["offset"], nuc["mass"], nuc["omega"], **flags)
    return bo.ElectronicModel.hedgehog(nuc["height"], **flags)


# ---------------------------------------------------------------------------
# diagnostics


def diagnostics_header(s):
    cols = ["step", "time", "norm", "energy", "helicity", "vorticity_lock", "reconstruction_residual",
            "spin_error"]
    for name in s.loops:
        cols += [f"circulation_{name}", f"holonomy_{name}"]
    return cols


def diagnostics_values(s, grid, psi, gf, params):
    """Diagnostics of one state as a dict of floats (NaN where a quantity does not apply)."""
    hb, m = params.hbar, params.mass
    nan = float("nan")
    hyd = madelung.to_hydrodynamic(psi, gf, m, hb, params.potential)
    mask = hyd.node_mask
    out = {
        "norm": propagator.norm(grid, psi),
        "energy": madelung.total_energy(psi, gf, params.potential, hb, m, params.magnetic_b),
        "helicity": madelung.helicity(grid, hyd.velocity) if grid.ndim == 3 else nan,
        "vorticity_lock": nan, "reconstruction_residual": nan, "spin_error": nan,
    }
    scalar = psi.ndim == grid.ndim
    # phase-derived quantities need a node-free state: a velocity field cut off
    # at masked nodes is not periodic, and spectral derivatives of it ring
    node_free = not np.any(mask)
    if scalar and node_free and grid.ndim >= 2:
        # curl of the phase-gradient part of the velocity must vanish
        w = madelung.curl3(grid, hyd.velocity + gf.connection(hb) / m)
        out["vorticity_lock"] = float(np.max(np.abs(w)))
    if scalar and node_free and gf.external_a is None:
        out["reconstruction_residual"] = propagator.appendix_a_identity(psi, gf, hb, m)
    if not scalar:
        s_vec = madelung.spin_density(psi, hb)[0]
        out["spin_error"] = float(np.max(np.abs(np.linalg.norm(s_vec, axis=0) - 0.5 * hb)[~mask]))
    for name, loop in build_loops(s).items():
        try:
            out[f"circulation_{name}"] = madelung.circulation(grid, hyd.velocity, loop, mask)
        except ProximityError:
            out[f"circulation_{name}"] = nan
        out[f"holonomy_{name}"] = -fields.line_integral(grid, gf.connection(hb), loop) / m
    return out


def _node_free(grid, psi):
    return not np.any(madelung.node_mask(madelung.density(psi, grid)))


def diagnostics_row(s, step, t, values):
    return [str(step), _fmt(t)] + [_fmt(values[c]) for c in diagnostics_header(s)[2:]]


RESIDUAL_HEADER = ["step", "time", "continuity", "momentum", "spin"]


def residual_row(step, t, res):
    return [str(step), _fmt(t)] + [_fmt(res.get(k, float("nan"))) for k in RESIDUAL_HEADER[2:]]


def trajectory_header(nd):
    return (["time"] + [f"q{i}" for i in range(nd)] + [f"qdot{i}" for i in range(nd)]
            + ["kinetic", "potential", "total", "gap"])


# ---------------------------------------------------------------------------
# running


@dataclass
class RunResult:
    exit_code: int
    status: str
    message: str
    output_dir: str
    files: list = field(default_factory=list)


class _Writer:
    """Tracks produced files so the manifest can list them with hashes."""

    def __init__(self, root):
        self.root = root
        self.files = []
        os.makedirs(root, exist_ok=True)

    def path(self, rel):
        full = os.path.join(self.root, rel)
        os.makedirs(os.path.dirname(full), exist_ok=True)
        if rel not in self.files:
            self.files.append(rel)
        return full

    def csv(self, rel, header, rows):
        snapshot.write_csv(self.path(rel), header, rows)

    def manifest(self, s, status, message, exit_code, snaps):
        entries = []
        for rel in sorted(self.files):
            with open(os.path.join(self.root, rel), "rb") as fh:
                data = fh.read()
            entries.append({"path": rel, "sha256": hashlib.sha256(data).hexdigest(), "bytes": len(data)})
        doc = {
            "scenario": s.name, "kind": s.kind, "status": status, "message": message,
            "exit_code": exit_code,
            "config_sha256": hashlib.sha256(serialize(s).encode()).hexdigest(),
            "files": entries, "snapshots": snaps,
        }
        with open(os.path.join(self.root, "manifest.json"), "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _psi_run(s, w):
    """Schrodinger/Pauli runs, with or without a moving filament; returns snapshot entries."""
    grid = build_grid(s)
    psi = initial_state(s, grid)
    vortex = s.kind in VORTEX_KINDS
    gcfg = s.config["gauge"]
    fil = ring_filament(s) if vortex else None
    gf = gauge_for(s, grid, fil)
    params = build_params(s, grid, gf)
    out_cfg = s.config["output"]
    diag_rows, res_rows, fil_rows, snaps = [], [], [], []
    system = None
    if vortex:
        system = CoupledSystem(psi, fil, params, gcfg["reg"], s.get("integrator.interpolation"),
                               gcfg["min_separation"] or None)

    def record(step, t, psi, gf, p, fil, prev):
        vals = diagnostics_values(s, grid, psi, gf, p)
        diag_rows.append(diagnostics_row(s, step, t, vals))
        if out_cfg["residuals"] and prev is not None and _node_free(grid, prev) and _node_free(grid, psi):
            res_rows.append(residual_row(step, t, madelung.hydro_residuals(prev, psi, p.dt, p)))
        entry = {"index": len(snaps), "step": step, "time": t}
        if out_cfg["snapshots"]:
            rel = f"snapshots/psi_{len(snaps):05d}.hqhd"
            snapshot.write_snapshot(w.path(rel), grid, psi)
            entry["file"] = rel
        if fil is not None:
            rel = f"snapshots/filament_{len(snaps):05d}.csv"
            snapshot.write_filament_csv(w.path(rel), fil.nodes)
            entry["filament"] = rel
            fil_rows.extend(snapshot.filament_rows(t, fil.nodes))
        snaps.append(entry)

    def flush():
        w.csv("diagnostics.csv", diagnostics_header(s), diag_rows)
        if out_cfg["residuals"]:
            w.csv("residuals.csv", RESIDUAL_HEADER, res_rows)
        if vortex:
            w.csv("filament_trajectory.csv", snapshot.FILAMENT_TRAJECTORY_HEADER, fil_rows)

    try:
        record(0, 0.0, psi, gf, params, fil, None)
        steps, stride = params.steps, params.output_stride
        prev = psi
        for n in range(1, steps + 1):
            prev = system.psi if vortex else psi
            if vortex:
                system = step_coupled(system)
                psi, fil = system.psi, system.filament
            else:
                psi = propagator.step(psi, params)
                propagator.check_finite(psi, n * params.dt)
            if n % stride == 0 or n == steps:
                t = n * params.dt
                if vortex:
                    gf = system.gauge_for(fil)
                    p = params.with_gauge(gf)
                else:
                    p = params
                record(n, t, psi, gf, p, fil, prev)
    finally:
        flush()
    return snaps


def _bo_run(s, w):
    grid = build_grid(s)
    nuc = s.config["nuclear"]
    nd = grid.ndim
    hb = s.get("physics.hbar")
    model = build_model(s)
    vortex = s.kind in VORTEX_KINDS
    lam = None
    if not vortex and s.get("gauge.source") != "none":
        lam = gauge_for(s, grid).lam
    surfaces = bo.build_surfaces(model, grid, nuc["sigma0"] or None, hb, nuc["mass"], lam,
                                 s.get("integrator.interpolation"))
    fil = ring_filament(s) if vortex else None
    reg = s.get("gauge.reg")
    qdot0 = nuc["qdot0"] or (0.0,) * nd
    traj = bo.NuclearTrajectory(np.array(nuc["q0"]), np.array(qdot0), nuc["mass"], 0.0, fil)
    snaps = []
    if s.get("output.snapshots"):
        snapshot.write_snapshot(w.path("surfaces/eps_bar.hqhd"), grid, surfaces.eps_bar)
        snapshot.write_snapshot(w.path("surfaces/e_bar.hqhd"), grid, surfaces.E_bar)
    rows, diag, fil_rows = [], [], []
    it = s.config["integrator"]
    steps = int(round(it["t_end"] / it["dt"]))

    def gap(q):
        return 2 * float(np.linalg.norm(model.b(np.asarray(q, dtype=float)[None])[0]))

    def record(step, traj):
        kin, pot, tot = bo.trajectory_energy(surfaces, traj)
        g = gap(traj.q)
        rows.append([_fmt(traj.t)] + [_fmt(v) for v in traj.q] + [_fmt(v) for v in traj.qdot]
                    + [_fmt(kin), _fmt(pot), _fmt(tot), _fmt(g)])
        diag.append([str(step), _fmt(traj.t), _fmt(kin), _fmt(pot), _fmt(tot),
                     _fmt(np.linalg.norm(traj.qdot)), _fmt(g)])
        entry = {"index": len(snaps), "step": step, "time": traj.t}
        if traj.filament is not None:
            rel = f"snapshots/filament_{len(snaps):05d}.csv"
            snapshot.write_filament_csv(w.path(rel), traj.filament.nodes)
            entry["filament"] = rel
            fil_rows.extend(snapshot.filament_rows(traj.t, traj.filament.nodes))
        snaps.append(entry)

    try:
        record(0, traj)
        for n in range(1, steps + 1):
            traj = bo.nuclear_step(traj, surfaces, it["dt"], reg)
            if n % it["output_stride"] == 0 or n == steps:
                record(n, traj)
    finally:
        w.csv("trajectory.csv", trajectory_header(nd), rows)
        w.csv("diagnostics.csv", ["step", "time", "kinetic", "potential", "total", "speed", "gap"], diag)
        if vortex:
            w.csv("filament_trajectory.csv", snapshot.FILAMENT_TRAJECTORY_HEADER, fil_rows)
    return snaps


def diagnose_snapshot(s, snap_path, time=0.0, filament_path=None, step=0):
    """Recompute the diagnostics row of a stored wavefunction snapshot.

    ``s`` supplies the physics (grid, constants, gauge source); a stored
    filament, when given, replaces the configured ring.
    """
    snap = snapshot.read_snapshot(snap_path)
    grid = build_grid(s)
    if snap.grid != grid:
        raise ValueError(f"snapshot grid {snap.grid} does not match the scenario grid {grid}")
    fil = None
    if filament_path:
        g = s.config["gauge"]
        fil = FilamentCurve(snapshot.read_filament_csv(filament_path), g["strength"], g["kappa"])
    gf = gauge_for(s, grid, fil)
    params = build_params(s, grid, gf)
    psi = snap.field()
    vals = diagnostics_values(s, grid, psi, gf, params)
    return diagnostics_header(s), diagnostics_row(s, step, time, vals)


def _diag_run(s, w):
    inp = s.config["input"]
    header, row = diagnose_snapshot(s, inp["snapshot"], inp["time"], inp["filament"] or None)
    w.csv("diagnostics.csv", header, [row])
    return []


def run_scenario(s, output_dir=None):
    """Run ``s`` into ``output_dir`` and return a :class:`RunResult`.

    Numerical aborts keep every artifact written so far and record the
    message in the manifest (exit code 3); I/O failures give exit code 4.
    """
    root = output_dir or s.output_dir or os.path.join("runs", s.name)
    try:
        w = _Writer(root)
    except OSError as exc:
        return RunResult(EXIT_IO, "io_error", str(exc), root)
    runner = _bo_run if s.kind in BO_KINDS else _diag_run if s.kind == "diagnostics_only" else _psi_run
    status, message, code, snaps = "ok", "", EXIT_OK, []
    try:
        snaps = runner(s, w)
    except NumericalAbort as exc:
        status, message, code = "numerical_abort", str(exc), EXIT_ABORT
    except OSError as exc:
        status, message, code = "io_error", str(exc), EXIT_IO
    except HoloQHDError as exc:
        # geometric failures during a run (filament self-approach, loop near a node)
        status, message, code = "numerical_abort", f"{type(exc).__name__}: {exc}", EXIT_ABORT
    try:
        w.manifest(s, status, message, code, snaps)
    except OSError as exc:
        return RunResult(EXIT_IO, "io_error", str(exc), root, list(w.files))
    return RunResult(code, status, message, root, list(w.files))


def load_manifest(path):
    with open(path) as fh:
        return json.load(fh)


def manifest_entry_for(snap_path) -> Optional[dict]:
    """Snapshot entry (time, step, filament path) from the manifest next to a run's snapshot."""
    snap_path = os.path.abspath(snap_path)
    root = os.path.dirname(os.path.dirname(snap_path))
    mpath = os.path.join(root, "manifest.json")
    if not os.path.exists(mpath):
        return None
    for entry in load_manifest(mpath).get("snapshots", []):
        if entry.get("file") and os.path.abspath(os.path.join(root, entry["file"])) == snap_path:
            out = dict(entry)
            if "filament" in out:
                out["filament"] = os.path.join(root, out["filament"])
            return out
    return None
