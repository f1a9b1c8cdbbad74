"""Experiment drivers behind the command-line subcommands.

Each ``cmd_*`` function takes an :class:`ExperimentConfig` and an output
directory, writes its files there (always including ``config.txt`` with the
resolved configuration) and returns a summary dict.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ..errors import ConfigurationError, NumericalError
from ..flow import (FlowState, StepperConfig, crossings, default_r_max, init_unstable,
                    normalize_time, run)
from ..geometry import Isometry, TorusGrid, build_grid, integrate
from ..interface import classify, write_reports
from ..potential import DoubleWell
from ..snapshot import write_snapshot
from ..spectrum import RadialProfile, SpectrumResult, morse_index, unstable_basis
from ..stationary import lift_profile, solve_ground_state, solve_torus_symmetric
from .config import ExperimentConfig
from .toy import run_toy

log = logging.getLogger(__name__)

Q = np.array([0.0, 0.5, 0.5, -0.5, -0.5])
E1 = np.array([1.0, 0.0, 0.0, 0.0, 0.0])
CANDIDATE_EQUATORS = (np.array([0.5, 0.5, 0.5, 0.5]), np.array([0.5, 0.5, -0.5, -0.5]))


def _prepare(out) -> Path:
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    return out


def _write_config(cfg: ExperimentConfig, out: Path) -> None:
    (out / "config.txt").write_text(cfg.to_text(), encoding="utf-8")


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, default=_jsonable) + "\n", encoding="utf-8")


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    raise TypeError(f"not serializable: {type(v)}")


# -- directions and symmetry ---------------------------------------------------


def orbit_direction(theta1: float, theta2: float) -> np.ndarray:
    """Unit direction on the orbit torus; ``(pi/4, pi/4)`` gives ``q``."""
    s = 1.0 / np.sqrt(2.0)
    return np.array([0.0, s * np.cos(theta1), s * np.sin(theta1),
                     -s * np.cos(theta2), -s * np.sin(theta2)])


def parse_direction(cfg: ExperimentConfig) -> np.ndarray:
    d = cfg.direction.strip().lower()
    if d == "q":
        p = Q.copy()
    elif d in ("e1", "+e1"):
        p = E1.copy()
    elif d == "-e1":
        p = -E1
    elif d == "orbit":
        p = orbit_direction(cfg.theta1, cfg.theta2)
    else:
        try:
            p = np.array([float(x) for x in d.split(",")])
        except ValueError:
            raise ConfigurationError(f"cannot parse direction {cfg.direction!r}") from None
        if p.shape != (5,) or not np.linalg.norm(p) > 0:
            raise ConfigurationError(f"direction needs five numbers, not all zero: {cfg.direction!r}")
    return cfg.r * p / np.linalg.norm(p)


def q_symmetries() -> tuple:
    """Generators fixing ``q``: x1 <-> x2, x3 <-> x4, and ``u -> -u o s``."""
    v = np.array([1.0, -1.0, 0.0, 0.0]) / np.sqrt(2.0)
    w = np.array([0.0, 0.0, 1.0, -1.0]) / np.sqrt(2.0)
    return (Isometry.reflect(v), Isometry.reflect(w), Isometry.swap_s().negated())


def orbit_symmetries(theta1: float, theta2: float) -> tuple:
    """Generators fixing ``orbit_direction(theta1, theta2)``: conjugates of the
    ``q`` symmetries by the rotation taking ``q`` there."""
    R = Isometry.rho(theta1 - np.pi / 4) @ Isometry.tau(theta2 - np.pi / 4)
    return tuple(R @ g @ R.inverse() for g in q_symmetries())


# -- shared setup --------------------------------------------------------------


@dataclass
class FlowSetup:
    grid: TorusGrid
    eps: float
    profile: RadialProfile
    spectrum: SpectrumResult
    basis: list
    r_max: float
    W: DoubleWell


def flow_setup(cfg: ExperimentConfig, eps: float | None = None) -> FlowSetup:
    """Critical point, spectrum and unstable basis matched to the 3D grid.

    The profile is solved with one cell per eta layer of the grid and the
    spectrum uses the finite-difference angular symbols, so the basis fields
    are exact eigenvectors of the discrete linearized operator.
    """
    eps = cfg.eps[0] if eps is None else eps
    grid = build_grid(*cfg.dims)
    W = DoubleWell()
    prof = solve_torus_symmetric(W, eps, cfg.n_eta)
    spec = morse_index(prof, cfg.k_max, n_phi=(cfg.n_phi1, cfg.n_phi2))
    basis = unstable_basis(spec, grid)
    r_max = default_r_max(grid, prof) if cfg.r_max is None else cfg.r_max
    return FlowSetup(grid, eps, prof, spec, basis, r_max, W)


def constant_stop(band: float):
    def stop(state: FlowState) -> bool:
        u = state.field
        if state.step_count % 10:
            return False
        return bool(np.max(np.abs(u - 1.0)) < band or np.max(np.abs(u + 1.0)) < band)

    return stop


def terminal_sign(u, band: float) -> int:
    if np.max(np.abs(u - 1.0)) < band:
        return 1
    if np.max(np.abs(u + 1.0)) < band:
        return -1
    return 0


def longest_plateau(times, areas, target: float, band: float) -> float:
    """Longest time span with ``|area / target - 1| <= band``."""
    inside = np.abs(np.asarray(areas) / target - 1.0) <= band
    best, start = 0.0, None
    for t, ok in zip(times, inside):
        if ok and start is None:
            start = t
        if start is not None:
            if ok:
                best = max(best, t - start)
            else:
                start = None
    return float(best)


# -- stationary ---------------------------------------------------------------


def cmd_stationary(cfg: ExperimentConfig, out) -> dict:
    """Solve torus and ground-state profiles for each eps and report their energies."""
    out = _prepare(out)
    _write_config(cfg, out)
    W = DoubleWell()
    two_sigma = 2 * W.sigma
    grid = build_grid(*cfg.dims) if cfg.lift3d else None
    rows = []
    for eps in cfg.eps:
        for kind, solver, area in (("torus", solve_torus_symmetric, 2 * np.pi**2),
                                   ("ground", solve_ground_state, 4 * np.pi)):
            p = solver(W, eps, cfg.profile_n)
            p.to_csv(out / f"{kind}_eps{eps:g}.csv")
            row = dict(eps=eps, kind=kind, energy=p.energy(), area_proxy=p.area_proxy(),
                       target=area, rel_error=p.area_proxy() / area - 1.0,
                       residual=p.residual, iterations=p.iterations,
                       equipartition_defect=p.equipartition_defect())
            if grid is not None:
                from ..flow import energy

                pole = None if kind == "torus" else np.array([0.5, 0.5, -0.5, -0.5])
                u = lift_profile(p, grid, pole)
                row["area_proxy_3d"] = energy(grid, u, eps, W) / two_sigma
                row["rel_error_3d"] = row["area_proxy_3d"] / area - 1.0
            rows.append(row)
    keys = list(rows[0].keys())
    with open(out / "energies.csv", "w") as fh:
        fh.write(",".join(keys) + "\n")
        for r in rows:
            fh.write(",".join(repr(r[k]) if not isinstance(r[k], str) else r[k] for k in keys) + "\n")
    by_eps = {}
    for r in rows:
        by_eps.setdefault(r["eps"], {})[r["kind"]] = r["energy"]
    ordered = all(v["torus"] > v["ground"] > 0 for v in by_eps.values())
    summary = dict(rows=rows, torus_above_ground=ordered)
    _write_json(out / "summary.json", summary)
    return summary


# -- spectrum -----------------------------------------------------------------


def cmd_spectrum(cfg: ExperimentConfig, out) -> dict:
    """Morse indices of the critical points and the unstable basis fields."""
    out = _prepare(out)
    _write_config(cfg, out)
    eps = cfg.eps[0]
    W = DoubleWell()
    torus = solve_torus_symmetric(W, eps, cfg.profile_n)
    ground = solve_ground_state(W, eps, cfg.profile_n)
    const = RadialProfile.constant(1.0, eps, cfg.profile_n)
    results = {}
    for name, prof in (("torus", torus), ("ground", ground), ("constant", const)):
        spec = morse_index(prof, cfg.k_max)
        spec.to_csv(out / f"spectrum_{name}.csv")
        results[name] = spec
    setup = flow_setup(cfg, eps)
    for i, phi in enumerate(setup.basis, 1):
        write_snapshot(out / f"basis_phi{i}.bin", setup.grid.shape, eps, 0.0, phi)
    ev = results["torus"].eigenvalues()
    summary = dict(
        eps=eps, convention=results["torus"].convention,
        index={k: v.morse_index for k, v in results.items()},
        torus_unstable=ev.tolist(),
        torus_degeneracy=float(np.ptp(ev[1:5])) if ev.size >= 5 else None,
        ground_unstable=results["ground"].eigenvalues().tolist(),
    )
    _write_json(out / "summary.json", summary)
    return summary


# -- flow ---------------------------------------------------------------------


def flow_run(setup: FlowSetup, a, cfg: ExperimentConfig, stepper: StepperConfig,
             snapshot_dir=None, classify_every: int = 0, stop=None):
    """Run from ``u_crit + sum a_j phi_j``; classify every ``classify_every`` steps."""
    grid = setup.grid
    state = init_unstable(grid, setup.profile, setup.basis, a, setup.eps, setup.W, setup.r_max)
    reports = []
    th = cfg.thresholds()

    def on_log(s, row):
        if classify_every and s.step_count % classify_every == 0:
            reports.append(classify(grid, s.field, setup.eps, setup.W, th, time=s.time))

    final, elog = run(grid, state, stepper, setup.W, snapshot_dir=snapshot_dir, stop=stop,
                      on_log=on_log)
    if not reports or reports[-1].time != final.time:
        reports.append(classify(grid, final.field, setup.eps, setup.W, th, time=final.time))
    return final, elog, reports


def integrity(elog) -> dict:
    """Per-run flow checks: the largest one-step energy change (negative
    when the energy strictly decreases), the peak ``|u|`` over all steps and
    the relative defect of ``E(0) - E(T) = sum dt int eps |du/dt|^2``."""
    drop = elog.rows[0]["energy"] - elog.rows[-1]["energy"]
    diss = elog.notes["dissipated"]
    return dict(max_energy_increase=elog.notes["max_energy_increase"],
                peak_abs_u=max(elog.notes["peak_abs_u"], elog.rows[0]["max_abs_u"]),
                dissipation_defect=abs(drop - diss) / drop if drop > 0 else np.nan,
                clipped_steps=elog.notes["clipped_steps"], steps=elog.notes["steps"])


def worst_integrity(items) -> dict:
    """Worst case of :func:`integrity` records over several runs."""
    items = list(items)
    return dict(max_energy_increase=max(i["max_energy_increase"] for i in items),
                peak_abs_u=max(i["peak_abs_u"] for i in items),
                dissipation_defect=float(np.nanmax([i["dissipation_defect"] for i in items])),
                clipped_steps=sum(i["clipped_steps"] for i in items), runs=len(items))


def quadratic_constant(setup: FlowSetup, cfg: ExperimentConfig, a, t: float) -> float:
    """Second-difference estimate of the quadratic error constant.

    The flow map at time ``t`` applied to ``u_crit + a.phi`` differs from its
    linearization by ``O(|a|^2)``; ``||F(2a) - 2 F(a) + F(0)|| / (2 |a|^2)``
    (L^2 norm) estimates the constant of that bound.
    """
    a = np.asarray(a, dtype=float)
    stepper = cfg.stepper(setup.eps, t_end=t, tol_stationary=0.0, log_every=10**9)
    out = []
    for scale in (0.0, 1.0, 2.0):
        state = init_unstable(setup.grid, setup.profile, setup.basis, scale * a, setup.eps,
                              setup.W, np.inf)
        out.append(run(setup.grid, state, stepper, setup.W)[0].field)
    d = out[2] - 2 * out[1] + out[0]
    return float(np.sqrt(integrate(setup.grid, d * d)) / (2 * np.dot(a, a)))


def _kind_sequence(reports) -> list:
    seq = []
    for r in reports:
        if not seq or seq[-1] != r.kind:
            seq.append(r.kind)
    return seq


def cmd_flow(cfg: ExperimentConfig, out) -> dict:
    """Flow from u_crit + a.phi with classification and energy logs."""
    out = _prepare(out)
    _write_config(cfg, out)
    setup = flow_setup(cfg)
    a = parse_direction(cfg)
    sym = ()
    if cfg.symmetrize:
        d = cfg.direction.strip().lower()
        if d == "q":
            sym = q_symmetries()
        elif d == "orbit":
            sym = orbit_symmetries(cfg.theta1, cfg.theta2)
        else:
            raise ConfigurationError("symmetrize needs direction = q or orbit")
    stepper = cfg.stepper(setup.eps, symmetrize=sym)
    every = cfg.snapshot_every or max(cfg.log_every, int(round(0.25 / stepper.step_size)))
    stepper = StepperConfig(**{**asdict(stepper), "snapshot_every": every, "symmetrize": sym})
    final, elog, reports = flow_run(setup, a, cfg, stepper, snapshot_dir=out / "snapshots",
                                    classify_every=every)
    elog.to_csv(out / "energy_log.csv")
    sigma = setup.W.sigma
    try:
        t0 = normalize_time(elog, sigma)
    except NumericalError:
        t0 = None
    for r in reports:
        r.shifted_time = (r.time - t0) if t0 is not None else float("nan")
    write_reports(out / "reports.jsonl", reports)
    last = reports[-1]
    summary = dict(
        eps=setup.eps, a=a, r_max=setup.r_max, unstable=setup.spectrum.eigenvalues(),
        reason=elog.notes["reason"], steps=final.step_count, final_time=final.time,
        final_energy=final.energy, final_area_proxy=final.energy / (2 * sigma),
        final_kind=last.kind, equator_normal=last.equator_normal,
        kinds=_kind_sequence(reports), normalization_time=t0,
        crossings=crossings(elog, sigma), max_abs_u=float(np.max(elog.column("max_abs_u"))),
        dissipated=final.dissipated, energy_drop=elog.rows[0]["energy"] - final.energy,
        integrity=integrity(elog),
    )
    if cfg.quad_t > 0:
        summary["quadratic_constant"] = quadratic_constant(setup, cfg, a, cfg.quad_t)
        summary["quadratic_constant_time"] = cfg.quad_t
    _write_json(out / "summary.json", summary)
    return summary


def equator_distance(y, candidates=CANDIDATE_EQUATORS) -> float:
    """Distance from ``y`` to the nearest of ``+-candidates``."""
    y = np.asarray(y, dtype=float)
    return float(min(min(np.linalg.norm(y - c), np.linalg.norm(y + c)) for c in candidates))


# -- sweep --------------------------------------------------------------------


def sweep_path(s: float, r: float, p=Q) -> np.ndarray:
    return r * (-np.cos(np.pi * s) * E1 + np.sin(np.pi * s) * np.asarray(p))


def _sweep_run(setup, cfg, s):
    stepper = cfg.stepper(setup.eps, t_end=cfg.sweep_t_end, tol_stationary=0.0)
    final, elog, _ = flow_run(setup, sweep_path(s, cfg.r), cfg, stepper,
                              stop=constant_stop(cfg.constant_band))
    plateau = longest_plateau(elog.column("time"), elog.column("area_proxy"), 4 * np.pi,
                              cfg.plateau_band)
    return dict(s=s, sign=terminal_sign(final.field, cfg.constant_band), plateau=plateau,
                final_time=final.time, final_energy=final.energy, integrity=integrity(elog))


def cmd_sweep(cfg: ExperimentConfig, out) -> dict:
    """Bisect the arc parameter between runs ending at -1 and at +1."""
    out = _prepare(out)
    _write_config(cfg, out)
    setup = flow_setup(cfg)
    history = []

    def probe(s):
        rec = _sweep_run(setup, cfg, s)
        history.append(rec)
        log.info("sweep s=%.9f sign=%+d plateau=%.3f", s, rec["sign"], rec["plateau"])
        return rec

    lo, hi = probe(0.0), probe(1.0)
    if lo["sign"] != -1 or hi["sign"] != 1:
        raise NumericalError(
            f"sweep endpoints end at {lo['sign']:+d} and {hi['sign']:+d}, expected -1 and +1; "
            f"increase r or sweep_t_end")
    a, b = 0.0, 1.0
    while b - a >= cfg.sweep_tol:
        mid = 0.5 * (a + b)
        rec = probe(mid)
        if rec["sign"] == 0:
            # undecided within sweep_t_end: nudge off the symmetric point
            rec = probe(mid + 0.01 * (b - a))
            mid = rec["s"]
        if rec["sign"] < 0:
            a = mid
        elif rec["sign"] > 0:
            b = mid
        else:
            raise NumericalError(f"sweep runs near s={mid} neither reach -1 nor +1")
    center = probe(0.5 * (a + b))
    ordered = sorted((h for h in history if h["sign"] != 0), key=lambda h: h["s"])
    signs = [h["sign"] for h in ordered]
    monotone = all(x <= y for x, y in zip(signs, signs[1:]))
    mu2 = setup.spectrum.eigenvalues()[1]
    summary = dict(bracket=(a, b), width=b - a, center=center, monotone=monotone,
                   lambda2=mu2, plateau_required=5.0 / abs(mu2),
                   integrity=worst_integrity(h["integrity"] for h in history), history=history)
    with open(out / "bracketing.csv", "w") as fh:
        fh.write("s,sign,plateau,final_time,final_energy\n")
        for h in history:
            fh.write(f"{h['s']!r},{h['sign']},{h['plateau']!r},{h['final_time']!r},"
                     f"{h['final_energy']!r}\n")
    _write_json(out / "summary.json", summary)
    return summary


# -- orbit --------------------------------------------------------------------


@dataclass
class ForwardLimitRecord:
    i: int
    j: int
    theta1: float
    theta2: float
    kind: str
    y: np.ndarray | None
    plateau: float
    final_energy: float
    final_area_proxy: float
    integrity: dict


def _angle(u, v) -> float:
    c = np.clip(np.dot(u, v) / (np.linalg.norm(u) * np.linalg.norm(v)), -1.0, 1.0)
    return float(np.arccos(c))


def orbit_checks(records: dict, n: int) -> dict:
    """Equivariance and oddness deviations (radians) across the angle grid."""
    step = 2 * np.pi / n
    rot1, rot2 = Isometry.rho(step), Isometry.tau(step)
    eq, odd = 0.0, 0.0
    for (i, j), rec in records.items():
        if rec.y is None:
            return dict(equivariance=np.inf, oddness=np.inf)
        for R, nb in ((rot1, ((i + 1) % n, j)), (rot2, (i, (j + 1) % n))):
            other = records[nb]
            if other.y is None:
                return dict(equivariance=np.inf, oddness=np.inf)
            eq = max(eq, _angle(R.act_on_point(rec.y), other.y))
        if n % 2 == 0:
            anti = records[((i + n // 2) % n, (j + n // 2) % n)]
            odd = max(odd, _angle(-rec.y, anti.y))
    return dict(equivariance=eq, oddness=odd)


def cmd_orbit(cfg: ExperimentConfig, out) -> dict:
    """Forward limits over an orbit_n x orbit_n grid of rotated directions."""
    out = _prepare(out)
    _write_config(cfg, out)
    n = cfg.orbit_n
    if cfg.n_phi1 % n or cfg.n_phi2 % n:
        raise ConfigurationError(
            f"orbit_n={n} must divide n_phi1={cfg.n_phi1} and n_phi2={cfg.n_phi2}")
    setup = flow_setup(cfg)
    records = {}
    for i in range(n):
        for j in range(n):
            t1, t2 = 2 * np.pi * i / n, 2 * np.pi * j / n
            stepper = cfg.stepper(setup.eps, symmetrize=orbit_symmetries(t1, t2))
            final, elog, reps = flow_run(setup, cfg.r * orbit_direction(t1, t2), cfg, stepper)
            rep = reps[-1]
            plateau = longest_plateau(elog.column("time"), elog.column("area_proxy"),
                                      4 * np.pi, cfg.plateau_band)
            records[(i, j)] = ForwardLimitRecord(
                i, j, t1, t2, rep.kind, rep.equator_normal, plateau, final.energy,
                final.energy / (2 * setup.W.sigma), integrity(elog))
            log.info("orbit (%d,%d) kind=%s y=%s", i, j, rep.kind, rep.equator_normal)
    checks = orbit_checks(records, n)
    with open(out / "forward_limits.csv", "w") as fh:
        fh.write("i,j,theta1,theta2,kind,y1,y2,y3,y4,plateau,final_energy,final_area_proxy\n")
        for rec in records.values():
            y = rec.y if rec.y is not None else [np.nan] * 4
            fh.write(f"{rec.i},{rec.j},{rec.theta1!r},{rec.theta2!r},{rec.kind},"
                     + ",".join(repr(float(v)) for v in y)
                     + f",{rec.plateau!r},{rec.final_energy!r},{rec.final_area_proxy!r}\n")
    summary = dict(n=n, kinds=sorted({r.kind for r in records.values()}), **checks,
                   integrity=worst_integrity(r.integrity for r in records.values()))
    _write_json(out / "summary.json", summary)
    return dict(summary, records=records)


# -- toy ----------------------------------------------------------------------


def cmd_toy(cfg: ExperimentConfig, out) -> dict:
    """Finite-dimensional example where the index rises along a flow line."""
    out = _prepare(out)
    _write_config(cfg, out)
    res = run_toy(cfg.toy_jitter, cfg.seed)
    summary = dict(
        indices=[dict(point=list(p), index=i) for p, i in res.indices.items()],
        meridian_error=res.meridian_error, meridian_endpoint_error=res.meridian_endpoint_error,
        jitter_endpoint=res.jitter_endpoint, jitter_nearest=list(res.jitter_nearest),
        jitter_index=res.jitter_index,
    )
    _write_json(out / "summary.json", summary)
    return summary


# -- inspect ------------------------------------------------------------------


def inspect_snapshot(path, cfg: ExperimentConfig | None = None) -> dict:
    from ..snapshot import read_snapshot
    from ..flow import energy

    snap = read_snapshot(path)
    grid = build_grid(*snap.dims)
    W = DoubleWell()
    rep = classify(grid, snap.values, snap.eps, W,
                   cfg.thresholds() if cfg is not None else None, time=snap.time)
    return dict(dims=snap.dims, eps=snap.eps, time=snap.time,
                min=float(snap.values.min()), max=float(snap.values.max()),
                energy=energy(grid, snap.values, snap.eps, W),
                mean=integrate(grid, snap.values) / (2 * np.pi**2),
                kind=rep.kind, area_proxy=rep.area_proxy, equator_normal=rep.equator_normal,
                torus_statistic=rep.torus_statistic)
