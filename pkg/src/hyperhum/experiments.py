"""Reproducible numerical studies.

Every study returns a :class:`StudyRecord` holding a result table, named
outputs, flags for degenerate input and the list of failed checks. Nothing
is raised for a failed check; callers decide (the CLI exits nonzero).
Wall-clock time is recorded but excluded from ``outputs`` so two runs with
the same inputs and seed compare equal.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .hum import (
    CG_MAXIT_DEFAULT,
    CG_TOL_DEFAULT,
    ControlProblem,
    ControllabilityWarning,
    observability_constant,
    synthesize_null_control,
)
from .model import (
    CouplingField,
    HyperbolicSystem,
    SpeedProfile,
    augment_system,
    t_opt,
    validate,
)
from .solver import Discretization, Grid, _fmt

STUDIES = (
    "adjoint_consistency",
    "observability_scan",
    "russell_comparison",
    "null_control_convergence",
    "augmentation_limit",
)


@dataclass
class StudyRecord:
    name: str
    fingerprint: str
    grid: dict
    outputs: dict
    seconds: float
    seed: int | None = None
    columns: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    flags: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    @property
    def passed(self):
        return not self.failures


def _canonical(a):
    a = np.asarray(a, dtype=float)
    return a.tolist() if a.ndim else float(a)


def fingerprint(system: HyperbolicSystem) -> str:
    """SHA-256 of a canonical JSON rendering of the system definition."""
    doc = {
        "k": system.k,
        "speeds": [_canonical(v) for v in system.speeds.values],
        "form": system.form,
        "coupling": _canonical(system.coupling.values),
        "B": _canonical(system.B),
    }
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _as_grid(g, cfl=1.0):
    return g if isinstance(g, Grid) else Grid(int(g), cfl)


def _grid_dict(grids):
    return {"nx": [g.nx for g in grids], "cfl": [g.cfl for g in grids]}


def fit_order(h, err):
    """Least-squares slope of ``log err`` against ``log h``."""
    h, err = np.asarray(h, float), np.asarray(err, float)
    ok = (err > 0) & np.isfinite(err)
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(h[ok]), np.log(err[ok]), 1)[0])


# ---------------------------------------------------------------------------
# adjoint consistency


def smooth_samples(rng, shape, s, modes=4):
    """Random cosine series in ``s`` with decaying coefficients, one per row."""
    out = np.zeros(shape)
    for i in range(shape[0]):
        a = rng.standard_normal(modes) / (1.0 + np.arange(modes))
        for j in range(modes):
            out[i] += a[j] * np.cos(j * np.pi * s)
    return out


def duality_gaps(system, T, grid, trials, seed=0, adjoint="pde"):
    """Relative gaps ``|<F U, v> - <U, F* v>| / (||F U|| ||v||)`` over random pairs."""
    d = Discretization(system, grid, T)
    rng = np.random.default_rng(seed)
    zero = np.zeros((d.n, d.nx + 1))
    gaps = []
    for _ in range(trials):
        U = smooth_samples(rng, (d.m, d.nt + 1), d.t / d.T)
        v = smooth_samples(rng, (d.n, d.nx + 1), d.x)
        FU, _ = d.primal(zero, U)
        trace = d.dual(v)[1] if adjoint == "pde" else d.adjoint(v)[1]
        lhs = d.state_inner(FU, v)
        rhs = d.control_inner(U, trace)
        scale = d.state_norm(FU) * d.state_norm(v)
        gaps.append(abs(lhs - rhs) / scale if scale > 0 else abs(lhs - rhs))
    return gaps


def adjoint_consistency_study(system, T, grids, trials=50, seed=0, adjoint="pde",
                              min_order=0.8, exact_tol=1e-12) -> StudyRecord:
    """Duality gap of the control-to-state map and its adjoint per grid.

    With ``adjoint="pde"`` the gap is a discretization error; the study
    checks it decreases under refinement with fitted order ``>= min_order``.
    With ``adjoint="discrete"`` the pair is an exact transpose and every gap
    must be below ``exact_tol``.
    """
    start = time.perf_counter()
    grids = [_as_grid(g) for g in grids]
    rows, flags, failures, maxgaps = [], [], [], []
    if trials <= 0:
        flags.append("trials <= 0: no pairs sampled, rate undefined")
    else:
        for g in grids:
            gaps = duality_gaps(system, T, g, trials, seed, adjoint)
            maxgaps.append(max(gaps))
            rows.append([g.nx, g.dx, max(gaps), float(np.mean(gaps))])
    order = fit_order([g.dx for g in grids], maxgaps) if len(maxgaps) >= 2 else float("nan")
    if maxgaps:
        if adjoint == "pde":
            if any(b >= a for a, b in zip(maxgaps, maxgaps[1:])):
                failures.append("duality gap not decreasing under refinement")
            if len(maxgaps) >= 2 and not order >= min_order:
                failures.append(f"empirical order {order:.3f} < {min_order}")
        elif max(maxgaps) > exact_tol:
            failures.append(f"exact adjoint gap {max(maxgaps):.3e} > {exact_tol:g}")
    if len(maxgaps) < 2 and trials > 0:
        flags.append("fewer than two grids: rate undefined")
    return StudyRecord(
        name="adjoint_consistency",
        fingerprint=fingerprint(system),
        grid=_grid_dict(grids),
        outputs={"max_gap": maxgaps, "order": order, "adjoint": adjoint},
        seconds=time.perf_counter() - start,
        seed=seed,
        columns=["nx", "dx", "max_gap", "mean_gap"],
        rows=rows,
        flags=flags,
        failures=failures,
        config={"T": T, "trials": trials, "adjoint": adjoint},
    )


# ---------------------------------------------------------------------------
# observability scan


def observability_scan(system, T_values, grid, variant="null", power_iters=50,
                       inner_tol=1e-10, tol=1e-6, seed=0, monotone_rtol=1e-2) -> StudyRecord:
    """Observability estimates over ascending horizons and the largest jump.

    The knee is the consecutive pair with the largest estimate ratio.
    Estimates must be nondecreasing in ``T`` up to ``monotone_rtol``.
    """
    start = time.perf_counter()
    T_values = [float(t) for t in T_values]
    if any(b <= a for a, b in zip(T_values, T_values[1:])):
        raise ValueError("T values must be strictly ascending")
    grid = _as_grid(grid)
    topt = t_opt(system.speeds).t_opt
    rows, est = [], []
    for T in T_values:
        e = observability_constant(system, T, grid, variant=variant, power_iters=power_iters,
                                   inner_tol=inner_tol, tol=tol, seed=seed)
        rows.append([T, e.constant_estimate, e.iterations, e.residual])
        est.append(e.constant_estimate)
    flags, failures = [], []
    outputs = {"t_opt": topt, "estimates": est, "knee": None, "knee_ratio": None}
    if len(est) < 2:
        flags.append("single T value: no knee")
    else:
        ratios = [b / a if a > 0 else math.inf for a, b in zip(est, est[1:])]
        i = int(np.argmax(ratios))
        outputs["knee"] = [T_values[i], T_values[i + 1]]
        outputs["knee_ratio"] = ratios[i]
        outputs["knee_relative"] = [T_values[i] / topt, T_values[i + 1] / topt]
        for a, b, ta, tb in zip(est, est[1:], T_values, T_values[1:]):
            if b < a * (1.0 - monotone_rtol):
                failures.append(f"estimate decreases from T={ta:g} to T={tb:g}")
    return StudyRecord(
        name="observability_scan",
        fingerprint=fingerprint(system),
        grid=_grid_dict([grid]),
        outputs=outputs,
        seconds=time.perf_counter() - start,
        seed=seed,
        columns=["T", "constant_estimate", "iterations", "residual"],
        rows=rows,
        flags=flags,
        failures=failures,
        config={"variant": variant, "power_iters": power_iters, "inner_tol": inner_tol},
    )


# ---------------------------------------------------------------------------
# Russell time comparison


def random_speed_profile(rng, n=None, k=None, nsamples=None) -> SpeedProfile:
    """Random admissible speeds; sampled profiles are strictly ordered everywhere."""
    n = int(rng.integers(2, 7)) if n is None else n
    k = int(rng.integers(1, n)) if k is None else k
    m = n - k
    if nsamples is None:
        nsamples = int(rng.choice([0, 5, 17]))
    xs = np.linspace(0.0, 1.0, max(nsamples, 2))

    def family(count):
        # increasing stack of positive profiles
        base = 0.2 + rng.random()
        cur = base + 0.3 * rng.random() * np.sin(np.pi * xs * rng.integers(1, 3))
        cur = np.abs(cur) + 0.1
        prof = [cur]
        for _ in range(count - 1):
            cur = cur + 0.1 + rng.random()
            prof.append(cur)
        return prof

    minus = family(k)[::-1]  # lam_1 > ... > lam_k
    plus = family(m)         # lam_{k+1} < ... < lam_n
    if nsamples == 0:
        vals = tuple(float(p[0]) for p in minus + plus)
    else:
        vals = tuple(np.array(p) for p in minus + plus)
    return SpeedProfile(vals, k)


def random_systems(count, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        sp = random_speed_profile(rng)
        B = rng.standard_normal((sp.k, sp.m))
        out.append(HyperbolicSystem(sp, CouplingField.zero(sp.n, "u"), B))
    return out


def russell_comparison(systems, seed=None) -> StudyRecord:
    """``t_opt`` against the Russell time ``tau_k + tau_{k+1}`` per system."""
    start = time.perf_counter()
    rows, failures = [], []
    digest = hashlib.sha256()
    for idx, s in enumerate(systems):
        rep = t_opt(s.speeds)
        ratio = rep.t_opt / rep.russell_time
        rows.append([idx, s.k, s.m, rep.t_opt, rep.russell_time, ratio])
        digest.update(fingerprint(s).encode())
        if rep.t_opt > rep.russell_time * (1.0 + 1e-12):
            failures.append(f"system {idx}: t_opt {rep.t_opt:g} > Russell time {rep.russell_time:g}")
    ratios = [r[-1] for r in rows]
    return StudyRecord(
        name="russell_comparison",
        fingerprint=digest.hexdigest(),
        grid={},
        outputs={"max_ratio": max(ratios) if ratios else None, "count": len(rows)},
        seconds=time.perf_counter() - start,
        seed=seed,
        columns=["index", "k", "m", "t_opt", "russell_time", "ratio"],
        rows=rows,
        failures=failures,
    )


# ---------------------------------------------------------------------------
# null control convergence


def _initial_state(w0, x):
    if callable(w0):
        return np.asarray(w0(x), dtype=float)
    from .fixtures import state
    return state(w0, x)


def _monotone(seq, plateau, rtol=1e-6):
    return all(b <= a * (1.0 + rtol) or b <= plateau for a, b in zip(seq, seq[1:]))


def null_control_convergence(system, w0, T, grids, eps_values, negative_T=None,
                             negative_floor=0.3, cg_tol=CG_TOL_DEFAULT,
                             cg_maxit=CG_MAXIT_DEFAULT, plateau=1e-10) -> StudyRecord:
    """Terminal residual of HUM null control over grids and regularizations.

    ``w0`` is a callable of the node array or a list of profile specs.
    Residuals must not grow under refinement at fixed ``eps`` nor as ``eps``
    decreases on the finest grid, except below ``plateau``. If ``negative_T``
    is given, a run at that horizon on every grid must stay above
    ``negative_floor``.
    """
    start = time.perf_counter()
    grids = [_as_grid(g) for g in grids]
    eps_values = sorted((float(e) for e in eps_values), reverse=True)
    table = np.zeros((len(grids), len(eps_values)))
    rows, failures = [], []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ControllabilityWarning)
        for gi, g in enumerate(grids):
            pb = ControlProblem(system, T, g)
            x0 = _initial_state(w0, g.x)
            for ei, eps in enumerate(eps_values):
                rep = synthesize_null_control(system, x0, T, g, eps=eps, cg_tol=cg_tol,
                                              cg_maxit=cg_maxit, problem=pb)
                table[gi, ei] = rep.terminal_residual_norm
                rows.append([T, g.nx, eps, rep.terminal_residual_norm, rep.cg_iterations])
        negative = []
        if negative_T is not None:
            for g in grids:
                rep = synthesize_null_control(system, _initial_state(w0, g.x), negative_T, g,
                                              eps=eps_values[-1], cg_tol=cg_tol, cg_maxit=cg_maxit)
                negative.append(rep.terminal_residual_norm)
                rows.append([negative_T, g.nx, eps_values[-1], rep.terminal_residual_norm,
                             rep.cg_iterations])
    for ei, eps in enumerate(eps_values):
        if not _monotone(table[:, ei], plateau):
            failures.append(f"residual grows under refinement at eps={eps:g}")
    if not _monotone(table[-1, :], plateau):
        failures.append("residual grows as eps decreases on the finest grid")
    for g, r in zip(grids, negative):
        if r < negative_floor:
            failures.append(f"negative control at nx={g.nx}: residual {r:.3g} < {negative_floor}")
    return StudyRecord(
        name="null_control_convergence",
        fingerprint=fingerprint(system),
        grid=_grid_dict(grids),
        outputs={"residuals": table.tolist(), "eps": eps_values, "negative": negative},
        seconds=time.perf_counter() - start,
        columns=["T", "nx", "eps", "terminal_residual_norm", "cg_iterations"],
        rows=rows,
        failures=failures,
        config={"T": T, "negative_T": negative_T, "cg_tol": cg_tol, "cg_maxit": cg_maxit},
    )


# ---------------------------------------------------------------------------
# augmentation limit


def augmentation_limit_study(system, eps_values) -> StudyRecord:
    """``|t_opt(augmented, eps) - t_opt|`` per ``eps`` with a fit ``gap <= C eps``.

    An ``eps`` whose padded speeds break the ordering is flagged and left
    out of the fit.
    """
    start = time.perf_counter()
    if system.m <= system.k:
        raise ValueError(f"augmentation needs m > k, got k={system.k}, m={system.m}")
    base = t_opt(system.speeds).t_opt
    eps_values = sorted((float(e) for e in eps_values), reverse=True)
    rows, flags, failures, used, gaps = [], [], [], [], []
    for eps in eps_values:
        try:
            aug = augment_system(system, eps)
            problems = validate(aug)
        except ValueError as exc:
            problems = [str(exc)]
        if problems:
            flags.append(f"eps={eps:g} excluded: {problems[0]}")
            rows.append([eps, float("nan"), float("nan"), 0])
            continue
        t_aug = t_opt(aug.speeds).t_opt
        gap = abs(t_aug - base)
        used.append(eps)
        gaps.append(gap)
        rows.append([eps, t_aug, gap, 1])
    C = float(np.dot(gaps, used) / np.dot(used, used)) if used else float("nan")
    if len(gaps) >= 2 and any(b > a * (1.0 + 1e-9) + 1e-15 for a, b in zip(gaps, gaps[1:])):
        failures.append("gap does not shrink as eps decreases")
    if len(gaps) >= 2 and gaps[-1] > 1e-12 and not gaps[-1] < gaps[0]:
        failures.append("gap does not tend to 0")
    return StudyRecord(
        name="augmentation_limit",
        fingerprint=fingerprint(system),
        grid={},
        outputs={"t_opt": base, "gaps": gaps, "eps": used, "C": C},
        seconds=time.perf_counter() - start,
        columns=["eps", "t_opt_augmented", "gap", "included"],
        rows=rows,
        flags=flags,
        failures=failures,
    )


# ---------------------------------------------------------------------------
# output


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return _fmt(v)


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if math.isfinite(f) else repr(f)
    if isinstance(v, np.integer):
        return int(v)
    return v


def write_study(record: StudyRecord, outdir) -> tuple[Path, Path]:
    """Write ``<name>.csv`` (the table) and ``<name>.meta`` (JSON echo)."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    csv_path = outdir / f"{record.name}.csv"
    meta_path = outdir / f"{record.name}.meta"
    with open(csv_path, "w") as fh:
        fh.write(",".join(record.columns) + "\n")
        for row in record.rows:
            fh.write(",".join(_cell(v) for v in row) + "\n")
    meta = {
        "name": record.name,
        "fingerprint": record.fingerprint,
        "seed": record.seed,
        "grid": record.grid,
        "config": record.config,
        "outputs": record.outputs,
        "flags": record.flags,
        "failures": record.failures,
        "passed": record.passed,
        "seconds": record.seconds,
    }
    meta_path.write_text(json.dumps(_jsonable(meta), indent=2, sort_keys=True) + "\n")
    return csv_path, meta_path
