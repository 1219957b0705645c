"""Problem data for one-dimensional linear hyperbolic control systems.

Components are ordered as in the usual diagonal form: indices ``1..k`` carry
negative speeds (the "minus" family, transported towards ``x = 1``) and
indices ``k+1..k+m`` carry positive speeds (the "plus" family, transported
towards ``x = 0``). Public functions that take a component index use that
1-based numbering; every array in this package is 0-based, so component ``i``
lives in row ``i - 1``.

The system reads::

    w_t = Sigma(x) w_x + C(x) w              (w-form)
    u_t = Sigma(x) u_x + S(x) u(t, 0)        (u-form)
    w_-(t, 0) = B w_+(t, 0),   w_+(t, 1) = W(t)

with ``Sigma = diag(-lam_1, ..., -lam_k, lam_{k+1}, ..., lam_n)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

DET_TOL = 1e-10
SPEED_GAP = 1e-9
LIPSCHITZ_MAX = 1e6
COUPLING_MAX = 1e8


class InvalidSystemError(ValueError):
    """Raised when an operation receives a system that fails validation."""

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(self.diagnostics))


def _sample_nodes(nsamples):
    return np.linspace(0.0, 1.0, nsamples)


def _interp_samples(values, x):
    values = np.asarray(values, dtype=float)
    if values.ndim == 0:
        return np.full(np.shape(x), float(values))
    return np.interp(x, _sample_nodes(values.size), values)


@dataclass(frozen=True)
class SpeedProfile:
    """Characteristic speeds ``lam_1..lam_n`` (all positive) on ``[0, 1]``.

    Each entry of ``values`` is either a scalar (constant speed) or a 1-D
    array of samples at uniformly spaced points of ``[0, 1]``; between
    samples the speed is linear.
    """

    values: tuple
    k: int

    def __post_init__(self):
        vals = tuple(
            float(v) if np.ndim(v) == 0 else np.asarray(v, dtype=float).copy()
            for v in self.values
        )
        for v in vals:
            if isinstance(v, np.ndarray):
                v.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "k", int(self.k))

    @classmethod
    def constant(cls, speeds, k):
        return cls(tuple(float(s) for s in speeds), k)

    @property
    def n(self):
        return len(self.values)

    @property
    def m(self):
        return self.n - self.k

    @property
    def is_constant(self):
        return all(np.ndim(v) == 0 for v in self.values)

    def at(self, x):
        """Speeds at points ``x``; shape ``(n, len(x))``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return np.stack([_interp_samples(v, x) for v in self.values])

    def component(self, i):
        """Values for 1-based component ``i``."""
        if not 1 <= i <= self.n:
            raise IndexError(f"component index {i} outside 1..{self.n}")
        return self.values[i - 1]

    def max_speed(self):
        return max(float(np.max(v)) for v in self.values)


@dataclass(frozen=True)
class CouplingField:
    """Zero-order coupling, either ``C(x)`` (form ``"w"``) or ``S(x)`` (form ``"u"``).

    ``values`` has shape ``(n, n)`` for a constant matrix or ``(n, n, Nc+1)``
    for samples at ``Nc+1`` uniform points of ``[0, 1]`` (linear in between).
    """

    form: str
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def zero(cls, n, form="u"):
        return cls(form, np.zeros((n, n)))

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def is_zero(self):
        return not np.any(self.values)

    def at(self, x):
        """Coupling matrices at points ``x``; shape ``(len(x), n, n)``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if self.values.ndim == 2:
            return np.broadcast_to(self.values, (x.size,) + self.values.shape).copy()
        nodes = _sample_nodes(self.values.shape[2])
        n = self.values.shape[0]
        out = np.empty((x.size, n, n))
        for a in range(n):
            for b in range(n):
                out[:, a, b] = np.interp(x, nodes, self.values[a, b])
        return out


@dataclass(frozen=True)
class HyperbolicSystem:
    speeds: SpeedProfile
    coupling: CouplingField
    B: np.ndarray

    def __post_init__(self):
        B = np.array(self.B, dtype=float)
        if B.ndim == 1:
            B = B.reshape(1, -1) if self.speeds.k == 1 else B.reshape(-1, 1)
        B.setflags(write=False)
        object.__setattr__(self, "B", B)

    @property
    def n(self):
        return self.speeds.n

    @property
    def k(self):
        return self.speeds.k

    @property
    def m(self):
        return self.speeds.m

    @property
    def form(self):
        return self.coupling.form

    def replace(self, **changes):
        kw = dict(speeds=self.speeds, coupling=self.coupling, B=self.B)
        kw.update(changes)
        return HyperbolicSystem(**kw)


@dataclass(frozen=True)
class TimeReport:
    tau: np.ndarray
    t_opt: float
    russell_time: float


# ---------------------------------------------------------------------------
# times


def tau(speeds: SpeedProfile, i: int) -> float:
    """Travel time ``int_0^1 dx / lam_i(x)`` of 1-based component ``i``.

    Composite trapezoid rule on the sample grid of the component, which is
    exact for constant speeds.
    """
    v = speeds.component(i)
    if np.any(np.asarray(v) <= 0.0):
        raise ValueError(f"component {i} has a non-positive speed sample")
    if np.ndim(v) == 0:
        return 1.0 / v
    inv = 1.0 / v
    h = 1.0 / (v.size - 1)
    return float(h * (inv.sum() - 0.5 * (inv[0] + inv[-1])))


def taus(speeds: SpeedProfile) -> np.ndarray:
    return np.array([tau(speeds, i) for i in range(1, speeds.n + 1)])


def t_opt(speeds: SpeedProfile) -> TimeReport:
    t = taus(speeds)
    k, m = speeds.k, speeds.m
    if m >= k:
        terms = [t[i] + t[m + i] for i in range(k)] + [t[k]]
    else:
        terms = [t[k - m + j] + t[k + j] for j in range(m)]
    return TimeReport(tau=t, t_opt=float(max(terms)), russell_time=float(t[k - 1] + t[k]))


# ---------------------------------------------------------------------------
# boundary-matrix classes


def trailing_minor(B, i):
    """Scaled determinant of the trailing ``i x i`` block of ``B``.

    The block is divided by its largest absolute entry first, so the value
    is comparable against a fixed tolerance.
    """
    B = np.asarray(B, dtype=float)
    block = B[B.shape[0] - i:, B.shape[1] - i:]
    scale = np.max(np.abs(block))
    if scale == 0.0:
        return 0.0
    return float(np.linalg.det(block / scale))


def singular_trailing_minors(B, upto, det_tol=DET_TOL):
    """Orders ``i <= upto`` whose trailing ``i x i`` block is singular."""
    return [i for i in range(1, upto + 1) if abs(trailing_minor(B, i)) <= det_tol]


def _check_shape(B, k, m):
    B = np.asarray(B, dtype=float)
    if B.shape != (k, m):
        raise ValueError(f"B has shape {B.shape}, expected ({k}, {m})")
    return B


def in_class_B(B, k, m, det_tol=DET_TOL) -> bool:
    B = _check_shape(B, k, m)
    return not singular_trailing_minors(B, min(k, m - 1), det_tol)


def in_class_Be(B, k, m, det_tol=DET_TOL) -> bool:
    if m < k:
        raise ValueError(f"class B_e needs m >= k, got k={k}, m={m}")
    B = _check_shape(B, k, m)
    return not singular_trailing_minors(B, k, det_tol)


# ---------------------------------------------------------------------------
# reductions


@dataclass(frozen=True)
class ReversedSystem:
    """Outcome of the time-reversal reduction for ``m == k``.

    ``row_ops`` are the elementary lower-triangular matrices ``T_1..T_N``
    with ``T_N ... T_1 B_tilde = upper``.
    """

    system: HyperbolicSystem
    B_tilde: np.ndarray
    row_ops: list = field(default_factory=list)
    upper: np.ndarray | None = None
    lower: np.ndarray | None = None
    elimination_ok: bool = False
    in_class_B: bool = False


def eliminate(M, det_tol=DET_TOL):
    """Gaussian elimination without pivoting.

    Returns ``(row_ops, U)`` where each row op adds a multiple of row ``q``
    to a row ``p > q``; ``None`` if a pivot vanishes.
    """
    U = np.array(M, dtype=float)
    k = U.shape[0]
    scale = max(np.max(np.abs(U)), 1.0)
    ops = []
    for q in range(k):
        if abs(U[q, q]) <= det_tol * scale:
            return None
        for p in range(q + 1, k):
            c = -U[p, q] / U[q, q]
            if c == 0.0:
                continue
            T = np.eye(k)
            T[p, q] = c
            ops.append(T)
            U = T @ U
    return ops, U


def time_reverse_reduction(system: HyperbolicSystem, det_tol=DET_TOL) -> ReversedSystem:
    """Reverse time to turn exact control of ``w`` into null control.

    With ``w~(t, x) = w(T - t, x)`` both families swap roles. Listing the old
    plus family in reverse order as the new minus family (and vice versa)
    keeps the speed ordering, which amounts to reversing all ``n`` indices.
    The boundary law becomes ``w~_-(t, 0) = B~^{-1} w~_+(t, 0)`` with
    ``B~[i, j] = B[k-1-i, k-1-j]`` (0-based; both index orders reversed).
    """
    k, m = system.k, system.m
    if k != m:
        raise ValueError(f"time reversal needs m == k, got k={k}, m={m}")
    if system.form == "u" and not system.coupling.is_zero:
        raise ValueError("time reversal of a u-form system needs S == 0")
    B_t = system.B[::-1, ::-1].copy()
    scale = np.max(np.abs(B_t))
    if scale == 0.0 or abs(np.linalg.det(B_t / scale)) <= det_tol:
        raise ValueError("B~ is singular")

    elim = eliminate(B_t, det_tol)
    if elim is None:
        inv = np.linalg.inv(B_t)
        ops, U, L, ok = [], None, None, False
    else:
        ops, U = elim
        L = np.eye(k)
        for T in ops:
            L = T @ L
        inv = np.linalg.solve(U, L)
        ok = True

    speeds = SpeedProfile(tuple(reversed(system.speeds.values)), k)
    cv = system.coupling.values
    coupling = CouplingField("w", -cv[::-1, ::-1].copy())
    reversed_sys = HyperbolicSystem(speeds, coupling, inv)
    return ReversedSystem(
        system=reversed_sys,
        B_tilde=B_t,
        row_ops=ops,
        upper=U,
        lower=L,
        elimination_ok=ok,
        in_class_B=in_class_B(inv, k, k, det_tol),
    )


def augment_system(system: HyperbolicSystem, eps: float) -> HyperbolicSystem:
    """Pad a system with ``m - k`` fast minus components to make it square.

    Added speeds are ``(m - k + 1 - j) / eps`` for ``j = 1..m-k``; they head
    the minus family. Coupling is zero-padded and the boundary matrix becomes
    ``[[I, 0], [B]]`` of size ``m x m``.
    """
    k, m = system.k, system.m
    if m <= k:
        raise ValueError(f"augmentation needs m > k, got k={k}, m={m}")
    if not eps > 0:
        raise ValueError("eps must be positive")
    extra = m - k
    added = tuple((1 + m - k - j) / eps for j in range(1, extra + 1))
    fastest = float(np.max(system.speeds.values[0]))
    if added[-1] <= fastest + SPEED_GAP:
        raise ValueError(
            f"eps={eps} too large: added speed {added[-1]:g} does not exceed "
            f"max lam_1 = {fastest:g}"
        )
    speeds = SpeedProfile(added + system.speeds.values, m)

    cv = system.coupling.values
    n_hat = 2 * m
    padded = np.zeros((n_hat, n_hat) + cv.shape[2:])
    padded[extra:, extra:] = cv
    coupling = CouplingField(system.form, padded)

    B_hat = np.zeros((m, m))
    B_hat[:extra, :extra] = np.eye(extra)
    B_hat[extra:, :] = system.B
    return HyperbolicSystem(speeds, coupling, B_hat)


# ---------------------------------------------------------------------------
# validation


def validate(
    system,
    gap=SPEED_GAP,
    lipschitz_max=LIPSCHITZ_MAX,
    coupling_max=COUPLING_MAX,
) -> list[str]:
    """Violated invariants of ``system`` as readable strings; never raises."""
    out = []
    try:
        sp = system.speeds
        n, k = sp.n, sp.k
        m = n - k
    except Exception as exc:  # noqa: BLE001
        return [f"malformed system: {exc}"]
    if k < 1 or m < 1:
        out.append(f"dimension mismatch: need k >= 1 and m >= 1 (n={n}, k={k}, m={m})")
        return out

    sizes = {np.size(v) for v in sp.values if np.ndim(v) > 0}
    npts = max(sizes) if sizes else 2
    x = _sample_nodes(max(npts, 2))
    try:
        lam = sp.at(x)
    except Exception as exc:  # noqa: BLE001
        return out + [f"malformed speeds: {exc}"]
    if not np.all(np.isfinite(lam)):
        out.append("non-finite speed sample")
        return out
    if np.any(lam <= 0):
        out.append("non-positive speed sample")
    for v in sp.values:
        if np.ndim(v) > 0 and np.size(v) < 2:
            out.append("sampled speed needs at least 2 samples")
    if k > 1 and np.any(lam[:k - 1] - lam[1:k] <= gap):
        out.append("strict ordering violated in minus family (need lam_1 > ... > lam_k)")
    if m > 1 and np.any(lam[k + 1:] - lam[k:-1] <= gap):
        out.append("strict ordering violated in plus family (need lam_{k+1} < ... < lam_n)")
    for i, v in enumerate(sp.values, start=1):
        if np.ndim(v) > 0 and np.size(v) > 1:
            slope = np.max(np.abs(np.diff(v))) * (np.size(v) - 1)
            if slope > lipschitz_max:
                out.append(f"Lipschitz bound exceeded for component {i} ({slope:g} > {lipschitz_max:g})")

    cp = system.coupling
    if cp.form not in ("w", "u"):
        out.append(f"unknown coupling form {cp.form!r}")
    cv = np.asarray(cp.values)
    if cv.ndim not in (2, 3) or cv.shape[:2] != (n, n):
        out.append(f"dimension mismatch: coupling shape {cv.shape[:2]} != ({n}, {n})")
    else:
        if not np.all(np.isfinite(cv)):
            out.append("non-finite coupling entry")
        elif np.max(np.abs(cv), initial=0.0) > coupling_max:
            out.append(f"coupling entry exceeds bound {coupling_max:g}")
        if cp.form == "u":
            if np.any(cv[:, :k]):
                out.append("structural zero violated: first k columns of S must vanish")
            spp = cv[k:, k:]
            for p in range(m):
                for q in range(p + 1):
                    if np.any(spp[p, q]):
                        out.append(
                            f"structural zero violated: (S++)_{p + 1}{q + 1} must be 0 for q <= p"
                        )
    B = np.asarray(system.B)
    if B.shape != (k, m):
        out.append(f"dimension mismatch: B has shape {B.shape}, expected ({k}, {m})")
    elif not np.all(np.isfinite(B)):
        out.append("non-finite entry in B")
    return out


def check(system):
    diags = validate(system)
    if diags:
        raise InvalidSystemError(diags)
    return system


def make_system(speeds: Sequence, k: int, B, coupling=None, form="u") -> HyperbolicSystem:
    """Convenience constructor from plain Python data."""
    sp = SpeedProfile(tuple(speeds), k)
    if coupling is None:
        cf = CouplingField.zero(sp.n, form)
    else:
        cf = CouplingField(form, np.asarray(coupling, dtype=float))
    return HyperbolicSystem(sp, cf, np.asarray(B, dtype=float).reshape(k, sp.n - k))
