"""Canonical systems and data profiles shared by the tests, studies and CLI."""

import re

import numpy as np

from .model import CouplingField, HyperbolicSystem, SpeedProfile

CALIBRATION_GRID = {"nx": 400, "cfl": 1.0}


def bump(x):
    """Full-width bump ``0.5 (1 - cos 2 pi x)``, zero at both ends."""
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * np.asarray(x, dtype=float)))


def local_bump(x, center, half_width):
    """Raised-cosine bump supported on ``|x - center| < half_width``."""
    x = np.asarray(x, dtype=float)
    s = (x - center) / half_width
    return np.where(np.abs(s) < 1.0, 0.5 * (1.0 + np.cos(np.pi * s)), 0.0)


_PROFILE = re.compile(r"^\s*bump\s*\(\s*([-+0-9.eE]+)\s*,\s*([-+0-9.eE]+)\s*\)\s*$")


def profile(spec, x):
    """Evaluate a profile given as a number, a sample list, ``"zero"``,
    ``"bump"`` or ``"bump(center, half_width)"``."""
    x = np.asarray(x, dtype=float)
    if isinstance(spec, str):
        s = spec.strip()
        if s == "zero":
            return np.zeros_like(x)
        if s == "bump":
            return bump(x)
        match = _PROFILE.match(s)
        if match:
            return local_bump(x, float(match.group(1)), float(match.group(2)))
        raise ValueError(f"unknown profile {spec!r}")
    arr = np.asarray(spec, dtype=float)
    if arr.ndim == 0:
        return np.full_like(x, float(arr))
    return np.interp(x, np.linspace(0.0, 1.0, arr.size), arr)


def state(specs, x):
    """Stack per-component profiles into an ``(n, len(x))`` array."""
    return np.stack([profile(s, x) for s in specs])


def calibration_system(s_minus_plus=None):
    """``n = 2``, ``k = m = 1``, unit speeds, ``B = [1]``, u-form ``S = 0``.

    ``s_minus_plus`` optionally sets the single admissible coupling entry
    ``S_{-+}`` (constant or samples on ``[0, 1]``).
    """
    speeds = SpeedProfile((1.0, 1.0), 1)
    S = np.zeros((2, 2))
    if s_minus_plus is not None:
        sv = np.asarray(s_minus_plus, dtype=float)
        if sv.ndim:
            S = np.zeros((2, 2, sv.size))
        S[0, 1] = sv
    return HyperbolicSystem(speeds, CouplingField("u", S), np.array([[1.0]]))


def calibration_initial(x):
    """Bump on the plus component, minus component at rest."""
    return state(["zero", "bump"], x)


def k1m2_system(B=(0.5, 1.0)):
    """``k = 1``, ``m = 2`` with speeds ``(1, 1, 2)``; default ``B`` is in class B_e."""
    speeds = SpeedProfile((1.0, 1.0, 2.0), 1)
    return HyperbolicSystem(speeds, CouplingField.zero(3, "u"), np.asarray(B, dtype=float).reshape(1, 2))
