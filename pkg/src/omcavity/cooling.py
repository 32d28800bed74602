"""
Cooling curves and cooperativity maps
=====================================

Forward model composition: for a red-sideband pump (``Delta = omega_m``) each
intracavity photon number ``n_c`` fixes the on-chip power, the waveguide
heating ``n_wg = beta P_in``, the hot bath, the optomechanical damping and
finally ``<n>`` and ``C_eff``.

``P_in`` is the power already coupled into the on-chip waveguide, so the
fiber-to-chip efficiency never enters these curves.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import contourpy
import numpy as np
from scipy.optimize import brentq

from . import csvio
from .errors import ValidationError
from .model import (
    TWO_PI,
    CoolingResult,
    Device,
    HotBathModel,
    cooled_occupancy,
    hot_bath,
    input_power_for_photons,
    parametric_rate,
)

CURVE_COLUMNS = ("n_c", "p_in_w", "n_wg", "n_p", "gamma_p_hz", "gamma_om_hz", "n_avg", "c", "c_eff")
MAP_COLUMNS = ("q_c", "n_c", "n_avg", "c_eff")
CONTOUR_COLUMNS = ("level", "line", "n_c", "q_c")


def _grid(values, name):
    g = np.atleast_1d(np.asarray(values, dtype=float))
    if g.ndim != 1 or g.size == 0:
        raise ValidationError(f"{name} grid must be a non-empty 1D sequence")
    if not np.all(np.isfinite(g)) or np.any(g <= 0):
        raise ValidationError(f"{name} grid must be finite and > 0")
    if np.any(np.diff(g) <= 0):
        raise ValidationError(f"{name} grid must be strictly increasing")
    return g


@dataclass(frozen=True)
class SweepSpec:
    """Photon-number sweep (and optional loaded-Q grid).

    ``detuning=None`` pumps on the red sideband, ``Delta = omega_m``. ``beta``
    (photons per W) overrides the bath model's waveguide heating when given.
    """

    n_c: np.ndarray
    q_c: np.ndarray | None = None
    detuning: float | None = None
    beta: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "n_c", _grid(self.n_c, "n_c"))
        if self.q_c is not None:
            object.__setattr__(self, "q_c", _grid(self.q_c, "q_c"))
        if self.beta is not None and not (math.isfinite(self.beta) and self.beta >= 0):
            raise ValidationError("beta must be finite and >= 0")

    @classmethod
    def log(cls, n_min, n_max, n_points, **kw):
        if not 0 < n_min < n_max or n_points < 2:
            raise ValidationError("need 0 < n_min < n_max and at least 2 points")
        return cls(np.geomspace(n_min, n_max, int(n_points)), **kw)


def _bath_model(model: HotBathModel, beta):
    return model if beta is None else model.with_beta(beta)


def cooling_point(device: Device, model: HotBathModel, n_c, detuning=None) -> CoolingResult:
    """Cooled state at one photon number (``detuning=None`` means ``omega_m``)."""
    delta = device.mode.omega_m if detuning is None else detuning
    p_in = float(input_power_for_photons(device.cavity, delta, n_c))
    bath = hot_bath(model, n_c, p_in, mode=device.mode)
    gamma_om = float(parametric_rate(device.mode, device.cavity, n_c))
    return cooled_occupancy(bath, gamma_om, n_c=float(n_c), n_wg=model.beta * p_in, p_in=p_in)


def _map_points(fn, items, threads):
    if threads and threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=int(threads)) as ex:
            return list(ex.map(fn, items))
    return [fn(i) for i in items]


def cooling_curve(device: Device, model: HotBathModel, sweep: SweepSpec, *, threads=1):
    """:class:`CoolingResult` for each ``n_c`` of the sweep, in grid order."""
    m = _bath_model(model, sweep.beta)
    return _map_points(lambda nc: cooling_point(device, m, nc, sweep.detuning), list(sweep.n_c), threads)


@dataclass(frozen=True)
class CeffCurve:
    """Quantum cooperativity along a sweep.

    ``crossing`` is the first ``n_c`` where ``C_eff`` rises through 1, refined
    between the bracketing grid points (nan if it never does);
    ``first_above`` is the first grid point with ``C_eff > 1``.
    """

    n_c: np.ndarray
    c_eff: np.ndarray
    crossing: float
    first_above: float
    peak: float
    peak_n_c: float
    results: list = field(repr=False, default_factory=list)


def ceff_curve(device: Device, model: HotBathModel, sweep: SweepSpec, *, threads=1) -> CeffCurve:
    res = cooling_curve(device, model, sweep, threads=threads)
    c = np.array([r.c_eff for r in res])
    nc = sweep.n_c
    above = np.flatnonzero(c > 1.0)
    crossing = first = math.nan
    if above.size:
        k = int(above[0])
        first = float(nc[k])
        if k == 0:
            crossing = first
        else:
            m = _bath_model(model, sweep.beta)
            f = lambda lx: cooling_point(device, m, 10.0**lx, sweep.detuning).c_eff - 1.0  # noqa: E731
            crossing = 10.0 ** brentq(f, math.log10(nc[k - 1]), math.log10(nc[k]), xtol=1e-12)
    j = int(np.argmax(c))
    return CeffCurve(nc, c, crossing, first, float(c[j]), float(nc[j]), res)


@dataclass(frozen=True)
class CeffMap:
    """``<n>`` and ``C_eff`` on the ``(q_c, n_c)`` grid; arrays are indexed
    ``[i_q, i_n]``. ``contours`` maps each level to a list of ``(k, 2)``
    polylines of ``(n_c, q_c)`` points."""

    q_c: np.ndarray
    n_c: np.ndarray
    n_avg: np.ndarray
    c_eff: np.ndarray
    beta: float
    contours: dict


def ceff_map(device: Device, model: HotBathModel, n_c, q_c, beta=0.0, *,
             levels=(0.5, 1.0, 2.0, 5.0), threads=1) -> CeffMap:
    """Cooled occupancy and cooperativity over loaded Q and photon number.

    Varying ``Q_c`` rescales ``kappa`` at fixed ``omega_c``, ``eta_kappa`` and
    ``g0``. Iso-``C_eff`` lines are traced on ``log C_eff`` over the
    log-log grid, which keeps linear interpolation between nodes accurate.
    """
    nc = _grid(n_c, "n_c")
    qc = _grid(q_c, "q_c")
    m = _bath_model(model, beta)

    def row(q):
        dev = device.with_q(q)
        out = [cooling_point(dev, m, x) for x in nc]
        return [r.n_avg for r in out], [r.c_eff for r in out]

    rows = _map_points(row, list(qc), threads)
    n_avg = np.array([r[0] for r in rows])
    c_eff = np.array([r[1] for r in rows])
    return CeffMap(qc, nc, n_avg, c_eff, float(m.beta), iso_lines(nc, qc, c_eff, levels))


def iso_lines(n_c, q_c, c_eff, levels):
    """Contour polylines of ``c_eff[i_q, i_n]`` at each level, as ``(n_c, q_c)`` points."""
    out = {}
    if len(n_c) < 2 or len(q_c) < 2:
        return {float(lv): [] for lv in levels}
    with np.errstate(divide="ignore"):
        z = np.log(np.asarray(c_eff, dtype=float))
    gen = contourpy.contour_generator(np.log10(n_c), np.log10(q_c), z, line_type="Separate")
    for lv in levels:
        if not lv > 0:
            raise ValidationError("contour levels must be > 0")
        out[float(lv)] = [10.0 ** np.asarray(seg) for seg in gen.lines(math.log(lv))]
    return out


# --------------------------------------------------------------------------
# CSV
# --------------------------------------------------------------------------


def curve_rows(results):
    for r in results:
        yield (r.n_c, r.p_in, r.n_wg, r.n_p, r.gamma_p / TWO_PI, r.gamma_om / TWO_PI, r.n_avg, r.c, r.c_eff)


def write_curve(path, results, comments=()):
    return csvio.write_csv(path, CURVE_COLUMNS, curve_rows(results), comments)


def read_curve(path):
    """Columns of a curve CSV as float arrays (rates in Hz)."""
    cols, _ = csvio.read_csv(path)
    return csvio.float_columns(cols, CURVE_COLUMNS)


def map_rows(cmap: CeffMap):
    for i, q in enumerate(cmap.q_c):
        for j, x in enumerate(cmap.n_c):
            yield q, x, cmap.n_avg[i, j], cmap.c_eff[i, j]


def write_map(path, cmap: CeffMap, comments=()):
    return csvio.write_csv(path, MAP_COLUMNS, map_rows(cmap), comments)


def read_map(path):
    """Rebuild ``(q_c, n_c, n_avg, c_eff)`` grids from a map CSV."""
    cols, _ = csvio.read_csv(path)
    d = csvio.float_columns(cols, MAP_COLUMNS)
    qc, nc = np.unique(d["q_c"]), np.unique(d["n_c"])
    if qc.size * nc.size != d["q_c"].size:
        raise ValidationError("map CSV is not a full grid")
    shape = (qc.size, nc.size)
    return qc, nc, d["n_avg"].reshape(shape), d["c_eff"].reshape(shape)


def contour_rows(cmap: CeffMap):
    for lv, lines in cmap.contours.items():
        for k, seg in enumerate(lines):
            for x, q in seg:
                yield lv, k, x, q


def write_contours(path, cmap: CeffMap, comments=()):
    return csvio.write_csv(path, CONTOUR_COLUMNS, contour_rows(cmap), comments)
