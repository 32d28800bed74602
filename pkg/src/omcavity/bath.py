"""
Hot-bath inference
==================

Power-law fits of sweep data (occupancy and linewidth versus photon number),
the two-branch linewidth decomposition, and the ballistic thermal-conductance
scaling that links absorbed power, bath temperature and geometry.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, least_squares, minimize_scalar

from . import csvio
from .errors import FitError, ValidationError
from .model import HotBathModel, branch_crossover, to_hz


@dataclass(frozen=True)
class PowerLawFit:
    """``y = offset + amplitude * x**exponent``.

    ``covariance`` is ordered ``(amplitude, exponent)`` or
    ``(amplitude, exponent, offset)`` when the offset was fitted.
    """

    amplitude: float
    exponent: float
    offset: float = 0.0
    residual_norm: float = 0.0
    covariance: np.ndarray = field(default_factory=lambda: np.zeros((2, 2)), repr=False)
    n_points: int = 0
    n_iter: int = 0
    with_offset: bool = False

    def __call__(self, x):
        return self.offset + self.amplitude * np.power(np.asarray(x, dtype=float), self.exponent)

    @property
    def stderr(self):
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))


def _prepare(x, y, sigma):
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise ValidationError("x and y must have the same length")
    if x.size < 3:
        raise ValidationError("need at least 3 points")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValidationError("x and y must be finite")
    if np.any(x <= 0):
        raise ValidationError("all x must be > 0")
    if np.ptp(np.log(x)) == 0:
        raise ValidationError("degenerate input: all x equal")
    if sigma is not None:
        sigma = np.asarray(sigma, dtype=float).ravel()
        if sigma.shape != y.shape or np.any(~(sigma > 0)):
            raise ValidationError("sigma must be positive and match y")
    return x, y, sigma


def _loglog_fit(x, y, sigma):
    if np.any(y <= 0):
        raise ValidationError("y must be > 0 for a pure power law")
    lx, ly = np.log(x), np.log(y)
    w = np.ones_like(y) if sigma is None else y / sigma  # 1 / sigma_log
    A = np.column_stack([np.ones_like(lx), lx]) * w[:, None]
    coef, *_ = np.linalg.lstsq(A, ly * w, rcond=None)
    r = ly * w - A @ coef
    dof = max(x.size - 2, 1)
    cov_log = (r @ r / dof) * np.linalg.inv(A.T @ A)
    amp = math.exp(coef[0])
    jac = np.array([[amp, 0.0], [0.0, 1.0]])
    cov = jac @ cov_log @ jac.T
    return amp, float(coef[1]), cov


def _profile(x, y, w, q):
    """Best ``(c, B)`` and weighted SSR of ``y = c + B x**q`` for each exponent in ``q``."""
    q = np.atleast_1d(q)
    basis = np.power(x[:, None], q[None, :])  # (n, G)
    w2 = w**2
    s0 = w2.sum()
    s1 = (w2[:, None] * basis).sum(0)
    s11 = (w2[:, None] * basis**2).sum(0)
    sy = (w2 * y).sum()
    s1y = (w2[:, None] * basis * y[:, None]).sum(0)
    det = s0 * s11 - s1**2
    with np.errstate(divide="ignore", invalid="ignore"):
        c = (s11 * sy - s1 * s1y) / det
        b = (s0 * s1y - s1 * sy) / det
        resid = (y[:, None] - c[None, :] - b[None, :] * basis) * w[:, None]
        ssr = (resid**2).sum(0)
    ssr = np.where(np.isfinite(ssr), ssr, np.inf)
    return c, b, ssr


_Q_GRID = np.concatenate([np.linspace(-2.0, -0.01, 200), np.linspace(0.01, 3.0, 300)])


def _offset_start(x, y, w):
    """Variable-projection estimate of ``(B, q, c)`` and its weighted SSR.

    ``c`` and ``B`` are linear given ``q``, so the SSR profile over ``q`` is
    scanned on a grid and its minimum polished by a bounded scalar search.
    """
    x0 = math.exp(np.mean(np.log(x)))
    xs = x / x0
    _, _, ssr = _profile(xs, y, w, _Q_GRID)
    i = int(np.argmin(ssr))
    lo, hi = _Q_GRID[max(i - 1, 0)], _Q_GRID[min(i + 1, _Q_GRID.size - 1)]
    if lo < 0 < hi:  # never straddle the q = 0 singularity
        lo, hi = (lo, -1e-6) if _Q_GRID[i] < 0 else (1e-6, hi)
    q = _Q_GRID[i]
    if hi > lo:
        res = minimize_scalar(lambda t: _profile(xs, y, w, t)[2][0], bounds=(lo, hi),
                              method="bounded", options={"xatol": 1e-12})
        if res.fun <= ssr[i]:
            q = float(res.x)
    c, b, s = _profile(xs, y, w, q)
    edge = i in (0, _Q_GRID.size - 1)
    return np.array([b[0] * x0 ** (-q), q, c[0]]), float(s[0]), edge


def _offset_fit(x, y, sigma, max_nfev=2000):
    w = np.ones_like(y) if sigma is None else 1.0 / sigma
    x0 = math.exp(np.mean(np.log(x)))
    xs = x / x0
    p_vp, ssr_vp, edge = _offset_start(x, y, w)
    start = np.array([p_vp[0] * x0 ** p_vp[1], p_vp[1], p_vp[2]])
    trace = []

    def resid(p):
        trace.append(p.copy())
        return (p[2] + p[0] * np.power(xs, p[1]) - y) * w

    res = least_squares(resid, start, method="lm", x_scale="jac", xtol=1e-12, ftol=1e-12,
                        gtol=1e-12, max_nfev=max_nfev)
    if res.status > 0 and np.all(np.isfinite(res.x)) and 2 * res.cost <= ssr_vp * (1 + 1e-12):
        pb = res.x
        nfev = res.nfev
    elif not edge:
        pb, nfev = start, res.nfev  # the projected minimum is already the LS solution
    else:
        raise FitError(f"offset power-law fit did not converge: {res.message}",
                       {"trace": np.array(trace), "start": p_vp, "message": res.message})
    if edge:
        raise FitError("exponent ran to the edge of the search range",
                       {"trace": np.array(trace), "start": p_vp, "message": "edge"})
    bs, q, c = pb
    J = np.column_stack([xs**q, bs * xs**q * np.log(xs), np.ones_like(xs)]) * w[:, None]
    r = resid(pb)
    dof = max(x.size - 3, 1)
    try:
        cov_s = (r @ r / dof) * np.linalg.inv(J.T @ J)
    except np.linalg.LinAlgError:
        cov_s = np.full((3, 3), np.inf)
    # back to unscaled amplitude B = bs * x0**-q
    b = bs * x0 ** (-q)
    T = np.array([[x0 ** (-q), -b * math.log(x0), 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    return np.array([b, q, c]), T @ cov_s @ T.T, nfev


def fit_power_law(x, y, with_offset=False, sigma=None) -> PowerLawFit:
    """Least-squares power-law fit.

    Without an offset the fit is linear in log-log space (``sigma`` is
    propagated as ``sigma / y``). With ``with_offset`` the model
    ``c + B x**q`` is started from a variable-projection scan over ``q`` and
    refined by Levenberg-Marquardt in linear space.

    Raises
    ------
    ValidationError
        Fewer than 3 points, non-positive ``x``, all ``x`` equal, or ``y <= 0``
        for the pure power law.
    FitError
        The offset fit did not converge; ``diagnostics["trace"]`` holds every
        parameter vector that was evaluated.
    """
    x, y, sigma = _prepare(x, y, sigma)
    if not with_offset:
        amp, p, cov = _loglog_fit(x, y, sigma)
        r = y - amp * np.power(x, p)
        return PowerLawFit(amp, p, 0.0, float(np.linalg.norm(r)), cov, x.size, 1, False)
    if x.size < 3:
        raise ValidationError("need at least 3 points for an offset fit")
    params, cov, nfev = _offset_fit(x, y, sigma)
    b, q, c = params
    r = y - (c + b * np.power(x, q))
    return PowerLawFit(float(b), float(q), float(c), float(np.linalg.norm(r)), cov, x.size, nfev, True)


_SPLIT_Q = np.linspace(0.02, 1.5, 75)


def _split_ssr(x, y, w):
    """Coarse two-segment SSR for every split index ``k`` (low = ``x[:k]``).

    Each segment gets its own profiled ``c + B x**q`` fit; all splits are scored
    at once from prefix and suffix sums. Entries that cannot be scored are inf.
    """
    xs = x / math.exp(np.mean(np.log(x)))
    bq = np.power(xs[:, None], _SPLIT_Q[None, :])
    w2 = (w**2)[:, None]
    yy = y[:, None]
    terms = [np.broadcast_to(t, bq.shape)
             for t in (w2, w2 * bq, w2 * bq**2, w2 * yy, w2 * bq * yy, w2 * yy**2)]
    zero = np.zeros((1, _SPLIT_Q.size))
    pre = [np.concatenate([zero, np.cumsum(t, axis=0)]) for t in terms]
    tot = [p[-1] for p in pre]
    suf = [t[None, :] - p for t, p in zip(tot, pre)]

    def ssr(s0, s1, s11, sy, s1y, syy):
        det = s0 * s11 - s1**2
        with np.errstate(divide="ignore", invalid="ignore"):
            c = (s11 * sy - s1 * s1y) / det
            b = (s0 * s1y - s1 * sy) / det
            r = syy - c * sy - b * s1y
        r = np.where(np.isfinite(r) & (det > 0), np.maximum(r, 0.0), np.inf)
        return r.min(axis=1)

    return ssr(*pre) + ssr(*suf)


# --------------------------------------------------------------------------
# Two-branch linewidth decomposition
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PiecewiseLinewidthFit:
    """Result of :func:`fit_piecewise_linewidth` (rates in rad/s).

    ``low`` is ``gamma_phi + B1 x**q1`` (its offset is the fitted dephasing),
    ``high`` is ``c2 + B2 x**q2``. Either is ``None`` when the data do not reach
    that regime.
    """

    gamma_phi: float
    low: PowerLawFit | None
    high: PowerLawFit | None
    crossover: float
    gamma_phi_upper_bound: bool = False
    decomposition: str = "gamma_p = total - gamma_phi; high offset c2 includes gamma_phi"

    def total(self, x):
        x = np.asarray(x, dtype=float)
        if self.low is None:
            return np.full_like(x, self.gamma_phi)
        if self.high is None:
            return self.low(x)
        return np.where(x < self.crossover, self.low(x), self.high(x))

    def to_model(self, occupancy: PowerLawFit | None = None, **kw) -> HotBathModel:
        """Hot-bath laws built from this fit (and an occupancy fit if given)."""
        if self.low is None:
            raise ValidationError("no low-power branch was fitted")
        args = dict(
            damp_low_amplitude=self.low.amplitude,
            damp_low_exponent=self.low.exponent,
            gamma_phi=self.gamma_phi,
            damp_high_offset=self.high.offset if self.high else None,
            damp_high_amplitude=self.high.amplitude if self.high else None,
            damp_high_exponent=self.high.exponent if self.high else None,
        )
        if occupancy is not None:
            args.update(occ_amplitude=occupancy.amplitude, occ_exponent=occupancy.exponent)
        args.update(kw)
        return HotBathModel(**args)


def fit_piecewise_linewidth(n_c, gamma, sigma=None, *, plateau_max=10.0, min_points=3) -> PiecewiseLinewidthFit:
    """Fit the saturated / low-power / high-power linewidth law.

    The data are split once (segmented regression): the low segment,
    plateau included, is fitted as ``gamma_phi + B1 x**q1`` and the high
    segment as ``c2 + B2 x**q2``. The split minimizing the total weighted SSR is
    kept, and the reported crossover is the intersection of the two fitted
    branches, so the composite curve is continuous.

    Points with ``n_c <= plateau_max`` count as the saturated plateau. With
    fewer than three of them the dephasing cannot be pinned down; the smallest
    observed linewidth is returned as an upper bound and a warning is issued.

    Without ``sigma`` every point is weighted by its own magnitude (uniform
    fractional error), which suits sweeps spanning several decades.
    """
    x, y, sigma = _prepare(n_c, gamma, sigma)
    if sigma is None:
        if np.any(y <= 0):
            raise ValidationError("linewidths must be > 0 for relative weighting")
        sigma = y.copy()
    order = np.argsort(x, kind="stable")
    x, y, sigma = x[order], y[order], sigma[order]
    w = 1.0 / sigma

    n_plateau = int(np.sum(x <= plateau_max))
    n_rest = x.size - n_plateau
    if n_rest < 2 * min_points:
        # nothing but saturation: dephasing is the weighted mean
        gphi = float(np.sum(y * w**2) / np.sum(w**2))
        return PiecewiseLinewidthFit(gphi, None, None, math.inf, n_plateau < min_points)

    lo_k = max(min_points, n_plateau + min_points) if n_plateau >= min_points else min_points
    ks = np.arange(lo_k, x.size - min_points + 1)
    if ks.size == 0:
        raise FitError("not enough points to fit both power-law branches", {"n_points": x.size})
    coarse = _split_ssr(x, y, w)[ks]
    # the cumulative-sum scan is only a screen; rescore the leading splits exactly
    cand = ks[np.argsort(coarse, kind="stable")[:8]]
    scores = []
    for k in cand:
        lo_fit, hi_fit = _offset_start(x[:k], y[:k], w[:k]), _offset_start(x[k:], y[k:], w[k:])
        ok = not (lo_fit[2] or hi_fit[2])
        scores.append(lo_fit[1] + hi_fit[1] if ok else math.inf)
    if not np.isfinite(min(scores)):
        raise FitError("no split gives two well-posed power-law branches",
                       {"candidates": cand, "n_points": x.size})
    k = int(cand[int(np.argmin(scores))])
    low = fit_power_law(x[:k], y[:k], with_offset=True, sigma=sigma[:k])
    high = fit_power_law(x[k:], y[k:], with_offset=True, sigma=sigma[k:])
    cross = branch_crossover(low, high)

    gphi, upper = low.offset, False
    if n_plateau < min_points:
        gphi, upper = float(np.min(y)), True
        warnings.warn("fewer than 3 plateau points: dephasing reported as an upper bound",
                      RuntimeWarning, stacklevel=2)
    return PiecewiseLinewidthFit(gphi, low, high, cross, upper)


# --------------------------------------------------------------------------
# Thermal conductance scaling
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ConductanceModel:
    """Ballistic conductance ``C_th = epsilon * T**alpha``; a fraction ``eta_abs``
    of the input power is absorbed into the hot bath."""

    epsilon: float
    alpha: float = 2.3
    eta_abs: float = 1.0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValidationError("epsilon must be > 0")
        if not self.alpha > 0:
            raise ValidationError("alpha must be > 0")
        if not 0 < self.eta_abs <= 1:
            raise ValidationError("eta_abs must lie in (0, 1]")

    @property
    def occupancy_exponent(self):
        """Exponent of ``n_p`` versus absorbed power in the high-temperature limit."""
        return 1.0 / (self.alpha + 1.0)


def absorbed_power(model: ConductanceModel, t_p, t_0=0.0):
    """Heat flow out of the hot bath, ``epsilon T_p**alpha (T_p - T_0)``.

    Uses ``Delta T ~ T_p`` when ``T_p > 5 T_0`` and the exact difference otherwise.
    """
    t_p = float(t_p)
    if t_p < 0:
        raise ValidationError("temperature must be >= 0")
    if t_0 <= 0 or t_p > 5 * t_0:
        return model.epsilon * t_p ** (model.alpha + 1.0)
    return model.epsilon * t_p**model.alpha * (t_p - t_0)


def bath_temperature_from_power(model: ConductanceModel, p_in, t_0=0.0):
    """Hot-bath temperature (K) for input power ``p_in`` (W).

    ``T_p = (eta_abs P_in / epsilon) ** (1 / (alpha + 1))`` in the ``T_p >> T_0``
    regime; below ``5 T_0`` the exact ``Delta T = T_p - T_0`` balance is solved.
    """
    if model.epsilon == 0:
        raise ValidationError("epsilon must be > 0")
    if p_in < 0 or not math.isfinite(p_in):
        raise ValidationError("p_in must be finite and >= 0")
    p_th = model.eta_abs * p_in
    t_p = (p_th / model.epsilon) ** (1.0 / (model.alpha + 1.0))
    if t_0 <= 0 or t_p > 5 * t_0:
        return t_p
    if p_th == 0:
        return float(t_0)
    f = lambda t: model.epsilon * t**model.alpha * (t - t_0) - p_th  # noqa: E731
    hi = max(2 * t_0, t_p + t_0)
    while f(hi) < 0:
        hi *= 2
    return brentq(f, t_0, hi, xtol=1e-15, rtol=1e-14)


def occupancy_ratio_1d_2d(epsilon_ratio, alpha_0, omega_ratio):
    """Hot-bath occupancy ratio of a 1D beam to a 2D slab cavity at equal
    absorbed power.

    ``n_1D / n_2D = omega_ratio * epsilon_ratio ** (1 / (alpha_0 + 1))`` with
    ``epsilon_ratio = eps_2D / eps_1D`` and ``omega_ratio = omega_2D / omega_1D``.
    """
    for name, v in (("epsilon_ratio", epsilon_ratio), ("alpha_0", alpha_0), ("omega_ratio", omega_ratio)):
        if not v > 0:
            raise ValidationError(f"{name} must be > 0")
    return omega_ratio * epsilon_ratio ** (1.0 / (alpha_0 + 1.0))


# --------------------------------------------------------------------------
# CSV interface
# --------------------------------------------------------------------------

SWEEP_COLUMNS = ("n_c", "value")


def read_sweep(path):
    """Read a sweep CSV with columns ``n_c, value`` and optional ``sigma``."""
    cols, _ = csvio.read_csv(path)
    data = csvio.float_columns(cols, SWEEP_COLUMNS, ("sigma",))
    return data["n_c"], data["value"], data.get("sigma")


def write_sweep(path, n_c, value, sigma=None, comments=()):
    if sigma is None:
        return csvio.write_csv(path, ["n_c", "value"], zip(n_c, value), comments)
    return csvio.write_csv(path, ["n_c", "value", "sigma"], zip(n_c, value, sigma), comments)


def fit_report_rows(fit, rate_unit_hz=False):
    """``(parameter, value, stderr, unit)`` rows for a fit result.

    With ``rate_unit_hz`` offsets and amplitudes of linewidth fits are divided
    by ``2 pi`` and labeled ``Hz``.
    """
    conv = to_hz if rate_unit_hz else (lambda v: v)
    unit = "Hz" if rate_unit_hz else "rad/s"
    rows = []
    if isinstance(fit, PowerLawFit):
        se = fit.stderr
        rows += [("amplitude", fit.amplitude, se[0], "")]
        rows += [("exponent", fit.exponent, se[1], "")]
        rows += [("offset", fit.offset, se[2] if fit.with_offset else 0.0, "")]
        rows += [("residual_norm", fit.residual_norm, 0.0, "")]
        return rows
    rows.append(("gamma_phi", conv(fit.gamma_phi), math.nan, unit))
    rows.append(("gamma_phi_upper_bound", float(fit.gamma_phi_upper_bound), 0.0, "flag"))
    for tag, br in (("low", fit.low), ("high", fit.high)):
        if br is None:
            continue
        se = br.stderr
        rows.append((f"{tag}_amplitude", conv(br.amplitude), conv(se[0]), unit))
        rows.append((f"{tag}_exponent", br.exponent, se[1], ""))
        rows.append((f"{tag}_offset", conv(br.offset), conv(se[2]), unit))
        rows.append((f"{tag}_residual_norm", conv(br.residual_norm), 0.0, unit))
    rows.append(("crossover", fit.crossover, math.nan, "photons"))
    return rows


def summary(fit, rate_unit_hz=False) -> str:
    lines = ["fit report"]
    for name, v, se, unit in fit_report_rows(fit, rate_unit_hz):
        err = "" if not math.isfinite(se) or se == 0 else f" +/- {se:.4g}"
        lines.append(f"  {name:24s} {v:.6g}{err} {unit}".rstrip())
    if isinstance(fit, PiecewiseLinewidthFit):
        lines.append(f"  decomposition: {fit.decomposition}")
    return "\n".join(lines)


def write_fit_report(path, fit, rate_unit_hz=False, comments=()):
    rows = fit_report_rows(fit, rate_unit_hz)
    return csvio.write_csv(path, ["parameter", "value", "stderr", "unit"], rows,
                           list(comments) + summary(fit, rate_unit_hz).splitlines())
