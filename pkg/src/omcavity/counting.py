"""
Photon-counting simulation and estimators
=========================================

Sideband count rates, Poisson histograms of pulsed experiments, intra-pulse
occupancy dynamics, pulsed ringdown, and the estimators that invert them
(scattering-rate calibration, occupancy, intrinsic decay rate, base occupancy,
vacuum coupling rate from the back-action slope).

Rates are in rad/s except count rates, which are in counts per second.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq, least_squares, minimize_scalar
from scipy.stats import norm

from . import csvio
from .errors import FitError, ValidationError
from .model import (
    BathState,
    Device,
    HotBathModel,
    MechanicalMode,
    OpticalCavity,
    hot_bath,
    input_power_for_photons,
    parametric_rate,
    temperature_from_occupancy,
)

CASES = ("red", "blue", "resonant")
_CASE_ALIASES = {"red": "red", "+": "red", 1: "red", "blue": "blue", "-": "blue", -1: "blue",
                 "resonant": "resonant", "0": "resonant", 0: "resonant"}

# Gauss-Legendre nodes for per-bin rate integrals
_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


def detuning_case(case):
    """Normalize a detuning label to ``"red"`` (+w_m), ``"blue"`` (-w_m) or ``"resonant"``."""
    key = case.lower() if isinstance(case, str) else case
    try:
        return _CASE_ALIASES[key]
    except (KeyError, TypeError):
        raise ValidationError(f"invalid detuning case {case!r}; expected one of {CASES}") from None


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


# --------------------------------------------------------------------------
# Types
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DetectionChain:
    """Detection efficiency and background count rates.

    ``eta_det`` is the overall efficiency from chip to detector click (detector
    quantum efficiency folded in); ``eta_cpl`` the single-pass fiber-to-chip
    coupling.
    """

    eta_det: float
    dark_rate: float = 0.0
    pump_bleed_rate: float = 0.0
    eta_cpl: float = 0.6

    def __post_init__(self):
        if not 0 < self.eta_det <= 1:
            raise ValidationError("eta_det must lie in (0, 1]")
        if not 0 < self.eta_cpl <= 1:
            raise ValidationError("eta_cpl must lie in (0, 1]")
        if not (self.dark_rate >= 0 and self.pump_bleed_rate >= 0):
            raise ValidationError("background rates must be >= 0")

    @property
    def background(self):
        return self.dark_rate + self.pump_bleed_rate

    def efficiency(self, cavity: OpticalCavity):
        """Total sideband-photon detection efficiency ``eta_det eta_cpl eta_kappa``."""
        return self.eta_det * self.eta_cpl * cavity.eta_kappa


@dataclass(frozen=True)
class PulseSchedule:
    """Pulse train timing. Only whole counting bins inside the pulse are kept."""

    tau_pulse: float = 10e-6
    tau_off: float = 240e-6
    tau_bin: float = 25.6e-9
    n_pulses: int = 1

    def __post_init__(self):
        if not (self.tau_pulse > 0 and self.tau_bin > 0):
            raise ValidationError("tau_pulse and tau_bin must be > 0")
        if not self.tau_off >= 0:
            raise ValidationError("tau_off must be >= 0")
        if self.tau_bin > self.tau_pulse * (1 + 1e-12):
            raise ValidationError("tau_bin must not exceed tau_pulse")
        if int(self.n_pulses) != self.n_pulses or self.n_pulses < 1:
            raise ValidationError("n_pulses must be a positive integer")

    @property
    def tau_per(self):
        return self.tau_pulse + self.tau_off

    @property
    def n_bins(self):
        return max(int(math.floor(self.tau_pulse / self.tau_bin * (1 + 1e-12))), 1)

    @property
    def bin_edges(self):
        return np.arange(self.n_bins + 1) * self.tau_bin


@dataclass(frozen=True)
class BinnedCounts:
    """Counts per bin summed over ``n_pulses`` pulses.

    ``expected`` is the Poisson mean used to draw ``counts`` when produced by the
    simulator (``None`` for measured data).
    """

    counts: np.ndarray
    bin_start: np.ndarray
    tau_bin: float
    n_pulses: int
    integration_time: float
    expected: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if np.any(np.asarray(self.counts) < 0):
            raise ValidationError("counts must be >= 0")
        b = np.asarray(self.bin_start)
        if b.size > 1 and not np.allclose(np.diff(b), self.tau_bin, rtol=1e-9, atol=0):
            raise ValidationError("bins must be ordered with uniform width tau_bin")

    @property
    def exposure(self):
        """Accumulated time per bin (s)."""
        return self.n_pulses * self.tau_bin

    @property
    def rates(self):
        return np.asarray(self.counts, dtype=float) / self.exposure

    @property
    def rate_sigma(self):
        return np.sqrt(np.asarray(self.counts, dtype=float)) / self.exposure

    def merge(self, other: "BinnedCounts") -> "BinnedCounts":
        """Pool two histograms recorded with the same bins."""
        if not (np.array_equal(self.bin_start, other.bin_start) and self.tau_bin == other.tau_bin):
            raise ValidationError("histograms have different bins")
        exp = None if self.expected is None or other.expected is None else self.expected + other.expected
        return BinnedCounts(self.counts + other.counts, self.bin_start, self.tau_bin,
                            self.n_pulses + other.n_pulses,
                            self.integration_time + other.integration_time, exp)

    def to_csv(self, path=None, comments=()):
        pulses = np.full(len(self.counts), self.n_pulses)
        return csvio.write_csv(path, ["bin_start_s", "counts", "pulses"],
                               zip(self.bin_start, np.asarray(self.counts, dtype=np.int64), pulses),
                               comments)

    @classmethod
    def from_csv(cls, path, tau_bin=None):
        cols, _ = csvio.read_csv(path)
        d = csvio.float_columns(cols, ("bin_start_s", "counts", "pulses"))
        starts = d["bin_start_s"]
        if tau_bin is None:
            if starts.size < 2:
                raise ValidationError("tau_bin required for single-bin histograms")
            tau_bin = float(starts[1] - starts[0])
        pulses = np.unique(d["pulses"])
        if pulses.size != 1:
            raise ValidationError("pulses column must be constant")
        n = int(pulses[0])
        return cls(d["counts"].astype(np.int64), starts, tau_bin, n, n * starts.size * tau_bin)


# --------------------------------------------------------------------------
# Count rates
# --------------------------------------------------------------------------


def sb0_rate(chain: DetectionChain, cavity: OpticalCavity, gamma_om):
    """Detected sideband scattering rate per phonon (counts/s),
    ``eta_det eta_cpl eta_kappa gamma_OM``."""
    if gamma_om < 0:
        raise ValidationError("gamma_om must be >= 0")
    return chain.efficiency(cavity) * gamma_om


def resonant_suppression(cavity: OpticalCavity, mode: MechanicalMode):
    """Sideband suppression ``(kappa / 2 omega_m)**2`` for a resonant pump."""
    return (cavity.kappa / (2.0 * mode.omega_m)) ** 2


def sideband_count_rate(chain: DetectionChain, cavity: OpticalCavity, mode: MechanicalMode,
                        gamma_om, n_avg, case="red"):
    """Detected count rate (counts/s) for a pump at ``+w_m``, ``-w_m`` or on resonance.

    Red: ``bkg + G_SB0 <n>``; blue: ``bkg + G_SB0 (<n> + 1)``;
    resonant: ``bkg + eta (kappa/2w_m)**2 gamma_OM <n>``.
    """
    case = detuning_case(case)
    n_avg = np.asarray(n_avg, dtype=float)
    if np.any(n_avg < 0):
        raise ValidationError("n_avg must be >= 0")
    g = sb0_rate(chain, cavity, gamma_om)
    if case == "red":
        rate = chain.background + g * n_avg
    elif case == "blue":
        rate = chain.background + g * (n_avg + 1.0)
    else:
        rate = chain.background + g * resonant_suppression(cavity, mode) * n_avg
    return float(rate) if rate.ndim == 0 else rate


# --------------------------------------------------------------------------
# Poisson histograms
# --------------------------------------------------------------------------


def poisson_counts(expected, schedule: PulseSchedule, seed=None, *, noiseless=False) -> BinnedCounts:
    """Draw a histogram with Poisson mean ``expected`` per bin (already summed over pulses)."""
    expected = np.asarray(expected, dtype=float)
    if np.any(~np.isfinite(expected)) or np.any(expected < 0):
        raise ValidationError("expected counts must be finite and >= 0")
    counts = expected.copy() if noiseless else _rng(seed).poisson(expected)
    starts = schedule.bin_edges[:-1][: expected.size]
    return BinnedCounts(counts, starts, schedule.tau_bin, int(schedule.n_pulses),
                        schedule.n_pulses * schedule.tau_per, expected)


def simulate_counts(rate_fn, schedule: PulseSchedule, seed=None, *, noiseless=False) -> BinnedCounts:
    """Histogram of a pulsed count-rate ``rate_fn(t)`` (counts/s, ``t`` from pulse start).

    Each bin is Poisson with mean ``n_pulses * integral of rate over the bin``;
    the integral uses 8-point Gauss-Legendre per bin and ``rate_fn`` must
    accept arrays.
    """
    edges = schedule.bin_edges
    half = 0.5 * schedule.tau_bin
    mid = 0.5 * (edges[:-1] + edges[1:])
    t = mid[:, None] + half * _GL_X[None, :]
    r = np.broadcast_to(np.asarray(rate_fn(t), dtype=float), t.shape)
    if np.any(~np.isfinite(r)) or np.any(r < 0):
        raise ValidationError("rate_fn must be finite and >= 0 over the pulse")
    integral = half * (r @ _GL_W)
    return poisson_counts(schedule.n_pulses * integral, schedule, seed, noiseless=noiseless)


# --------------------------------------------------------------------------
# Intra-pulse dynamics
# --------------------------------------------------------------------------

RAMP_NOTE = "hot-bath rise modeled as a single-exponential ramp (phenomenological stand-in)"


@dataclass(frozen=True)
class OccupancyTrajectory:
    """Solution of the intra-pulse rate equation on ``[0, duration]``.

    With constant coefficients ``n(t) = n_ss + (n_start - n_ss) exp(-rate t)``;
    with a bath ramp the adaptive solution is kept as ``solution``.
    """

    n_start: float
    duration: float
    rate: float
    source: float
    unstable: bool
    bath_rise_tau: float | None = None
    method: str = "closed"
    solution: object = field(default=None, repr=False)
    note: str = ""

    @property
    def steady_state(self):
        return self.source / self.rate if self.rate > 0 else math.inf

    @property
    def _fixed_point(self):
        # also meaningful (negative) for growing solutions
        return self.source / self.rate

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.solution is not None:
            out = self.solution.sol(t.ravel())[0].reshape(t.shape)
        elif self.rate == 0:
            out = self.n_start + self.source * t
        else:
            ss = self._fixed_point
            out = ss + (self.n_start - ss) * np.exp(-self.rate * t)
        return float(out) if out.ndim == 0 else out

    def cumulative(self, t):
        """``integral_0^t n(s) ds``."""
        t = np.asarray(t, dtype=float)
        if self.solution is not None:
            out = self.solution.sol(t.ravel())[1].reshape(t.shape)
        elif self.rate == 0:
            out = self.n_start * t + 0.5 * self.source * t**2
        else:
            ss = self._fixed_point
            out = ss * t + (self.n_start - ss) * (-np.expm1(-self.rate * t)) / self.rate
        return float(out) if out.ndim == 0 else out

    def bin_means(self, edges):
        edges = np.asarray(edges, dtype=float)
        if self.solution is None:
            return np.diff(self.cumulative(edges)) / np.diff(edges)
        # quadrature on the dense solution; differencing the running integral
        # over short bins would amplify its relative error
        mid, half = 0.5 * (edges[:-1] + edges[1:]), 0.5 * np.diff(edges)
        vals = self(mid[:, None] + half[:, None] * _GL_X[None, :])
        return 0.5 * (vals @ _GL_W)

    @property
    def n_end(self):
        return self(self.duration)


def _coefficients(mode, bath, gamma_om, case):
    g0, n0, gp, np_ = mode.gamma_0, bath.n_0, bath.gamma_p, bath.n_p
    if case == "red":
        return g0 + gp + gamma_om, g0 * n0 + gp * np_, gamma_om
    if case == "blue":
        return g0 + gp - gamma_om, g0 * n0 + gp * np_ + gamma_om, -gamma_om
    return g0 + gp, g0 * n0 + gp * np_, 0.0


def pulse_occupancy_dynamics(mode: MechanicalMode, bath: BathState, gamma_om, case, n_start,
                             duration, bath_rise_tau=None, *, method="auto",
                             rtol=1e-9) -> OccupancyTrajectory:
    """Mode occupancy during a pulse.

    Integrates ``dn/dt = g0 (n0 - n) + gp(t) (np(t) - n) - gOM n`` (red; blue adds
    ``+ gOM (n + 1)``, resonant has no back-action term). With ``bath_rise_tau``
    both ``gp`` and ``np`` ramp as ``1 - exp(-t / tau)``; otherwise they are
    constant and the closed form is used unless ``method="ode"``.

    A blue-detuned pump whose anti-damping exceeds the total damping gives
    unbounded growth; the result is then flagged ``unstable``.
    """
    case = detuning_case(case)
    if n_start < 0 or not math.isfinite(n_start):
        raise ValidationError("n_start must be finite and >= 0")
    if not duration > 0:
        raise ValidationError("duration must be > 0")
    if gamma_om < 0:
        raise ValidationError("gamma_om must be >= 0")
    if bath_rise_tau is not None and not bath_rise_tau > 0:
        raise ValidationError("bath_rise_tau must be > 0")
    if method not in ("auto", "closed", "ode"):
        raise ValidationError("method must be 'auto', 'closed' or 'ode'")
    if bath_rise_tau is not None and method == "closed":
        raise ValidationError("no closed form with a bath ramp")
    rate, source, _ = _coefficients(mode, bath, gamma_om, case)
    unstable = rate <= 0
    if bath_rise_tau is None and method != "ode":
        return OccupancyTrajectory(float(n_start), float(duration), rate, source, unstable)

    g0, n0 = mode.gamma_0, bath.n_0
    gp, np_ = bath.gamma_p, bath.n_p
    _, _, om = _coefficients(mode, bath, gamma_om, case)
    extra = gamma_om if case == "blue" else 0.0

    def rhs(t, y):
        ramp = 1.0 if bath_rise_tau is None else -math.expm1(-t / bath_rise_tau)
        n = y[0]
        dn = g0 * (n0 - n) + gp * ramp * (np_ * ramp - n) - om * n + extra
        return [dn, n]

    sol = solve_ivp(rhs, (0.0, duration), [float(n_start), 0.0], method="RK45", rtol=rtol,
                    atol=[1e-15, 1e-22], dense_output=True)
    if not sol.success:
        raise FitError(f"integration failed: {sol.message}", {"message": sol.message})
    note = RAMP_NOTE if bath_rise_tau is not None else ""
    return OccupancyTrajectory(float(n_start), float(duration), rate, source, unstable,
                               bath_rise_tau, "ode", sol, note)


def expected_pulse_counts(chain: DetectionChain, cavity: OpticalCavity, mode: MechanicalMode,
                          gamma_om, trajectory: OccupancyTrajectory, case, schedule: PulseSchedule):
    """Poisson mean per bin (summed over pulses) for an occupancy trajectory."""
    case = detuning_case(case)
    edges = schedule.bin_edges
    nbar = trajectory.bin_means(edges)
    g = sb0_rate(chain, cavity, gamma_om)
    if case == "blue":
        nbar = nbar + 1.0
    elif case == "resonant":
        g = g * resonant_suppression(cavity, mode)
    return schedule.n_pulses * schedule.tau_bin * (chain.background + g * nbar)


# --------------------------------------------------------------------------
# Occupancy estimators
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CountEstimate:
    """Estimate with a Poisson standard error and a low-SNR flag."""

    value: float | np.ndarray
    sigma: float | np.ndarray
    low_snr: bool | np.ndarray = False


def _window_rate(counts: BinnedCounts, bins):
    c = np.asarray(counts.counts, dtype=float)[bins]
    k = c.sum()
    exposure = counts.exposure * c.size
    return k / exposure, math.sqrt(k) / exposure


def calibrate_sb0(counts: BinnedCounts, chain: DetectionChain, n_bins=1) -> CountEstimate:
    """Scattering rate per phonon from blue-detuned pulses starting near ``n0 << 1``.

    The first ``n_bins`` bins give ``G_SB0 = rate - backgrounds``. Flagged
    ``low_snr`` when the backgrounds are not smaller than the signal.
    """
    if n_bins < 1 or n_bins > len(counts.counts):
        raise ValidationError("n_bins out of range")
    rate, sigma = _window_rate(counts, slice(0, n_bins))
    value = rate - chain.background
    return CountEstimate(value, sigma, bool(value <= chain.background))


def occupancy_from_counts(counts: BinnedCounts | np.ndarray, gamma_sb0, chain: DetectionChain,
                          case="red", *, suppression=1.0) -> CountEstimate:
    """Per-bin occupancy ``(rate - backgrounds) / G_SB0`` (minus one for blue).

    ``counts`` is a histogram or an array of count rates. For a resonant pump
    pass ``suppression = (kappa / 2 omega_m)**2``. Linear in the counts, so the
    estimator is unbiased for Poisson data with a known ``G_SB0``.
    """
    case = detuning_case(case)
    if not gamma_sb0 > 0:
        raise ValidationError("gamma_sb0 must be > 0")
    if isinstance(counts, BinnedCounts):
        rate, rsig = counts.rates, counts.rate_sigma
    else:
        rate = np.asarray(counts, dtype=float)
        rsig = np.full_like(rate, np.nan)
    g = gamma_sb0 * (suppression if case == "resonant" else 1.0)
    signal = rate - chain.background
    n = signal / g - (1.0 if case == "blue" else 0.0)
    low = signal <= chain.background
    return CountEstimate(n, rsig / g, low)


# --------------------------------------------------------------------------
# Ringdown
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class RingdownDataset:
    """Occupancy at the start (``n_i``) and end (``n_f``) of the pulse per delay."""

    tau_off: np.ndarray
    n_i: np.ndarray
    n_i_sigma: np.ndarray
    n_f: np.ndarray
    n_f_sigma: np.ndarray | None = None
    omega_m: float = math.nan
    gamma_sb0: float = math.nan

    def to_csv(self, path=None, comments=()):
        return csvio.write_csv(path, ["tau_off_s", "n_i", "n_i_sigma", "n_f"],
                               zip(self.tau_off, self.n_i, self.n_i_sigma, self.n_f), comments)

    @classmethod
    def from_csv(cls, path, omega_m=math.nan):
        cols, _ = csvio.read_csv(path)
        d = csvio.float_columns(cols, ("tau_off_s", "n_i", "n_i_sigma", "n_f"))
        return cls(d["tau_off_s"], d["n_i"], d["n_i_sigma"], d["n_f"], omega_m=omega_m)


@dataclass(frozen=True)
class RingdownResult:
    gamma_0_hat: float
    q_m_hat: float
    gamma_0_ci: tuple
    q_m_ci: tuple
    gamma_0_sigma: float
    amplitude: float
    offset: float
    tau_off: np.ndarray = field(repr=False, default=None)
    n_i: np.ndarray = field(repr=False, default=None)


def _pulse_map(mode, bath, gamma_om, case, duration, bath_rise_tau):
    """Affine map ``n_end = a n_start + b`` of one pulse, and the trajectory from 0."""
    t0 = pulse_occupancy_dynamics(mode, bath, gamma_om, case, 0.0, duration, bath_rise_tau)
    t1 = pulse_occupancy_dynamics(mode, bath, gamma_om, case, 1.0, duration, bath_rise_tau)
    b = t0.n_end
    return t1.n_end - b, b


def ringdown_initial_occupancy(mode, bath, gamma_om, tau_pulse, tau_off, bath_rise_tau=None):
    """Periodic steady state of a red-detuned pulse train: occupancy at pulse start."""
    a, b = _pulse_map(mode, bath, gamma_om, "red", tau_pulse, bath_rise_tau)
    d = math.exp(-mode.gamma_0 * tau_off)
    n0 = bath.n_0
    # n_i = n0 + (a n_i + b - n0) d
    return (n0 * (1 - d) + b * d) / (1 - a * d)


def simulate_ringdown(device: Device, bath_model: HotBathModel, chain: DetectionChain, tau_offs,
                      n_c_peak=60.0, seed=None, *, tau_pulse=10e-6, tau_bin=25.6e-9,
                      n_pulses=10**6, calib_pulses=None, bath_rise_tau=None, noiseless=False,
                      threads=1) -> RingdownDataset:
    """Synthetic pulsed ringdown.

    A red-detuned pulse train at ``n_c_peak`` heats the mode during each pulse;
    between pulses it decays freely toward ``n0`` at ``gamma_0``. For each
    ``tau_off`` the train is run at its periodic steady state, counts are drawn
    for ``n_pulses`` pulses, and ``n_i`` / ``n_f`` are re-estimated from the
    first and last bins using a scattering rate calibrated on simulated
    blue-detuned pulses that start at ``n0``.

    Per-delay random streams are spawned from ``seed``, so the result does not
    depend on ``threads``.
    """
    cav, mode = device.cavity, device.mode
    tau_offs = np.asarray(tau_offs, dtype=float)
    if tau_offs.ndim != 1 or tau_offs.size == 0 or np.any(tau_offs < 0):
        raise ValidationError("tau_offs must be a non-empty list of delays >= 0")
    streams = np.random.SeedSequence(seed).spawn(tau_offs.size + 1)

    gamma_om = parametric_rate(mode, cav, n_c_peak)
    p_in = input_power_for_photons(cav, mode.omega_m, n_c_peak)
    bath = hot_bath(bath_model, n_c_peak, p_in, mode=mode)

    # scattering-rate calibration with blue pulses after full thermalization
    cal_sched = PulseSchedule(tau_pulse, 0.0, tau_bin, calib_pulses or 10 * n_pulses)
    traj_b = pulse_occupancy_dynamics(mode, bath, gamma_om, "blue", bath.n_0, tau_pulse, bath_rise_tau)
    mu_b = expected_pulse_counts(chain, cav, mode, gamma_om, traj_b, "blue", cal_sched)
    cal = calibrate_sb0(poisson_counts(mu_b[:1], cal_sched, streams[-1], noiseless=noiseless), chain)
    g_sb0 = cal.value
    if not g_sb0 > 0:
        raise FitError("calibration gave a non-positive scattering rate", {"calibration": cal})

    def one(i):
        tau = tau_offs[i]
        sched = PulseSchedule(tau_pulse, tau, tau_bin, n_pulses)
        n_i = ringdown_initial_occupancy(mode, bath, gamma_om, tau_pulse, tau, bath_rise_tau)
        traj = pulse_occupancy_dynamics(mode, bath, gamma_om, "red", n_i, tau_pulse, bath_rise_tau)
        mu = expected_pulse_counts(chain, cav, mode, gamma_om, traj, "red", sched)
        hist = poisson_counts(mu[[0, -1]], sched, streams[i], noiseless=noiseless)
        est = occupancy_from_counts(hist, g_sb0, chain, "red")
        return est.value[0], est.sigma[0], est.value[1], est.sigma[1]

    idx = range(tau_offs.size)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            rows = list(ex.map(one, idx))
    else:
        rows = [one(i) for i in idx]
    rows = np.array(rows, dtype=float)
    return RingdownDataset(tau_offs, rows[:, 0], rows[:, 1], rows[:, 2], rows[:, 3],
                           omega_m=mode.omega_m, gamma_sb0=g_sb0)


def _exp_profile(tau, n, w, gammas):
    e = np.exp(-np.outer(tau, gammas))  # (n, G)
    w2 = w**2
    s0, s1, s11 = w2.sum(), (w2[:, None] * e).sum(0), (w2[:, None] * e**2).sum(0)
    sy, s1y = (w2 * n).sum(), (w2[:, None] * e * n[:, None]).sum(0)
    det = s0 * s11 - s1**2
    with np.errstate(divide="ignore", invalid="ignore"):
        c = (s11 * sy - s1 * s1y) / det
        a = (s0 * s1y - s1 * sy) / det
        ssr = (((n[:, None] - c - a * e) * w[:, None]) ** 2).sum(0)
    return c, a, np.where(np.isfinite(ssr), ssr, np.inf)


def fit_ringdown(data: RingdownDataset | tuple, omega_m=None, *, confidence=0.95) -> RingdownResult:
    """Weighted fit of ``n_i = c + A exp(-gamma_0 tau_off)``.

    Returns ``gamma_0``, ``Q_m = omega_m / gamma_0`` and normal-approximation
    confidence intervals.

    Raises
    ------
    ValidationError
        Fewer than 4 distinct delays.
    FitError
        The data do not decay (non-positive amplitude, or the rate runs to the
        edge of the scan).
    """
    if isinstance(data, RingdownDataset):
        tau, n, s = data.tau_off, data.n_i, data.n_i_sigma
        omega_m = data.omega_m if omega_m is None else omega_m
    else:
        tau, n, s = data
    tau, n = np.asarray(tau, dtype=float), np.asarray(n, dtype=float)
    s = np.ones_like(n) if s is None else np.asarray(s, dtype=float)
    if np.unique(tau).size < 4:
        raise ValidationError("need at least 4 distinct tau_off values")
    if omega_m is None or not math.isfinite(omega_m):
        raise ValidationError("omega_m is required")
    s = np.where(s > 0, s, np.max(s[s > 0]) if np.any(s > 0) else 1.0)
    w = 1.0 / s
    span = tau[tau > 0]
    lo = 0.01 / np.max(tau)
    hi = 100.0 / (np.min(span) if span.size else np.max(tau))
    grid = np.geomspace(lo, hi, 400)
    c, a, ssr = _exp_profile(tau, n, w, grid)
    i = int(np.argmin(ssr))
    diag = {"gamma_grid": grid, "ssr": ssr, "amplitude": a[i], "offset": c[i]}
    if i in (0, grid.size - 1) or not a[i] > 0 or np.ptp(ssr) == 0:
        raise FitError("ringdown data do not show a decay", diag)

    def resid(p):
        return (p[0] + p[1] * np.exp(-p[2] * tau) - n) * w

    res = least_squares(resid, [c[i], a[i], grid[i]], method="lm", x_scale="jac")
    off, amp, g = res.x
    if not (res.success and g > 0 and amp > 0):
        raise FitError("ringdown fit did not converge to a decay", {**diag, "message": res.message})
    J = res.jac
    dof = max(n.size - 3, 1)
    scale = 2 * res.cost / dof if np.all(s == 1) else 1.0
    try:
        cov = scale * np.linalg.inv(J.T @ J)
    except np.linalg.LinAlgError:
        cov = np.full((3, 3), np.inf)
    se = math.sqrt(max(cov[2, 2], 0.0))
    z = norm.ppf(0.5 + confidence / 2)
    ci = (g - z * se, g + z * se)
    q_ci = (omega_m / ci[1], omega_m / ci[0] if ci[0] > 0 else math.inf)
    return RingdownResult(g, omega_m / g, ci, q_ci, se, amp, off, tau, n)


# --------------------------------------------------------------------------
# Base occupancy
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class BaseOccupancyResult:
    """``n_0`` and ``T_0``; with ``upper_bound`` these are bounds, not estimates."""

    n_0: float
    t_0: float
    n_0_sigma: float
    upper_bound: bool
    bath_rise_tau: float | None = None
    log_likelihood: float = math.nan
    note: str = ""


def _unit_response(mode, bath, gamma_om, duration, tau_p, edges):
    """Bin-mean occupancy ``u + n0 * v`` for a red pulse starting at ``n0``."""
    b0 = BathState(bath.n_p, bath.gamma_p, bath.n_b, bath.gamma_b, bath.gamma_0, 0.0, bath.x)
    b1 = BathState(bath.n_p, bath.gamma_p, bath.n_b, bath.gamma_b, bath.gamma_0, 1.0, bath.x)
    u = pulse_occupancy_dynamics(mode, b0, gamma_om, "red", 0.0, duration, tau_p).bin_means(edges)
    v = pulse_occupancy_dynamics(mode, b1, gamma_om, "red", 1.0, duration, tau_p).bin_means(edges) - u
    return u, v


def estimate_base_occupancy(counts: BinnedCounts, chain: DetectionChain, gamma_sb0, mode: MechanicalMode,
                            bath: BathState, gamma_om, *, tau_p_grid=None, fixed_tau_p=None,
                            early_window=0.5e-6, min_early_bins=4) -> BaseOccupancyResult:
    """Base occupancy from the occupancy-versus-time curve of a low-power red pulse.

    The whole histogram is fitted by Poisson maximum likelihood with the
    intra-pulse model (mode starts at ``n0``, hot bath ramps with time constant
    ``tau_p``), which extrapolates the curve back to the start of the pulse. The
    counts are affine in ``n0`` for fixed ``tau_p``, so the likelihood is concave
    in ``n0`` and is profiled over ``tau_p``. ``bath`` is the steady hot bath at
    the pulse photon number.

    With fewer than ``min_early_bins`` bins inside ``early_window`` the start of
    the pulse is not resolved; the first-bin occupancy plus two standard errors
    is then returned as an upper bound (heating only raises the occupancy).
    """
    k = np.asarray(counts.counts, dtype=float)
    starts = np.asarray(counts.bin_start, dtype=float)
    edges = np.append(starts, starts[-1] + counts.tau_bin)
    n_early = int(np.sum(starts < early_window))
    expo = counts.exposure
    if n_early < min_early_bins:
        est = occupancy_from_counts(counts, gamma_sb0, chain, "red")
        bound = max(float(est.value[0] + 2 * est.sigma[0]), 0.0)
        t0 = temperature_from_occupancy(mode.omega_m, bound) if bound > 0 else 0.0
        return BaseOccupancyResult(bound, t0, math.nan, True,
                                   note="start of pulse not resolved; first-bin bound")
    duration = edges[-1]

    def profile_n0(tau_p):
        u, v = _unit_response(mode, bath, gamma_om, duration, tau_p, edges)
        base = expo * (chain.background + gamma_sb0 * u)
        slope = expo * gamma_sb0 * v

        def nll(n0):
            mu = base + slope * n0
            if np.any(mu <= 0):
                return math.inf
            return float(np.sum(mu - k * np.log(mu)))

        # score is monotone decreasing in n0; bracket its root
        def score(n0):
            mu = base + slope * n0
            return float(np.sum(slope * (k / mu - 1.0)))

        lo, hi = 0.0, 1e-6
        if score(lo) <= 0:
            return 0.0, nll(0.0), (base, slope)
        while score(hi) > 0 and hi < 1e3:
            hi *= 4
        n0 = brentq(score, lo, hi, xtol=1e-16, rtol=1e-13)
        return n0, nll(n0), (base, slope)

    if fixed_tau_p is not None:
        taus = [fixed_tau_p]
    else:
        taus = list(tau_p_grid) if tau_p_grid is not None else list(np.geomspace(20e-9, 5e-6, 25))
    prof = [profile_n0(t) for t in taus]
    j = int(np.argmin([p[1] for p in prof]))
    tau_best = taus[j]
    if fixed_tau_p is None and 0 < j < len(taus) - 1:
        res = minimize_scalar(lambda lt: profile_n0(math.exp(lt))[1],
                              bounds=(math.log(taus[j - 1]), math.log(taus[j + 1])),
                              method="bounded", options={"xatol": 1e-8})
        if res.fun < prof[j][1]:
            tau_best = math.exp(res.x)
    n0, ll, (base, slope) = profile_n0(tau_best)
    mu = base + slope * n0
    info = float(np.sum(slope**2 / mu))
    sigma = 1.0 / math.sqrt(info) if info > 0 else math.inf
    t0 = temperature_from_occupancy(mode.omega_m, n0) if n0 > 0 else 0.0
    return BaseOccupancyResult(n0, t0, sigma, False, tau_best, -ll, RAMP_NOTE)


# --------------------------------------------------------------------------
# Vacuum coupling rate from the back-action slope
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class G0Estimate:
    g_0: float
    slope: float
    intercept: float
    slope_sigma: float
    g_0_sigma: float


def g0_from_backaction_slope(n_c, gamma, cavity: OpticalCavity, sigma=None) -> G0Estimate:
    """Vacuum coupling rate from a red-sideband linewidth sweep.

    A straight line ``gamma = gamma_i + s n_c`` is fitted; since
    ``gamma_OM = 4 g0**2 n_c / kappa`` the slope gives ``g0 = sqrt(s kappa / 4)``.
    """
    x = np.asarray(n_c, dtype=float)
    y = np.asarray(gamma, dtype=float)
    if x.shape != y.shape or x.size < 3:
        raise ValidationError("need at least 3 (n_c, gamma) points")
    if np.ptp(x) == 0:
        raise ValidationError("degenerate input: all n_c equal")
    w = np.ones_like(y) if sigma is None else 1.0 / np.asarray(sigma, dtype=float)
    A = np.column_stack([np.ones_like(x), x]) * w[:, None]
    coef, *_ = np.linalg.lstsq(A, y * w, rcond=None)
    r = y * w - A @ coef
    dof = max(x.size - 2, 1)
    s2 = r @ r / dof if sigma is None else 1.0
    cov = s2 * np.linalg.inv(A.T @ A)
    slope, icpt = float(coef[1]), float(coef[0])
    floor = 1e-12 * np.max(np.abs(y)) / np.ptp(x)  # zero within rounding
    if not slope > floor:
        raise ValidationError(f"fitted back-action slope must be > 0 (got {slope:.3g})")
    g0 = math.sqrt(slope * cavity.kappa / 4.0)
    s_sig = math.sqrt(max(cov[1, 1], 0.0))
    return G0Estimate(g0, slope, icpt, s_sig, 0.5 * g0 * s_sig / slope)


# --------------------------------------------------------------------------
# Paper-scale defaults
# --------------------------------------------------------------------------

#: detection chain used by the shipped scenarios (dark rate 0.6 c/s)
DEFAULT_CHAIN = DetectionChain(eta_det=0.1, dark_rate=0.6, pump_bleed_rate=1.0, eta_cpl=0.6)
