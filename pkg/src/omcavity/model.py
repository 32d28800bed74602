"""
Closed-form cavity optomechanics model
======================================

Photon buildup, optomechanical damping, absorption-heated bath aggregation,
back-action cooled occupancy, cooperativity and Bose occupancy conversion.

All angular frequencies and rates are stored in rad/s. Energy decay rates in
rad/s are numerically the rate in 1/s, so ``gamma * t`` is dimensionless.
Use :func:`hz` / :func:`to_hz` at the boundary when quoting ``omega / 2 pi``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy import constants
from scipy.optimize import brentq

from .errors import ValidationError

HBAR = constants.hbar
K_B = constants.k
TWO_PI = 2.0 * math.pi


def _out(a):
    a = np.asarray(a, dtype=float)
    return a if a.ndim else float(a)


def hz(f):
    """Ordinary frequency (Hz) to angular frequency (rad/s)."""
    return _out(TWO_PI * np.asarray(f, dtype=float))


def to_hz(omega):
    """Angular frequency (rad/s) to ordinary frequency (Hz)."""
    return _out(np.asarray(omega, dtype=float) / TWO_PI)


def _check_finite(**values):
    for name, v in values.items():
        if not np.all(np.isfinite(v)):
            raise ValidationError(f"{name} must be finite, got {v!r}")


def _check_nonneg(**values):
    _check_finite(**values)
    for name, v in values.items():
        if np.any(np.asarray(v) < 0):
            raise ValidationError(f"{name} must be >= 0, got {v!r}")


def branch_crossover(low, high, log_range=(-6.0, 12.0)):
    """First ``x`` where ``low(x)`` rises through ``high(x)``.

    Returns ``inf`` if the low branch stays below, ``0`` if it starts above.
    """
    diff = lambda lx: low(10.0**lx) - high(10.0**lx)  # noqa: E731
    grid = np.linspace(log_range[0], log_range[1], 361)
    vals = np.array([diff(g) for g in grid])
    idx = np.nonzero((vals[:-1] < 0) & (vals[1:] >= 0))[0]
    if idx.size == 0:
        return math.inf if vals[0] < 0 else 0.0
    i = idx[0]
    return 10.0 ** brentq(diff, grid[i], grid[i + 1], xtol=1e-14, rtol=1e-15)


# --------------------------------------------------------------------------
# Domain types
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class OpticalCavity:
    """Optical resonance with total decay ``kappa`` and extrinsic decay ``kappa_e``."""

    omega_c: float
    kappa: float
    kappa_e: float

    def __post_init__(self):
        _check_finite(omega_c=self.omega_c, kappa=self.kappa, kappa_e=self.kappa_e)
        if self.omega_c <= 0:
            raise ValidationError("omega_c must be > 0")
        if not 0 < self.kappa_e <= self.kappa:
            raise ValidationError(
                f"require 0 < kappa_e <= kappa, got kappa_e={self.kappa_e}, kappa={self.kappa}"
            )

    @classmethod
    def from_hz(cls, f_c, kappa_hz, kappa_e_hz):
        return cls(hz(f_c), hz(kappa_hz), hz(kappa_e_hz))

    @classmethod
    def from_q(cls, omega_c, q_c, eta_kappa):
        """Cavity with loaded quality factor ``q_c`` and coupling ratio ``eta_kappa``."""
        kappa = omega_c / q_c
        return cls(omega_c, kappa, eta_kappa * kappa)

    @property
    def kappa_i(self):
        return self.kappa - self.kappa_e

    @property
    def eta_kappa(self):
        return self.kappa_e / self.kappa

    @property
    def q_c(self):
        return self.omega_c / self.kappa

    @property
    def q_ci(self):
        """Intrinsic quality factor (infinite for an overcoupled lossless cavity)."""
        return self.omega_c / self.kappa_i if self.kappa_i > 0 else math.inf

    def with_q(self, q_c):
        """Same resonance and coupling ratio, loaded Q set to ``q_c``."""
        return OpticalCavity.from_q(self.omega_c, q_c, self.eta_kappa)


@dataclass(frozen=True)
class MechanicalMode:
    """Acoustic mode: frequency, intrinsic decay, pure dephasing and vacuum coupling."""

    omega_m: float
    gamma_0: float
    gamma_phi: float = 0.0
    g_0: float = 0.0

    def __post_init__(self):
        _check_nonneg(gamma_0=self.gamma_0, gamma_phi=self.gamma_phi, g_0=self.g_0)
        _check_finite(omega_m=self.omega_m)
        if self.omega_m <= 0:
            raise ValidationError("omega_m must be > 0")

    @classmethod
    def from_hz(cls, f_m, gamma_0_hz, gamma_phi_hz=0.0, g_0_hz=0.0):
        return cls(hz(f_m), hz(gamma_0_hz), hz(gamma_phi_hz), hz(g_0_hz))

    @property
    def q_m(self):
        return self.omega_m / self.gamma_0 if self.gamma_0 > 0 else math.inf


@dataclass(frozen=True)
class DriveCondition:
    """Pump laser: on-chip power ``p_in`` (W), detuning ``omega_c - omega_p`` (rad/s)
    and single-pass fiber-to-waveguide efficiency ``eta_cpl``.

    ``p_in`` is the power already coupled into the on-chip waveguide; the fiber
    power upstream is ``p_in / eta_cpl``.
    """

    p_in: float
    detuning: float = 0.0
    eta_cpl: float = 1.0

    def __post_init__(self):
        _check_nonneg(p_in=self.p_in)
        _check_finite(detuning=self.detuning, eta_cpl=self.eta_cpl)
        if not 0 < self.eta_cpl <= 1:
            raise ValidationError("eta_cpl must lie in (0, 1]")

    @property
    def fiber_power(self):
        return self.p_in / self.eta_cpl

    def pump_frequency(self, cavity: OpticalCavity):
        omega_p = cavity.omega_c - self.detuning
        if omega_p <= 0:
            raise ValidationError("pump frequency omega_c - detuning must be positive")
        return omega_p


@dataclass(frozen=True)
class Device:
    """An optical cavity and the acoustic mode it couples to."""

    cavity: OpticalCavity
    mode: MechanicalMode

    def with_q(self, q_c):
        return Device(self.cavity.with_q(q_c), self.mode)


@dataclass(frozen=True)
class HotBathModel:
    """Power-law laws for the absorption-heated bath.

    Occupancy ``n_p(x) = A x**p`` and a two-branch damping law fitted to the
    *total* linewidth at zero detuning::

        low  : gamma_phi + B1 * x**q1
        high : c2        + B2 * x**q2

    The hot-bath damping is the fitted total minus ``gamma_phi``; the branches
    switch at their intersection ``crossover`` so the law is continuous. ``x``
    is the effective absorbing photon number ``n_c + beta * p_in``.

    ``gamma_phi`` is stored here because it is part of the damping-law fit; it
    normally equals ``MechanicalMode.gamma_phi``.
    """

    occ_amplitude: float = 1.1
    occ_exponent: float = 0.3
    damp_low_amplitude: float = TWO_PI * 1.1e3
    damp_low_exponent: float = 0.61
    damp_high_offset: float | None = TWO_PI * 23.91e3
    damp_high_amplitude: float | None = TWO_PI * 9.01e3
    damp_high_exponent: float | None = 0.29
    gamma_phi: float = TWO_PI * 14.54e3
    beta: float = 0.0
    n_0: float = 4e-4
    t_0: float = 0.063

    def __post_init__(self):
        _check_nonneg(
            occ_amplitude=self.occ_amplitude,
            damp_low_amplitude=self.damp_low_amplitude,
            gamma_phi=self.gamma_phi,
            beta=self.beta,
            n_0=self.n_0,
        )
        for name in ("occ_exponent", "damp_low_exponent"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ValidationError(f"{name} must lie in (0, 1), got {v}")
        if self.has_high_branch:
            _check_nonneg(damp_high_amplitude=self.damp_high_amplitude)
            _check_finite(damp_high_offset=self.damp_high_offset)
            if not 0 < self.damp_high_exponent < 1:
                raise ValidationError("damp_high_exponent must lie in (0, 1)")

    @classmethod
    def eight_shield(cls, beta=0.0, **overrides):
        """Laws fitted to the 8-shield device; ``beta`` in photons per W."""
        return cls(beta=beta, **overrides)

    @property
    def has_high_branch(self):
        return self.damp_high_offset is not None and self.damp_high_amplitude is not None \
            and self.damp_high_exponent is not None

    def with_beta(self, beta):
        return replace(self, beta=beta)

    # -- laws --------------------------------------------------------------

    def effective_photons(self, n_c, p_in=0.0):
        return np.asarray(n_c, dtype=float) + self.beta * np.asarray(p_in, dtype=float)

    def occupancy(self, x):
        x = np.asarray(x, dtype=float)
        return _out(self.occ_amplitude * np.power(x, self.occ_exponent))

    def _low_total(self, x):
        return self.gamma_phi + self.damp_low_amplitude * np.power(x, self.damp_low_exponent)

    def _high_total(self, x):
        return self.damp_high_offset + self.damp_high_amplitude * np.power(x, self.damp_high_exponent)

    @cached_property
    def crossover(self):
        """Effective photon number where the two linewidth branches meet."""
        if not self.has_high_branch:
            return math.inf
        return branch_crossover(self._low_total, self._high_total)

    def total_damping_law(self, x):
        """Fitted total zero-detuning linewidth ``gamma_phi + gamma_p`` at ``x``."""
        x = np.asarray(x, dtype=float)
        low = self._low_total(x)
        if not self.has_high_branch:
            out = low
        else:
            out = np.where(x < self.crossover, low, self._high_total(x))
        return _out(out)

    def damping(self, x):
        """Hot-bath damping rate ``gamma_p`` (rad/s) at effective photon number ``x``."""
        x = np.asarray(x, dtype=float)
        return _out(np.maximum(self.total_damping_law(x) - self.gamma_phi, 0.0))

    def bath_temperature(self, x, omega_m, approx=False):
        return temperature_from_occupancy(omega_m, self.occupancy(x), approx=approx)


@dataclass(frozen=True)
class BathState:
    """Hot bath plus the cold intrinsic bath, aggregated.

    ``gamma_b * n_b = gamma_0 (n_0 + 1) + gamma_p (n_p + 1)`` holds by construction.
    """

    n_p: float
    gamma_p: float
    n_b: float
    gamma_b: float
    gamma_0: float = 0.0
    n_0: float = 0.0
    x: float = math.nan


@dataclass(frozen=True)
class CoolingResult:
    n_c: float
    n_wg: float
    gamma_om: float
    n_avg: float
    c: float
    c_eff: float
    p_in: float = math.nan
    n_p: float = math.nan
    gamma_p: float = math.nan
    n_b: float = math.nan
    gamma_b: float = math.nan


# --------------------------------------------------------------------------
# Operations
# --------------------------------------------------------------------------


def intracavity_photons(cavity: OpticalCavity, drive: DriveCondition):
    """Steady-state intracavity photon number for on-chip power ``drive.p_in``.

    ``n_c = P_in / (hbar omega_p) * kappa_e / (Delta**2 + (kappa/2)**2)``
    """
    omega_p = drive.pump_frequency(cavity)
    lorentz = cavity.kappa_e / (drive.detuning**2 + (cavity.kappa / 2.0) ** 2)
    return drive.p_in / (HBAR * omega_p) * lorentz


def input_power_for_photons(cavity: OpticalCavity, detuning, n_c):
    """On-chip power (W) that builds up ``n_c`` photons at ``detuning``."""
    _check_nonneg(n_c=n_c)
    _check_finite(detuning=detuning)
    omega_p = cavity.omega_c - detuning
    if omega_p <= 0:
        raise ValidationError("pump frequency omega_c - detuning must be positive")
    if cavity.kappa_e <= 0:
        raise ValidationError("kappa_e must be > 0")
    n_c = np.asarray(n_c, dtype=float)
    return _out(n_c * HBAR * omega_p * (detuning**2 + (cavity.kappa / 2.0) ** 2) / cavity.kappa_e)


def parametric_rate(mode: MechanicalMode, cavity: OpticalCavity, n_c):
    """Optomechanical damping ``gamma_OM = 4 g0**2 n_c / kappa`` (rad/s)."""
    _check_nonneg(n_c=n_c)
    if cavity.kappa <= 0:
        raise ValidationError("kappa must be > 0")
    return _out(4.0 * mode.g_0**2 * np.asarray(n_c, dtype=float) / cavity.kappa)


def hot_bath(model: HotBathModel, n_c, p_in=0.0, *, mode: MechanicalMode | None = None,
             include_dephasing=False) -> BathState:
    """Evaluate the hot-bath laws at ``x = n_c + beta * p_in`` and aggregate with
    the intrinsic bath of ``mode`` (occupancy ``model.n_0``).

    With ``include_dephasing`` the dephasing rate is added to ``gamma_b`` as an
    extra channel at the hot-bath occupancy; this is a pessimistic bound used
    for sensitivity studies only.
    """
    _check_nonneg(n_c=n_c, p_in=p_in)
    x = float(model.effective_photons(n_c, p_in))
    n_p = model.occupancy(x)
    gamma_p = model.damping(x)
    gamma_0 = mode.gamma_0 if mode is not None else 0.0
    n_0 = model.n_0
    gamma_b = gamma_0 + gamma_p
    flux = gamma_0 * (n_0 + 1.0) + gamma_p * (n_p + 1.0)
    if include_dephasing:
        gphi = mode.gamma_phi if mode is not None else model.gamma_phi
        gamma_b += gphi
        flux += gphi * (n_p + 1.0)
    n_b = flux / gamma_b if gamma_b > 0 else n_0
    return BathState(n_p=n_p, gamma_p=gamma_p, n_b=n_b, gamma_b=gamma_b,
                     gamma_0=gamma_0, n_0=n_0, x=x)


def cooled_occupancy(bath: BathState, gamma_om, *, n_c=math.nan, n_wg=0.0, p_in=math.nan) -> CoolingResult:
    """Back-action cooled occupancy.

    ``<n> = (gamma_p n_p + gamma_0 n_0) / (gamma_0 + gamma_OM + gamma_p)``,
    ``C = gamma_OM / gamma_b`` and ``C_eff = C / n_b``.
    """
    _check_nonneg(gamma_om=gamma_om)
    denom = bath.gamma_0 + gamma_om + bath.gamma_p
    if denom <= 0:
        raise ValidationError("gamma_0 + gamma_OM + gamma_p must be > 0")
    n_avg = (bath.gamma_p * bath.n_p + bath.gamma_0 * bath.n_0) / denom
    c = gamma_om / bath.gamma_b if bath.gamma_b > 0 else math.inf
    c_eff = c / bath.n_b if bath.n_b > 0 else math.inf
    return CoolingResult(n_c=n_c, n_wg=n_wg, gamma_om=gamma_om, n_avg=n_avg, c=c, c_eff=c_eff,
                         p_in=p_in, n_p=bath.n_p, gamma_p=bath.gamma_p, n_b=bath.n_b,
                         gamma_b=bath.gamma_b)


def bose_occupancy(omega, temperature, approx=False):
    """Mean thermal occupancy of a mode at ``omega`` (rad/s) and ``temperature`` (K).

    ``approx=True`` returns the high-temperature linearization ``kT / hbar omega``.
    """
    temperature = np.asarray(temperature, dtype=float)
    _check_finite(temperature=temperature)
    if np.any(temperature <= 0):
        raise ValidationError("temperature must be > 0")
    ratio = HBAR * np.asarray(omega, dtype=float) / (K_B * temperature)
    if approx:
        out = 1.0 / ratio
    else:
        with np.errstate(over="ignore"):
            out = 1.0 / np.expm1(ratio)
    return _out(out)


def temperature_from_occupancy(omega, n, approx=False):
    """Inverse of :func:`bose_occupancy`."""
    n = np.asarray(n, dtype=float)
    _check_finite(n=n)
    if np.any(n <= 0):
        raise ValidationError("occupancy must be > 0")
    e = HBAR * np.asarray(omega, dtype=float) / K_B
    return _out(e * n if approx else e / np.log1p(1.0 / n))


def total_linewidth(mode: MechanicalMode, bath: BathState, gamma_om=0.0):
    """Observed linewidth ``gamma_0 + gamma_phi + gamma_p + gamma_OM``."""
    _check_nonneg(gamma_om=gamma_om)
    return mode.gamma_0 + mode.gamma_phi + bath.gamma_p + gamma_om


def thermal_noise_spectrum(mode: MechanicalMode, linewidth, n_avg, grid: Sequence[float]):
    """Lorentzian thermal noise density sampled on ``grid`` (rad/s).

    Normalized so that the integral over angular frequency equals ``n_avg``::

        S(omega) = n_avg * (linewidth / 2) / pi / ((omega - omega_m)**2 + (linewidth / 2)**2)

    Units are phonons per (rad/s). Multiply by ``2 pi`` for phonons per Hz.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValidationError("frequency grid is empty")
    _check_finite(grid=grid, linewidth=linewidth)
    _check_nonneg(n_avg=n_avg)
    if linewidth <= 0:
        raise ValidationError("linewidth must be > 0")
    half = linewidth / 2.0
    return n_avg * half / math.pi / ((grid - mode.omega_m) ** 2 + half**2)


# --------------------------------------------------------------------------
# Reference devices
# --------------------------------------------------------------------------

#: 8-shield device used for the ringdown, hot-bath and cooling measurements.
EIGHT_SHIELD = Device(
    cavity=OpticalCavity.from_hz(193.4e12, 1.187e9, 181e6),
    mode=MechanicalMode.from_hz(10.02e9, 8.28, 14.54e3, 1.182e6),
)

#: Zero-shield device used for the base-temperature measurement.
ZERO_SHIELD = Device(
    cavity=OpticalCavity.from_hz(193.4e12, 1.11e9, 455e6),
    mode=MechanicalMode.from_hz(10.238e9, 21.8e3, 14.54e3, 1.18e6),
)

#: Fiber-to-waveguide single-pass efficiency of the 8-shield device.
ETA_CPL = 0.6

#: Waveguide-heating coefficient fitted to the cooling curve (photons per W).
BETA_FIT = 15.0e6
