"""Analyticity machinery: Gaussian weight, phase conjugation, radius ODE.

The evolving analytic band is ``delta - lambda * theta(t)`` with theta
driven by weighted norms of the vertical derivatives; the run is alive
while ``theta < delta / lambda``.  The empirical radius is measured
independently from the decay slope of the Fourier coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .dyadic import DyadicFilterBank
from .grid import Field, ddy, to_spectral
from .validity import ValidityError

PHASE_MAG_LIMIT = 1e30
_LOG_LIMIT = np.log(PHASE_MAG_LIMIT)


def psi(t, y):
    """Gaussian vertical weight (1 + y^2) / (8 <t>), <t> = 1 + t."""
    return (1.0 + np.asarray(y, dtype=float) ** 2) / (8.0 * (1.0 + t))


def psi_residual(t, y):
    """d_t Psi + 2 (d_y Psi)^2 from the closed-form partials.

    The y^2 contributions cancel exactly, leaving -1/(8 <t>^2) for every y;
    the supersolution inequality holds with that strict margin.
    """
    y = np.asarray(y, dtype=float)
    tt = 1.0 + t
    dt_psi = -(1.0 + y**2) / (8.0 * tt**2)
    dy_psi = y / (4.0 * tt)
    return dt_psi + 2.0 * dy_psi**2


@dataclass(frozen=True)
class RadiusState:
    """theta accumulator and band bookkeeping (immutable snapshots).

    ``prev_rate`` feeds the explicit trapezoid update; history lives in the
    run record, not here.
    """

    delta: float
    lam: float
    theta: float = 0.0
    prev_rate: float | None = None

    def __post_init__(self):
        if self.delta <= 0 or self.lam <= 0:
            raise ValueError("delta and lambda must be positive")
        if self.theta < 0:
            raise ValueError("theta is nondecreasing from 0")

    @property
    def band(self) -> float:
        return self.delta - self.lam * self.theta

    @property
    def alive(self) -> bool:
        return self.theta < self.delta / self.lam


def apply_phase(field: Field, band: float) -> Field:
    """Mode-wise multiply by e^{band |xi|}, computed in log-magnitude space.

    Rejects an expired band; flags the run when any boosted magnitude
    exceeds the overflow limit (the grid no longer resolves the band).
    """
    if band < 0:
        raise ValidityError("band-expired", f"band = {band:.3e}")
    f = to_spectral(field)
    if band == 0.0:
        return f
    vals = f.values
    absv = np.abs(vals)
    boost = band * f.spec.xi_mag[None, ..., None]
    with np.errstate(divide="ignore"):
        logmag = boost + np.log(absv)
    peak = float(np.max(logmag, initial=-np.inf))
    if peak > _LOG_LIMIT:
        raise ValidityError("radius-underresolved", f"max log magnitude {peak:.2f}")
    out = np.zeros_like(vals)
    nz = absv > 1e-300  # denormals are dropped, not divided by
    out[nz] = vals[nz] / absv[nz] * np.exp(logmag[nz])
    return f.with_values(out)


def phase_value(band: float, xi) -> np.ndarray:
    """Phi(t, xi) = band * |xi| (isotropic in the horizontal frequency)."""
    xi = np.asarray(xi, dtype=float)
    if xi.ndim <= 1:
        return band * np.abs(xi) if xi.ndim == 0 else band * np.linalg.norm(xi)
    return band * np.linalg.norm(xi, axis=-1)


def check_subadditivity(state: RadiusState, xi, eta) -> bool:
    """Phi(xi) <= Phi(xi - eta) + Phi(eta) for the current band."""
    if not state.alive:
        raise ValidityError("band-expired", "subadditivity asked on a dead state")
    b = state.band
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    eta = np.atleast_1d(np.asarray(eta, dtype=float))
    lhs = b * np.linalg.norm(xi)
    rhs = b * np.linalg.norm(xi - eta) + b * np.linalg.norm(eta)
    return bool(lhs <= rhs + 1e-12 * max(1.0, abs(rhs)))


def theta_rate(w: Field, shear_profile, state: RadiusState, t: float, bank: DyadicFilterBank) -> float:
    """theta-dot: <t>^{1/4} (B-norm of e^Psi d_y w_Phi + ||e^Psi d_y u_s||_{L2v}).

    Uses the state's current (lagged) band inside the phase conjugation.
    """
    from . import norms  # deferred to avoid an import cycle
    from .shear import weighted_l2v_shear

    if not state.alive:
        raise ValidityError("band-expired", "theta_rate on a dead state")
    spec = w.spec
    s = 0.5 * (spec.d - 1)
    dyw = ddy(to_spectral(w))
    dyw_phi = apply_phase(dyw, state.band)
    vy = np.exp(psi(t, spec.y))
    w_term = norms.besov_norm(dyw_phi, s, bank, vy)
    shear_term = weighted_l2v_shear(shear_profile)
    return float((1.0 + t) ** 0.25 * (w_term + shear_term))


def advance_theta(state: RadiusState, rate: float, dt: float) -> RadiusState:
    """Explicit trapezoid: theta += dt * (rate + previous rate) / 2."""
    if rate < 0:
        raise ValueError("theta rate must be nonnegative")
    prev = rate if state.prev_rate is None else state.prev_rate
    theta = state.theta + 0.5 * dt * (rate + prev)
    return replace(state, theta=theta, prev_rate=rate)


def ring_amplitudes(field: Field):
    """(|xi|, max_y |w_hat|) per frequency ring of the lattice (DC excluded)."""
    f = to_spectral(field)
    spec = f.spec
    mags = spec.xi_mag.reshape(-1)
    amp = np.abs(f.values).max(axis=-1).sum(axis=0).reshape(-1)
    order = np.argsort(mags, kind="stable")
    mags_sorted = mags[order]
    amp_sorted = amp[order]
    uniq, start = np.unique(np.round(mags_sorted, 9), return_index=True)
    ring_amp = np.maximum.reduceat(amp_sorted, start)
    keep = uniq > 0
    return uniq[keep], ring_amp[keep]


def measure_radius(field: Field, noise_floor: float = 1e-14, min_rings: int = 8):
    """Empirical analyticity radius from the spectral decay slope.

    Least-squares slope of log ring amplitude against |xi| over the
    decaying range: strictly past the peak ring (the peak itself is
    excluded, which debiases flat/noisy spectra) and above the noise
    floor.  Returns ``None`` when fewer than ``min_rings`` rings are
    usable.
    """
    xi, amp = ring_amplitudes(field)
    if xi.size == 0:
        return None
    start = int(np.argmax(amp)) + 1
    xi, amp = xi[start:], amp[start:]
    usable = amp > noise_floor
    xi, amp = xi[usable], amp[usable]
    if xi.size < min_rings:
        return None
    slope = np.polyfit(xi, np.log(amp), 1)[0]
    return float(-slope)
