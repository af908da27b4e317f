"""Horizontal Besov norms, Chemin-Lerner accumulators, Gaussian weighting.

All L^2 norms over the domain use Parseval horizontally and the trapezoid
rule vertically (see the transform convention in :mod:`prandtl_lab.grid`).
Besov sums run over the resolved shells in l^1 with weights 2^{ks}; the
low-pass block is scored at index ``k_min - 1``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import kernels
from .dyadic import DyadicFilterBank
from .grid import Field, to_spectral
from .validity import ValidityError

OVERFLOW_LIMIT = 1e30
_HEAVY_LOG = 700.0          # e^x representability edge
_NEGLIGIBLE_LOG = -140.0    # dropped contributions must sit below e^-140


def safe_vertical_weights(flat: np.ndarray, wy: np.ndarray, log_vy: np.ndarray | None) -> np.ndarray:
    """Trapezoid weights times the squared vertical weight, overflow-safe.

    Rows whose weight overflows a double are dropped after verifying the
    field is effectively zero there (otherwise the run is flagged: the
    Gaussian weight cap has been violated).  ``log_vy`` is the log of the
    weight samples, e.g. Psi(t, y).
    """
    if log_vy is None:
        return np.ascontiguousarray(wy)
    lw = 2.0 * np.asarray(log_vy, dtype=float) + np.log(wy)
    heavy = lw > _HEAVY_LOG
    if np.any(heavy):
        amax = np.abs(flat[:, heavy]).max(axis=0)
        nz = amax > 0.0
        if np.any(nz):
            contrib = 2.0 * np.log(amax[nz]) + lw[heavy][nz]
            if np.any(contrib > _NEGLIGIBLE_LOG):
                raise ValidityError(
                    "psi-overflow",
                    f"weighted power up to e^{float(np.max(contrib)):.0f} on overflow rows",
                )
    weights = np.zeros_like(lw)
    weights[~heavy] = np.exp(lw[~heavy])
    return np.ascontiguousarray(weights)


def _mode_power_rows(field: Field, log_vy: np.ndarray | None) -> np.ndarray:
    """sum over components and y of |w_hat|^2 e^{2 log_vy} trapz, per mode."""
    spec = field.spec
    f = to_spectral(field)
    flat = np.ascontiguousarray(f.flat, dtype=np.complex128)
    weights = safe_vertical_weights(flat, spec.trapz_weights(), log_vy)
    rows = kernels.power_rows(flat, weights)
    n_modes = int(np.prod(spec.hshape))
    return rows.reshape(spec.n_components, n_modes).sum(axis=0)


def l2_plus_norm(field: Field, log_vy: np.ndarray | None = None) -> float:
    """L^2 norm over box x [0, Y_max]; optional log of a vertical weight."""
    spec = field.spec
    rows = _mode_power_rows(field, log_vy)
    return float(np.sqrt(spec.L ** (spec.d - 1) * rows.sum()))


def shell_l2_norms(field: Field, bank: DyadicFilterBank, log_vy: np.ndarray | None = None) -> np.ndarray:
    """Block L^2 norms [low block, shells k_min..k_max] in one fused pass."""
    spec = field.spec
    rows = _mode_power_rows(field, log_vy)
    box = spec.L ** (spec.d - 1)
    shell_sq = box * (bank.phi2_matrix() @ rows)
    low_sq = box * (bank.low2_vector() @ rows)
    return np.sqrt(np.concatenate([[low_sq], shell_sq]))


def besov_norm(
    field: Field,
    s: float,
    bank: DyadicFilterBank,
    log_vy: np.ndarray | None = None,
) -> float:
    """B^{s,0} norm: l^1 over blocks of 2^{ks} ||Delta_k . ||_{L^2_+}."""
    norms = shell_l2_norms(field, bank, log_vy)
    ks = np.array(bank.block_indices, dtype=float)
    return float(np.sum(2.0 ** (ks * s) * norms))


@dataclass
class NormSeries:
    """Per-shell norm samples along a run (single writer, append-only).

    ``block_indices`` lists the scored blocks (low block first); each
    ``append`` adds one time stamp with one norm per block and an optional
    nonnegative scalar weight (used by the weighted Chemin-Lerner norm).
    """

    block_indices: list
    times: list = dc_field(default_factory=list)
    samples: list = dc_field(default_factory=list)
    weights: list = dc_field(default_factory=list)

    def append(self, t: float, norms: np.ndarray, weight: float | None = None) -> None:
        if self.times and t <= self.times[-1]:
            raise ValueError("time stamps must be strictly increasing")
        norms = np.asarray(norms, dtype=float)
        if norms.shape != (len(self.block_indices),):
            raise ValueError("one norm sample per block required")
        if np.any(norms < 0):
            raise ValueError("norm samples must be nonnegative")
        self.times.append(float(t))
        self.samples.append(norms)
        if weight is not None:
            if weight < 0:
                raise ValueError("weight samples must be nonnegative")
            self.weights.append(float(weight))

    def as_arrays(self):
        return np.asarray(self.times), np.asarray(self.samples)  # (n,), (n, K)

    def __len__(self) -> int:
        return len(self.times)


def chemin_lerner(series: NormSeries, p: float, s: float) -> float:
    """L-tilde^p_T(B^{s,0}): time integration inside the shell sum.

    p = inf uses the running maximum, p = 2 the trapezoid of the squares.
    """
    if p not in (2, np.inf):
        raise ValueError("supported time exponents: 2, inf")
    if len(series) == 0:
        warnings.warn("chemin_lerner of an empty series is 0")
        return 0.0
    t, samp = series.as_arrays()
    ks = np.asarray(series.block_indices, dtype=float)
    if p == np.inf:
        per_block = samp.max(axis=0)
    else:
        per_block = np.sqrt(np.trapezoid(samp**2, t, axis=0)) if len(t) > 1 else np.zeros_like(ks)
    return float(np.sum(2.0 ** (ks * s) * per_block))


def weighted_chemin_lerner(series: NormSeries, s: float) -> float:
    """Weighted variant: integrals int f(t) ||Delta_k a||^2 dt inside the sum."""
    if len(series) == 0:
        warnings.warn("weighted_chemin_lerner of an empty series is 0")
        return 0.0
    if len(series.weights) != len(series.times):
        raise ValueError("series carries no complete weight samples")
    f = np.asarray(series.weights)
    if np.any(f < 0):
        raise ValueError("weight function must be nonnegative")
    t, samp = series.as_arrays()
    ks = np.asarray(series.block_indices, dtype=float)
    if len(t) < 2:
        return 0.0
    per_block = np.sqrt(np.trapezoid(f[:, None] * samp**2, t, axis=0))
    return float(np.sum(2.0 ** (ks * s) * per_block))


def weight_by_psi(field: Field, t: float) -> Field:
    """Multiply samples by e^{Psi(t, y)}; trips the validity guard on overflow.

    Valid in either representation since the weight acts on y only.  The
    product is formed in log-magnitude space so an overflowing weight on a
    zero sample stays zero instead of poisoning the field.
    """
    from .radius import psi  # deferred: radius imports norms at module level

    vals = field.values
    logpsi = psi(t, field.spec.y)
    absv = np.abs(vals)
    with np.errstate(divide="ignore"):
        logmag = logpsi + np.log(absv)
    peak = float(np.max(logmag, initial=-np.inf))
    if peak > np.log(OVERFLOW_LIMIT):
        raise ValidityError("psi-overflow", f"max log |e^Psi w| = {peak:.2f}")
    out = np.zeros_like(vals)
    nz = absv > 1e-300
    out[nz] = vals[nz] / absv[nz] * np.exp(logmag[nz])
    return field.with_values(out)
