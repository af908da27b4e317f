"""Littlewood-Paley filter bank, shell projections, Bony paraproducts.

The smooth profiles are built so the partition of unity telescopes
*exactly*:

    chi(tau)   = 1 for |tau| <= 1, 0 for |tau| >= 4/3 (smooth in between)
    phi(tau)   = chi(tau/2) - chi(tau)

giving supp phi in [1, 8/3] (inside the required [3/4, 8/3]) and

    chi(2^-j tau) + sum_{k=j..K} phi(2^-k tau) = chi(2^-(K+1) tau),

which equals 1 on any lattice frequency once ``2^(K+1) >= |xi|``.  The
low-pass block ``S_{k_min}`` is treated as the shell of index
``k_min - 1`` wherever a full block list is needed (Besov sums, Bony
pairings); with the default shell range it contains only the DC mode.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field as dc_field

import numpy as np

from .grid import Field, GridSpec, dealias, scalar_as_field, to_physical, to_spectral

PHI_SUPPORT = (1.0, 8.0 / 3.0)
CHI_SUPPORT = 4.0 / 3.0


def smooth_step(s):
    """C-infinity step: 0 for s <= 0, 1 for s >= 1, strictly monotone between."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    out[s >= 1.0] = 1.0
    mid = (s > 0.0) & (s < 1.0)
    sm = s[mid]
    a = np.exp(-1.0 / sm)
    b = np.exp(-1.0 / (1.0 - sm))
    out[mid] = a / (a + b)
    return out


def chi_profile(tau):
    """Low-pass profile: 1 on |tau| <= 1, supported in |tau| <= 4/3."""
    return 1.0 - smooth_step(3.0 * (np.abs(tau) - 1.0))


def phi_profile(tau):
    """Shell profile chi(tau/2) - chi(tau), supported in 1 <= |tau| <= 8/3."""
    tau = np.abs(tau)
    return chi_profile(0.5 * tau) - chi_profile(tau)


@dataclass
class DyadicFilterBank:
    """Sampled shell multipliers on a grid's frequency lattice.

    ``phi_samples[i]`` holds phi(2^-k |xi|) for k = k_min + i over
    ``hshape``; ``chi_samples`` holds the low block chi(2^-k_min |xi|).
    ``warnings_out_of_range`` counts projections requested outside
    [k_min, k_max] (they return zero fields).
    """

    spec: GridSpec
    k_min: int
    k_max: int
    phi_samples: np.ndarray
    chi_samples: np.ndarray
    warnings_out_of_range: int = 0

    @property
    def shells(self) -> range:
        return range(self.k_min, self.k_max + 1)

    @property
    def n_shells(self) -> int:
        return self.k_max - self.k_min + 1

    @property
    def block_indices(self) -> list:
        """Low block (as k_min - 1) followed by the shell indices."""
        return [self.k_min - 1, *self.shells]

    def block_multiplier(self, k: int) -> np.ndarray:
        if k == self.k_min - 1:
            return self.chi_samples
        return self.phi_samples[k - self.k_min]

    def chi_at(self, k: int) -> np.ndarray:
        return chi_profile(2.0 ** (-k) * self.spec.xi_mag)

    def phi2_matrix(self) -> np.ndarray:
        """(n_shells, n_modes) matrix of squared shell multipliers."""
        return np.ascontiguousarray(
            (self.phi_samples**2).reshape(self.n_shells, -1)
        )

    def low2_vector(self) -> np.ndarray:
        return np.ascontiguousarray((self.chi_samples**2).reshape(-1))

    def partition_residual(self) -> float:
        """max over the lattice of |chi + sum_k phi_k - 1|."""
        total = self.chi_samples + self.phi_samples.sum(axis=0)
        return float(np.max(np.abs(total - 1.0)))

    def dump_csv(self) -> str:
        """Audit table (k, |xi|, phi value, chi value) over unique |xi|."""
        mags = np.unique(np.round(self.spec.xi_mag, 12))
        buf = io.StringIO()
        buf.write("k,xi,phi,chi\n")
        for k in self.shells:
            phi = phi_profile(2.0 ** (-k) * mags)
            chi = chi_profile(2.0 ** (-k) * mags)
            for m, p, c in zip(mags, phi, chi):
                buf.write(f"{k},{m:.12g},{p:.12g},{c:.12g}\n")
        return buf.getvalue()


def build_filters(spec: GridSpec) -> DyadicFilterBank:
    """Construct the bank covering all resolved nonzero frequencies.

    ``k_min`` is the largest k with chi(2^-k |xi|) vanishing on every
    nonzero lattice frequency (so the low block holds only DC);
    ``k_max`` the smallest k closing the telescoped partition at 1.
    """
    xi_min = spec.xi_min_nonzero
    xi_max = spec.xi_max
    k_min = int(np.floor(np.log2(0.75 * xi_min) + 1e-12))
    k_max = int(np.ceil(np.log2(xi_max) - 1e-12)) - 1
    n_shells = k_max - k_min + 1
    if n_shells < 3:
        raise ValueError(
            f"grid too coarse for a dyadic decomposition: only {n_shells} shells "
            f"between xi_min={xi_min:.4g} and xi_max={xi_max:.4g}"
        )
    mag = spec.xi_mag
    phi = np.stack([phi_profile(2.0 ** (-k) * mag) for k in range(k_min, k_max + 1)])
    chi = chi_profile(2.0 ** (-k_min) * mag)
    bank = DyadicFilterBank(spec, k_min, k_max, phi, chi)
    resid = bank.partition_residual()
    if resid > 1e-10:
        raise ValueError(f"partition of unity residual {resid:.3e} exceeds 1e-10")
    return bank


def project_shell(field: Field, bank: DyadicFilterBank, k: int) -> Field:
    """Delta_k^h: multiply every mode by phi(2^-k |xi|)."""
    if field.space != "spectral":
        raise ValueError("project_shell expects spectral form")
    if k < bank.k_min or k > bank.k_max:
        bank.warnings_out_of_range += 1
        return field.with_values(np.zeros_like(field.values))
    return field.with_values(field.values * bank.phi_samples[k - bank.k_min][None, ..., None])


def project_low(field: Field, bank: DyadicFilterBank, k: int) -> Field:
    """S_k^h: multiply every mode by chi(2^-k |xi|)."""
    if field.space != "spectral":
        raise ValueError("project_low expects spectral form")
    return field.with_values(field.values * bank.chi_at(k)[None, ..., None])


def project_block(field: Field, bank: DyadicFilterBank, k: int) -> Field:
    """Shell projection with the low block addressed as k = k_min - 1."""
    if k == bank.k_min - 1:
        return field.with_values(field.values * bank.chi_samples[None, ..., None])
    return project_shell(field, bank, k)


def _physical_product(a: Field, b: Field) -> np.ndarray:
    return to_physical(a).values * to_physical(b).values


def bony_decompose(f: Field, g: Field, bank: DyadicFilterBank):
    """Split f*g into (T_f g, T_g f, R(f, g)), all as dealiased spectral fields.

    Products are formed in physical space; each output carries the 2/3-rule
    mask, so the three parts sum to the dealiased product of f and g.
    """
    if f.spec != g.spec:
        raise ValueError("bony_decompose requires fields on the same grid")
    f = to_spectral(f)
    g = to_spectral(g)
    blocks = bank.block_indices
    fb = [to_physical(project_block(f, bank, k)).values for k in blocks]
    gb = [to_physical(project_block(g, bank, k)).values for k in blocks]

    # prefix[i] = sum of blocks[0..i-1]; S_{k-1} for block i is prefix[i-1]
    zero = np.zeros_like(fb[0])
    f_prefix = [zero]
    g_prefix = [zero]
    for fbk, gbk in zip(fb, gb):
        f_prefix.append(f_prefix[-1] + fbk)
        g_prefix.append(g_prefix[-1] + gbk)

    tfg = zero.copy()
    tgf = zero.copy()
    rem = zero.copy()
    n = len(blocks)
    for i in range(n):
        f_below = f_prefix[i - 1] if i >= 1 else zero
        g_below = g_prefix[i - 1] if i >= 1 else zero
        tfg += f_below * gb[i]
        tgf += g_below * fb[i]
        near = zero
        for j in range(max(0, i - 1), min(n, i + 2)):
            near = near + fb[j]
        rem += near * gb[i]

    def pack(vals):
        return dealias(to_spectral(Field(f.spec, vals, "physical")))

    return pack(tfg), pack(tgf), pack(rem)


_NORM_PS = (1, 2, np.inf)


def mixed_norm(block: np.ndarray, spec: GridSpec, p: float, q: float) -> float:
    """L^p_h(L^q_v) norm of one real physical component block."""
    if p not in _NORM_PS or q not in _NORM_PS:
        raise ValueError("supported exponents are p, q in {1, 2, inf}")
    wy = spec.trapz_weights()
    a = np.abs(block)
    if q == np.inf:
        g = a.max(axis=-1)
    elif q == 2:
        g = np.sqrt((a**2) @ wy)
    else:
        g = a @ wy
    if p == np.inf:
        return float(g.max())
    dxw = spec.dx ** (spec.d - 1)
    if p == 2:
        return float(np.sqrt((g**2).sum() * dxw))
    return float(g.sum() * dxw)


def bernstein_check(
    field: Field,
    bank: DyadicFilterBank,
    k: int,
    direction: str,
    alpha: int = 1,
    p1: float = 2,
    p2: float = 2,
    q: float = 2,
) -> float:
    """Measured constant in the anisotropic Bernstein inequality on shell k.

    ``direction="derivative"`` returns
        ||d^alpha a||_{p1,q} / (2^{k(alpha + (d-1)(1/p2 - 1/p1))} ||a||_{p2,q});
    ``direction="reverse"`` returns
        ||a||_{p1,q} / (2^{-k alpha} sup_{|beta|=alpha} ||d^beta a||_{p1,q}).

    The field must be shell-localized (output of :func:`project_shell`).
    """
    spec = field.spec
    f = to_spectral(field)
    d_h = spec.d - 1

    def deriv_norm(n_alpha: int, p: float) -> float:
        # sup over multi-indices of total order n_alpha (axis-aligned powers
        # dominate on a ring; enumerate all compositions for correctness)
        best = 0.0
        for ax_powers in _compositions(n_alpha, d_h):
            mult = np.ones(spec.hshape, dtype=complex)
            for c, pw in enumerate(ax_powers):
                mult = mult * (1j * spec.xi_component(c)) ** pw
            vals = f.values * mult[None, ..., None]
            phys = to_physical(Field(spec, vals, "spectral"))
            best = max(best, mixed_norm(phys.values[0], spec, p, q))
        return best

    base_phys = to_physical(f)
    if direction == "derivative":
        num = deriv_norm(alpha, p1)
        if 1.0 / p2 < 1.0 / p1:
            raise ValueError("derivative direction requires p2 <= p1")
        expo = alpha + d_h * (_inv(p2) - _inv(p1))
        den = 2.0 ** (k * expo) * mixed_norm(base_phys.values[0], spec, p2, q)
    elif direction == "reverse":
        num = mixed_norm(base_phys.values[0], spec, p1, q)
        den = 2.0 ** (-k * alpha) * deriv_norm(alpha, p1)
    else:
        raise ValueError(f"unknown direction {direction!r}")
    if den == 0.0:
        return 0.0
    return num / den


def _inv(p: float) -> float:
    return 0.0 if p == np.inf else 1.0 / p


def _compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first, *rest)
