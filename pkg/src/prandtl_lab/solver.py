"""IMEX time integration of the boundary-layer perturbation system.

Explicit part (2nd-order Adams-Bashforth, Euler on the first step):
advection by the perturbation and the shear, and the two terms driven by
the vertical integral of the horizontal divergence.  Implicit part
(Crank-Nicolson): vertical diffusion, one prefactored tridiagonal solve
per step for all modes and components at once, Dirichlet rows at y = 0
and y = Y_max.

The normal velocity is never stored; the divergence integral reconstructs
it on demand.  Nonlinear products are formed in physical space under the
2/3 rule; the terms that are linear in the perturbation (shear advection,
shear coupling) act mode-diagonally in spectral space and stay full-band.
"""

from __future__ import annotations

import json
import os
import time as _time
from dataclasses import dataclass, field as dc_field, replace

import numpy as np

from . import kernels, norms
from .dyadic import DyadicFilterBank, build_filters
from .grid import (
    Field,
    GridSpec,
    ddy,
    dealias,
    enforce_dirichlet,
    horizontal_divergence,
    save_snapshot,
    spectral_dx,
    tail_monitor,
    to_physical,
    to_spectral,
    vertical_integral,
    zero_field,
)
from .radius import (
    RadiusState,
    advance_theta,
    apply_phase,
    measure_radius,
    psi,
    ring_amplitudes,
)
from .shear import ShearProfile, sample_profile, weighted_l2v_shear
from .validity import ValidityError


class ConfigError(ValueError):
    """Invalid solver configuration (maps to CLI exit status 2)."""


ADVECTIVE_CFL = 0.8


@dataclass
class SolverConfig:
    """Full description of one run; everything needed to reproduce it."""

    grid: GridSpec = dc_field(default_factory=GridSpec)
    eps: float = 0.04
    delta: float = 0.5
    lam: float = 1.0
    dt: float = 0.02
    t_max: float | None = None
    seed: int = 7
    data_amp: float | None = None      # initial-data size; defaults to eps
    dealias_products: bool = True
    nonlinear: bool = True             # False: pure vertical diffusion
    stop_after: str = "half"           # "half" | "t_star" | "t_max"
    tail_limit: float = 1e-8           # on e^Psi |w| near the top, per unit eps
    phase_limit: float = 1e30
    radius_every: int = 10
    record_shells: bool = True
    direction: tuple | None = None

    def validate(self) -> None:
        if not (0.0 <= self.eps <= 0.5):
            raise ConfigError(f"eps = {self.eps} outside [0, 0.5]")
        if not (0.0 < self.delta <= 2.0):
            raise ConfigError(f"delta = {self.delta} outside (0, 2]")
        if self.lam <= 0:
            raise ConfigError("lambda must be positive")
        if self.dt <= 0:
            raise ConfigError("dt must be positive")
        if self.stop_after not in ("half", "t_star", "t_max"):
            raise ConfigError(f"unknown stop_after {self.stop_after!r}")
        u_scale = 2.0 * max(self.eps, self.data_amp or 0.0)
        if u_scale > 0 and self.dt * u_scale * self.grid.xi_max > ADVECTIVE_CFL:
            raise ConfigError(
                f"dt = {self.dt} violates the advective CFL bound "
                f"dt * u * xi_max <= {ADVECTIVE_CFL} (u ~ {u_scale})"
            )

    @property
    def amp(self) -> float:
        return self.eps if self.data_amp is None else self.data_amp

    @property
    def horizon(self) -> float:
        if self.t_max is not None:
            return self.t_max
        if self.eps <= 0:
            return 20.0
        return 5.0 * max(1.0, (self.delta / (2.0 * self.lam * self.eps)) ** (4.0 / 3.0))

    def echo(self) -> dict:
        g = self.grid
        return {
            "grid": {"d": g.d, "N_h": g.N_h, "L": g.L, "M": g.M, "Y_max": g.Y_max},
            "eps": self.eps,
            "delta": self.delta,
            "lam": self.lam,
            "dt": self.dt,
            "t_max": self.horizon,
            "seed": self.seed,
            "data_amp": self.amp,
            "dealias_products": self.dealias_products,
            "nonlinear": self.nonlinear,
            "stop_after": self.stop_after,
            "tail_limit": self.tail_limit,
            "radius_every": self.radius_every,
            "kernel_backend": kernels.BACKEND,
        }


def _frequency_reverse(g: np.ndarray, spec: GridSpec) -> np.ndarray:
    """Index map m -> (-m) mod N along every horizontal axis."""
    rev = g
    for ax in spec.haxes:
        rev = np.flip(np.roll(rev, -1, axis=ax), axis=ax)
    return rev


def _hermitian_phases(rng: np.random.Generator, spec: GridSpec) -> np.ndarray:
    """Unit-modulus phases with e^{i phi(-m)} = conj(e^{i phi(m)}).

    Antisymmetrizing the phase (instead of symmetrizing the coefficient)
    keeps every mode's magnitude exactly on the prescribed envelope.
    """
    phase = 2.0 * np.pi * rng.random(spec.hshape)
    phase = 0.5 * (phase - _frequency_reverse(phase, spec))
    return np.exp(1j * phase)


def init_data(config: SolverConfig, bank: DyadicFilterBank | None = None) -> Field:
    """Analytic initial data normalized so the weighted entry norm equals eps.

    Spectrum A e^{-2 delta |xi|} (1 - e^{-4 |xi|^2}) with seeded random
    phases (zero horizontal mean), vertical profile y^2 e^{-y^2/2}.  The
    mask saturates quickly so the decay slope past the spectral peak is
    the prescribed 2 delta.
    """
    spec = config.grid
    if bank is None:
        bank = build_filters(spec)
    rng = np.random.default_rng(config.seed)
    mag = spec.xi_mag
    envelope = np.exp(-2.0 * config.delta * mag) * (1.0 - np.exp(-4.0 * mag**2))
    q = spec.y**2 * np.exp(-0.5 * spec.y**2)
    blocks = []
    for _ in range(spec.n_components):
        gh = envelope * _hermitian_phases(rng, spec)
        blocks.append(gh[..., None] * q)
    w0 = enforce_dirichlet(Field(spec, np.stack(blocks), "spectral"))
    amp = config.amp
    if amp == 0.0:
        return zero_field(spec)
    n14 = entry_norm(w0, config, bank)
    return w0.with_values(w0.values * (amp / n14))


def entry_norm(w0: Field, config: SolverConfig, bank: DyadicFilterBank) -> float:
    """|| e^{(1+y^2)/8} e^{delta |D|} w0 ||_{B^{(d-1)/2,0}}."""
    spec = config.grid
    s = 0.5 * (spec.d - 1)
    boosted = apply_phase(to_spectral(w0), config.delta)
    vy = np.exp(psi(0.0, spec.y))
    return norms.besov_norm(boosted, s, bank, vy)


def prandtl_rhs(
    w: Field,
    shear_profile: ShearProfile,
    t: float,
    config: SolverConfig,
    parts: bool = False,
):
    """Explicit right-hand side (vertical diffusion excluded).

      -(w + u_s) . grad_h w + (int_0^y div_h w dy') (d_y w + d_y u_s)

    ``parts=True`` returns the three terms separately (test hook).
    """
    spec = w.spec
    wh = to_spectral(w)
    if not config.nonlinear:
        zero = zero_field(spec)
        return {"advection": zero, "int_dyw": zero, "int_dyus": zero} if parts else zero

    whd = dealias(wh) if config.dealias_products else wh
    w_p = to_physical(whd)
    div_full = vertical_integral(horizontal_divergence(wh))      # linear term, full band
    div_nl = div_full if not config.dealias_products else vertical_integral(
        horizontal_divergence(whd)
    )
    int_p = to_physical(div_nl).values[0]
    dyw_p = ddy(w_p)

    adv_phys = np.zeros_like(w_p.values)
    for j in range(spec.n_components):
        dxj = to_physical(wh.with_values(
            np.stack([spectral_dx(whd.values[c], spec, j) for c in range(spec.n_components)])
        ))
        adv_phys += w_p.values[j][None, ...] * dxj.values
    int_dyw_phys = int_p[None, ...] * dyw_p.values

    def pack(phys_vals):
        f = to_spectral(Field(spec, phys_vals, "physical"))
        return dealias(f) if config.dealias_products else f

    adv = pack(adv_phys)
    # shear advection acts mode-diagonally: -u_s(y) * i (e . xi) w_hat
    e = shear_profile.direction
    exi = np.zeros(spec.hshape)
    for c in range(spec.n_components):
        exi = exi + e[c] * spec.xi_component(c)
    shear_adv_vals = (1j * exi)[None, ..., None] * wh.values * shear_profile.us
    adv_total = adv.with_values(adv.values + shear_adv_vals)

    int_dyw = pack(int_dyw_phys)
    base = div_full.values[0] * shear_profile.dus  # mode-diagonal, full band
    int_dyus = wh.with_values(np.stack([base * e[c] for c in range(spec.n_components)]))

    if parts:
        return {"advection": adv_total, "int_dyw": int_dyw, "int_dyus": int_dyus}
    out_vals = -adv_total.values + int_dyw.values + int_dyus.values
    if not np.all(np.isfinite(out_vals)):
        raise ValidityError("nan", f"non-finite right-hand side at t = {t:.6g}")
    return wh.with_values(out_vals)


@dataclass
class CrankNicolson:
    """Prefactored implicit vertical-diffusion operator."""

    spec: GridSpec
    dt: float

    def __post_init__(self):
        M = self.spec.M
        r = self.dt / (2.0 * self.spec.dy**2)
        lower = np.full(M, -r)
        diag = np.full(M, 1.0 + 2.0 * r)
        upper = np.full(M, -r)
        for row in (0, M - 1):
            lower[row] = 0.0
            upper[row] = 0.0
            diag[row] = 1.0
        self.r = r
        self.lower = lower
        cp, inv_piv = kernels.tridiag_factor(lower, diag, upper)
        self.cp = cp
        self.inv_piv = inv_piv

    def explicit_half(self, vals: np.ndarray) -> np.ndarray:
        """(I + dt/2 A) applied along y, zero on the Dirichlet rows."""
        out = np.array(vals)
        out[..., 1:-1] += self.r * (vals[..., 2:] - 2.0 * vals[..., 1:-1] + vals[..., :-2])
        out[..., 0] = 0.0
        out[..., -1] = 0.0
        return out

    def solve(self, rhs_vals: np.ndarray) -> np.ndarray:
        flat = np.ascontiguousarray(rhs_vals.reshape(-1, self.spec.M), dtype=np.complex128)
        out = kernels.tridiag_solve_factored(self.lower, self.cp, self.inv_piv, flat)
        return out.reshape(rhs_vals.shape)


def step(
    w: Field,
    shear_profile: ShearProfile,
    t: float,
    dt: float,
    cn: CrankNicolson,
    config: SolverConfig,
    prev_rhs: Field | None,
    forcing=None,
):
    """One IMEX step from t to t + dt; returns (w_next, rhs_now)."""
    rhs_now = prandtl_rhs(w, shear_profile, t, config)
    if forcing is not None:
        f = forcing(t)
        rhs_now = rhs_now.with_values(rhs_now.values + to_spectral(f).values)
    if prev_rhs is None:
        expl = rhs_now.values
    else:
        expl = 1.5 * rhs_now.values - 0.5 * prev_rhs.values
    rhs_vals = cn.explicit_half(w.values) + dt * expl
    rhs_vals[..., 0] = 0.0
    rhs_vals[..., -1] = 0.0
    w_next = enforce_dirichlet(w.with_values(cn.solve(rhs_vals)))
    return w_next, rhs_now


@dataclass
class RunRecord:
    """Everything a run produces: traces, crossings, validity, bound ratios."""

    config_echo: dict
    block_indices: list
    times: np.ndarray
    theta: np.ndarray
    rate: np.ndarray
    band: np.ndarray
    alive: np.ndarray
    bnorm_w: np.ndarray
    bnorm_dyw: np.ndarray
    l2w: np.ndarray
    radius_emp: np.ndarray
    cl_inf_w: np.ndarray
    cl2_dyw: np.ndarray
    wcl2_w: np.ndarray
    shell_w: np.ndarray
    shell_dyw: np.ndarray
    spectrum_times: list
    spectrum_xi: np.ndarray
    spectrum_amp: list
    t_half: float | None
    t_star: float | None
    t_end: float
    steps: int
    valid: bool
    cause: str
    n14: float
    wall_time_s: float

    @property
    def eps(self) -> float:
        return float(self.config_echo["eps"])

    @property
    def bound_ratio_314(self) -> float:
        """(L~inf + L~2 weighted norms of the solution) / entry norm."""
        if self.n14 == 0:
            return np.nan
        return float((self.cl_inf_w[-1] + self.cl2_dyw[-1]) / self.n14)

    @property
    def theta_envelope_sup(self) -> float:
        """sup_t theta / (<t>^{3/4} 2 eps)."""
        if self.eps == 0:
            return np.nan
        env = self.theta / ((1.0 + self.times) ** 0.75 * 2.0 * self.eps)
        return float(np.max(env))

    @property
    def min_radius_margin(self) -> float:
        """min of measured radius - (band - 0.05) over measured rows."""
        mask = np.isfinite(self.radius_emp)
        if not np.any(mask):
            return np.nan
        return float(np.min(self.radius_emp[mask] - (self.band[mask] - 0.05)))

    def save(self, out_dir: str, force: bool = False, snapshot_field: Field | None = None) -> None:
        os.makedirs(out_dir, exist_ok=True)
        run_json = os.path.join(out_dir, "run.json")
        if os.path.exists(run_json) and not force:
            raise FileExistsError(f"{run_json} exists; pass force to overwrite")
        payload = {
            "config": self.config_echo,
            "t_half": self.t_half,
            "t_star": self.t_star,
            "t_end": self.t_end,
            "steps": self.steps,
            "valid": self.valid,
            "cause": self.cause,
            "n14": self.n14,
            "bound_ratio_314": self.bound_ratio_314,
            "theta_envelope_sup": self.theta_envelope_sup,
            "min_radius_margin": self.min_radius_margin,
            "wall_time_s": self.wall_time_s,
        }
        with open(run_json, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)
        header = "# config: " + json.dumps(self.config_echo)
        cols = np.column_stack(
            [
                self.times,
                self.theta,
                self.rate,
                self.band,
                self.radius_emp,
                self.alive.astype(float),
                self.bnorm_w,
                self.bnorm_dyw,
                self.l2w,
                self.cl_inf_w,
                self.cl2_dyw,
                self.wcl2_w,
            ]
        )
        names = "t,theta,theta_dot,band,radius_emp,alive,bnorm_w,bnorm_dyw,l2w,cl_inf_w,cl2_dyw,wcl2_w"
        np.savetxt(
            os.path.join(out_dir, "traces.csv"),
            cols,
            delimiter=",",
            header=header + "\n" + names,
            comments="",
        )
        if self.shell_w.size:
            ks = ",".join(str(k) for k in self.block_indices)
            np.savetxt(
                os.path.join(out_dir, "shells.csv"),
                np.column_stack([self.times, self.shell_w, self.shell_dyw]),
                delimiter=",",
                header=header + f"\nt,w blocks then dyw blocks; block indices: {ks}",
                comments="",
            )
        if self.spectrum_times:
            rows = []
            for t, amp in zip(self.spectrum_times, self.spectrum_amp):
                rows.append(np.column_stack([np.full_like(self.spectrum_xi, t), self.spectrum_xi, amp]))
            np.savetxt(
                os.path.join(out_dir, "spectrum.csv"),
                np.vstack(rows),
                delimiter=",",
                header=header + "\nt,xi,amp",
                comments="",
            )
        if snapshot_field is not None:
            save_snapshot(snapshot_field, os.path.join(out_dir, "field_final"))


def run(config: SolverConfig, forcing=None, shear_override=None, w0_override=None) -> RunRecord:
    """Integrate until a theta crossing, the horizon, or a validity failure.

    ``forcing``, ``shear_override`` and ``w0_override`` support manufactured
    and degenerate configurations; production runs leave them unset.
    """
    config.validate()
    t0 = _time.perf_counter()
    spec = config.grid
    bank = build_filters(spec)
    s = 0.5 * (spec.d - 1)
    block_ks = np.asarray([bank.k_min - 1, *bank.shells], dtype=float)
    two_ks = 2.0 ** (block_ks * s)
    two_kd2 = 2.0 ** (block_ks * (0.5 * spec.d))

    w = init_data(config, bank) if w0_override is None else to_spectral(w0_override)
    n14 = entry_norm(w, config, bank) if config.amp > 0 or w0_override is not None else 0.0
    state = RadiusState(delta=config.delta, lam=config.lam)
    cn = CrankNicolson(spec, config.dt)
    direction = None if config.direction is None else np.asarray(config.direction, float)

    def make_shear(t):
        if shear_override is not None:
            return shear_override(t)
        return sample_profile(spec, t, config.eps, direction)

    rows = {key: [] for key in (
        "t", "theta", "rate", "band", "alive", "bnw", "bndyw", "l2w", "rad",
        "clinf", "cl2", "wcl2", "shw", "shdyw",
    )}
    spectrum_times, spectrum_amp = [], []
    spectrum_xi = None

    running_max = np.zeros_like(block_ks)
    running_int_dyw = np.zeros_like(block_ks)   # int ||Delta_k e^Psi dyw_Phi||^2 dt
    running_int_wth = np.zeros_like(block_ks)   # int theta_dot ||Delta_k e^Psi w_Phi||^2 dt
    prev_sq_dyw = None
    prev_sq_wth = None

    t_half = None
    t_star = None
    valid = True
    cause = ""
    steps_done = 0
    prev_rhs = None
    shear_now = make_shear(0.0)

    n_steps = int(np.floor(config.horizon / config.dt + 1e-9))

    xi_flat = spec.xi_mag.reshape(-1)
    phi2 = bank.phi2_matrix()
    low2 = bank.low2_vector()
    box = spec.L ** (spec.d - 1)
    wy = spec.trapz_weights()

    def weighted_block_norms(field_spectral, vy, band):
        """Fused [low, shells] norms of e^Psi (field)_Phi.

        The phase is a |xi| multiplier, so it scales the per-mode power
        rows by e^{2 band |xi|} after the vertical reduction.
        """
        weights = np.ascontiguousarray(wy * vy**2)
        flat = np.ascontiguousarray(field_spectral.flat, dtype=np.complex128)
        rows = kernels.power_rows(flat, weights)
        rows = rows.reshape(spec.n_components, -1).sum(axis=0)
        if band != 0.0:
            rows = rows * np.exp(2.0 * band * xi_flat)
        top = float(rows.max(initial=0.0))
        if not np.isfinite(top) or top > norms.OVERFLOW_LIMIT**2:
            raise ValidityError("radius-underresolved", f"boosted mode power {top:.3e}")
        return np.sqrt(box * np.concatenate([[low2 @ rows], phi2 @ rows]))

    def diagnostics(t, w, shear_profile, state):
        vy = np.exp(psi(t, spec.y))
        wh = to_spectral(w)
        sh_w = weighted_block_norms(wh, vy, state.band)
        sh_dyw = weighted_block_norms(ddy(wh), vy, state.band)
        bn_w = float(np.sum(two_ks * sh_w))
        bn_dyw = float(np.sum(two_ks * sh_dyw))
        rate = float((1.0 + t) ** 0.25 * (bn_dyw + weighted_l2v_shear(shear_profile)))
        return sh_w, sh_dyw, bn_w, bn_dyw, rate

    def record(t, state, rate, sh_w, sh_dyw, bn_w, bn_dyw, w, measure=False):
        nonlocal prev_sq_dyw, prev_sq_wth, spectrum_xi, running_int_dyw, running_int_wth
        rows["t"].append(t)
        rows["theta"].append(state.theta)
        rows["rate"].append(rate)
        rows["band"].append(state.band)
        rows["alive"].append(state.alive)
        rows["bnw"].append(bn_w)
        rows["bndyw"].append(bn_dyw)
        rows["l2w"].append(norms.l2_plus_norm(w))
        if measure:
            rad = measure_radius(w)
            rows["rad"].append(np.nan if rad is None else rad)
        else:
            rows["rad"].append(np.nan)
        if config.record_shells:
            rows["shw"].append(sh_w)
            rows["shdyw"].append(sh_dyw)
        # running Chemin-Lerner accumulators (trapezoid in t)
        np.maximum(running_max, sh_w, out=running_max)
        sq_dyw = sh_dyw**2
        sq_wth = rate * sh_w**2
        if prev_sq_dyw is not None:
            running_int_dyw += 0.5 * config.dt * (sq_dyw + prev_sq_dyw)
            running_int_wth += 0.5 * config.dt * (sq_wth + prev_sq_wth)
        prev_sq_dyw, prev_sq_wth = sq_dyw, sq_wth
        rows["clinf"].append(float(np.sum(two_ks * running_max)))
        rows["cl2"].append(float(np.sum(two_ks * np.sqrt(running_int_dyw))))
        rows["wcl2"].append(float(np.sum(two_kd2 * np.sqrt(running_int_wth))))
        if measure:
            xi, amp = ring_amplitudes(w)
            if spectrum_xi is None:
                spectrum_xi = xi
            spectrum_times.append(t)
            spectrum_amp.append(amp)

    try:
        sh_w, sh_dyw, bn_w, bn_dyw, rate = diagnostics(0.0, w, shear_now, state)
        state = replace(state, prev_rate=rate)
        record(0.0, state, rate, sh_w, sh_dyw, bn_w, bn_dyw, w, measure=True)

        for n in range(1, n_steps + 1):
            t_prev = (n - 1) * config.dt
            t_now = n * config.dt
            w, prev_rhs = step(w, shear_now, t_prev, config.dt, cn, config, prev_rhs, forcing)
            steps_done = n
            if not np.all(np.isfinite(w.values)):
                raise ValidityError("nan", f"non-finite field at t = {t_now:.6g}")
            shear_now = make_shear(t_now)
            theta_prev = state.theta
            sh_w, sh_dyw, bn_w, bn_dyw, rate = diagnostics(t_now, w, shear_now, state)
            state = advance_theta(state, rate, config.dt)
            measure = (n % config.radius_every == 0) or n == n_steps
            record(t_now, state, rate, sh_w, sh_dyw, bn_w, bn_dyw, w, measure=measure)

            tail = tail_monitor(w, np.exp(psi(t_now, spec.y)))
            if config.amp > 0 and tail > config.tail_limit * config.amp:
                raise ValidityError("tail", f"e^Psi |w| = {tail:.3e} near y = Y_max at t = {t_now:.6g}")

            half_target = config.delta / (2.0 * config.lam)
            star_target = config.delta / config.lam
            if t_half is None and state.theta >= half_target:
                t_half = _interp_crossing(t_prev, t_now, theta_prev, state.theta, half_target)
                if config.stop_after == "half":
                    break
            if t_star is None and state.theta >= star_target:
                t_star = _interp_crossing(t_prev, t_now, theta_prev, state.theta, star_target)
                break  # the band is gone; no stop mode continues past T*
    except ValidityError as err:
        valid = False
        cause = err.cause

    wall = _time.perf_counter() - t0
    shell_w = np.asarray(rows["shw"]) if rows["shw"] else np.empty((0, len(block_ks)))
    shell_dyw = np.asarray(rows["shdyw"]) if rows["shdyw"] else np.empty((0, len(block_ks)))
    return RunRecord(
        config_echo=config.echo(),
        block_indices=[int(k) for k in block_ks],
        times=np.asarray(rows["t"]),
        theta=np.asarray(rows["theta"]),
        rate=np.asarray(rows["rate"]),
        band=np.asarray(rows["band"]),
        alive=np.asarray(rows["alive"], dtype=bool),
        bnorm_w=np.asarray(rows["bnw"]),
        bnorm_dyw=np.asarray(rows["bndyw"]),
        l2w=np.asarray(rows["l2w"]),
        radius_emp=np.asarray(rows["rad"]),
        cl_inf_w=np.asarray(rows["clinf"]),
        cl2_dyw=np.asarray(rows["cl2"]),
        wcl2_w=np.asarray(rows["wcl2"]),
        shell_w=shell_w,
        shell_dyw=shell_dyw,
        spectrum_times=spectrum_times,
        spectrum_xi=spectrum_xi if spectrum_xi is not None else np.empty(0),
        spectrum_amp=spectrum_amp,
        t_half=t_half,
        t_star=t_star,
        t_end=float(rows["t"][-1]) if rows["t"] else 0.0,
        steps=steps_done,
        valid=valid,
        cause=cause,
        n14=n14,
        wall_time_s=wall,
    )


def _interp_crossing(t0: float, t1: float, th0: float, th1: float, target: float) -> float:
    if th1 == th0:
        return t1
    lam = (target - th0) / (th1 - th0)
    return float(t0 + lam * (t1 - t0))
