"""Discrete fields on a periodic horizontal box times a truncated vertical line.

The horizontal directions (one for ``d=2``, two for ``d=3``) are periodic
with period ``L`` and carry a Fourier representation; the vertical
direction is the interval ``[0, Y_max]`` on a uniform grid with Dirichlet
rows at both ends.

Transform convention (used everywhere in the package): ``to_spectral``
applies the forward DFT with the ``1/N`` normalization per horizontal
axis (``numpy`` ``norm="forward"``), so a spectral value is the Fourier
*coefficient* of ``exp(i xi . x)`` and Parseval reads

    integral |w|^2 dx = L**(d-1) * sum_m |w_hat_m|^2 .

A single harmonic ``sin(2 pi x / L)`` therefore has exactly two nonzero
modes of magnitude ``1/2``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import kernels


@dataclass(frozen=True)
class GridSpec:
    """Geometry of the computational domain.

    Parameters
    ----------
    d : int
        Total dimension, 2 or 3 (``d - 1`` horizontal axes).
    N_h : int
        Fourier modes per horizontal axis; a power of two, at least 16.
    L : float
        Horizontal period.
    M : int
        Vertical grid points (including both boundary rows).
    Y_max : float
        Vertical truncation height.
    """

    d: int = 2
    N_h: int = 128
    L: float = 16.0 * np.pi
    M: int = 256
    Y_max: float = 16.0

    def __post_init__(self) -> None:
        if self.d not in (2, 3):
            raise ValueError("d must be 2 or 3")
        if self.N_h < 16 or (self.N_h & (self.N_h - 1)) != 0:
            raise ValueError("N_h must be a power of two >= 16")
        if self.M < 32:
            raise ValueError("M must be >= 32")
        if self.Y_max < 8:
            raise ValueError("Y_max must be >= 8 (vertical Gaussian tail room)")

    @property
    def n_components(self) -> int:
        return self.d - 1

    @property
    def dy(self) -> float:
        return self.Y_max / (self.M - 1)

    @property
    def dx(self) -> float:
        return self.L / self.N_h

    @property
    def y(self) -> np.ndarray:
        return np.linspace(0.0, self.Y_max, self.M)

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.N_h) * self.dx

    @property
    def xi_axis(self) -> np.ndarray:
        """Frequencies 2*pi*m/L, m in [-N_h/2, N_h/2), in FFT order."""
        return 2.0 * np.pi * np.fft.fftfreq(self.N_h, d=self.dx)

    @property
    def hshape(self) -> tuple:
        return (self.N_h,) * (self.d - 1)

    @property
    def haxes(self) -> tuple:
        """Array axes carrying the horizontal directions of a component block."""
        return tuple(range(self.d - 1))

    @property
    def xi_mag(self) -> np.ndarray:
        """|xi| on the horizontal lattice, shape ``hshape``."""
        ax = self.xi_axis
        if self.d == 2:
            return np.abs(ax)
        return np.sqrt(ax[:, None] ** 2 + ax[None, :] ** 2)

    def xi_component(self, c: int) -> np.ndarray:
        """xi_c broadcast over ``hshape``."""
        ax = self.xi_axis
        if self.d == 2:
            return ax
        return ax[:, None] if c == 0 else ax[None, :]

    @property
    def xi_max(self) -> float:
        return float(np.max(self.xi_mag))

    @property
    def xi_min_nonzero(self) -> float:
        mags = np.unique(self.xi_mag)
        return float(mags[mags > 0][0])

    @property
    def dealias_mask(self) -> np.ndarray:
        """2/3-rule mask over ``hshape`` (True = keep)."""
        m = np.abs(np.fft.fftfreq(self.N_h) * self.N_h)
        keep = m <= self.N_h / 3.0
        if self.d == 2:
            return keep
        return keep[:, None] & keep[None, :]

    def trapz_weights(self) -> np.ndarray:
        w = np.full(self.M, self.dy)
        w[0] = w[-1] = 0.5 * self.dy
        return w

    def to_json(self) -> str:
        return json.dumps(
            {"d": self.d, "N_h": self.N_h, "L": self.L, "M": self.M, "Y_max": self.Y_max}
        )

    @staticmethod
    def from_json(text: str) -> "GridSpec":
        return GridSpec(**json.loads(text))


def grid_for_horizon(
    T: float,
    d: int = 2,
    N_h: int = 128,
    L: float = 16.0 * np.pi,
    dy: float = 1.0 / 16.0,
    tol: float = 1e-8,
) -> GridSpec:
    """Size the vertical domain for a run of horizon ``T``.

    The Gaussian weight keeps the weighted solution tail below ``tol`` only
    for y beyond ``sqrt(8 <t> log(1/tol))``; the factory adds 25% horizon
    margin and rounds Y_max up to a multiple of 8 at fixed spacing ``dy``.
    """
    t_eff = 1.0 + 1.25 * max(T, 0.0)
    y_need = np.sqrt(8.0 * t_eff * np.log(1.0 / tol))
    y_max = max(8.0, 8.0 * np.ceil(y_need / 8.0))
    M = int(round(y_max / dy)) + 1
    return GridSpec(d=d, N_h=N_h, L=L, M=M, Y_max=y_max)


@dataclass(frozen=True)
class Field:
    """A (d-1)-component field on a :class:`GridSpec`.

    ``values`` has shape ``(n_components, *hshape, M)``.  Canonical storage
    is horizontal-spectral (complex coefficients); ``space`` tracks which
    representation a given instance holds.  Instances are immutable values:
    every operation returns a new ``Field``.
    """

    spec: GridSpec
    values: np.ndarray
    space: str = "spectral"  # "spectral" | "physical"

    def __post_init__(self) -> None:
        expected = (self.spec.n_components, *self.spec.hshape, self.spec.M)
        if self.values.shape != expected:
            raise ValueError(f"values shape {self.values.shape} != {expected}")
        if self.space not in ("spectral", "physical"):
            raise ValueError(f"unknown space {self.space!r}")

    def with_values(self, values: np.ndarray, space: str | None = None) -> "Field":
        return Field(self.spec, values, self.space if space is None else space)

    @property
    def flat(self) -> np.ndarray:
        """View with horizontal axes flattened: shape (ncomp * nmodes, M)."""
        return self.values.reshape(-1, self.spec.M)

    def component(self, c: int) -> np.ndarray:
        return self.values[c]


def zero_field(spec: GridSpec, space: str = "spectral") -> Field:
    dtype = np.complex128 if space == "spectral" else np.float64
    shape = (spec.n_components, *spec.hshape, spec.M)
    return Field(spec, np.zeros(shape, dtype=dtype), space)


def scalar_as_field(spec: GridSpec, block: np.ndarray, space: str) -> Field:
    """Wrap a single scalar block into a one-component field-like container."""
    f = Field.__new__(Field)
    object.__setattr__(f, "spec", spec)
    object.__setattr__(f, "values", block[None, ...])
    object.__setattr__(f, "space", space)
    return f


def to_spectral(field: Field) -> Field:
    """Forward DFT along the horizontal axes (coefficient normalization)."""
    if field.space == "spectral":
        return field
    if np.iscomplexobj(field.values):
        raise ValueError("physical field must be real-valued")
    axes = tuple(a + 1 for a in field.spec.haxes)
    vals = np.fft.fftn(field.values, axes=axes, norm="forward")
    return field.with_values(vals, "spectral")


def to_physical(field: Field) -> Field:
    """Inverse of :func:`to_spectral`; imaginary residue is discarded."""
    if field.space == "physical":
        return field
    axes = tuple(a + 1 for a in field.spec.haxes)
    vals = np.fft.ifftn(field.values, axes=axes, norm="forward")
    return field.with_values(np.ascontiguousarray(vals.real), "physical")


def max_imag_residue(field: Field) -> float:
    """Largest imaginary part left by an inverse transform (reality check)."""
    axes = tuple(a + 1 for a in field.spec.haxes)
    vals = np.fft.ifftn(field.values, axes=axes, norm="forward")
    return float(np.max(np.abs(vals.imag), initial=0.0))


def enforce_dirichlet(field: Field) -> Field:
    """Zero the y=0 and y=Y_max rows (valid in either representation)."""
    vals = field.values.copy()
    vals[..., 0] = 0.0
    vals[..., -1] = 0.0
    return field.with_values(vals)


def vertical_integral(field: Field) -> Field:
    """Cumulative trapezoid from the boundary: F(y_j) = int_0^{y_j} f dy'."""
    flat = np.ascontiguousarray(field.flat, dtype=np.complex128)
    out = kernels.cumtrapz_rows(flat, field.spec.dy)
    out = out.reshape(field.values.shape)
    if field.space == "physical":
        out = out.real
    return field.with_values(out)


def horizontal_divergence(field: Field) -> Field:
    """div_h in spectral form: sum_c (i xi_c) w_hat^c, returned as a scalar block."""
    if field.space != "spectral":
        raise ValueError("horizontal_divergence expects spectral form")
    spec = field.spec
    out = np.zeros(field.values.shape[1:], dtype=np.complex128)
    for c in range(spec.n_components):
        out += 1j * spec.xi_component(c)[..., None] * field.values[c]
    return scalar_as_field(spec, out, "spectral")


def spectral_dx(block: np.ndarray, spec: GridSpec, c: int) -> np.ndarray:
    """d/dx_c of one spectral component block."""
    return 1j * spec.xi_component(c)[..., None] * block


def ddy(field: Field) -> Field:
    """Second-order d/dy: centered interior, one-sided at both boundary rows."""
    v = field.values
    dy = field.spec.dy
    out = np.empty_like(v)
    out[..., 1:-1] = (v[..., 2:] - v[..., :-2]) / (2.0 * dy)
    out[..., 0] = (-3.0 * v[..., 0] + 4.0 * v[..., 1] - v[..., 2]) / (2.0 * dy)
    out[..., -1] = (3.0 * v[..., -1] - 4.0 * v[..., -2] + v[..., -3]) / (2.0 * dy)
    return field.with_values(out)


def dealias(field: Field) -> Field:
    """Zero all modes above the 2/3 cutoff of each horizontal axis."""
    if field.space != "spectral":
        raise ValueError("dealias expects spectral form")
    vals = field.values * field.spec.dealias_mask[None, ..., None]
    return field.with_values(vals)


def tail_monitor(field: Field, psi_weights: np.ndarray) -> float:
    """max |e^Psi w| over the top two rows; flags vertical truncation trouble.

    ``psi_weights`` is e^{Psi(t, y_j)} sampled on the grid.
    """
    phys = to_physical(field)
    tail = np.abs(phys.values[..., -2:]) * psi_weights[-2:]
    return float(np.max(tail, initial=0.0))


def save_snapshot(field: Field, path_prefix: str) -> list[str]:
    """Write one CSV matrix per component (rows = y index, columns = x index).

    The GridSpec is recorded on a comment line; physical values are written.
    """
    phys = to_physical(field)
    paths = []
    for c in range(field.spec.n_components):
        path = f"{path_prefix}_c{c}.csv"
        block = phys.values[c]
        mat = block.reshape(-1, field.spec.M).T  # rows y, cols flattened x
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"# gridspec: {field.spec.to_json()}\n")
            np.savetxt(fh, mat, delimiter=",")
        paths.append(path)
    return paths


def load_snapshot(spec: GridSpec, path_prefix: str) -> Field:
    blocks = []
    for c in range(spec.n_components):
        mat = np.loadtxt(f"{path_prefix}_c{c}.csv", delimiter=",", comments="#")
        blocks.append(mat.T.reshape(*spec.hshape, spec.M))
    return Field(spec, np.stack(blocks), "physical")
