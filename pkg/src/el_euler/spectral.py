"""Truncated Fourier representation of periodic fields on the n-torus.

Fields live on the uniform N^n grid over [0, 2pi)^n and are stored as complex
Fourier coefficients normalised so that

    f(x) = sum_k c(k) exp(i k.x),    c(k) = (2pi)^{-n} int f(x) exp(-i k.x) dx.

With this normalisation the (2pi)^{-n}-averaged L2 norm is the plain l2 norm
of the coefficient array, and the H^s norm is the coefficient sum weighted by
(1 + |k|^2)^s.  Real-valued fields have Hermitian-symmetric coefficients,
c(-k) = conj(c(k)); Nyquist modes (|k_i| = N/2) are forced to zero on
construction so that spectral differentiation stays skew-symmetric.

Nonlinear products are evaluated pseudo-spectrally: inputs are truncated to
the 2/3-rule cutoff, transformed onto a 3N/2 zero-padded grid, multiplied
pointwise and transformed back.  The cutoff floor((N-1)/3) guarantees that
aliases of retained-mode products never fold back onto retained modes, which
keeps the discrete advection term exactly L2-skew-symmetric.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, GridMismatchError

__all__ = [
    "WaveGrid",
    "SpectralField",
    "to_spectral",
    "to_physical",
    "derivative",
    "gradient",
    "divergence",
    "hs_inner",
    "hs_norm",
    "l2_norm",
    "pointwise_product",
    "leray_project",
    "truncate",
    "dealias",
    "eval_at_points",
    "max_pointwise_norm",
]


class WaveGrid:
    """Wavevector bookkeeping for an N^dim Fourier grid.

    Holds the integer wavevectors in numpy fft layout, the Sobolev weights
    (1+|k|^2)^s (cached per s), the Nyquist and 2/3-dealias masks, and the
    index machinery for zero-padded product transforms.
    """

    def __init__(self, dim: int, n_modes: int):
        if dim not in (2, 3):
            raise ConfigError(f"dimension must be 2 or 3, got {dim}")
        if n_modes <= 0 or n_modes % 2 != 0:
            raise ConfigError(f"modes per dimension must be even and positive, got {n_modes}")
        self.dim = dim
        self.n_modes = n_modes
        self.shape = (n_modes,) * dim

        k1d = np.fft.fftfreq(n_modes, d=1.0 / n_modes)  # 0, 1, ..., -1 as floats
        self.k1d = k1d
        # broadcastable per-axis wavenumber arrays
        self.k_axes = tuple(
            k1d.reshape((1,) * a + (n_modes,) + (1,) * (dim - a - 1)) for a in range(dim)
        )
        self.k_sq = sum(k * k for k in self.k_axes)
        with np.errstate(divide="ignore"):
            inv = np.where(self.k_sq > 0, 1.0 / np.where(self.k_sq > 0, self.k_sq, 1.0), 0.0)
        self.inv_k_sq = inv

        half = n_modes // 2
        self.nyquist_mask = np.zeros(self.shape, dtype=bool)
        for k in self.k_axes:
            self.nyquist_mask |= np.abs(k) >= half

        # strict 2/3-rule cutoff: 3*cutoff < N so quadratic aliases never survive
        self.dealias_cutoff = (n_modes - 1) // 3
        self.dealias_keep = np.ones(self.shape, dtype=bool)
        for k in self.k_axes:
            self.dealias_keep &= np.abs(k) <= self.dealias_cutoff

        # With inputs truncated to the strict cutoff, quadratic products alias
        # only onto modes with |k| >= N - 2K > K, all of which are masked, so
        # the N grid itself is a sufficient product grid (equivalent to a
        # padded transform, without the padding cost).
        self.pad_modes = n_modes
        self._weights: dict[float, np.ndarray] = {}
        self._nodes1d = 2.0 * np.pi * np.arange(n_modes) / n_modes

    def sobolev_weight(self, s: float) -> np.ndarray:
        """(1+|k|^2)^s on the full mode grid; weight is 1 everywhere at s=0."""
        s = float(s)
        w = self._weights.get(s)
        if w is None:
            w = (1.0 + self.k_sq) ** s
            w.flags.writeable = False
            self._weights[s] = w
        return w

    def nodes(self) -> np.ndarray:
        """Physical grid nodes, shape (dim, N, ..., N)."""
        mesh = np.meshgrid(*(self._nodes1d,) * self.dim, indexing="ij")
        return np.stack(mesh)

    def nodes_flat(self) -> np.ndarray:
        """Physical grid nodes flattened to (N^dim, dim)."""
        return self.nodes().reshape(self.dim, -1).T

    def __eq__(self, other):
        return (
            isinstance(other, WaveGrid)
            and other.dim == self.dim
            and other.n_modes == self.n_modes
        )

    def __hash__(self):
        return hash((self.dim, self.n_modes))

    def __repr__(self):
        return f"WaveGrid(dim={self.dim}, n_modes={self.n_modes})"


def _conj_reverse(coeffs: np.ndarray, dim: int) -> np.ndarray:
    """conj(c(-k)) in fft layout, acting on the trailing dim axes."""
    out = coeffs
    for a in range(-dim, 0):
        out = np.roll(np.flip(out, axis=a), 1, axis=a)
    return np.conj(out)


@dataclass(frozen=True)
class SpectralField:
    """A real vector (or scalar) field stored as Fourier coefficients.

    coeffs has shape (ncomp, N, ..., N) with the component axis first.  The
    field is immutable; all operations return new instances.
    """

    grid: WaveGrid
    coeffs: np.ndarray = field(repr=False)
    is_real: bool = True

    @staticmethod
    def _wrap(grid: WaveGrid, coeffs: np.ndarray) -> "SpectralField":
        # fast internal constructor: caller guarantees Nyquist-free Hermitian data
        coeffs.flags.writeable = False
        return SpectralField(grid, coeffs)

    @classmethod
    def from_coeffs(cls, grid: WaveGrid, coeffs: np.ndarray, check: bool = True) -> "SpectralField":
        coeffs = np.asarray(coeffs, dtype=np.complex128)
        if coeffs.ndim == grid.dim:
            coeffs = coeffs[np.newaxis]
        if coeffs.shape[1:] != grid.shape:
            raise GridMismatchError(
                f"coefficient shape {coeffs.shape} does not match grid {grid.shape}"
            )
        coeffs = coeffs.copy()
        coeffs[(slice(None),) + np.nonzero(grid.nyquist_mask)] = 0.0
        if check:
            sym_err = np.max(np.abs(coeffs - _conj_reverse(coeffs, grid.dim)))
            scale = max(1.0, float(np.max(np.abs(coeffs))))
            if sym_err > 1e-10 * scale:
                raise ConfigError(
                    f"coefficients are not Hermitian symmetric (error {sym_err:.3e}); "
                    "field would not be real-valued"
                )
        return cls._wrap(grid, coeffs)

    @classmethod
    def zeros(cls, grid: WaveGrid, ncomp: int) -> "SpectralField":
        return cls._wrap(grid, np.zeros((ncomp,) + grid.shape, dtype=np.complex128))

    @property
    def ncomp(self) -> int:
        return self.coeffs.shape[0]

    @property
    def dim_n(self) -> int:
        return self.grid.dim

    @property
    def grid_n(self) -> int:
        return self.grid.n_modes

    def component(self, i: int) -> "SpectralField":
        return SpectralField._wrap(self.grid, self.coeffs[i : i + 1])

    def __add__(self, other: "SpectralField") -> "SpectralField":
        _require_same_grid(self, other)
        return SpectralField._wrap(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        _require_same_grid(self, other)
        return SpectralField._wrap(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, scalar: float) -> "SpectralField":
        return SpectralField._wrap(self.grid, self.coeffs * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "SpectralField":
        return SpectralField._wrap(self.grid, -self.coeffs)


def _require_same_grid(f: SpectralField, g: SpectralField) -> None:
    if f.grid != g.grid:
        raise GridMismatchError(f"fields live on different grids: {f.grid} vs {g.grid}")


def _spatial_axes(grid: WaveGrid) -> tuple[int, ...]:
    return tuple(range(-grid.dim, 0))


def to_spectral(grid: WaveGrid, samples: np.ndarray) -> SpectralField:
    """Transform physical grid samples (ncomp, N, ..., N) to coefficients.

    Exact for band-limited inputs.  Raises ConfigError for odd N or a sample
    array whose trailing shape does not match the grid.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim == grid.dim:
        samples = samples[np.newaxis]
    if samples.ndim != grid.dim + 1 or samples.shape[1:] != grid.shape:
        raise ConfigError(
            f"sample shape {samples.shape} does not match {grid.shape} with a leading "
            "component axis"
        )
    coeffs = np.fft.fftn(samples, axes=_spatial_axes(grid)) / grid.n_modes**grid.dim
    coeffs[:, grid.nyquist_mask] = 0.0
    return SpectralField._wrap(grid, coeffs)


def to_physical(f: SpectralField) -> np.ndarray:
    """Physical grid samples, shape (ncomp, N, ..., N), real."""
    g = f.grid
    vals = np.fft.ifftn(f.coeffs, axes=_spatial_axes(g)) * g.n_modes**g.dim
    return vals.real


def derivative(f: SpectralField, axis: int) -> SpectralField:
    """Spectral partial derivative along a coordinate axis: c(k) -> i k_axis c(k)."""
    g = f.grid
    if not 0 <= axis < g.dim:
        raise GridMismatchError(f"axis {axis} out of range for dimension {g.dim}")
    return SpectralField._wrap(g, f.coeffs * (1j * g.k_axes[axis]))


def gradient(f: SpectralField) -> list[SpectralField]:
    return [derivative(f, a) for a in range(f.grid.dim)]


def divergence(f: SpectralField) -> SpectralField:
    """Divergence of a vector field (ncomp must equal the dimension)."""
    g = f.grid
    if f.ncomp != g.dim:
        raise GridMismatchError(f"divergence needs {g.dim} components, got {f.ncomp}")
    out = sum(f.coeffs[a] * (1j * g.k_axes[a]) for a in range(g.dim))
    return SpectralField._wrap(g, out[np.newaxis])


def hs_inner(f: SpectralField, g: SpectralField, s: float) -> float:
    """H^s inner product: Re sum_k (1+|k|^2)^s sum_c c_f(k) conj(c_g(k))."""
    _require_same_grid(f, g)
    if f.ncomp != g.ncomp:
        raise GridMismatchError(f"component counts differ: {f.ncomp} vs {g.ncomp}")
    w = f.grid.sobolev_weight(s)
    return float(np.real(np.sum(w * f.coeffs * np.conj(g.coeffs))))


def hs_norm(f: SpectralField, s: float) -> float:
    w = f.grid.sobolev_weight(s)
    return float(np.sqrt(np.sum(w * np.abs(f.coeffs) ** 2)))


def l2_norm(f: SpectralField) -> float:
    return float(np.sqrt(np.sum(np.abs(f.coeffs) ** 2)))


# ---------------------------------------------------------------------------
# dealiased products

def _pad_phys(grid: WaveGrid, coeffs: np.ndarray) -> np.ndarray:
    """Physical samples of (batched) coefficients on the product grid."""
    vals = np.fft.ifftn(coeffs, axes=_spatial_axes(grid)) * grid.pad_modes**grid.dim
    return vals.real


def _spec_from_pad(grid: WaveGrid, phys: np.ndarray) -> np.ndarray:
    """Dealiased coefficients of physical samples on the product grid."""
    spec = np.fft.fftn(phys, axes=_spatial_axes(grid)) / grid.pad_modes**grid.dim
    keep = grid.dealias_keep & ~grid.nyquist_mask
    return np.where(keep, spec, 0.0)


def dealias(f: SpectralField) -> SpectralField:
    """Zero every mode outside the 2/3-rule box (Nyquist included)."""
    keep = f.grid.dealias_keep & ~f.grid.nyquist_mask
    return SpectralField._wrap(f.grid, np.where(keep, f.coeffs, 0.0))


def pointwise_product(f: SpectralField, g: SpectralField) -> SpectralField:
    """Dealiased spectral coefficients of the physical pointwise product.

    Inputs are truncated to the 2/3 cutoff and multiplied on the zero-padded
    grid, so the result is the exact product of the truncated fields.
    Componentwise for equal component counts; a scalar factor broadcasts.
    """
    _require_same_grid(f, g)
    if f.ncomp != g.ncomp and 1 not in (f.ncomp, g.ncomp):
        raise GridMismatchError(
            f"cannot broadcast product of {f.ncomp} and {g.ncomp} components"
        )
    grid = f.grid
    keep = grid.dealias_keep
    fa = np.where(keep, f.coeffs, 0.0)
    ga = np.where(keep, g.coeffs, 0.0)
    # one batched transform over both operands
    stacked = np.concatenate([fa, ga])
    phys = _pad_phys(grid, stacked)
    pf, pg = phys[: f.ncomp], phys[f.ncomp :]
    out = _spec_from_pad(grid, pf * pg)
    return SpectralField._wrap(grid, np.ascontiguousarray(out))


# ---------------------------------------------------------------------------
# projection and truncation

def leray_project(f: SpectralField) -> SpectralField:
    """L2-orthogonal projection onto divergence-free fields.

    Per mode k != 0: u -> (I - k k^T/|k|^2) u; the k = 0 (mean) mode is left
    unchanged.  Gradients are annihilated exactly.
    """
    g = f.grid
    if f.ncomp != g.dim:
        raise GridMismatchError(f"Leray projection needs {g.dim} components, got {f.ncomp}")
    kdotu = sum(f.coeffs[a] * g.k_axes[a] for a in range(g.dim))
    factor = kdotu * g.inv_k_sq
    out = np.stack([f.coeffs[a] - factor * g.k_axes[a] for a in range(g.dim)])
    return SpectralField._wrap(g, out)


def truncate(f: SpectralField, cutoff: int) -> SpectralField:
    """Zero all modes with max_i |k_i| > cutoff; idempotent."""
    g = f.grid
    if cutoff > g.n_modes // 2:
        raise ConfigError(f"cutoff {cutoff} exceeds N/2 = {g.n_modes // 2}")
    keep = np.ones(g.shape, dtype=bool)
    for k in g.k_axes:
        keep &= np.abs(k) <= cutoff
    return SpectralField._wrap(g, np.where(keep, f.coeffs, 0.0))


# ---------------------------------------------------------------------------
# off-grid evaluation (exact trigonometric summation, axis-factored)

_SUPPORT_TAIL = 1e-13


def _support_box(grid: WaveGrid, coeffs: np.ndarray) -> np.ndarray | None:
    """Indices of the smallest symmetric mode box carrying the coefficients.

    The box radius m is the smallest one whose discarded coefficient mass
    (sum of |c| outside the box, which bounds the pointwise evaluation error)
    is below 1e-13 of the total mass, so transform rounding dust does not
    force full-grid sums.  Returns None when no restriction pays off.
    """
    nz = np.abs(coeffs).sum(axis=tuple(range(coeffs.ndim - grid.dim)))
    total = float(nz.sum())
    if total == 0.0:
        return np.arange(1)
    ring = np.zeros(grid.shape, dtype=np.int64)
    for k in grid.k_axes:
        np.maximum(ring, np.broadcast_to(np.abs(k).astype(np.int64), grid.shape), out=ring)
    shell_mass = np.bincount(ring.ravel(), weights=nz.ravel(), minlength=grid.n_modes // 2 + 1)
    tail = shell_mass[::-1].cumsum()[::-1]
    inside = tail <= _SUPPORT_TAIL * total
    m = int(np.argmax(inside)) if inside.any() else len(tail)
    # tail[m] is the mass strictly outside radius m-1; keep radius m-1
    m = max(m - 1, 0)
    if 2 * m + 1 >= grid.n_modes:
        return None
    idx = np.concatenate([np.arange(m + 1), np.arange(grid.n_modes - m, grid.n_modes)])
    return idx


def _phase_matrix(coords: np.ndarray, k_vals: np.ndarray) -> np.ndarray:
    """exp(i k x) for one coordinate of every point, shape (P, len(k_vals)).

    Wavenumbers are integers, so columns are powers of exp(i x): one complex
    exponential per point plus cumulative products, far cheaper than a full
    exp over the (P, N) matrix.
    """
    kk = np.rint(k_vals).astype(np.int64)
    kmax = int(np.abs(kk).max()) if kk.size else 0
    base = np.exp(1j * coords)
    pows = np.empty((len(coords), kmax + 1), dtype=np.complex128)
    pows[:, 0] = 1.0
    if kmax:
        np.cumprod(np.tile(base[:, None], (1, kmax)), axis=1, out=pows[:, 1:])
    out = np.empty((len(coords), len(kk)), dtype=np.complex128)
    pos = kk >= 0
    out[:, pos] = pows[:, kk[pos]]
    out[:, ~pos] = np.conj(pows[:, -kk[~pos]])
    return out


def eval_at_points(
    grid: WaveGrid,
    coeffs: np.ndarray,
    points: np.ndarray,
    restrict_support: bool = True,
) -> np.ndarray:
    """Evaluate batched coefficient arrays at arbitrary points of the torus.

    coeffs: (..., N, ..., N) with the trailing dim axes spectral; points:
    (P, dim).  Returns real values shaped (..., P).  The sum is the exact
    trigonometric interpolant; the tensor-product structure of exp(i k.x)
    keeps the cost at one (modes x P) contraction per axis, and restricting
    to the exact nonzero mode box (lossless) makes band-limited fields cheap.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != grid.dim:
        raise GridMismatchError(f"points must have shape (P, {grid.dim})")
    work = np.asarray(coeffs, dtype=np.complex128)
    batch = work.shape[: work.ndim - grid.dim]
    idx = _support_box(grid, work) if restrict_support else None
    if idx is not None:
        for a in range(grid.dim):
            work = np.take(work, idx, axis=work.ndim - grid.dim + a)
        k_use = grid.k1d[idx]
    else:
        k_use = grid.k1d
    n_p = len(points)
    if not k_use.size or not n_p:
        return np.zeros(batch + (n_p,))

    # innermost axis with a single BLAS matmul, remaining axes by
    # broadcast-multiply-and-sum against their phase matrices
    e_last = _phase_matrix(points[:, grid.dim - 1], k_use)
    nb = len(k_use)
    vals = np.matmul(work.reshape(-1, nb), e_last.T)
    vals = vals.reshape(work.shape[:-1] + (n_p,))
    for a in range(grid.dim - 2, -1, -1):
        e_a = _phase_matrix(points[:, a], k_use)  # (P, nb)
        vals = (vals * e_a.T).sum(axis=-2)
    return vals.reshape(batch + (n_p,)).real


def max_pointwise_norm(f: SpectralField) -> float:
    """max over grid nodes of the euclidean norm of the field value."""
    phys = to_physical(f)
    return float(np.sqrt((phys**2).sum(axis=0)).max())
