"""Measurement, analysis and synthesis operators.

Every operator acts on flat real vectors. Images are flattened row-major.
Complex Fourier samples are stored as real vectors of doubled length: all
real parts first, then all imaginary parts.
"""
import math

import numpy as np
import scipy.sparse as sp
from scipy.linalg import null_space
from scipy.sparse.csgraph import connected_components


class ShapeError(ValueError):
    """Raised when a vector does not match an operator's dimensions."""


def _as_vector(x, length, what="input"):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != length:
        raise ShapeError(f"{what}: expected a vector of length {length}, got shape {x.shape}")
    return x


class LinearOperator:
    """Real linear map ``R^n -> R^m`` with an explicit adjoint.

    Subclasses implement ``_apply`` and ``_adjoint``; ``matmat`` may be
    overridden when a batched product is cheaper than a column loop.
    """

    kind = "abstract"

    def __init__(self, rows, cols):
        if rows < 1 or cols < 1:
            raise ValueError(f"operator dimensions must be positive, got {rows}x{cols}")
        self.rows = int(rows)
        self.cols = int(cols)

    @property
    def shape(self):
        return (self.rows, self.cols)

    def apply(self, x):
        return self._apply(_as_vector(x, self.cols))

    def adjoint(self, y):
        return self._adjoint(_as_vector(y, self.rows))

    def matmat(self, X):
        """Apply the operator to every column of ``X`` (dense or sparse)."""
        if sp.issparse(X):
            X = X.toarray()
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[0] != self.cols:
            raise ShapeError(f"matmat: expected {self.cols} rows, got shape {X.shape}")
        out = np.empty((self.rows, X.shape[1]))
        for j in range(X.shape[1]):
            out[:, j] = self._apply(X[:, j])
        return out

    def to_dense(self):
        return self.matmat(np.eye(self.cols))

    def __matmul__(self, other):
        if isinstance(other, LinearOperator):
            return CompositeOperator(self, other)
        return self.apply(other)

    def __repr__(self):
        return f"{type(self).__name__}({self.rows}x{self.cols})"


class DenseOperator(LinearOperator):
    kind = "dense-matrix"

    def __init__(self, matrix, kind=None):
        matrix = np.asarray(matrix, dtype=float)
        if matrix.ndim != 2:
            raise ShapeError(f"matrix must be 2-D, got shape {matrix.shape}")
        super().__init__(*matrix.shape)
        self.matrix = matrix
        self.matrix.setflags(write=False)
        if kind is not None:
            self.kind = kind

    def _apply(self, x):
        return self.matrix @ x

    def _adjoint(self, y):
        return self.matrix.T @ y

    def matmat(self, X):
        if sp.issparse(X):
            if X.shape[0] != self.cols:
                raise ShapeError(f"matmat: expected {self.cols} rows, got shape {X.shape}")
            return np.asarray((X.T @ self.matrix.T).T)
        return self.matrix @ X

    def to_dense(self):
        return np.array(self.matrix)


class IdentityOperator(LinearOperator):
    kind = "identity"

    def __init__(self, n):
        super().__init__(n, n)

    def _apply(self, x):
        return x.copy()

    def _adjoint(self, y):
        return y.copy()

    def matmat(self, X):
        return X.toarray() if sp.issparse(X) else np.array(X, dtype=float)


class CompositeOperator(LinearOperator):
    """``outer @ inner``."""

    kind = "composite"

    def __init__(self, outer, inner):
        if outer.cols != inner.rows:
            raise ShapeError(f"cannot compose {outer.shape} with {inner.shape}")
        super().__init__(outer.rows, inner.cols)
        self.outer = outer
        self.inner = inner

    def _apply(self, x):
        return self.outer.apply(self.inner.apply(x))

    def _adjoint(self, y):
        return self.inner.adjoint(self.outer.adjoint(y))

    def matmat(self, X):
        return self.outer.matmat(self.inner.matmat(X))


def gaussian_operator(m, n, seed):
    """Dense ``m x n`` matrix with i.i.d. standard normal entries (unnormalized)."""
    rng = np.random.default_rng(seed)
    op = DenseOperator(rng.standard_normal((m, n)), kind="gaussian-random")
    op.seed = seed
    return op


# -- Fourier sampling ---------------------------------------------------------


class SamplingMask:
    """Boolean selection of 2-D DFT coefficients (unshifted FFT layout)."""

    def __init__(self, selected, pattern="custom", **params):
        selected = np.asarray(selected, dtype=bool)
        if selected.ndim != 2:
            raise ShapeError(f"mask must be 2-D, got shape {selected.shape}")
        if not selected.any():
            raise ValueError("mask selects no frequencies")
        self.selected = selected
        self.selected.setflags(write=False)
        self.pattern = pattern
        self.params = params

    @property
    def height(self):
        return self.selected.shape[0]

    @property
    def width(self):
        return self.selected.shape[1]

    @property
    def count(self):
        return int(self.selected.sum())

    @property
    def fraction(self):
        return self.count / self.selected.size

    def __repr__(self):
        return f"SamplingMask({self.height}x{self.width}, {self.pattern}, fraction={self.fraction:.4f})"


def full_mask(height, width):
    return SamplingMask(np.ones((height, width), dtype=bool), pattern="full")


def _frequency_radius(height, width):
    fy = np.fft.fftfreq(height) * height
    fx = np.fft.fftfreq(width) * width
    return np.hypot(fy[:, None], fx[None, :])


def variable_density_mask(height, width, fraction, seed, decay=2.0):
    """Random mask drawn without replacement with weight ``(1 + radius)^-decay``.

    The DC coefficient is always kept. The number of selected coefficients is
    ``round(fraction * height * width)``.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    total = height * width
    count = max(1, int(round(fraction * total)))
    weights = (1.0 + _frequency_radius(height, width)).ravel() ** (-float(decay))
    weights[0] = 0.0
    rng = np.random.default_rng(seed)
    chosen = rng.choice(total - 1, size=count - 1, replace=False, p=weights[1:] / weights[1:].sum()) + 1
    selected = np.zeros(total, dtype=bool)
    selected[0] = True
    selected[chosen] = True
    return SamplingMask(selected.reshape(height, width), pattern="variable-density",
                        seed=seed, decay=decay)


def radial_mask(height, width, lines):
    """Mask made of ``lines`` straight lines through the DC coefficient."""
    if lines < 1:
        raise ValueError("need at least one radial line")
    centered = np.zeros((height, width), dtype=bool)
    cy, cx = height // 2, width // 2
    radius = math.hypot(height, width)
    t = np.linspace(-radius, radius, int(4 * radius) + 1)
    for j in range(lines):
        angle = math.pi * j / lines
        rows = np.round(cy + t * math.sin(angle)).astype(int)
        cols = np.round(cx + t * math.cos(angle)).astype(int)
        keep = (rows >= 0) & (rows < height) & (cols >= 0) & (cols < width)
        centered[rows[keep], cols[keep]] = True
    return SamplingMask(np.fft.ifftshift(centered), pattern="radial", lines=lines)


class SubsampledFourierOperator(LinearOperator):
    """Unitary 2-D DFT of the image followed by restriction to a mask.

    Output length is ``2 * mask.count``: real parts, then imaginary parts.
    The adjoint is the real part of the unitary inverse DFT of the
    zero-filled spectrum, so with a full mask ``adjoint(apply(x)) == x``.
    """

    kind = "subsampled-fourier"

    def __init__(self, mask):
        self.mask = mask
        self.image_shape = mask.selected.shape
        self._index = np.flatnonzero(mask.selected.ravel())
        super().__init__(2 * self._index.size, mask.selected.size)

    def _apply(self, x):
        coeffs = np.fft.fft2(x.reshape(self.image_shape), norm="ortho").ravel()[self._index]
        return np.concatenate([coeffs.real, coeffs.imag])

    def _adjoint(self, y):
        s = self._index.size
        spectrum = np.zeros(self.cols, dtype=complex)
        spectrum[self._index] = y[:s] + 1j * y[s:]
        return np.fft.ifft2(spectrum.reshape(self.image_shape), norm="ortho").real.ravel()

    def matmat(self, X):
        if sp.issparse(X):
            X = X.toarray()
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[0] != self.cols:
            raise ShapeError(f"matmat: expected {self.cols} rows, got shape {X.shape}")
        h, w = self.image_shape
        stack = X.T.reshape(-1, h, w)
        coeffs = np.fft.fft2(stack, norm="ortho").reshape(X.shape[1], -1)[:, self._index]
        return np.concatenate([coeffs.real, coeffs.imag], axis=1).T

    def zero_filled(self, y):
        """Naive reconstruction: inverse DFT of the zero-filled spectrum."""
        return self.adjoint(y)


# -- analysis operators --------------------------------------------------------


class AnalysisOperator:
    """A ``p x n`` analysis operator together with its cosupport null spaces."""

    def __init__(self, matrix, kind="dense-matrix", image_shape=None):
        if sp.issparse(matrix):
            matrix = sp.csr_matrix(matrix, dtype=float)
        else:
            matrix = np.asarray(matrix, dtype=float)
            if matrix.ndim != 2:
                raise ShapeError(f"matrix must be 2-D, got shape {matrix.shape}")
        self.matrix = matrix
        self.kind = kind
        self.image_shape = image_shape

    @property
    def rows(self):
        return self.matrix.shape[0]

    @property
    def cols(self):
        return self.matrix.shape[1]

    @property
    def shape(self):
        return self.matrix.shape

    def apply(self, x):
        return np.asarray(self.matrix @ _as_vector(x, self.cols)).ravel()

    def adjoint(self, z):
        return np.asarray(self.matrix.T @ _as_vector(z, self.rows)).ravel()

    def submatrix(self, cosupport):
        return self.matrix[np.asarray(cosupport, dtype=int)]

    def nullspace_basis(self, cosupport):
        """Orthonormal basis (columns) of ``{x : Omega_Lambda x = 0}``."""
        cosupport = np.asarray(cosupport, dtype=int)
        if cosupport.size == 0:
            return np.eye(self.cols)
        sub = self.submatrix(cosupport)
        if sp.issparse(sub):
            sub = sub.toarray()
        return null_space(sub)

    def project_null(self, cosupport, v):
        """``Q_Lambda v = (I - pinv(Omega_Lambda) Omega_Lambda) v``."""
        basis = self.nullspace_basis(cosupport)
        v = _as_vector(v, self.cols)
        return np.asarray(basis @ (basis.T @ v)).ravel()

    def __repr__(self):
        return f"AnalysisOperator({self.kind}, {self.rows}x{self.cols})"


class FiniteDifference2D(AnalysisOperator):
    """Non-periodic forward differences of an ``h x w`` image.

    Rows: all horizontal differences ``x[r, c+1] - x[r, c]`` in row-major
    order, then all vertical differences ``x[r+1, c] - x[r, c]``. The null
    space of any row subset is spanned by the indicator vectors of the
    connected components of the pixel graph whose edges are those rows, so
    projections and bases never need an SVD.
    """

    def __init__(self, h, w):
        if h < 2 or w < 2:
            raise ValueError(f"finite differences need h, w >= 2, got {h}x{w}")
        idx = np.arange(h * w).reshape(h, w)
        tail = np.concatenate([idx[:, :-1].ravel(), idx[:-1, :].ravel()])
        head = np.concatenate([idx[:, 1:].ravel(), idx[1:, :].ravel()])
        p = tail.size
        data = np.concatenate([-np.ones(p), np.ones(p)])
        rows = np.concatenate([np.arange(p), np.arange(p)])
        matrix = sp.csr_matrix((data, (rows, np.concatenate([tail, head]))), shape=(p, h * w))
        super().__init__(matrix, kind="finite-difference-2d", image_shape=(h, w))
        self.edge_tail = tail
        self.edge_head = head

    def components(self, cosupport):
        """Component label of every pixel under the edges in ``cosupport``."""
        cosupport = np.asarray(cosupport, dtype=int)
        n = self.cols
        graph = sp.coo_matrix(
            (np.ones(cosupport.size), (self.edge_tail[cosupport], self.edge_head[cosupport])),
            shape=(n, n),
        )
        count, labels = connected_components(graph, directed=False)
        return count, labels

    def nullspace_basis(self, cosupport):
        count, labels = self.components(cosupport)
        sizes = np.bincount(labels, minlength=count).astype(float)
        values = 1.0 / np.sqrt(sizes[labels])
        return sp.csc_matrix((values, (np.arange(self.cols), labels)), shape=(self.cols, count))

    def project_null(self, cosupport, v):
        v = _as_vector(v, self.cols)
        count, labels = self.components(cosupport)
        sums = np.bincount(labels, weights=v, minlength=count)
        sizes = np.bincount(labels, minlength=count)
        return (sums / sizes)[labels]


def build_finite_difference(h, w):
    return FiniteDifference2D(h, w)


# -- synthesis dictionaries ----------------------------------------------------


class SynthesisDictionary:
    """An ``n x d`` dictionary stored as a (sparse or dense) matrix."""

    def __init__(self, matrix, kind="dense-matrix", normalize=True):
        if sp.issparse(matrix):
            matrix = sp.csc_matrix(matrix, dtype=float)
            norms = np.sqrt(np.asarray(matrix.multiply(matrix).sum(axis=0)).ravel())
        else:
            matrix = np.asarray(matrix, dtype=float)
            if matrix.ndim != 2:
                raise ShapeError(f"matrix must be 2-D, got shape {matrix.shape}")
            norms = np.linalg.norm(matrix, axis=0)
        if normalize:
            if np.any(norms == 0):
                raise ValueError("dictionary has a zero atom")
            scale = 1.0 / norms
            matrix = matrix @ sp.diags(scale) if sp.issparse(matrix) else matrix * scale
            if sp.issparse(matrix):
                matrix = sp.csc_matrix(matrix)
        self.matrix = matrix
        self.kind = kind

    @property
    def rows(self):
        return self.matrix.shape[0]

    @property
    def atoms(self):
        return self.matrix.shape[1]

    @property
    def shape(self):
        return self.matrix.shape

    def apply(self, alpha):
        return np.asarray(self.matrix @ _as_vector(alpha, self.atoms)).ravel()

    def adjoint(self, v):
        return np.asarray(self.matrix.T @ _as_vector(v, self.rows)).ravel()

    def columns(self, support):
        """Dense ``n x |T|`` sub-matrix ``D_T``."""
        sub = self.matrix[:, np.asarray(support, dtype=int)]
        return sub.toarray() if sp.issparse(sub) else np.array(sub)

    def as_operator(self):
        if sp.issparse(self.matrix):
            return _SparseOperator(self.matrix, kind="synthesis")
        return DenseOperator(self.matrix, kind="synthesis")

    def __repr__(self):
        return f"SynthesisDictionary({self.kind}, {self.rows}x{self.atoms})"


class _SparseOperator(LinearOperator):
    def __init__(self, matrix, kind="sparse-matrix"):
        super().__init__(*matrix.shape)
        self.matrix = matrix
        self.kind = kind

    def _apply(self, x):
        return np.asarray(self.matrix @ x).ravel()

    def _adjoint(self, y):
        return np.asarray(self.matrix.T @ y).ravel()

    def matmat(self, X):
        out = self.matrix @ X
        return out.toarray() if sp.issparse(out) else np.asarray(out)


def _dct_basis(window):
    a = np.arange(window)
    u = np.arange(window)[:, None]
    basis = np.cos(np.pi * (2 * a[None, :] + 1) * u / (2 * window))
    basis[0] *= math.sqrt(1.0 / window)
    basis[1:] *= math.sqrt(2.0 / window)
    return basis  # row u is the u-th orthonormal DCT-II basis function


def build_local_dct(image_h, image_w, window, overlap, excluded):
    """Windowed 2-D DCT atoms, skipping the ``excluded x excluded`` lowest frequencies.

    Windows start every ``window - overlap`` pixels and must tile the image
    exactly. Atom order: windows row-major, then frequencies ``(u, v)``
    row-major within a window.
    """
    stride = window - overlap
    if window < 1 or overlap < 0 or stride < 1:
        raise ValueError(f"bad window/overlap: {window}/{overlap}")
    if not 0 <= excluded < window:
        raise ValueError(f"excluded block must satisfy 0 <= excluded < window, got {excluded}")
    if window > image_h or window > image_w:
        raise ValueError("window larger than image")
    if (image_h - window) % stride or (image_w - window) % stride:
        raise ValueError(
            f"window {window} with overlap {overlap} does not tile a {image_h}x{image_w} image")
    basis = _dct_basis(window)
    freqs = [(u, v) for u in range(window) for v in range(window)
             if not (u < excluded and v < excluded)]
    patches = np.stack([np.outer(basis[u], basis[v]).ravel() for u, v in freqs], axis=1)
    win_rows, win_cols = np.meshgrid(np.arange(window), np.arange(window), indexing="ij")
    local = (win_rows * image_w + win_cols).ravel()

    starts = [(r, c) for r in range(0, image_h - window + 1, stride)
              for c in range(0, image_w - window + 1, stride)]
    per_window = len(freqs)
    rows, cols, vals = [], [], []
    for j, (r, c) in enumerate(starts):
        offset = r * image_w + c
        rows.append(np.repeat(local + offset, per_window))
        cols.append(np.tile(np.arange(per_window) + j * per_window, local.size))
        vals.append(patches.ravel())
    matrix = sp.csc_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(image_h * image_w, per_window * len(starts)),
    )
    D = SynthesisDictionary(matrix, kind="local-dct")
    D.image_shape = (image_h, image_w)
    D.window = window
    D.overlap = overlap
    D.excluded = excluded
    D.window_starts = starts
    D.atoms_per_window = per_window
    return D


def atom_window(D, atom):
    """Window index of a local-DCT atom."""
    return int(atom) // D.atoms_per_window


# -- noise ---------------------------------------------------------------------


def sample_laplace_noise(length, scale, seed):
    if length < 1:
        raise ValueError("length must be >= 1")
    if not scale > 0:
        raise ValueError(f"Laplace scale must be positive, got {scale}")
    return np.random.default_rng(seed).laplace(0.0, scale, size=length)


def scale_noise_to_ratio(e, Ax, ratio):
    """Rescale ``e`` so that ``||e|| / ||Ax|| == ratio``."""
    e = np.asarray(e, dtype=float)
    ne = np.linalg.norm(e)
    nax = np.linalg.norm(Ax)
    if ne == 0 or nax == 0:
        raise ValueError("noise and signal measurements must both be nonzero")
    if ratio < 0:
        raise ValueError("ratio must be non-negative")
    return e * (ratio * nax / ne)
