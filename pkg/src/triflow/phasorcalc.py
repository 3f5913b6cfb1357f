"""Small dense complex kernels for phase-indexed vectors and matrices.

Everything here works on 1-3 phase quantities (and their 2x doubled bus-pair
or branch blocks), so plain dense numpy is used throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# relative cutoff for singular values treated as zero in pinv
PINV_RCOND = 1e-13


@dataclass(frozen=True)
class HermitianView:
    """A Hermitian matrix held as its real (symmetric) and imaginary
    (antisymmetric) parts."""

    re: np.ndarray
    im: np.ndarray

    @classmethod
    def from_complex(cls, m: np.ndarray) -> HermitianView:
        h = symmetrize(m)
        re = np.ascontiguousarray(h.real)
        im = np.ascontiguousarray(h.imag)
        # exact structural symmetry
        re = 0.5 * (re + re.T)
        im = 0.5 * (im - im.T)
        re.setflags(write=False)
        im.setflags(write=False)
        return cls(re, im)

    @property
    def complex(self) -> np.ndarray:
        return self.re + 1j * self.im

    @property
    def shape(self) -> tuple[int, ...]:
        return self.re.shape


def _as_complex(m) -> np.ndarray:
    if isinstance(m, HermitianView):
        return m.complex
    return np.asarray(m, dtype=complex)


def outer(u, v) -> np.ndarray:
    """Return ``u v^H``, i.e. ``result[p, q] = u[p] * conj(v[q])``."""
    u = np.asarray(u, dtype=complex)
    v = np.asarray(v, dtype=complex)
    if u.shape != v.shape or u.ndim != 1:
        raise ValueError(f"outer: vectors must share one phase set, got {u.shape} and {v.shape}")
    return np.outer(u, v.conj())


def hermitian_defect(m) -> float:
    """Largest entry of ``|m - m^H|``; zero for exactly Hermitian input."""
    m = _as_complex(m)
    if m.size == 0:
        return 0.0
    return float(np.max(np.abs(m - m.conj().T)))


def is_hermitian(m, atol: float | None = None) -> bool:
    m = _as_complex(m)
    if atol is None:
        atol = 1e-9 * (1.0 + np.linalg.norm(m))
    return hermitian_defect(m) <= atol


def symmetrize(m) -> np.ndarray:
    """Average ``m`` with its conjugate transpose."""
    m = _as_complex(m)
    return 0.5 * (m + m.conj().T)


def rank1_residual(m) -> float:
    """Ratio of the second to the first singular value.

    0 iff ``m`` is (numerically) an outer product. The zero matrix and
    matrices with a single row/column count as rank one.
    """
    m = _as_complex(m)
    if m.size == 0 or min(m.shape) < 2:
        return 0.0
    s = np.linalg.svd(m, compute_uv=False)
    if s[0] == 0.0:
        return 0.0
    return float(s[1] / s[0])


def psd_residual(m) -> float:
    """``max(0, -lambda_min)`` of the Hermitian part of ``m``."""
    m = _as_complex(m)
    if m.size == 0:
        return 0.0
    lam = np.linalg.eigvalsh(symmetrize(m))
    return float(max(0.0, -lam[0]))


def real_embedding(m) -> np.ndarray:
    """Real symmetric ``[[re, im], [-im, re]]`` form of a Hermitian matrix.

    The spectrum of the result is the spectrum of ``m`` with every
    eigenvalue repeated twice.
    """
    if not isinstance(m, HermitianView):
        m = HermitianView.from_complex(m)
    return np.block([[m.re, m.im], [-m.im, m.re]])


def pinv(m) -> np.ndarray:
    """Moore-Penrose pseudoinverse; the exact inverse for nonsingular input."""
    m = _as_complex(m)
    if m.size == 0:
        return m.copy()
    return np.linalg.pinv(m, rcond=PINV_RCOND)


def wrap_angle(theta):
    """Map angles into (-pi, pi]."""
    t = np.asarray(theta, dtype=float)
    w = np.mod(t + np.pi, 2.0 * np.pi) - np.pi
    w = np.where(w == -np.pi, np.pi, w)
    if np.ndim(w) == 0:
        return float(w)
    return w
