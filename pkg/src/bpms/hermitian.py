"""Real parameterisations of complex Hermitian matrices."""

import numpy as np


def herm_basis(n: int) -> np.ndarray:
    """Basis ``E`` of shape ``(n*n, n, n)`` with ``H = sum_p x_p E[p]``.

    Order: the n diagonal entries, then for every ``i < j`` the real part
    followed by the imaginary part of ``H[i, j]``.
    """
    basis = np.zeros((n * n, n, n), dtype=complex)
    p = 0
    for i in range(n):
        basis[p, i, i] = 1.0
        p += 1
    for i in range(n):
        for j in range(i + 1, n):
            basis[p, i, j] = basis[p, j, i] = 1.0
            basis[p + 1, i, j] = 1j
            basis[p + 1, j, i] = -1j
            p += 2
    return basis


def herm_from_params(x, n: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    H = np.zeros((n, n), dtype=complex)
    H[np.diag_indices(n)] = x[:n]
    iu, ju = np.triu_indices(n, 1)
    vals = x[n::2] + 1j * x[n + 1::2]
    H[iu, ju] = vals
    H[ju, iu] = vals.conj()
    return H


def herm_to_params(H) -> np.ndarray:
    H = np.asarray(H)
    n = H.shape[0]
    iu, ju = np.triu_indices(n, 1)
    x = np.empty(n * n)
    x[:n] = H[np.diag_indices(n)].real
    x[n::2] = H[iu, ju].real
    x[n + 1::2] = H[iu, ju].imag
    return x


def real_embed(H) -> np.ndarray:
    """``[[Re H, -Im H], [Im H, Re H]]``; PSD iff ``H`` is PSD."""
    H = np.asarray(H)
    return np.block([[H.real, -H.imag], [H.imag, H.real]])


def hermitize(A):
    return 0.5 * (A + A.conj().T)
