"""Pure numpy implementations of the hot kernels (fallback for ``_kernels``)."""

import numpy as np

_CHUNK = 1 << 16


def quantize_phases(x, psi):
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    psi = np.asarray(psi, dtype=np.float64)
    d = np.abs(x[:, None] - psi[None, :])
    # argmin returns the first minimum, psi is ascending -> ties go to the smaller value
    return psi[np.argmin(d, axis=1)]


def _half_sums(rot, antennas, L):
    """All partial sums over ``antennas`` in mixed-radix order, shape (L**n, C)."""
    C = rot.shape[2]
    acc = np.zeros((1, C), dtype=np.complex128)
    for m in antennas:
        acc = (acc[:, None, :] + rot[m][None, :, :]).reshape(-1, C)
    return acc


def sinr_scan(h, H, tx_power, noise_power, psi, fix_first=True, rel_tol=1e-12):
    """Meet-in-the-middle enumeration; see ``_kernels.sinr_scan`` for the contract."""
    h = np.asarray(h, dtype=np.complex128).reshape(-1)
    M = h.shape[0]
    H = np.asarray(H, dtype=np.complex128).reshape(-1, M)
    psi = np.asarray(psi, dtype=np.float64)
    L = psi.shape[0]
    chans = np.concatenate([h[:, None], H.T], axis=1)
    rot = np.exp(-1j * psi)[None, :, None] * chans[:, None, :]

    split = M // 2
    head = list(range(1 if fix_first else 0, split))
    tail = list(range(split, M))
    if fix_first and split == 0:
        tail = tail[1:]
    base = rot[0, 0][None, :] if fix_first else np.zeros((1, chans.shape[1]), complex)
    A = _half_sums(rot, head, L) + base
    B = _half_sums(rot, tail, L)
    nB = B.shape[0]

    def chunk_sinr(a0, a1):
        tot = A[a0:a1, None, :] + B[None, :, :]
        p = np.abs(tot) ** 2 * (tx_power / M)
        s = p[..., 0] / (p[..., 1:].sum(axis=-1) + noise_power)
        return s.reshape(-1)

    rows = max(1, _CHUNK // nB)
    smax = -1.0
    for a0 in range(0, A.shape[0], rows):
        smax = max(smax, float(chunk_sinr(a0, a0 + rows).max()))
    thresh = smax * (1.0 - rel_tol)
    flat = None
    for a0 in range(0, A.shape[0], rows):
        s = chunk_sinr(a0, a0 + rows)
        hit = np.flatnonzero(s >= thresh)
        if hit.size:
            flat = a0 * nB + int(hit[0])
            break

    free = head + tail
    digits = np.zeros(M, dtype=np.intp)
    for m in reversed(free):
        flat, digits[m] = divmod(flat, L)
    theta = psi[digits]
    w = np.exp(1j * theta) / np.sqrt(M)
    sig = abs(np.vdot(w, h)) ** 2 * tx_power
    intf = float(np.sum(np.abs(H.conj() @ w) ** 2)) * tx_power if H.shape[0] else 0.0
    return digits, sig / (intf + noise_power)
