"""Pure-numpy selective scan kernels (fallback for the compiled extension).

Shapes: u, delta (B, S, D); A (D, N); Bm, Cm (B, S, N); Dskip (D,).
The forward returns ``(y, h)`` with ``h`` the (B, S, D, N) state history the
backward needs.
"""
import numpy as np


def _tick(counter, key, n):
    if counter is not None:
        counter[key] = counter.get(key, 0) + int(n)


def forward(u, delta, A, Bm, Cm, Dskip, counter=None):
    """Sequential recurrence, vectorised over (B, D, N).

    ``counter`` (a dict) is incremented with the floating-point operations
    actually issued: one per elementwise multiply, add or exp.
    """
    b, s, d = u.shape
    n = A.shape[1]
    dA = np.exp(delta[..., None] * A)                        # (B,S,D,N)
    du = delta * u
    dBu = du[..., None] * Bm[:, :, None, :]
    _tick(counter, "discretize", 2 * dA.size + du.size + dBu.size)

    h = np.empty((b, s, d, n), dtype=dA.dtype)
    state = np.zeros((b, d, n), dtype=dA.dtype)
    for t in range(s):
        state = dA[:, t] * state + dBu[:, t]
        h[:, t] = state
    _tick(counter, "recurrence", 2 * h.size)

    y = np.matmul(h, Cm[..., None])[..., 0] + Dskip * u
    _tick(counter, "readout", 2 * h.size + 2 * u.size)
    return y, h


def backward(gy, u, delta, A, Bm, Cm, Dskip, h):
    b, s, d = u.shape
    dA = np.exp(delta[..., None] * A)
    gh = np.empty_like(h)
    carry = np.zeros((b, d, h.shape[-1]), dtype=h.dtype)
    for t in range(s - 1, -1, -1):
        g = gy[:, t, :, None] * Cm[:, t, None, :] + carry
        gh[:, t] = g
        carry = g * dA[:, t]
    h_prev = np.concatenate([np.zeros_like(h[:, :1]), h[:, :-1]], axis=1)
    g_dA = gh * h_prev * dA                                  # grad wrt (delta*A) inside exp

    gC = np.matmul(gy[:, :, None, :], h)[:, :, 0, :]
    ghB = np.matmul(gh, Bm[..., None])[..., 0]               # sum_n gh * B
    gdelta = (g_dA * A).sum(-1) + ghB * u
    gA = (g_dA * delta[..., None]).sum(axis=(0, 1))
    du = delta * u
    gB = np.matmul(du[:, :, None, :], gh)[:, :, 0, :]
    gu = ghB * delta + Dskip * gy
    gD = (gy * u).sum(axis=(0, 1))
    return gu, gdelta, gA, gB, gC, gD


def forward_associative(u, delta, A, Bm, Cm, Dskip):
    """Same recurrence as a log-depth inclusive scan over (a, b) pairs.

    The pair (a2, b2) after (a1, b1) composes to (a1*a2, a2*b1 + b2).
    """
    a = np.exp(delta[..., None] * A)
    bb = (delta * u)[..., None] * Bm[:, :, None, :]
    s = u.shape[1]
    off = 1
    while off < s:
        a_prev, b_prev = a[:, :-off], bb[:, :-off]
        b_new = bb.copy()
        a_new = a.copy()
        b_new[:, off:] = a[:, off:] * b_prev + bb[:, off:]
        a_new[:, off:] = a[:, off:] * a_prev
        a, bb = a_new, b_new
        off *= 2
    y = np.matmul(bb, Cm[..., None])[..., 0] + Dskip * u
    return y, bb


def naive(u, delta, A, Bm, Cm, Dskip):
    """Literal per-element recurrence in float64; used only as a test oracle."""
    u, delta, A, Bm, Cm, Dskip = (np.asarray(x, dtype=np.float64)
                                  for x in (u, delta, A, Bm, Cm, Dskip))
    b, s, d = u.shape
    n = A.shape[1]
    y = np.zeros((b, s, d))
    for i in range(b):
        for j in range(d):
            hh = np.zeros(n)
            for t in range(s):
                hh = np.exp(delta[i, t, j] * A[j]) * hh + delta[i, t, j] * Bm[i, t] * u[i, t, j]
                y[i, t, j] = Cm[i, t] @ hh + Dskip[j] * u[i, t, j]
    return y
