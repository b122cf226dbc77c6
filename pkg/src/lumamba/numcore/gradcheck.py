import numpy as np

from .array import Tape, precision


def grad_check(f, params, step=1e-3, max_coords=64, seed=0, return_details=False):
    """Compare reverse-mode gradients with central differences.

    ``f`` takes no arguments and returns a scalar Array computed from
    ``params``. Everything runs in float64; parameters are restored afterwards.
    Returns the max over sampled coordinates of
    ``|analytic - numeric| / (|analytic| + |numeric| + 1e-8)``.
    """
    params = list(params)
    saved = [p.data for p in params]
    rng = np.random.default_rng(seed)
    try:
        with precision(np.float64):
            for p in params:
                p.data = p.data.astype(np.float64)
            with Tape() as tape:
                out = f()
            f0 = float(out.data)
            if not np.isfinite(f0):
                raise FloatingPointError(f"f is not finite at the base point: {f0}")
            if out.requires_grad:
                grads = tape.backward(out, params)
            else:
                grads = {}

            # sample coordinates across all parameters, weighted by size
            sizes = np.array([p.data.size for p in params])
            total = int(sizes.sum())
            n = min(max_coords, total)
            flat = rng.choice(total, size=n, replace=False)
            owners = np.searchsorted(np.cumsum(sizes), flat, side="right")
            offsets = flat - np.concatenate([[0], np.cumsum(sizes)])[owners]

            details = []
            worst = 0.0
            for which, off in zip(owners, offsets):
                p = params[which]
                view = p.data.reshape(-1)
                orig = view[off]
                view[off] = orig + step
                fp = float(f().data)
                view[off] = orig - step
                fm = float(f().data)
                view[off] = orig
                if not (np.isfinite(fp) and np.isfinite(fm)):
                    raise FloatingPointError(f"f is not finite near {p.name}[{off}]")
                numeric = (fp - fm) / (2 * step)
                g = grads.get(id(p))
                analytic = 0.0 if g is None else float(np.reshape(g, -1)[off])
                err = abs(analytic - numeric) / (abs(analytic) + abs(numeric) + 1e-8)
                details.append((p.name, int(off), analytic, numeric, err))
                worst = max(worst, err)
    finally:
        for p, d in zip(params, saved):
            p.data = d
    return (worst, details) if return_details else worst
