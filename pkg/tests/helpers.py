"""Shared test oracles: finite-difference gradient checks and friends."""

import numpy as np

from multiskill import tensor as T


def finite_diff_grad(f, x, h=1e-6):
    """Central finite differences of scalar-valued f at x (same shape as x)."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gf[i] = (fp - fm) / (2.0 * h)
    return g


def rel_err(a, b, floor=1e-8):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom))


def check_grad(build_loss, params, h=1e-6, tol=1e-6):
    """Compare autodiff gradients of ``build_loss(params) -> Tensor`` against
    central finite differences, parameter by parameter.

    ``params`` is a dict name -> Tensor (requires_grad). Returns the worst
    relative error seen; asserts it is within ``tol``.
    """
    loss = build_loss()
    for p in params.values():
        p.reset_grad()
    loss.backward()
    worst = 0.0
    for name, p in params.items():
        analytic = p.grad.copy()

        def f(x, _p=p):
            old = _p.data.copy()
            _p.data[...] = x
            with T.no_grad():
                val = build_loss().item()
            _p.data[...] = old
            return val

        numeric = finite_diff_grad(f, p.data.copy(), h=h)
        err = rel_err(analytic, numeric, floor=1e-6)
        worst = max(worst, err)
        assert err <= tol, f"gradient mismatch for {name}: rel err {err:.3e}"
    return worst
