"""Plain bisection on a bracketed sign change."""


class BracketError(ValueError):
    """Endpoints do not bracket a root."""


class ConvergenceError(RuntimeError):
    """Iteration budget exhausted before reaching tolerance."""


def bisect(f, lo, hi, xtol=1e-12, ftol=None, maxiter=200):
    """Root of ``f`` on ``[lo, hi]``; stops on bracket width or ``|f| <= ftol``."""
    f_lo, f_hi = f(lo), f(hi)
    if f_lo == 0:
        return lo
    if f_hi == 0:
        return hi
    if (f_lo > 0) == (f_hi > 0):
        raise BracketError(f"f({lo})={f_lo!r} and f({hi})={f_hi!r} share a sign")
    for _ in range(maxiter):
        mid = 0.5 * (lo + hi)
        f_mid = f(mid)
        if f_mid == 0 or (ftol is not None and abs(f_mid) <= ftol):
            return mid
        if (f_mid > 0) == (f_lo > 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
        if ftol is None and hi - lo <= xtol:
            return 0.5 * (lo + hi)
    raise ConvergenceError(f"no convergence in {maxiter} iterations")
