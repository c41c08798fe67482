"""Adaptive Simpson quadrature with forced splits at integrand breakpoints."""


def _simpson(f, a, fa, b, fb):
    m = 0.5 * (a + b)
    fm = f(m)
    return m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb)


def _adapt(f, a, fa, b, fb, m, fm, whole, tol, depth):
    lm, flm, left = _simpson(f, a, fa, m, fm)
    rm, frm, right = _simpson(f, m, fm, b, fb)
    err = left + right - whole
    if abs(err) <= 15.0 * tol or depth >= 60:
        return left + right + err / 15.0
    half = 0.5 * tol
    return _adapt(f, a, fa, m, fm, lm, flm, left, half, depth + 1) + _adapt(
        f, m, fm, b, fb, rm, frm, right, half, depth + 1
    )


def adaptive_simpson(f, a: float, b: float, tol: float = 1e-10, breakpoints=()) -> float:
    """Integrate f on [a, b] to absolute tolerance tol.

    The interval is pre-split at every breakpoint in (a, b) so that kinks of
    piecewise-smooth integrands never straddle a panel.
    """
    if not b > a:
        raise ValueError(f"empty integration interval [{a}, {b}]")
    cuts = sorted({float(x) for x in breakpoints if a < x < b})
    knots = [a] + cuts + [b]
    total = 0.0
    for lo, hi in zip(knots[:-1], knots[1:]):
        flo, fhi = f(lo), f(hi)
        m, fm, whole = _simpson(f, lo, flo, hi, fhi)
        # at least one refinement per panel so flat-looking panels get probed
        sub = max((hi - lo) / (b - a) * tol, 1e-300)
        lm, flm, left = _simpson(f, lo, flo, m, fm)
        rm, frm, right = _simpson(f, m, fm, hi, fhi)
        total += _adapt(f, lo, flo, m, fm, lm, flm, left, 0.5 * sub, 1)
        total += _adapt(f, m, fm, hi, fhi, rm, frm, right, 0.5 * sub, 1)
    return total


def simpson_norm_sq(pdf, a: float, b: float, tol: float = 1e-10, breakpoints=()) -> float:
    """Integral of pdf**2 over [a, b]."""
    return adaptive_simpson(lambda x: pdf(x) ** 2, a, b, tol=tol, breakpoints=breakpoints)
