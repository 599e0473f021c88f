"""Fourier-side basis functions for the light-cone profile distributions.

The physical-space profiles are G_lam(nu, s) = [k(nu)^2 - s^2]_+^lam for
lam in {-3,...,2} (negative orders defined distributionally).  After the
rescaling f_lam = k^(-2 lam) G_lam(nu, k*.) their transforms are nu-free:

    fhat_0  = 2 sin(x)/x                fhat_{-1} = cos(x)
    fhat_1  = 4 (sin x/x - cos x)/x^2   fhat_{-2} = (x sin x + cos x)/2
    fhat_2  = 16 (3 sin x/x^2 - 3 cos x/x - sin x)/x^3
    fhat_{-3} = (3 cos x + 3 x sin x - x^2 cos x)/8

and Ghat_n(nu, xi) = k^(1+2n) fhat_n(xi k).  The trig forms cancel
catastrophically near x = 0 for the nonnegative orders, so evaluation
switches to exact-rational Taylor series below |x| = 1/2.  First and
second derivatives are hand-differentiated closed forms (never finite
differences), with the same series switch.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np

ORDERS = (-3, -2, -1, 0, 1, 2)

_SERIES_CUT = 0.5
_SERIES_TERMS = 18  # powers x^0..x^34; truncation < 1e-20 at the cut


def _trig_series(terms: int):
    """Exact Taylor coefficient tables for all six fhat and derivatives."""
    n = 2 * terms + 8
    sin = [Fraction(0)] * n
    cos = [Fraction(0)] * n
    fact = Fraction(1)
    for j in range(n):
        if j:
            fact *= j
        if j % 2:
            sin[j] = Fraction((-1) ** (j // 2), 1) / fact
        else:
            cos[j] = Fraction((-1) ** (j // 2), 1) / fact

    def shift_div(poly, p):
        # poly / x^p, requiring the low-order coefficients to vanish
        assert all(c == 0 for c in poly[:p])
        return poly[p:]

    def lin(*pairs):
        out = [Fraction(0)] * n
        for coef, poly, xpow in pairs:
            for j, c in enumerate(poly):
                if j + xpow < n:
                    out[j + xpow] += coef * c
        return out

    f = {}
    f[0] = shift_div(lin((2, sin, 0)), 1)
    f[1] = shift_div(lin((4, sin, 0), (-4, cos, 1)), 3)
    f[2] = shift_div(lin((48, sin, 0), (-48, cos, 1), (-16, sin, 2)), 5)
    f[-1] = lin((1, cos, 0))
    f[-2] = lin((Fraction(1, 2), sin, 1), (Fraction(1, 2), cos, 0))
    f[-3] = lin((Fraction(3, 8), cos, 0), (Fraction(3, 8), sin, 1),
                (Fraction(-1, 8), cos, 2))

    table = {}
    for lam, poly in f.items():
        c0 = np.array([float(c) for c in poly[:2 * terms:1]])
        c1 = np.array([float(poly[j + 1] * (j + 1))
                       for j in range(2 * terms)])
        c2 = np.array([float(poly[j + 2] * (j + 1) * (j + 2))
                       for j in range(2 * terms)])
        table[lam] = (c0, c1, c2)
    return table


_SERIES = _trig_series(_SERIES_TERMS)


def _polyval(coeffs, x):
    acc = np.zeros_like(x)
    for c in coeffs[::-1]:
        acc = acc * x + c
    return acc


def _eval_switch(xi, closed, series_coeffs):
    xi = np.asarray(xi, dtype=float)
    small = np.abs(xi) < _SERIES_CUT
    out = np.empty_like(xi)
    if np.any(~small):
        x = xi[~small]
        out[~small] = closed(x)
    if np.any(small):
        out[small] = _polyval(series_coeffs, xi[small])
    return out if out.shape else float(out)


def fhat(lam: int, xi):
    """Transform of the rescaled cone profile of order lam at xi."""
    if lam not in ORDERS:
        raise ValueError(f"order {lam} not in {ORDERS}")
    closed = {
        0: lambda x: 2.0 * np.sin(x) / x,
        1: lambda x: 4.0 * (np.sin(x) / x - np.cos(x)) / x ** 2,
        2: lambda x: 16.0 * (3.0 * np.sin(x) / x ** 2 - 3.0 * np.cos(x) / x
                             - np.sin(x)) / x ** 3,
        -1: np.cos,
        -2: lambda x: 0.5 * (x * np.sin(x) + np.cos(x)),
        -3: lambda x: 0.125 * (3.0 * np.cos(x) + 3.0 * x * np.sin(x)
                               - x * x * np.cos(x)),
    }[lam]
    return _eval_switch(xi, closed, _SERIES[lam][0])


def fhat_d1(lam: int, xi):
    """d/dxi of fhat, closed trig forms."""
    if lam not in ORDERS:
        raise ValueError(f"order {lam} not in {ORDERS}")
    closed = {
        0: lambda x: 2.0 * (x * np.cos(x) - np.sin(x)) / x ** 2,
        1: lambda x: 4.0 * (x * x * np.sin(x) + 3.0 * x * np.cos(x)
                            - 3.0 * np.sin(x)) / x ** 4,
        2: lambda x: 16.0 * (6.0 * x * x * np.sin(x) - x ** 3 * np.cos(x)
                             + 15.0 * x * np.cos(x)
                             - 15.0 * np.sin(x)) / x ** 6,
        -1: lambda x: -np.sin(x),
        -2: lambda x: 0.5 * x * np.cos(x),
        -3: lambda x: 0.125 * (x * np.cos(x) + x * x * np.sin(x)),
    }[lam]
    return _eval_switch(xi, closed, _SERIES[lam][1])


def fhat_d2(lam: int, xi):
    """d2/dxi2 of fhat, closed trig forms."""
    if lam not in ORDERS:
        raise ValueError(f"order {lam} not in {ORDERS}")
    closed = {
        0: lambda x: 2.0 * (-x * x * np.sin(x) - 2.0 * x * np.cos(x)
                            + 2.0 * np.sin(x)) / x ** 3,
        1: lambda x: 4.0 * (x ** 3 * np.cos(x) - 5.0 * x * x * np.sin(x)
                            - 12.0 * x * np.cos(x)
                            + 12.0 * np.sin(x)) / x ** 5,
        2: lambda x: 16.0 * (x ** 4 * np.sin(x) + 9.0 * x ** 3 * np.cos(x)
                             - 39.0 * x * x * np.sin(x)
                             - 90.0 * x * np.cos(x)
                             + 90.0 * np.sin(x)) / x ** 7,
        -1: lambda x: -np.cos(x),
        -2: lambda x: 0.5 * (np.cos(x) - x * np.sin(x)),
        -3: lambda x: 0.125 * (np.cos(x) + x * np.sin(x)
                               + x * x * np.cos(x)),
    }[lam]
    return _eval_switch(xi, closed, _SERIES[lam][2])


def fhat_bessel(lam: int, xi):
    """Independent half-integer Bessel form c_lam |x|^(-lam-1/2) J_(lam+1/2).

    Test oracle only; c_lam = sqrt(pi) 2^(lam+1/2) Gamma(lam+1) for
    lam >= 0 and c_{-n} = (-1)^(n-1)/(n-1)! sqrt(pi) 2^(1/2-n).
    """
    from scipy.special import gamma, jv
    xi = np.abs(np.asarray(xi, dtype=float))
    if lam >= 0:
        c = math.sqrt(math.pi) * 2.0 ** (lam + 0.5) * gamma(lam + 1)
    else:
        n = -lam
        c = (-1.0) ** (n - 1) / gamma(n) * math.sqrt(math.pi) * 2.0 ** (0.5 - n)
    out = c * xi ** (-lam - 0.5) * jv(lam + 0.5, xi)
    return out if out.shape else float(out)


def G_physical(lam: int, nu, s, k_of_nu=None):
    """Physical cone profile [k(nu)^2 - s^2]_+^lam for lam in {0, 1, 2}.

    Negative orders exist only as distributions; request the smoothed
    kernel machinery for those.
    """
    if lam not in (0, 1, 2):
        raise ValueError("physical-space evaluation only for lam in {0,1,2}")
    if k_of_nu is None:
        from .gaschart import k_of_nu as k_of_nu_default
        k_of_nu = k_of_nu_default
    k = np.asarray(k_of_nu(nu), dtype=float)
    s = np.asarray(s, dtype=float)
    base = np.clip(k * k - s * s, 0.0, None)
    if lam == 0:
        out = (np.abs(s) <= k).astype(float)
    else:
        out = base ** lam
    return out if out.shape else float(out)


def Ghat(lam: int, nu, xi, k_of_nu=None):
    """Ghat_lam(nu, xi) = k^(1+2 lam) fhat_lam(xi k)."""
    if k_of_nu is None:
        from .gaschart import k_of_nu as k_of_nu_default
        k_of_nu = k_of_nu_default
    k = np.asarray(k_of_nu(nu), dtype=float)
    return k ** (1 + 2 * lam) * fhat(lam, np.asarray(xi) * k)


def check_recurrences(xi_grid=None, zk_grid=None) -> dict:
    """Max absolute defect of every Fourier-side recurrence relation.

    Covers the derivative ladder between neighbouring orders, the
    harmonic relation at order -1, and the second-derivative identities
    of the cone profiles (as relations between the fhat at z = xi*k):

        -z^2 fhat_1 = -2 fhat_0 + 4 fhat_{-1}
        -z^2 fhat_0 =  2 fhat_{-1} - 4 fhat_{-2}
        -z^2 fhat_{-1} = -6 fhat_{-2} + 8 fhat_{-3}

    Returns {"relations": {name: defect}, "max_defect": float,
    "pass": bool, "tolerance": float}.
    """
    if xi_grid is None:
        xi_grid = np.concatenate([np.geomspace(1e-3, 1.0, 300),
                                  np.linspace(1.0, 60.0, 700)])
    xi = np.asarray(xi_grid, dtype=float)
    if np.any(xi == 0.0):
        raise ValueError("grid must exclude xi = 0 for the singular relations")
    z = xi if zk_grid is None else np.asarray(zk_grid, dtype=float)

    f = {lam: fhat(lam, xi) for lam in ORDERS}
    d1 = {lam: fhat_d1(lam, xi) for lam in ORDERS}
    d2 = {lam: fhat_d2(lam, xi) for lam in ORDERS}

    rel = {}

    def put(name, defect):
        rel[name] = float(np.max(np.abs(defect)))

    # second-derivative ladder fhat_l'' + fhat_l = fhat_{l+1}
    for lam in (-3, -2, -1, 0, 1):
        target = 0.0 if lam == -1 else f[lam + 1]
        put(f"dd_ladder[{lam}]", d2[lam] + f[lam] - target)
    # fhat_{l+1} = -(2(l+1)/xi) fhat_l'  for l = 0, 1
    put("step_up[0]", f[1] + (2.0 / xi) * d1[0])
    put("step_up[1]", f[2] + (4.0 / xi) * d1[1])
    # first-derivative relations
    put("d1[1]", d1[1] + (3.0 / xi) * f[1] - (2.0 / xi) * f[0])
    put("d1[2]", d1[2] + (5.0 / xi) * f[2] - (4.0 / xi) * f[1])
    put("d1[0]", d1[0] + (1.0 / xi) * f[0] - (2.0 / xi) * f[-1])
    put("d1[-1]", d1[-1] + (xi / 2.0) * f[0])
    put("d1[-1]_ladder", d1[-1] - (1.0 / xi) * f[-1] + (2.0 / xi) * f[-2])
    put("d1[-2]", d1[-2] - (3.0 / xi) * f[-2] + (4.0 / xi) * f[-3])
    # cone-profile second derivatives at z = xi*k
    g = {lam: fhat(lam, z) for lam in ORDERS}
    put("ss_G1", -z * z * g[1] + 2.0 * g[0] - 4.0 * g[-1])
    put("ss_G0", -z * z * g[0] - 2.0 * g[-1] + 4.0 * g[-2])
    put("ss_Gm1", -z * z * g[-1] + 6.0 * g[-2] - 8.0 * g[-3])

    tol = 1e-10
    worst = max(rel.values())
    return {"relations": rel, "max_defect": worst, "tolerance": tol,
            "pass": bool(worst < tol),
            "failed": sorted(name for name, v in rel.items() if v >= tol)}
