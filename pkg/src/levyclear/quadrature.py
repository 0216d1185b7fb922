"""Composite Gauss-Legendre rules used for vectorised integration."""
import numpy as np

_GL_X, _GL_W = np.polynomial.legendre.leggauss(20)


def integrate_panels(f, breaks):
    """Integrate a vectorised ``f`` over consecutive panels given by ``breaks``."""
    x, w = nodes_weights(breaks)
    return float(np.dot(w, f(x)))


def decay_breaks(rate, start=0.0, first=1e-3, span=40.0):
    """Panels suited to an integrand decaying like exp(-rate * (x - start)).

    Geometric refinement near ``start`` then uniform panels of width 2/rate
    up to ``start + span/rate``.
    """
    width = 2.0 / rate
    geo = []
    h = first
    while h < width:
        geo.append(h)
        h *= 2.0
    end = span / rate
    uni = np.arange(width, end + width, width)
    return start + np.concatenate([[0.0], geo, uni])


def nodes_weights(breaks):
    """Nodes and weights of the composite rule, for repeated use."""
    b = np.asarray(breaks, dtype=float)
    a, c = b[:-1], b[1:]
    half = 0.5 * (c - a)
    mid = 0.5 * (c + a)
    x = (mid[:, None] + half[:, None] * _GL_X[None, :]).ravel()
    w = (half[:, None] * _GL_W[None, :]).ravel()
    return x, w
