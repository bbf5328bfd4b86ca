"""Independent reference implementations used as test oracles."""

import math

import numpy as np


def finite_difference_grad(f, x, h=1e-6):
    """Central differences of a scalar function."""
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def naive_mlp_loss(W1, b1, W2, b2, x, y):
    """Single-example mlp1 cross-entropy, written with explicit loops."""
    h = [math.tanh(sum(x[i] * W1[i][j] for i in range(len(x))) + b1[j]) for j in range(len(b1))]
    z = [sum(h[j] * W2[j][k] for j in range(len(h))) + b2[k] for k in range(len(b2))]
    m = max(z)
    lse = m + math.log(sum(math.exp(v - m) for v in z))
    return lse - z[y]


def quadrature_rdp(q, sigma, alpha):
    """RDP of the subsampled Gaussian by integrating the likelihood ratio.

    log E_{z~N(0,s^2)}[((1-q) + q exp((2z-1)/(2 s^2)))^alpha] / (alpha-1),
    integrated in a frame rescaled at the integrand's peak.
    """
    from scipy import integrate, optimize

    def logf(z):
        l0 = -z * z / (2 * sigma**2) - math.log(sigma * math.sqrt(2 * math.pi))
        lr = np.logaddexp(math.log1p(-q), math.log(q) + (2 * z - 1) / (2 * sigma**2))
        return l0 + alpha * lr

    peak = optimize.minimize_scalar(lambda z: -logf(z), bracket=(-1.0, 1.0 + alpha)).x
    top = logf(peak)
    left = integrate.quad(lambda z: math.exp(logf(z) - top), -np.inf, peak, epsabs=0, epsrel=1e-13, limit=500)[0]
    right = integrate.quad(lambda z: math.exp(logf(z) - top), peak, np.inf, epsabs=0, epsrel=1e-13, limit=500)[0]
    return (top + math.log(left + right)) / (alpha - 1)


def t_sf_df2(t):
    """Upper tail of Student t with 2 degrees of freedom (closed form)."""
    return 0.5 - t / (2 * math.sqrt(2) * math.sqrt(1 + t * t / 2))
