#!/usr/bin/env python3
"""Regenerates the Hopf-Cole oracle fixtures.

For H(x, p) = p^2 + V(x) with a = 1 and 1-periodic V, the substitution
f = phi'/phi turns f' + f^2 + V = lambda into -phi'' - V phi = -lambda phi.
Writing phi = exp(theta x) psi with psi periodic gives the twisted operator

    L_theta psi = -(psi'' + 2 theta psi' + theta^2 psi) - V psi,

whose principal eigenvalue E(theta) yields the effective Hamiltonian
Hbar(theta) = -E(theta) and the critical value lambda0 = -E(0).
Eigenpairs are computed with Hill's method (Fourier–Galerkin, dense eig);
the finite-difference eigenvalue on 2048 nodes is printed as a cross-check.
"""
import csv
import os

import numpy as np
from scipy.optimize import brentq

HERE = os.path.dirname(os.path.abspath(__file__))
MODES = 48


def hill(theta, terms, modes=MODES):
    ks = np.arange(-modes, modes + 1)
    n = len(ks)
    m = np.zeros((n, n), complex)
    for i, k in enumerate(ks):
        m[i, i] = (2 * np.pi * k) ** 2 - 2 * theta * (2j * np.pi * k) - theta ** 2
    for amp, harmonic in terms:
        for i in range(n):
            for j in range(n):
                if abs(ks[i] - ks[j]) == harmonic:
                    m[i, j] -= amp / 2
    w, v = np.linalg.eig(m)
    i = np.argmin(w.real)
    c = v[:, i]
    c = c / c[modes]  # psi has mean one
    return w[i].real, c, ks


def fd_ground(terms, n=2048):
    h = 1.0 / n
    x = np.arange(n) * h
    v = sum(a * np.cos(2 * np.pi * k * x) for a, k in terms)
    m = np.zeros((n, n))
    for i in range(n):
        m[i, i] = 2 / h ** 2 - v[i]
        m[i, (i + 1) % n] = -1 / h ** 2
        m[i, (i - 1) % n] = -1 / h ** 2
    return np.linalg.eigvalsh(m)[0]


def log_derivative(theta, c, ks, x):
    e = np.exp(2j * np.pi * np.outer(x, ks))
    psi = (e @ c).real
    dpsi = (e @ (2j * np.pi * ks * c)).real
    return theta + dpsi / psi


POTENTIALS = {
    "cos": [(1.0, 1)],
    "cos_cos2": [(1.0, 1), (0.3, 2)],
}


def main():
    rows = []
    for name, terms in POTENTIALS.items():
        e0, _, _ = hill(0.0, terms)
        rows.append((name, repr(float(e0)), repr(float(-e0)), repr(float(fd_ground(terms)))))
    with open(os.path.join(HERE, "hopf_cole_lambda0.csv"), "w", newline="\n") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["potential", "e0", "lambda0", "e0_fd2048"])
        w.writerows(rows)

    for name, terms in POTENTIALS.items():
        lam0 = float(-hill(0.0, terms)[0])
        with open(os.path.join(HERE, f"effective_{name}.csv"), "w", newline="\n") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["theta", "hbar"])
            for theta in np.linspace(-3.0, 3.0, 121):
                w.writerow([repr(float(theta)), repr(float(-hill(theta, terms)[0]))])

        lam = lam0 + 1.0
        mu = brentq(lambda t: -hill(t, terms)[0] - lam, 1e-9, 5.0, xtol=1e-15)
        x = np.arange(256) / 256.0
        _, c_hi, ks = hill(mu, terms)
        _, c_lo, _ = hill(-mu, terms)
        f_hi = log_derivative(mu, c_hi, ks, x)
        f_lo = log_derivative(-mu, c_lo, ks, x)
        with open(os.path.join(HERE, f"floquet_{name}.csv"), "w", newline="\n") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "lambda", "theta_max", "f_max", "theta_min", "f_min"])
            for xi, a, b in zip(x, f_hi, f_lo):
                w.writerow([repr(float(xi)), repr(lam), repr(float(mu)), repr(float(a)), repr(float(-mu)), repr(float(b))])


if __name__ == "__main__":
    main()
