"""Dense-solve oracle values for small estimator instances.

Run with: python3 dense_solves.py
"""
import numpy as np
from scipy import signal

u = np.array([0.9, -0.4, 0.3, 1.1, -0.7, 0.2, 0.5, -1.0, 0.8, 0.1])
y = np.array([0.5, 0.1, -0.3, 0.8, 0.2, -0.6, 0.4, 0.05, -0.2, 0.7])
n = 6
N = len(u)

# Zero-initial-condition Toeplitz regressor.
phi = np.zeros((N, n))
for t in range(N):
    for k in range(n):
        if t - k >= 0:
            phi[t, k] = u[t - k]


def show(name, v):
    print(f"// {name}")
    print("[" + ", ".join(repr(float(x)) for x in v) + "]")


show("least squares", np.linalg.solve(phi.T @ phi, phi.T @ y))

# TC kernel, c = 1, alpha = 0.8, sigma^2 = 0.5: R = sigma^2 inv(P), P_ij = c alpha^max(i,j), 1-based.
idx = np.arange(1, n + 1)
P = 0.8 ** np.maximum.outer(idx, idx)
R = 0.5 * np.linalg.inv(P)
show("tc regularised", np.linalg.solve(phi.T @ phi + R, phi.T @ y))

# Filter penalty: Hamming band-stop p = 4 over [0.2, 0.3], alpha = 0.9, lambda = 2.
b = signal.firwin(5, [0.4, 0.6], window="hamming")
F = np.zeros((n, n))
for i in range(n):
    for j, bj in enumerate(b):
        if i + j < n:
            F[i, i + j] = 0.9 ** (-(i + 1) / 2) * bj
show("filter regularised", np.linalg.solve(phi.T @ phi + 2.0 * F.T @ F, phi.T @ y))
