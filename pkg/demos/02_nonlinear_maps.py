"""The flux S, the quasi-norm transform V, and their equivalence structure.

Run:  python demos/02_nonlinear_maps.py
"""

import numpy as np

from pheat import PLaplaceParams, equivalence_ratios, phi_shifted, s_flux, v_transform

rng = np.random.default_rng(1)

print("exact identity |V(xi)|^2 = S(xi).xi:")
for p in (1.2, 1.5, 2.0, 3.0, 4.5):
    params = PLaplaceParams(p=p, kappa=0.0)
    xi = rng.standard_normal((100_000, 2)) * 10.0 ** rng.uniform(-3, 3, (100_000, 1))
    v2 = np.sum(v_transform(xi, params) ** 2, axis=-1)
    sx = np.sum(s_flux(xi, params) * xi, axis=-1)
    print(f"  p = {p}: worst relative deviation {np.max(np.abs(v2 - sx) / sx):.2e}")

print("\nthe four equivalent distance measures stay within bounded ratios:")
print("   (S(P)-S(Q)).(P-Q) ~ |V(P)-V(Q)|^2 ~ phi_|P|(|P-Q|) ~ phi''(|P|+|Q|)|P-Q|^2")
for p in (1.5, 3.0):
    params = PLaplaceParams(p=p, kappa=0.0)
    P = rng.standard_normal((50_000, 2)) * 10.0 ** rng.uniform(-2, 2, (50_000, 1))
    Q = rng.standard_normal((50_000, 2)) * 10.0 ** rng.uniform(-2, 2, (50_000, 1))
    q = equivalence_ratios(P, Q, params)
    ratios = q / q[:, :1]
    print(f"  p = {p}: ratio ranges vs the monotonicity product:")
    for k, name in enumerate(("|V(P)-V(Q)|^2", "phi_|P|(|P-Q|)", "phi''(.)|P-Q|^2")):
        r = ratios[:, k + 1]
        print(f"    {name:18s} in [{r.min():8.4f}, {r.max():8.4f}]")

print("\nshifted N-function phi_a(t), p = 1.5, kappa = 0:")
params = PLaplaceParams(p=1.5, kappa=0.0)
for a in (0.0, 0.1, 1.0, 10.0):
    vals = [phi_shifted(a, t, params) for t in (0.1, 1.0, 10.0)]
    print(f"  a = {a:5.1f}: phi_a(0.1, 1, 10) = "
          + ", ".join(f"{v:.5f}" for v in vals))
