"""
Weights, homogeneous exponents and weighted balls
==================================================

Assign weights to generators of the Heisenberg group and of D_inf x Z,
propagate them through commutators, and compare the exact exponent with
a log-log fit of weighted ball counts.
"""
from fractions import Fraction

from stablewalk import build_weight_system, gamma, get_group, propagate_weights
from stablewalk.weights import WeightedNorm, volume_exponent_fit, weighted_ball_count

H = get_group("heisenberg3")
basis = H.malcev_basis()

for alpha in (Fraction(1, 2), Fraction(1), Fraction(3, 2)):
    ws = build_weight_system([], [(["a", "b"], alpha)], H)
    eff = propagate_weights(ws, basis)
    rep = gamma(eff)
    print(f"alpha={alpha}: slot weights {[str(w) for w in eff.weights]}, exponent {rep.gamma}")
    for name, why in zip(basis.names, eff.provenance):
        print(f"    {name}: {why}")

ws = build_weight_system([], [(["a", "b"], 1)], H)
eff = propagate_weights(ws, basis)
R_list = [4, 8, 16, 32]
print("\nweighted ball counts:", [weighted_ball_count(R, ws, basis, eff) for R in R_list])
print("fitted exponent:", round(volume_exponent_fit(R_list, ws, basis, eff), 3))

# the central direction is cheap: c^m costs about sqrt(m)
norm = WeightedNorm(ws, basis, eff)
c = basis.basis[2]
for m in (1, 16, 256, 4096):
    print(f"  ||c^{m}|| <= {norm(c ** m):.1f}")

# a group that is not nilpotent
D = get_group("dihedralxZ")
ws = build_weight_system([], [(["u", "v", "z"], 1)], D)
eff = propagate_weights(ws, D.malcev_basis())
print("\nD_inf x Z: slot weights", [str(w) for w in eff.weights], "exponent", gamma(eff).gamma)
print("fitted:", round(volume_exponent_fit([16, 32, 64, 128, 256], ws, D.malcev_basis(), eff), 3))
