"""
📐 convexpde: Example Usage & Feature Walkthrough

This script walks through the main features of convexpde: constraint sets, invariance
checks, the constrained solver, expanding domains and the degree checker.

Run it from the repository root: python demo/example_usage.py
"""

import os
import sys
from pprint import pprint

import numpy as np

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from convexpde import GridDomain, OperatorCoefficients, SolverConfig, assemble, load_builtin, solve
from convexpde.constraints import Ellipsoid, Rectangle, TangentQuery
from convexpde.degree import box_projection, brouwer_degree_small, finite_phi, identity_minus
from convexpde.nonlinearity import compute_apriori_exponents, make_forcing
from convexpde.resolvent import ResolventHandle, verify_resolvent_invariance
from convexpde.runner import run_solve_rn

print("\n=== 🚀 Welcome to convexpde ===")
print("convexpde solves elliptic systems whose solutions must stay in a convex set K(x) at every point.")

print("\n=== 🧱 Step 1: Constraint Sets ===")
square = Rectangle([0.0, 0.0], [1.0, 1.0], 2)
print("Projection of (1.4, -0.2) onto [0,1]^2:", square.project([0.0], [1.4, -0.2]))
ellipse = Ellipsoid(np.diag([0.25, 1.0]), 2)
print("Projection of (4, 0) onto {u1^2/4 + u2^2 <= 1}:", ellipse.project([0.0], [4.0, 0.0]))
print("Is (-0.1, 0.2) tangent to [0,1]^2 at (1, 0.5)?",
      square.tangent_cone_contains(TangentQuery(x=[0.0], u=[1.0, 0.5], v=[-0.1, 0.2])))

print("\n=== 🔍 Step 2: Is [0,1] Invariant for the Laplacian? ===")
grid = GridDomain(1, 0.5, 63)
op = assemble(OperatorCoefficients.laplacian(1, 1), grid)
rh = ResolventHandle(op, 0.01)
good = verify_resolvent_invariance(rh, Rectangle([0.0], [1.0], 1), h_list=[0.1, 0.01])
bad = verify_resolvent_invariance(rh, Rectangle([0.5], [1.0], 1), h_list=[0.1, 0.01])
print("K = [0, 1]:  ", good.status)
print("K = [0.5, 1]:", bad.status, "- witness node", bad.witness().witness_node)
print("Zero Dirichlet data lies outside [0.5, 1], so the resolvent cannot preserve it.")

print("\n=== 🔁 Step 3: Constrained Solve ===")
report = solve(op, None, Rectangle([0.0], [1.0], 1), make_forcing("manufactured", 1, 1),
               SolverConfig(tol_res=1e-8))
print("termination:", report.termination.value)
print("residual:   ", report.residual)
for stage in report.stages:
    print(f"  t={stage.t:g} h={stage.h:.4g} iters={stage.iterations} residual={stage.residual:.2e} "
          f"certificate holds: {stage.certificate_holds}")

print("\n=== 🛑 Step 4: Refusal ===")
refused = solve(op, None, Rectangle([0.5], [1.0], 1), make_forcing("manufactured", 1, 1), SolverConfig())
print("termination:", refused.termination.value)
print("message:    ", refused.message)

print("\n=== 🌍 Step 5: Expanding Domains ===")
problem = load_builtin("decaying-1d")
rn = run_solve_rn(problem)
print("status:", rn.status)
pprint(rn.summary[:6])

print("\n=== 🧮 Step 6: Degree of I - φ_h ===")
phi = finite_phi(np.eye(2), lambda u: -u, box_projection([-1.0, -1.0], [1.0, 1.0]), 0.1)
print("deg(I - φ_h, [-2,2]^2, 0) =", brouwer_degree_small(identity_minus(phi), [(-2.0, 2.0)] * 2))

print("\n=== 🔢 Step 7: A Priori Exponents ===")
pprint(compute_apriori_exponents(2.0, 1.1, 3))

print("\n✅ Done. See `convexpde --help` for the command-line interface.")
