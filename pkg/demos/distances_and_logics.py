"""Simulation distance, WLWB satisfiability and bisimulation on small models.

Run with ``python demos/distances_and_logics.py``.
"""

from smpkit.dist import Exponential, Uniform, least_acceleration
from smpkit.models import self_loop_pair
from smpkit.simdist import raw_pair_acceleration, simulation_distance
from smpkit.wlwb import (
    EXAMPLE_SAT_FORMULA,
    bisim_figure,
    gen_weighted_bisim,
    parse_wlwb,
    satisfiable_wlwb,
    serialize_wts,
    weighted_bisim,
)


def main():
    M = self_loop_pair()
    print("Self-loops with Exp(4) at s1 and Exp(2) at s2")
    print(f"  d(s1, s2) = {simulation_distance(M, 's1', 's2')}")
    print(f"  d(s2, s1) = {simulation_distance(M, 's2', 's1')} (raw constant {raw_pair_acceleration(M, 's2', 's1')})")

    print("Least accelerations")
    for F, G in ((Uniform(0, 3), Exponential(0.5)), (Uniform(1, 4), Uniform(2, 3)), (Exponential(1), Uniform(1, 2))):
        print(f"  c({F.to_literal()}, {G.to_literal()}) = {least_acceleration(F, G)}")

    res = satisfiable_wlwb(parse_wlwb(EXAMPLE_SAT_FORMULA))
    print(f"WLWB formula {EXAMPLE_SAT_FORMULA}: sat={res.sat}, model rooted at {res.state}:")
    print("  " + serialize_wts(res.model).strip().replace("\n", "\n  "))

    F = bisim_figure()
    print(f"Weights {{1,2,3}} against {{1,3}}: generalised {gen_weighted_bisim(F, 's', 't')}, "
          f"weighted {weighted_bisim(F, 's', 't')}")


if __name__ == "__main__":
    main()
