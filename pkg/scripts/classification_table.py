"""Evidence table for the flagship states.

Reproduces the qualitative classification: singlet nonlocal at single
time, werner(5) nonlocal after one collapse, werner_gen(2, 0.2) entangled
yet locally modelable for all finite sequences, and the d = 3 window
below the collapse-separability threshold left open.
"""

from fractions import Fraction

from nonloc import feasibility, states


CASES = [
    ("singlet", states.singlet()),
    ("werner(2)  c=1/4", states.werner(2)),
    ("werner_gen(2, 0.2)", states.werner_gen(2, 0.2)),
    ("werner_gen(2, 0.35)", states.werner_gen(2, 0.35)),
    ("werner(5)  c=1/25", states.werner(5)),
    ("werner_gen(3, 0.05)", states.werner_gen(3, 0.05)),
    ("werner_gen(3, 1/15)", states.werner_gen(3, Fraction(1, 15))),
    ("maximally mixed 2x2", states.maximally_mixed(2, 2)),
]


def main() -> None:
    print(f"{'state':<22}  {'entangled':>9}  {'N-evidence':>10}  tag")
    for name, rho in CASES:
        rec = feasibility.classify_evidence(rho)
        print(f"{name:<22}  {str(rec.entangled):>9}  {rec.n_index:>10}  {rec.tag}")
        for note in rec.notes:
            print(f"{'':<24}- {note}")


if __name__ == "__main__":
    main()
