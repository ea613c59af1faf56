"""Print the flip-family parameter thresholds for d = 2..6.

Columns: normalization bound, entanglement threshold, single-time-local
threshold, collapse-separability threshold (d >= 3), and the collapsed
parameter c' at the single-time boundary c = 1/d^2.
"""

from fractions import Fraction

from nonloc import states


def main() -> None:
    header = (
        f"{'d':>2}  {'norm bound':>12}  {'entangled >':>12}  "
        f"{'LHV1 <=':>12}  {'collapse-sep <=':>16}  {'c_prime(1/d^2)':>14}"
    )
    print(header)
    print("-" * len(header))
    for d in range(2, 7):
        norm = states.normalization_bound(d)
        ent = states.entanglement_threshold(d)
        lhv1 = states.lhv1_threshold(d)
        if d >= 3:
            cs = states.collapse_separability_threshold(d)
            cp = states.collapsed_c_prime(d, Fraction(1, d * d))
            tail = f"{str(cs):>16}  {str(cp):>14}"
        else:
            tail = f"{'n/a':>16}  {'n/a':>14}"
        print(f"{d:>2}  {str(norm):>12}  {str(ent):>12}  {str(lhv1):>12}  {tail}")
    print()
    print("exact landing: c'(3, 1/15) =", states.collapsed_c_prime(3, Fraction(1, 15)),
          "= entanglement threshold at d' = 2")


if __name__ == "__main__":
    main()
