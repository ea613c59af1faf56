"""Hidden-nonlocality scan: CHSH after rank-2 collapse of werner(d).

For each d the state werner(d) is single-time local (c = 1/d^2), yet
post-selecting both sides on a 2-dim subspace leaves a two-qubit state
whose optimal CHSH value is 2*sqrt(2) * d / (d + 2): the local bound 2 is
crossed from d = 5 on.
"""

import numpy as np

from nonloc import feasibility, states


def main() -> None:
    print(f"{'d':>2}  {'chsh':>12}  {'closed form':>12}  violation")
    for d in range(2, 9):
        rho = states.werner(d)
        if d == 2:
            value, _ = feasibility.chsh_maximize(rho)
            closed = 2.0 * np.sqrt(2.0) * 2.0 * float(states.lhv1_threshold(2))
        else:
            t = np.zeros((d, d), dtype=complex)
            t[0, 0] = t[1, 1] = 1.0
            value, _ = feasibility.chsh_maximize(rho, t, t)
            closed = 2.0 * np.sqrt(2.0) * d / (d + 2.0)
        flag = "YES" if value > 2.0 + 1e-6 else "no"
        print(f"{d:>2}  {value:>12.9f}  {closed:>12.9f}  {flag}")


if __name__ == "__main__":
    main()
