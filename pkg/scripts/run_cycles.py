"""Limit cycles of the Van der Pol game across mu, plus the rotation field."""
import argparse

from gradplay.cycles import detect_limit_cycle
from gradplay.game import make_quadratic_zero_sum, make_van_der_pol_game


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dt", type=float, default=1e-2)
    args = ap.parse_args()
    for mu in (0.5, 1.0, 2.0, 4.0):
        r = detect_limit_cycle(make_van_der_pol_game(mu), (0.1, 0.0), dt=args.dt, t_max=400)
        if r is None:
            print(f"mu={mu}: no cycle found")
            continue
        mods = [abs(m) for m in r.nontrivial_multipliers]
        print(f"mu={mu}: T={r.period_estimate:.4f} {r.classification} |nontrivial|={mods}")
    r = detect_limit_cycle(make_quadratic_zero_sum(0, 1, 0), (1.0, 0.0), dt=args.dt)
    print(f"rotation: T={r.period_estimate:.6f} {r.classification}")


if __name__ == "__main__":
    main()
