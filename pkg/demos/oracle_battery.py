"""Run the discretized-MDP oracle battery and print the result table.

The battery checks the operator-level claims (contraction, monotonicity,
smoothing-bias band, fixed-point stationarity, complementary slackness)
against an exact finite-grid solver that shares no code with the
continuous-action model.

Run:  python3 demos/oracle_battery.py
"""

from quasiopt.grid import oracle_check


def main():
    rows = oracle_check(seed=0)
    width = max(len(r["name"]) for r in rows)
    for r in rows:
        status = "pass" if r["pass"] else "FAIL"
        print(f"{r['name']:<{width}}  worst {r['worst']:.3e}  {status}")
    n_pass = sum(r["pass"] for r in rows)
    print(f"\n{n_pass}/{len(rows)} checks pass")


if __name__ == "__main__":
    main()
