#!/usr/bin/env python3
"""Peak reduction with and without a spot price on two constructed fleets.

The plateau fleet has a flat 08-21 load with a spot price that peaks only in
the afternoon; time-of-use reductions follow the spot hump and stop
shaving the plateau.  The off-peak fleet has personal monthly peaks away
from the system peak, so a demand charge alone leaves the system peak
untouched while the spot price moves reductions onto it.
"""

from __future__ import annotations

import argparse
import sys

from tariffsim.model_core import FlexibilityParams
from tariffsim.scenarios import off_peak_demand_fleet, plateau_fleet
from tariffsim.system_cases import CaseSpec, run_case, solve_sor, with_peak_days
from tariffsim.tariffs import DemandCharge, DynamicToU, StaticToU


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--consumers", type=int, default=50)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--jobs", type=int, default=1)
    args = parser.parse_args(argv)

    rows = []
    fleet, spot, idx = plateau_fleet(args.consumers, seed=args.seed)
    designs = [StaticToU(), with_peak_days(DynamicToU(), fleet, idx, idx.day_count)]
    sor = solve_sor(fleet, FlexibilityParams(), idx).reduction
    for tariff in designs:
        gt = run_case(CaseSpec("GT", tariff), fleet, idx, jobs=args.jobs).reduction
        gt_sp = run_case(CaseSpec("GT_SP", tariff, spot), fleet, idx, jobs=args.jobs).reduction
        rows.append(("plateau", tariff.name, gt, gt_sp, sor))

    fleet, spot, idx = off_peak_demand_fleet(args.consumers, seed=args.seed)
    sor = solve_sor(fleet, FlexibilityParams(), idx).reduction
    gt = run_case(CaseSpec("GT", DemandCharge()), fleet, idx, jobs=args.jobs).reduction
    gt_sp = run_case(CaseSpec("GT_SP", DemandCharge(), spot), fleet, idx, jobs=args.jobs).reduction
    rows.append(("off-peak", "demand_charge", gt, gt_sp, sor))

    print(f"{'fleet':<10} {'tariff':<15} {'GT %':>8} {'GT+SP %':>8} {'SOR %':>8}")
    for fleet_name, tariff, a, b, c in rows:
        print(f"{fleet_name:<10} {tariff:<15} {100 * a:8.3f} {100 * b:8.3f} {100 * c:8.3f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
