"""Rank every NoiseConventions combination by distance to the reference value.

For each combination, all measurement-outcome branches of the noisy Bell-pair
run are enumerated; the table lists the closest (branch, conventions) pairs.
"""

import argparse
import itertools as it

from bell_pair_experiment import REFERENCE, setup_hardware, setup_sim

from dqcsim import NoiseConventions, enumerate_branches


def search():
    rows = []
    for tq, ro, mem, at, ct, nc in it.product(
        ("joint", "per_qubit"), ("flip", "depolarize"), (False, True),
        ("start", "end"), ("zero", "gate"), (True, False),
    ):
        if not mem and at == "end":
            continue  # identical to "start" without memory noise during gates
        conv = NoiseConventions(tq, ro, mem, at, ct, nc)
        sc = setup_sim(setup_hardware(0.9, 1e-3, 2e-5, 3e-3, 0.055, conventions=conv))
        for b in enumerate_branches(sc):
            rows.append((abs(b.fidelity - REFERENCE), b.fidelity, b.outcomes, conv))
    rows.sort(key=lambda r: r[0])
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--top", type=int, default=10)
    args = ap.parse_args()
    for gap, f, outcomes, c in search()[: args.top]:
        print(
            f"{gap:.3e}  {f!r}  branch={outcomes}  2q={c.two_qubit_depolarizing} "
            f"readout={c.readout_error} mem_in_gates={c.memory_noise_during_gates} "
            f"at={c.gate_applied_at} corr_time={c.correction_time} noisy_corr={c.noisy_corrections}"
        )


if __name__ == "__main__":
    main()
