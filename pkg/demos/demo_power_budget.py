"""Energy budget of the duty-cycled monitor and what it buys in battery life.

Walks the task table, shows which tasks dominate the average draw, and
sweeps the inference stride to show why running the network less often
stops paying beyond a point: sensing, not inference, sets the floor.
"""

from scgvitals import power


def main():
    profile = power.wearable_profile()
    avg = power.average_power(profile)

    print("task table (energy per firing / period):")
    print(f"  {'task':<16} {'period s':>9} {'uJ':>9} {'avg mW':>9}")
    print(f"  {'idle floor':<16} {'-':>9} {'-':>9} {profile.idle_power_mw:9.4f}")
    for t in sorted(profile.tasks, key=lambda t: -t.energy_uj / t.period_s):
        print(f"  {t.name:<16} {t.period_s:9.0f} {t.energy_uj:9.1f} "
              f"{t.energy_uj / t.period_s / 1000.0:9.4f}")
    print(f"  {'total':<16} {'':>9} {'':>9} {avg:9.4f}")

    life = power.battery_lifetime(profile)
    print(f"\n{profile.battery_capacity_mah:.0f} mAh at "
          f"{profile.battery_voltage_v} V -> {life:.1f} h ({life / 24:.1f} days)")

    # --- stride sweep ---------------------------------------------------
    print("\ninference stride sweep:")
    for stride_min, life_h in power.lifetime_curve(profile, [2, 5, 10, 30, 60, 120]):
        p = power.with_nn_stride(profile, stride_min)
        print(f"  every {stride_min:5.0f} min: {power.average_power(p):.4f} mW, "
              f"{life_h:7.2f} h")
    print("(doubling the stride past 30 min changes lifetime by well "
          "under 1%: the always-on sensing floor dominates)")


if __name__ == "__main__":
    main()
