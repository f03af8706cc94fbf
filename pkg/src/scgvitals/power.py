"""Task-based average-power and battery-lifetime estimation.

The device budget is an always-on idle floor plus periodic tasks, each
costing a fixed energy per execution.  Average power is therefore
idle + sum(energy_i / period_i) and battery lifetime follows from the
capacity-voltage product.  The wearable preset carries the measured
task set of the reference firmware; the inference task's period is the
configurable detector stride, which is what the lifetime-vs-stride
curve sweeps.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ParameterError, ValidationError

NN_TASK = "nn"
DEFAULT_CAPACITY_MAH = 100.0
DEFAULT_VOLTAGE_V = 3.7

# Measured sleep-state component draws (mW); accel active state for
# duty-cycle decompositions.
SLEEP_COMPONENTS_MW = {"radio_mcu": 0.088, "pmic": 0.058, "accelerometer": 0.006}
ACCEL_ACTIVE_MW = 0.370


@dataclass(frozen=True)
class TaskSpec:
    """One periodic task: fires every period_s, costs energy_uj per run."""

    name: str
    period_s: float
    energy_uj: float

    def __post_init__(self):
        if not self.name:
            raise ValidationError("name", "must be non-empty")
        if not self.period_s > 0:
            raise ValidationError("period_s", f"{self.period_s} must be > 0")
        if self.energy_uj < 0:
            raise ValidationError("energy_uj", f"{self.energy_uj} must be >= 0")

    @classmethod
    def from_power(
        cls, name: str, period_s: float, power_mw: float, duration_ms: float
    ) -> "TaskSpec":
        """Active-power x duration form; mW x ms is numerically uJ."""
        if power_mw < 0 or duration_ms < 0:
            raise ValidationError("power", "power and duration must be >= 0")
        return cls(name, period_s, power_mw * duration_ms)

    @property
    def average_mw(self) -> float:
        return self.energy_uj / (1000.0 * self.period_s)


@dataclass(frozen=True)
class PowerProfile:
    idle_power_mw: float
    tasks: tuple
    battery_capacity_mah: float = DEFAULT_CAPACITY_MAH
    battery_voltage_v: float = DEFAULT_VOLTAGE_V

    def __post_init__(self):
        object.__setattr__(self, "tasks", tuple(self.tasks))
        if self.idle_power_mw < 0:
            raise ValidationError("idle_power_mw", "must be >= 0")
        if not self.battery_capacity_mah > 0:
            raise ValidationError("battery_capacity_mah", "must be > 0")
        if not self.battery_voltage_v > 0:
            raise ValidationError("battery_voltage_v", "must be > 0")
        names = [t.name for t in self.tasks]
        if len(set(names)) != len(names):
            raise ValidationError("tasks", "task names must be unique")


def average_power(p: PowerProfile) -> float:
    """Average draw in mW: idle floor plus per-task energy over period."""
    return p.idle_power_mw + sum(t.average_mw for t in p.tasks)


def battery_lifetime(p: PowerProfile) -> float:
    """Hours until the battery's mWh budget is spent at the average draw."""
    avg = average_power(p)
    if avg <= 0:
        raise ParameterError(f"average power {avg} mW must be > 0")
    return p.battery_capacity_mah * p.battery_voltage_v / avg


def with_nn_stride(p: PowerProfile, stride_min: float) -> PowerProfile:
    """Profile with the inference task re-periodized to the given stride."""
    if not stride_min > 0:
        raise ValidationError("stride_min", f"{stride_min} must be > 0")
    if all(t.name != NN_TASK for t in p.tasks):
        raise ValidationError("tasks", f"profile has no {NN_TASK!r} task")
    tasks = tuple(
        replace(t, period_s=stride_min * 60.0) if t.name == NN_TASK else t
        for t in p.tasks
    )
    return replace(p, tasks=tasks)


def lifetime_curve(p: PowerProfile, strides_min) -> list[tuple[float, float]]:
    """(stride_min, lifetime_h) per stride; non-decreasing in stride."""
    strides = list(strides_min)
    if not strides or any(s <= 0 for s in strides):
        raise ValidationError("strides_min", "need at least one positive stride")
    return [(float(s), battery_lifetime(with_nn_stride(p, s))) for s in strides]


def wearable_profile(stride_min: float = 30.0) -> PowerProfile:
    """Measured task budget of the reference firmware.

    Sensor FIFO drain and heartbeat DSP every 2 s, respiration DSP every
    30 s, body-temperature read and one-beacon transmit every 2 min,
    radio advertising every 1 s, inference every stride.
    """
    tasks = (
        TaskSpec("fifo", 2.0, 144.6),
        TaskSpec("body_temp", 120.0, 108.0),
        TaskSpec("dsp_hr", 2.0, 18.8),
        TaskSpec("dsp_rr", 30.0, 18.8),
        TaskSpec(NN_TASK, stride_min * 60.0, 1290.0),
        TaskSpec("ble_adv", 1.0, 14.0),
        TaskSpec("ble_tx", 120.0, 20.9),
    )
    return PowerProfile(idle_power_mw=0.77, tasks=tasks)


def sleep_power_mw() -> float:
    """Sum of the component sleep-state draws."""
    return sum(SLEEP_COMPONENTS_MW.values())


# ------------------------------------------------------------------ file I/O


def write_profile(path: str, p: PowerProfile) -> None:
    lines = [
        f"idle_power_mw = {p.idle_power_mw!r}",
        f"battery_capacity_mah = {p.battery_capacity_mah!r}",
        f"battery_voltage_v = {p.battery_voltage_v!r}",
    ]
    for t in p.tasks:
        lines += [
            "",
            "[[task]]",
            f'name = "{t.name}"',
            f"period_s = {t.period_s!r}",
            f"energy_uj = {t.energy_uj!r}",
        ]
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def read_profile(path: str) -> PowerProfile:
    """Parse a profile file; schema errors surface as validation errors."""
    with open(path, "rb") as f:
        try:
            doc = tomllib.load(f)
        except tomllib.TOMLDecodeError as e:
            raise ValidationError("profile", f"parse error: {e}") from e
    known = {"idle_power_mw", "battery_capacity_mah", "battery_voltage_v", "task"}
    unknown = set(doc) - known
    if unknown:
        raise ValidationError("profile", f"unknown keys {sorted(unknown)}")
    if "idle_power_mw" not in doc:
        raise ValidationError("profile", "missing idle_power_mw")
    tasks = []
    for i, entry in enumerate(doc.get("task", [])):
        if set(entry) != {"name", "period_s", "energy_uj"}:
            raise ValidationError("profile", f"task {i}: need name/period_s/energy_uj")
        tasks.append(
            TaskSpec(str(entry["name"]), float(entry["period_s"]), float(entry["energy_uj"]))
        )
    return PowerProfile(
        idle_power_mw=float(doc["idle_power_mw"]),
        tasks=tuple(tasks),
        battery_capacity_mah=float(doc.get("battery_capacity_mah", DEFAULT_CAPACITY_MAH)),
        battery_voltage_v=float(doc.get("battery_voltage_v", DEFAULT_VOLTAGE_V)),
    )
