"""Battery life and solar feasibility arithmetic.

A panel of area A (m^2) and efficiency r under daily irradiation H
(Wh/m^2/day, plane normal to the sun) yields E = A * r * H Wh per day in
the ideal case; a load of P watts is sustainable in a month when
E / 24 >= P.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from importlib import resources

from .errors import EmptySeries, ZeroDraw

MONTHS = ("Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec")


@dataclass(frozen=True)
class PowerProfile:
    device: str
    active_w: float
    standby_w: float = 0.0

    def __post_init__(self):
        if self.active_w < 0 or self.standby_w < 0:
            raise ValueError("power draw must be non-negative")
        if self.active_w < self.standby_w:
            raise ValueError("active draw must be at least the standby draw")


# measured draws of the two bin builds
JETSON_NANO = PowerProfile("jetson_nano_mobilenet_v3_large", active_w=4.698, standby_w=3.97)
K210 = PowerProfile("k210_mobilenet_v1", active_w=0.89, standby_w=0.0)


@dataclass(frozen=True)
class SolarRig:
    area_m2: float
    efficiency: float
    battery_wh: float = 0.0

    def __post_init__(self):
        if not self.area_m2 > 0:
            raise ValueError("panel area must be positive")
        if not 0 <= self.efficiency <= 1:
            raise ValueError("efficiency must be in [0, 1]")
        if self.battery_wh < 0:
            raise ValueError("battery capacity must be non-negative")

    @classmethod
    def from_cm2(cls, area_cm2, efficiency, battery_wh=0.0):
        return cls(area_cm2 / 1e4, efficiency, battery_wh)


@dataclass(frozen=True)
class IrradiationSeries:
    months: tuple[str, ...]
    h: tuple[float, ...]  # Wh/m^2/day

    def __post_init__(self):
        object.__setattr__(self, "months", tuple(self.months))
        object.__setattr__(self, "h", tuple(float(v) for v in self.h))
        if len(self.months) != len(self.h):
            raise ValueError("months and values differ in length")
        if any(v < 0 for v in self.h):
            raise ValueError("irradiation must be non-negative")

    def __len__(self):
        return len(self.h)

    @property
    def is_annual(self):
        return len(self.h) == 12

    def scaled(self, k) -> "IrradiationSeries":
        return IrradiationSeries(self.months, [k * v for v in self.h])

    @classmethod
    def read_csv(cls, path_or_file) -> "IrradiationSeries":
        if hasattr(path_or_file, "read"):
            text = path_or_file.read()
        else:
            with open(path_or_file) as fh:
                text = fh.read()
        return cls.parse(text)

    @classmethod
    def parse(cls, text) -> "IrradiationSeries":
        lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
        months, h = [], []
        for row in csv.DictReader(lines):
            months.append(row["month"].strip())
            h.append(float(row["H"]))
        return cls(months, h)


def synthetic_series() -> IrradiationSeries:
    """The bundled synthetic annual series (November is the worst month)."""
    text = resources.files("edgebin.data").joinpath("irradiation_synthetic.csv").read_text()
    return IrradiationSeries.parse(text)


def battery_life_hours(capacity_wh, draw_w, efficiency=1.0) -> float:
    """Hours a battery lasts at a constant draw; ``efficiency`` scales the
    usable capacity (1.0 is the ideal battery)."""
    if draw_w <= 0:
        raise ZeroDraw(f"draw must be positive, got {draw_w} W")
    if not 0 < efficiency <= 1:
        raise ValueError("efficiency must be in (0, 1]")
    return capacity_wh * efficiency / draw_w


def daily_energy_wh(rig: SolarRig, h) -> float:
    if h < 0:
        raise ValueError("irradiation must be non-negative")
    return rig.area_m2 * rig.efficiency * h


@dataclass(frozen=True)
class MonthReport:
    month: str
    h: float
    e_day_wh: float
    sustainable_w: float
    feasible: bool


@dataclass(frozen=True)
class FeasibilityReport:
    months: tuple[MonthReport, ...]
    worst: MonthReport
    load_w: float
    feasible: bool
    battery_hours: float | None

    def to_json(self):
        def month(m):
            return {"month": m.month, "H": m.h, "E_day_wh": m.e_day_wh,
                    "sustainable_w": m.sustainable_w, "feasible": m.feasible}

        return {
            "load_w": self.load_w,
            "feasible": self.feasible,
            "verdict": "feasible" if self.feasible else "infeasible",
            "worst_month": month(self.worst),
            "battery_hours": self.battery_hours,
            "months": [month(m) for m in self.months],
        }


def feasibility(rig: SolarRig, series: IrradiationSeries, profile: PowerProfile) -> FeasibilityReport:
    if len(series) == 0:
        raise EmptySeries("irradiation series is empty")
    reports = []
    for m, h in zip(series.months, series.h):
        e = daily_energy_wh(rig, h)
        sustainable = e / 24.0
        reports.append(MonthReport(m, h, e, sustainable, sustainable >= profile.active_w))
    # first minimum wins on ties, so the verdict does not depend on order
    worst = min(reports, key=lambda r: r.e_day_wh)
    battery = (battery_life_hours(rig.battery_wh, profile.active_w)
               if rig.battery_wh > 0 and profile.active_w > 0 else None)
    return FeasibilityReport(tuple(reports), worst, profile.active_w, worst.feasible, battery)


def emit_energy_curve(rig: SolarRig, series: IrradiationSeries, fh=None) -> str:
    """CSV ``month,H,E_day_wh`` (one row per month); returns the text and
    also writes it to ``fh`` if given."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["month", "H", "E_day_wh"])
    for m, h in zip(series.months, series.h):
        w.writerow([m, repr(h), repr(daily_energy_wh(rig, h))])
    text = buf.getvalue()
    if fh is not None:
        fh.write(text)
    return text
