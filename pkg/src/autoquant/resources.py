"""Wall-time, electricity and monetary-cost accounting per pipeline phase."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .exceptions import MissingPowerModel, MissingPriceModel, NegativeDuration

# 0.57 kWh over 4.22 h of CPU time
DEFAULT_WATTS = 135.07


@dataclass
class ResourceLedger:
    """Phase entries ``(name, seconds, phase_class)`` plus power and price models.

    Parameters
    ----------
    power_model : dict or None
        Watts per phase class, e.g. ``{"cpu": 135.07}``.
    price_model : dict or None
        ``{"per_hour": 0.867, "currency": "$"}``.
    """

    power_model: dict | None = field(default_factory=lambda: {"cpu": DEFAULT_WATTS})
    price_model: dict | None = None
    phases: list = field(default_factory=list)

    def record(self, name, seconds, phase_class="cpu"):
        return record_phase(self, name, seconds, phase_class)

    @property
    def total_seconds(self):
        return float(sum(p["seconds"] for p in self.phases))

    @property
    def total_hours(self):
        return self.total_seconds / 3600.0

    def report(self, billed_hours=None):
        out = {
            "phases": [dict(p) for p in self.phases],
            "total_hours": self.total_hours,
            "kwh": energy_kwh(self) if self.power_model else None,
            "cost": monetary_cost(self, billed_hours) if self.price_model else None,
            "power_model": self.power_model,
            "price_model": self.price_model,
        }
        return out

    def to_json(self, path, billed_hours=None):
        with open(path, "w") as fh:
            json.dump(self.report(billed_hours), fh, indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        return cls(power_model=d.get("power_model"), price_model=d.get("price_model"), phases=list(d.get("phases", [])))


def record_phase(ledger, name, seconds, phase_class="cpu"):
    seconds = float(seconds)
    if seconds < 0:
        raise NegativeDuration(f"phase {name!r} has negative duration {seconds}")
    ledger.phases.append({"name": str(name), "seconds": seconds, "class": phase_class})
    return ledger


def energy_kwh(ledger):
    """Sum of ``seconds / 3600 * watts / 1000`` with watts looked up per phase class."""
    if not ledger.power_model:
        raise MissingPowerModel("ledger has no power model")
    total = 0.0
    for p in ledger.phases:
        try:
            watts = ledger.power_model[p.get("class", "cpu")]
        except KeyError:
            raise MissingPowerModel(f"no wattage for phase class {p.get('class')!r}") from None
        total += p["seconds"] / 3600.0 * watts / 1000.0
    return total


def monetary_cost(ledger, billed_hours=None):
    if not ledger.price_model or "per_hour" not in ledger.price_model:
        raise MissingPriceModel("ledger has no price model")
    hours = ledger.total_hours if billed_hours is None else float(billed_hours)
    return hours * float(ledger.price_model["per_hour"])
