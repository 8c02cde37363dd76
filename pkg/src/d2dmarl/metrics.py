"""Per-slot metric accumulation shared by every allocation algorithm."""

from __future__ import annotations

import numpy as np

METRIC_FIELDS = (
    "slots",
    "cue_outage_prob",
    "d2d_outage_prob",
    "sum_d2d_rate",
    "sum_cue_rate",
    "mean_total_reward",
)


class MetricsAccumulator:
    def __init__(self):
        self.slots = 0
        self.cue_link_slots = 0
        self.d2d_link_slots = 0
        self.cue_outages = 0
        self.d2d_outages = 0
        self.d2d_rate = 0.0
        self.cue_rate = 0.0
        self.reward = 0.0

    def add(self, outcome) -> None:
        self.slots += 1
        self.cue_link_slots += len(outcome.cue_sinrs)
        self.d2d_link_slots += len(outcome.d2d_sinrs)
        self.cue_outages += int(np.sum(outcome.cue_outages))
        self.d2d_outages += int(np.sum(outcome.d2d_outages))
        self.d2d_rate += float(np.sum(outcome.d2d_rates))
        self.cue_rate += float(np.sum(outcome.cue_rates))
        self.reward += float(np.sum(outcome.rewards))

    def result(self) -> dict:
        if self.slots == 0:
            raise ValueError("no slots recorded")
        return {
            "slots": self.slots,
            "cue_outage_prob": self.cue_outages / self.cue_link_slots,
            "d2d_outage_prob": self.d2d_outages / self.d2d_link_slots,
            "sum_d2d_rate": self.d2d_rate / self.slots,
            "sum_cue_rate": self.cue_rate / self.slots,
            "mean_total_reward": self.reward / self.slots,
        }
