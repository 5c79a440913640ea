"""Seeded random scenario documents for property tests and the acceptance suite."""
from __future__ import annotations

import random

from .link import DropMode


def random_scenario_doc(seed: int, *, max_participants: int = 5, max_days: int = 2, max_outages: int = 8,
                        sample_rate_hz: float = 32.0, tick_s: float = 60.0) -> dict:
    """1..max_participants phones over 1..max_days days with 0..max_outages outages.

    Outages are disjoint, lie inside the simulated days and cycle through all
    three drop modes starting from a seeded offset.
    """
    rng = random.Random(f"scenario:{seed}")
    n = rng.randint(1, max_participants)
    days = rng.randint(1, max_days)
    k = rng.randint(0, max_outages)
    span = days * 86400.0
    cuts = sorted(rng.uniform(0, span) for _ in range(2 * k))
    modes = [m.value for m in DropMode]
    first = rng.randrange(len(modes))
    outages = []
    for i in range(k):
        start, end = cuts[2 * i], cuts[2 * i + 1]
        if end - start < 1.0:
            continue
        outages.append({"start": round(start, 3), "end": round(end, 3), "mode": modes[(first + i) % len(modes)]})
    return {
        "name": f"random-{seed}",
        "seed": seed,
        "days": days,
        "participants": [
            {"participant_id": f"motionpi{seed % 1000:03d}{i:02d}", "phone_id": f"phone-{seed}-{i}",
             "rng_seed": rng.randrange(2**31), "profile": rng.choice(["mixed", "mixed", "sedentary", "walking"])}
            for i in range(n)
        ],
        "network": {"outages": outages, "latency_s": round(rng.uniform(0.0, 0.5), 3)},
        "behavior": {"p_complete": 0.6, "p_decline": 0.2, "delay_mean_s": rng.choice([60, 300, 900])},
        "sim": {"sample_rate_hz": sample_rate_hz, "tick_s": tick_s},
    }
