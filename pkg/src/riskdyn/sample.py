"""Bundled synthetic sample dataset.

The files in ``data/sample`` are simulated, not observed: 50 risks with the
survey's names and groups, a block-structured graph and 156 months of history
generated by ``synth_dataset(SynthConfig(names=RISK_NAMES))`` with seed 0.
Regenerate them with ``python -m riskdyn.sample OUTDIR``.
"""

from __future__ import annotations

import sys
from importlib import resources
from pathlib import Path

RISK_NAMES = (
    # economic
    "Chronic fiscal imbalances",
    "Chronic labour market imbalances",
    "Extreme volatility in energy and agriculture prices",
    "Hard landing of an emerging economy",
    "Major systemic financial failure",
    "Prolonged infrastructure neglect",
    "Recurring liquidity crises",
    "Severe income disparity",
    "Unforeseen negative consequences of regulation",
    "Unmanageable inflation or deflation",
    # environmental
    "Antibiotic-resistant bacteria",
    "Failure of climate change adaptation",
    "Irremediable pollution",
    "Land and waterway use mismanagement",
    "Mismanaged urbanization",
    "Persistent extreme weather",
    "Rising greenhouse gas emissions",
    "Species overexploitation",
    "Unprecedented geophysical destruction",
    "Vulnerability to geomagnetic storms",
    # geopolitical
    "Critical fragile states",
    "Diffusion of weapons of mass destruction",
    "Entrenched organized crime",
    "Failure of diplomatic conflict resolution",
    "Global governance failure",
    "Militarization of space",
    "Pervasive entrenched corruption",
    "Terrorism",
    "Unilateral resource nationalization",
    "Widespread illicit trade",
    # societal
    "Backlash against globalization",
    "Food shortage crises",
    "Ineffective illicit drug policies",
    "Mismanagement of population aging",
    "Rising rates of chronic disease",
    "Rising religious fanaticism",
    "Unmanaged migration",
    "Unsustainable population growth",
    "Vulnerability to pandemics",
    "Water supply crises",
    # technological
    "Critical systems failure",
    "Cyber attacks",
    "Failure of intellectual property regime",
    "Massive digital misinformation",
    "Massive incident of data fraud/theft",
    "Mineral resource supply vulnerability",
    "Proliferation of orbital debris",
    "Unforeseen consequences of climate change mitigation",
    "Unforeseen consequences of nanotechnology",
    "Unforeseen consequences of new life science technologies",
)

SAMPLE_FILES = ("risks.csv", "edges.csv", "history.csv", "params.json")


def sample_dir() -> Path:
    return Path(str(resources.files("riskdyn") / "data" / "sample"))


def sample_paths() -> dict:
    d = sample_dir()
    return {name.split(".")[0]: d / name for name in SAMPLE_FILES}


def write_sample(outdir):
    from .synth import SynthConfig, synth_dataset, write_dataset

    return write_dataset(synth_dataset(SynthConfig(names=RISK_NAMES, seed=0)), outdir)


if __name__ == "__main__":
    write_sample(sys.argv[1] if len(sys.argv) > 1 else sample_dir())
