"""Seeded toy beats: four bump/sine templates plus jitter and noise.

Used to exercise the whole pipeline without the MIT-BIH database. Classes
are separable by template shape.
"""

from __future__ import annotations

import numpy as np

from .data import BEAT_LENGTH, BEFORE_PEAK, LABELS, Beat, normalize_beat

# (centre offset from the R-peak, width, amplitude) per Gaussian bump
TEMPLATES = {
    "N": [(-45, 8, 0.15), (0, 4, 1.0), (-8, 3, -0.15), (8, 3, -0.2), (60, 16, 0.3)],
    "S": [(-25, 5, -0.12), (0, 4, 1.0), (8, 3, -0.25), (45, 12, 0.35)],
    "V": [(0, 14, 1.0), (22, 10, -0.5), (70, 20, -0.35)],
    "F": [(-45, 8, 0.1), (0, 8, 1.0), (14, 6, -0.45), (65, 18, 0.15)],
}
SINE = {"N": (0.03, 1.0), "S": (0.03, 1.5), "V": (0.06, 0.7), "F": (0.04, 2.0)}


def template(label: str, shift: float = 0.0, scale: float = 1.0, phase: float = 0.0) -> np.ndarray:
    t = np.arange(BEAT_LENGTH) - BEFORE_PEAK - shift
    amp_sine, cycles = SINE[label]
    wave = amp_sine * np.sin(2 * np.pi * cycles * t / BEAT_LENGTH + phase)
    for centre, width, amp in TEMPLATES[label]:
        wave = wave + scale * amp * np.exp(-0.5 * ((t - centre) / width) ** 2)
    return wave


def toy_beats(n: int = 2000, seed: int = 0, noise: float = 0.01) -> list[Beat]:
    """``n`` normalized beats, classes drawn round-robin, record ids ``toy<k>``."""
    rng = np.random.default_rng(seed)
    beats = []
    for i in range(n):
        label = LABELS[i % len(LABELS)]
        wave = template(label, rng.uniform(-3, 3), rng.uniform(0.85, 1.15), rng.uniform(0, 2 * np.pi))
        wave = wave + rng.normal(0.0, noise, BEAT_LENGTH)
        beats.append(Beat(normalize_beat(wave), label, f"toy{i % 20}", BEFORE_PEAK))
    return beats
