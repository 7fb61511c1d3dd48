"""Default synthetic evaluation suite (empty rooms and rooms with one breathing
occupant) and the dev-tune / test-score comparison protocol run on it."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .cfar import CfarConfig
from .evaluation import (EMPTY, PERSON, classification_metrics, default_k_grid, mean_db,
                         sweep_k, tune_k_macro_f1)
from .pipeline import frame_records, named_pipeline, process_cube, sweep_session
from .sim import AdcCube, RadarConfig, Scene, Target, synthesize_scene


@dataclass(frozen=True)
class SuiteParams:
    n_empty: int = 8
    n_person: int = 8
    frame_count: int = 200
    seed: int = 2024
    noise_std: float = 1.0
    person_reflectivity: tuple[float, float] = (0.15, 0.6)
    clutter_reflectivity: float = 0.5
    clutter_count: int = 4
    range_span: tuple[float, float] = (1.5, 6.0)
    azimuth_span_deg: float = 40.0
    breathing_amplitude: tuple[float, float] = (0.003, 0.006)
    breathing_rate: tuple[float, float] = (0.2, 0.4)

    def development(self, n_empty: int = 4, n_person: int = 4, seed: int = 7) -> "SuiteParams":
        """Smaller, disjointly seeded suite used only for tuning k."""
        return replace(self, n_empty=n_empty, n_person=n_person, seed=seed)


@dataclass(frozen=True)
class SessionSpec:
    session_id: str
    label: str
    scene: Scene


def _polar(r: float, az_deg: float) -> tuple[float, float]:
    a = np.deg2rad(az_deg)
    return (float(r * np.sin(a)), float(r * np.cos(a)))


def _room(rng: np.random.Generator, p: SuiteParams) -> list[Target]:
    # Furniture and walls: fixed, non-breathing scatterers.
    return [Target(_polar(rng.uniform(1.0, 8.5), rng.uniform(-55, 55)), p.clutter_reflectivity)
            for _ in range(p.clutter_count)]


def session_scene(label: str, index: int, p: SuiteParams) -> Scene:
    code = 0 if label == EMPTY else 1
    rng = np.random.default_rng(np.random.SeedSequence(p.seed, spawn_key=(code, index)))
    clutter = _room(rng, p)
    targets = []
    if label == PERSON:
        targets.append(Target(
            _polar(rng.uniform(*p.range_span), rng.uniform(-p.azimuth_span_deg, p.azimuth_span_deg)),
            reflectivity=float(np.exp(rng.uniform(*np.log(p.person_reflectivity)))),
            breathing_amplitude=rng.uniform(*p.breathing_amplitude),
            breathing_rate=rng.uniform(*p.breathing_rate),
            breathing_phase=rng.uniform(0, 2 * np.pi),
        ))
    noise_seed = int(rng.integers(0, 2**63 - 1))
    return Scene(targets, clutter, p.noise_std, p.frame_count, noise_seed)


def default_suite(p: SuiteParams = SuiteParams()) -> list[SessionSpec]:
    out = [SessionSpec(f"empty_{i:02d}", EMPTY, session_scene(EMPTY, i, p)) for i in range(p.n_empty)]
    out += [SessionSpec(f"person_{i:02d}", PERSON, session_scene(PERSON, i, p)) for i in range(p.n_person)]
    return out


# ------------------------------------------------------------ comparison run

@dataclass
class PipelineOutcome:
    """Everything the direction checks need for one pipeline."""

    name: str
    k_dev: float
    roc: object
    records: list
    mean_snr_db: float
    snr_excluded: int
    metrics: dict
    maps: list = field(default_factory=list, repr=False)
    sweeps: list = field(default_factory=list, repr=False)


def simulate_suite(specs: Sequence[SessionSpec], config: RadarConfig,
                   workers: Optional[int] = None) -> list[AdcCube]:
    return [synthesize_scene(s.scene, config, workers) for s in specs]


def evaluate_pipeline(name: str, dev: Sequence[tuple[SessionSpec, AdcCube]],
                      test: Sequence[tuple[SessionSpec, AdcCube]], cfar: CfarConfig = CfarConfig(),
                      k_grid: Optional[np.ndarray] = None,
                      far_targets: Sequence[float] = (0.01, 0.05)) -> PipelineOutcome:
    """Tune k on ``dev`` by macro-F1, then sweep and score ``test`` at that k."""
    k_grid = default_k_grid() if k_grid is None else np.asarray(k_grid, dtype=float)
    pipe = named_pipeline(name)
    dev_sweeps = [sweep_session(process_cube(c, pipe), s.session_id, s.label, cfar, k_grid)
                  for s, c in dev]
    k_dev = tune_k_macro_f1(dev_sweeps, k_grid)
    maps = [process_cube(c, pipe) for _, c in test]
    sweeps = [sweep_session(m, s.session_id, s.label, cfar, k_grid) for (s, _), m in zip(test, maps)]
    roc = sweep_k(sweeps, k_grid, far_targets)
    records = []
    for (s, _), m in zip(test, maps):
        records += frame_records(m, s.session_id, s.label, cfar, k_dev)
    snr, excluded = mean_db([r.snr_db for r in records if r.ground_truth == PERSON])
    return PipelineOutcome(name, k_dev, roc, records, snr, excluded, classification_metrics(records),
                           maps, sweeps)
