"""Hard-scenario mining by collisions per metre under a pretrained policy."""
from __future__ import annotations

import math
from dataclasses import dataclass

from .simulation import SimConfig, TrajectoryLog, run_closed_loop
from .kinematics import KinematicParams


@dataclass
class ScoredScenario:
    scenario: object
    difficulty: float
    n_events: int = 0
    distance: float = 0.0
    log: TrajectoryLog = None

    @property
    def scenario_id(self):
        return self.scenario.scenario_id if self.scenario is not None else -1


def difficulty_score(log: TrajectoryLog) -> float:
    """Collision onsets divided by total distance travelled.

    Zero distance scores 0 without events and ``inf`` with events.
    """
    n = len(log.events)
    if n == 0:
        return 0.0
    if log.distance_traveled <= 0:
        return math.inf
    return n / log.distance_traveled


def rank(scored):
    """Sort hardest first; ties keep scenario id order."""
    return sorted(scored, key=lambda s: (-s.difficulty, s.scenario_id))


def mine(policy, scenario_pool, config: SimConfig = SimConfig(), params: KinematicParams = KinematicParams(),
         keep_logs=False):
    """Run ``policy`` on every scenario and return them ranked by difficulty."""
    scored = []
    for sc in scenario_pool:
        log = run_closed_loop(policy, sc, config, params)
        scored.append(ScoredScenario(sc, difficulty_score(log), len(log.events), log.distance_traveled,
                                     log if keep_logs else None))
    return rank(scored)


def selection_size(n, fraction):
    if not 0 < fraction <= 1:
        raise ValueError("fraction must lie in (0, 1]")
    # round first so 0.3 * 10 gives 3, not 4
    return min(n, math.ceil(round(fraction * n, 9)))


def select_fraction(ranked, fraction):
    """Top ``ceil(fraction * len(ranked))`` entries of a ranked list."""
    return list(ranked[:selection_size(len(ranked), fraction)])


def ranking_manifest(ranked, pool_path=None):
    return dict(format="mvnav-ranking", version=1, pool=pool_path,
                entries=[dict(scenario_id=int(s.scenario_id), difficulty=float(s.difficulty),
                              events=int(s.n_events), distance=float(s.distance)) for s in ranked])
