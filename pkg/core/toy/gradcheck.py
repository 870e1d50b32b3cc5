"""
Finite-difference check of the toy detector's hand-written gradients.
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from config.config import GRADCHECK_COORDS, GRADCHECK_FLOOR, GRADCHECK_STEP, GRADCHECK_TOLERANCE
from core.losses import LossConfig
from core.toy.model import ToyModel
from core.toy.scenes import SyntheticScene
from core.toy.trainer import build_targets, loss_and_grads

logger = logging.getLogger('polyplab')


def relative_error(analytic: float, numeric: float, floor: float = GRADCHECK_FLOOR) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


@dataclass(frozen=True)
class GradCheckResult:
    max_rel_error: float
    worst: tuple              # (block, array, flat index)
    per_block: dict           # block -> max relative error
    coordinates: int
    tolerance: float = GRADCHECK_TOLERANCE
    # gradients smaller than this are compared absolutely
    floor: float = GRADCHECK_FLOOR

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def _sample(model: ToyModel, coords: int, rng: np.random.Generator) -> list[tuple[str, str, int]]:
    """Coordinates spread over every parameter array in proportion to its size (at least 8 each)"""
    arrays = [(b, n, v.size) for b, block in model.params.items() for n, v in block.items()]
    total = sum(size for _, _, size in arrays)
    picked = []
    for block, name, size in arrays:
        k = min(size, max(8, math.ceil(coords * size / total)))
        for i in sorted(rng.choice(size, size=k, replace=False)):
            picked.append((block, name, int(i)))
    return picked


def grad_check(model: ToyModel, scene: SyntheticScene, cfg: LossConfig, coords: int = GRADCHECK_COORDS,
               step: float = GRADCHECK_STEP, seed: int = 0, tolerance: float = GRADCHECK_TOLERANCE,
               grad_fn: Optional[Callable] = None, floor: float = GRADCHECK_FLOOR,
               **target_options) -> GradCheckResult:
    """Compare analytic gradients of the composite loss with central differences.

    grad_fn(model, scenes, targets, cfg) -> gradient dict replaces the analytic
    gradient, which lets a deliberately broken gradient be checked.
    """
    targets = [build_targets(scene, model.architecture, **target_options)]
    scenes = [scene]
    if grad_fn is None:
        _, grads = loss_and_grads(model, scenes, targets, cfg)
    else:
        grads = grad_fn(model, scenes, targets, cfg)

    probe = model.copy()
    rng = np.random.default_rng(seed)
    coordinates = _sample(probe, coords, rng)

    worst_error, worst = 0.0, None
    per_block = {block: 0.0 for block in probe.params}
    for block, name, i in coordinates:
        flat = probe.params[block][name].reshape(-1)
        original = flat[i]
        flat[i] = original + step
        plus, _ = loss_and_grads(probe, scenes, targets, cfg, with_grads=False)
        flat[i] = original - step
        minus, _ = loss_and_grads(probe, scenes, targets, cfg, with_grads=False)
        flat[i] = original

        numeric = (plus.total - minus.total) / (2.0 * step)
        analytic = float(grads[block][name].reshape(-1)[i])
        err = relative_error(analytic, numeric, floor)
        per_block[block] = max(per_block[block], err)
        if worst is None or err > worst_error:
            worst_error, worst = err, (block, name, i)

    result = GradCheckResult(worst_error, worst, per_block, len(coordinates), tolerance, floor)
    logger.info(f"Gradient check over {len(coordinates)} coordinates: max relative error "
                f"{worst_error:.3e} at {worst[0]}.{worst[1]}[{worst[2]}]")
    return result
