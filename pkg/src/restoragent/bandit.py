"""Bridge from restoration fixtures to the toy bandit environment.

Each state's features are its quality vector (7 metrics + bias); the
reward for picking a task is computed once by running that task's
default tool and applying the binary reward rule.
"""

from __future__ import annotations

import numpy as np

from .core import ImageBuf, RestorationTask
from .grpo import NUM_TASKS, ToyBanditEnv
from .iqa import METRIC_NAMES, evaluate_quality
from .orchestrator import reference_reward
from .tools import ToolRegistry, default_registry, invoke


def state_features(img: ImageBuf) -> np.ndarray:
    qv = evaluate_quality(img)
    return np.array([qv[name] for name in METRIC_NAMES] + [1.0])


def reward_row(img: ImageBuf, registry: ToolRegistry, reward_delta: float = 0.0) -> np.ndarray:
    """Binary reward per task: run the task's first registered tool."""
    before = evaluate_quality(img)
    row = np.zeros(NUM_TASKS, dtype=np.int64)
    for task in RestorationTask:
        candidates = registry.supporting(task)
        if not candidates:
            continue
        out = invoke(registry, candidates[0].tool_id, img)
        row[int(task)] = reference_reward(before, task, evaluate_quality(out), reward_delta)
    return row


def bandit_from_images(images: list[ImageBuf], registry: ToolRegistry | None = None) -> ToyBanditEnv:
    """Env rewarding every task whose tool passes the reward rule."""
    registry = registry or default_registry()
    feats = np.stack([state_features(img) for img in images])
    table = np.stack([reward_row(img, registry) for img in images])
    return ToyBanditEnv(features=feats, reward_table=table)


def bandit_single_task(
    images_with_tasks: list[tuple[ImageBuf, RestorationTask]],
    registry: ToolRegistry | None = None,
) -> ToyBanditEnv:
    """Env where exactly the designated task is rewarded per state.

    The designation is validated against the reward rule: the task's
    default tool must actually earn reward 1 on the state's image.
    """
    registry = registry or default_registry()
    feats = []
    table = []
    for img, task in images_with_tasks:
        row = reward_row(img, registry)
        if row[int(task)] != 1:
            raise ValueError(f"{task.name} does not earn reward 1 on this image")
        onehot = np.zeros(NUM_TASKS, dtype=np.int64)
        onehot[int(task)] = 1
        feats.append(state_features(img))
        table.append(onehot)
    return ToyBanditEnv(features=np.stack(feats), reward_table=np.stack(table))
