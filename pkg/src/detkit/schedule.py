"""Warmup + step learning-rate schedule as a pure function of the
iteration counter."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True, kw_only=True)
class ScheduleConfig:
    """Step schedule with linear warmup.

    The rate warms linearly from ``warmup_start_factor * base_lr`` to
    ``base_lr`` over ``warmup_iters`` iterations, holds at ``base_lr``,
    then drops at the first iteration of each epoch in ``step_epochs``
    (1-indexed). ``step_lrs`` pins the post-drop rates explicitly -- the
    default reproduces the 0.005 -> 0.0005 -> 0.0001 recipe; with
    ``step_lrs=None`` each drop multiplies by ``gamma`` instead.
    """

    base_lr: float = 0.005
    warmup_iters: int = 500
    warmup_start_factor: float = 1.0 / 3.0
    step_epochs: tuple[int, ...] = (8, 11)
    gamma: float = 0.1
    iters_per_epoch: int
    step_lrs: tuple[float, ...] | None = (0.0005, 0.0001)

    def __post_init__(self):
        if self.base_lr <= 0.0:
            raise ValueError(f"base_lr must be positive, got {self.base_lr}")
        if self.warmup_iters < 0:
            raise ValueError(f"warmup_iters must be >= 0, got {self.warmup_iters}")
        if not 0.0 < self.warmup_start_factor <= 1.0:
            raise ValueError(
                f"warmup_start_factor must lie in (0, 1], got {self.warmup_start_factor}"
            )
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.iters_per_epoch < 1:
            raise ValueError(
                f"iters_per_epoch must be >= 1, got {self.iters_per_epoch}"
            )
        if any(e < 1 for e in self.step_epochs):
            raise ValueError(f"step epochs are 1-indexed, got {self.step_epochs}")
        for lo, hi in zip(self.step_epochs, self.step_epochs[1:]):
            if hi <= lo:
                raise ValueError(
                    f"step_epochs must be strictly increasing, got {self.step_epochs}"
                )
        if self.step_lrs is not None:
            if len(self.step_lrs) != len(self.step_epochs):
                raise ValueError(
                    f"{len(self.step_lrs)} step_lrs for {len(self.step_epochs)} steps"
                )
            prev = self.base_lr
            for lr in self.step_lrs:
                if not 0.0 < lr < prev:
                    raise ValueError(
                        f"step_lrs must decrease from base_lr, got {self.step_lrs}"
                    )
                prev = lr


def lr_at(iteration: int, cfg: ScheduleConfig) -> float:
    """Learning rate at a given 0-indexed iteration."""
    if iteration < 0:
        raise ValueError(f"iteration must be >= 0, got {iteration}")
    if iteration < cfg.warmup_iters:
        f = cfg.warmup_start_factor
        return cfg.base_lr * (f + (1.0 - f) * iteration / cfg.warmup_iters)
    epoch = iteration // cfg.iters_per_epoch + 1
    passed = sum(1 for e in cfg.step_epochs if epoch >= e)
    if passed == 0:
        return cfg.base_lr
    if cfg.step_lrs is not None:
        return cfg.step_lrs[passed - 1]
    return cfg.base_lr * cfg.gamma ** passed
