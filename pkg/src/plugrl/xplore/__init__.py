from .augment import (
    Augmentation,
    AugmentationError,
    Cutout,
    GaussianNoise,
    NoAugmentation,
    RandomShift,
    augment,
)
from .intrinsic import (
    NoReward,
    Re3Module,
    RewardMixer,
    RewardModule,
    RndModule,
    RunningMeanStd,
    mix_rewards,
    re3_compute,
    rnd_compute,
    rnd_update,
)

__all__ = [
    "Augmentation",
    "AugmentationError",
    "Cutout",
    "GaussianNoise",
    "NoAugmentation",
    "NoReward",
    "RandomShift",
    "Re3Module",
    "RewardMixer",
    "RewardModule",
    "RndModule",
    "RunningMeanStd",
    "augment",
    "mix_rewards",
    "re3_compute",
    "rnd_compute",
    "rnd_update",
]
