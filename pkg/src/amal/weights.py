from dataclasses import dataclass


@dataclass(frozen=True)
class ScoreWeights:
    """Constants of deviation thresholding, segmentation and scoring."""

    alpha_A: float = 0.73
    alpha_N: float = 0.02
    alpha_T: float = 0.25
    gamma: float = 2.5
    epsilon: float = 0.0005
    lam: float = 0.25
    rho_unstable: float = 2.0
    xi: float = 0.2
    alpha_decay: float = 0.75
    d_cap: float = 10.0

    def __post_init__(self):
        total = self.alpha_A + self.alpha_N + self.alpha_T
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"alpha_A + alpha_N + alpha_T must be 1, got {total}")
        for name, value in vars(self).items():
            if name in ("alpha_A", "alpha_N", "alpha_T"):
                if value < 0:
                    raise ValueError(f"{name} must be non-negative")
            elif not value > 0:
                raise ValueError(f"{name} must be positive, got {value}")
        if not self.alpha_decay < 1:
            raise ValueError("alpha_decay must be in (0, 1)")
