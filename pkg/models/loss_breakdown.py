from __future__ import annotations

from dataclasses import asdict, dataclass


@dataclass(frozen=True)
class LossBreakdown:
    recon: float
    kl: float
    commitment: float
    codebook: float
    total: float
    beta: float

    @staticmethod
    def combine(recon: float, kl: float, commitment: float, codebook: float, beta: float) -> float:
        """Objective total, summed in the same order the training graph uses."""
        return ((recon + beta * kl) + commitment) + codebook

    @classmethod
    def from_terms(cls, recon: float, kl: float, commitment: float, codebook: float,
                   beta: float) -> "LossBreakdown":
        return cls(recon, kl, commitment, codebook,
                   cls.combine(recon, kl, commitment, codebook, beta), beta)

    def recomposed(self) -> float:
        return self.combine(self.recon, self.kl, self.commitment, self.codebook, self.beta)

    def as_dict(self) -> dict[str, float]:
        return asdict(self)
