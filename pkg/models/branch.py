from enum import Enum


class Branch(str, Enum):
    SPEAKER = "speaker"
    ACCENT = "accent"


class EmbeddingKind(str, Enum):
    PRE_VQ = "pre_vq"
    GROUPED = "grouped"
    QUANTIZED = "quantized"
