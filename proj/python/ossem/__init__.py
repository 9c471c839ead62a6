"""One-shot speaker-adaptive speech enhancement."""

from ossem._core import (
    builtin_embed,
    enhance_file,
    gen_corpus,
    ilr_schedule,
    istft,
    rescale_ratio,
    seg_snr,
    si_sdr,
    speaker_mask,
    spectral_l1,
    stft,
)

__all__ = [
    "builtin_embed",
    "enhance_file",
    "gen_corpus",
    "ilr_schedule",
    "istft",
    "rescale_ratio",
    "seg_snr",
    "si_sdr",
    "speaker_mask",
    "spectral_l1",
    "stft",
]
