"""voxsep: mono singing-voice separation with spectrogram U-Net and Wave-U-Net models,
signal-processing data augmentation and BSS-eval scoring."""

__version__ = "0.1.0"
