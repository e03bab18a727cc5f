"""tfmeta: few-shot vibration fault diagnosis.

Self-supervised time-frequency representation learning on unlabeled
vibration windows, followed by meta-learned fine-tuning from a small label
budget. See README.md for the CLI and the library tour.
"""

__version__ = "0.1.0"
