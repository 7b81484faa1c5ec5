"""Frequency-domain multimodal nowcasting: spectral fusion ops, a small
reverse-mode autodiff engine, synthetic radar events, and a training/eval CLI.
"""

__version__ = "0.1.0"
