"""promptpose: prompt-driven keypoint detection with a small multimodal transformer.

A self-contained stack: a tensor engine with reverse-mode autodiff, a toy ViT
visual encoder, a prompt encoder + cross-attention prompt feature extractor, a
decoder-only language model fusing visual/prompt/text tokens, dual position
decoders (regression head vs. numerical text), a synthetic scene generator,
a training loop, and keypoint metrics (PCK / OKS-based AP & AR).
"""

__version__ = "0.1.0"
