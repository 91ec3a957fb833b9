"""Location-free camouflage generation: hide a masked foreground object in
an arbitrary region of a background image with a single feed-forward pass.

The pieces, in pipeline order: :mod:`~lcgnet.data_io` (images, masks,
training pairs), :mod:`~lcgnet.encoder` (frozen VGG-19 feature taps),
:mod:`~lcgnet.saliency` (spectral-residual importance maps),
:mod:`~lcgnet.fusion` (similarity-gated structure fusion with local AdaIN),
:mod:`~lcgnet.decoder` (mirror generator and mask compositing),
:mod:`~lcgnet.losses`, :mod:`~lcgnet.training`, and :mod:`~lcgnet.pipeline`
(inference, dataset generation, benchmark).
"""

from .data_io import RegionRect, TrainSample
from .losses import LossReport, LossWeights
from .pipeline import CamouflageModel, CamouflageRequest, camouflage, load_model
from .training import TrainConfig, train_loop

__version__ = "0.1.0"

__all__ = [
    "CamouflageModel",
    "CamouflageRequest",
    "LossReport",
    "LossWeights",
    "RegionRect",
    "TrainConfig",
    "TrainSample",
    "camouflage",
    "load_model",
    "train_loop",
    "__version__",
]
