"""GenText: unsupervised artistic text generation with decoupled
content, font style, and texture style."""

from .imaging import load_image, save_image
from .nets import (Dims, LatentPair, ModelBundle, build_bundle, encode,
                   load_bundle, ones_code, save_bundle)
from .corpus import (CorpusManifest, DomainBatch, generate_corpus,
                     load_te141k, sample_batch)
from .losses import LossWeights, NCEConfig
from .training import TrainConfig, checkpoint_roundtrip, train
from .pipeline import (GenerationRequest, blend_spatial, destylize,
                       end_to_end, font_transfer, interpolate_texture,
                       stylize)

__version__ = "0.1.0"
