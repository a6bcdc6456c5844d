"""Camouflage image synthesis: background-inpainting GAN, classifier guidance, COD metrics."""

from .ckpt import Checkpoint
from .dataio import CompositeInput, DatasetManifest, Sample, add_noise, load_dataset, preprocess, split_foreground
from .losses import LossBundle, LossWeights
from .netarch import (ClassifierSpec, DiscriminatorSpec, GeneratorSpec, build_classifier,
                      build_discriminator, build_generator)
from .trainloop import ModelSpecs, TrainConfig, lr_schedule, train_classifier, train_gan

__version__ = "0.1.0"
