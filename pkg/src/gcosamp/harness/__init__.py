"""Configuration, experiment drivers and the command-line interface."""
from .config import ConfigError, load_config, model_from_section, model_to_section
from .experiments import (ExperimentResult, ImageExperimentConfig, VanishingNoiseConfig, run_image_experiment,
                          run_vanishing_noise, synthesize_cartoon_texture)
