"""trusmil: prostate-cancer classification from micro-ultrasound needle
traces — synthetic data generation, ROI extraction, self-supervised
pre-training, ROI-scale and multi-scale core classifiers, and a
nested-cross-validation experiment harness."""

__version__ = "0.1.0"
