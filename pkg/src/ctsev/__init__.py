"""CT severity pipeline: infection segmentation, infection-rate features and severity classifiers."""
__version__ = "0.1.0"
