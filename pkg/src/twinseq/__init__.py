"""Twin-regularised recurrent networks for frame-level sequence labelling."""

__version__ = "0.1.0"
