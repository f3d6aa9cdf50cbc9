"""corpuskit: corpus curation and model post-processing toolkit."""

__version__ = "0.1.0"
