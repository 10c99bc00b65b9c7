"""Face detail synthesis: proxy fitting, SH appearance, PCA displacement and normal integration."""

__version__ = "0.1.0"
