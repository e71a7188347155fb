"""Model adapters: image-in, pipeline-schema-JSON-out batch scripts."""

__version__ = "0.1.0"
