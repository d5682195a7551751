"""loqa: question answering over multimodal activity-sensor timelines."""

__version__ = "0.1.0"
