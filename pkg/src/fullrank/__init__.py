"""Full-collection retrieval of dialogue responses: sparse and dense
pipelines, negative sampling, training, and evaluation."""

__version__ = "0.1.0"
