"""Box embeddings for normalized EL++ ontologies."""
from .geometry import Box, containment_residual, intersect, lower, upper
from .model import ModelParams
from .ontology import Axiom, AxiomSet, Vocabulary, parse_axiom_file
from .trainer import TrainConfig, init_params, load_checkpoint, save_checkpoint, train

__version__ = "0.1.0"
