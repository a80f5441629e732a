"""Denoising diffusion over ingredient co-occurrence edge matrices."""

from .diffusion import NoiseSchedule, ddim_step, forward_sample, make_schedule, posterior_params
from .denoiser import DenoiserConfig, DenoiserParams, init_params, predict_noise, timestep_features
from .graph import CorpusStats, Edge, HeteroGraph, Node, NodeKind, build_hetero_graph, compute_npmi, hub_partition
from .sampling import Subgraph, SubgraphDataset, build_dataset, sample_balanced_subgraph
from .training import Checkpoint, TrainConfig, OptimizerConfig, train, load_checkpoint, save_checkpoint

__version__ = "0.1.0"
