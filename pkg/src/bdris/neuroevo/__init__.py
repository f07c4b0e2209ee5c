"""Neural controllers for the multi-RIS broadcast system and their evolutionary training."""

from .baselines import BesResult, SearchSpaceTooLarge, bes_baseline, random_policy_rates
from .evolution import (
    CosyneParams,
    EpisodeSet,
    PolicyContext,
    Population,
    TrainConfig,
    TrainResult,
    cosyne_step,
    evaluate_genome,
    genome_rates,
    sample_episodes,
    train,
    write_fitness_csv,
)
from .layers import StructureError, attention_layer, conv2d_same, layer_norm, softmax, stack_real, unstack_real
from .networks import (
    ArchitectureSpec,
    Genome,
    GenomeLayout,
    build_layout,
    decode_ris_head,
    fusion_forward,
    hdf_act,
    load_genome,
    mbacnn_forward,
    parameter_count,
    random_feasible_action,
    save_genome,
)

__all__ = [name for name in dir() if not name.startswith("_")]
