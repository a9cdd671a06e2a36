"""Prob-sparse self-attention for Conformer encoders.

Queries whose attention distribution is close to uniform skip the softmax
entirely and output their own value row; only the top ``r_sparse`` fraction
(ranked by a sampled max-minus-mean score) get full attention.
"""

from . import kernels
from .attention import (
    AttnOutput,
    ProjectionWeights,
    attention_dense,
    attention_row,
    multi_head_attention,
    project_qkv,
)
from .conformer import (
    ConformerBlockWeights,
    EncoderConfig,
    EncoderOutput,
    conformer_block_forward,
    conv_module_forward,
    encoder_forward,
    ffn_forward,
    init_encoder_weights,
)
from .numeric import (
    AllocMeter,
    ConfigError,
    ContractError,
    NumericError,
    ShapeError,
    log_sum_exp,
    make_rng,
    matmul,
    randn_matrix,
    row_softmax,
    sample_without_replacement,
)
from .sparse import (
    LayerShareState,
    SparsityParams,
    SparsitySelection,
    attention_prob_sparse,
    kl_from_uniform,
    select_queries,
    shared_select,
    sparsity_measure_exact,
    sparsity_measure_sampled,
)

__version__ = "0.1.0"
