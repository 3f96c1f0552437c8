"""icdilate: per-channel dilation pattern tooling for convolution chains.

Select a dilation pattern per output channel from enlarged-kernel
weights, rearrange filters so equal patterns are contiguous, execute the
result as grouped dilated convolutions, and verify the whole pipeline
against brute-force references.
"""

from .container import (
    ContainerLayer,
    ModelContainer,
    read_container,
    write_container,
)
from .errors import (
    BadMagic,
    BadVersion,
    ContainerError,
    DimensionError,
    EnumerationGuard,
    GeometryError,
    HeaderError,
    IcdilateError,
    PropagationError,
    TruncatedBlob,
    VerificationFailure,
)
from .executor import (
    CostReport,
    bench_layer,
    cost_model,
    plan_macs,
    reference_full,
    run_inception,
    run_model,
)
from .generate import generate
from .prng import Gaussian, SplitMix64, Uniform
from .rearrange import (
    ChannelPermutation,
    GroupedPlan,
    PlanGroup,
    build_permutation,
    expand_compact,
    extract_compact,
    propagate,
)
from .search import (
    Assignment,
    DilationPattern,
    LayerSpec,
    SearchResult,
    all_patterns,
    mask_filter,
    pattern_error,
    sampled_positions,
    search_layer,
    search_model,
    select_pattern,
)
from .tensor import ConvGeometry, Tensor4, constant_tensor, conv2d, l1_norm

__version__ = "0.1.0"
