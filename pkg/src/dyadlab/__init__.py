"""dyadlab: numerical experiments with weighted inequalities on the dyadic tree."""

from .tree import (
    DomainError,
    DyadicIndex,
    HaarExpansion,
    InvariantError,
    LeafFunction,
    ROOT,
    StructureError,
    average,
    haar_analysis,
    haar_coefficient,
    haar_synthesis,
    internal_indices,
    martingale_difference,
)
from .weights import (
    A2Report,
    HaarSplit,
    Weight,
    WeightedHaar,
    a2_characteristic,
    dual,
    gen_cascade,
    gen_power,
    haar_split,
    weighted_haar,
    weighted_norm,
)
from .shifts import (
    NormEstimate,
    ShiftSpec,
    form_value,
    martingale_transform_apply,
    norm_exact_small,
    norm_lower_search,
)
from .embedding import (
    CarlesonMeasure,
    FourTerms,
    carleson_box_check,
    carleson_measure_of,
    carleson_norm,
    duality_product,
    four_terms,
    key_sum,
    maximal_weighted,
    two_weight_ratio,
)
from .bellman import (
    BellmanPoint,
    NodeSplit,
    OmegaDomain,
    barycenter_lemma_check,
    dp_estimate,
    in_domain,
    node_defect,
    point_from_data,
    segment_in_domain,
    triangle_lemma_check,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
