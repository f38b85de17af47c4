from .matching import HallResult, hall_finish, hopcroft_karp
from .pipeline import (
    EmbedParams,
    Embedding,
    cover_stages,
    default_ell,
    embed_in_square,
    embed_spanning_tree,
)
from .state import (
    DeadEnd,
    EmbeddingError,
    EmbeddingState,
    ExtendabilityVerdict,
    check_extendable,
    embed_subtree,
    extend_leaf,
    extendable_exact,
    init_state,
    place_sequence,
)
from .verify import INTO_G, INTO_SQUARE, VerifyResult, verify_embedding
