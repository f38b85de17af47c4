"""Spanning trees in pseudorandom graphs and their squares."""
from .graphs import (
    AuditReport,
    Graph,
    SpectralCertificate,
    audit_mixing,
    check_joined,
    estimate_lambda,
    gen_paley,
    gen_random_regular,
    square,
)
from .trees import (
    BarePathSet,
    SpikeRecord,
    StagePlan,
    Tree,
    build_stage_plan,
    divide_tree,
    extract_bare_paths,
    gen_tree,
    leaf_census,
    separated_subset,
    spike_transform,
)
from .matchmakers import MatchmakerFamily, check_expansion, select_matchmakers, verify_matchmakers
from .embedder import (
    EmbedParams,
    Embedding,
    embed_in_square,
    embed_spanning_tree,
    hall_finish,
    verify_embedding,
)

__version__ = "0.1.0"
