//! User × route-cluster × context tensor, CP decomposition and embeddings.

mod context;
mod cp;
mod dense;
mod embed;

pub use context::{build_context_tensor, build_context_tensor_with, ContextTensor, EntityIndex, CONTEXT_FEATURES};
pub use cp::{
    core_consistency, cp_als, khatri_rao, rank_sweep, tucker_core, CoreConsistencyReport, CoreTensor, CpConfig,
    CpFactors, RankScore,
};
pub use dense::DenseTensor3;
pub use embed::{cosine_similarity, embedding_lookup, Embeddings, EntityId};
