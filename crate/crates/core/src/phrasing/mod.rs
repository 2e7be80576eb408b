//! Caption → abbreviated-sentence/noun-phrase decomposition and its refinement.

pub mod chunk;
pub mod pair;
pub mod refine;

pub use chunk::{chunk, chunk_with_stats, ChunkOutcome, RelationCounts};
pub use pair::{AsNpPair, DependencyTriplet, NounPhrase, Slot};
pub use refine::{refine, RefinementContext};
