//! Multimodal keyframe search: field encoders, an inverted index with four
//! rankers, the query cascade and the MRR evaluation harness.

pub mod annotation;
pub mod color;
pub mod error;
pub mod eval;
pub mod feature;
pub mod index;
pub mod ingest;
pub mod model;
pub mod query;
pub mod ranker;
pub mod spatial;

pub use error::{ColorError, EncodeError, IndexError, ModelError};
pub use index::{DocOrdinal, Filter, IndexReader, IndexWriter, QueryTerms, Snapshot};
pub use model::{Aspect, BoundingBox, ClassLabel, Field, GridCell, KeyframeId, KeyframeRecord};
pub use ranker::{Ranker, RankerKind};
pub use query::{Engine, QuerySpec, RankerTriple, ResultPage};
