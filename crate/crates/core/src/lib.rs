//! Building blocks for learning a complete-label-space classifier on an
//! unlabeled target domain from several partially labeled source domains.
//!
//! The crate is deliberately free of any deep-learning backend: it holds the
//! label-space bookkeeping, the data ingestion and masking, the
//! attention-guided fusion of per-branch predictions and the pseudo-label
//! completion rules. Training lives in `unilabel-train`.

pub mod data;
pub mod error;
pub mod fusion;
pub mod labelspace;
pub mod oracle;
pub mod psf;

pub use error::{Error, Result};
pub use labelspace::{ConflictRole, DomainRole, DomainSpec, TaxonomyConflict, UnifiedLabelSpace, VOID};
