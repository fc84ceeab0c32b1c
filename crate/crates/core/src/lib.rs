//! Community analysis of email-harvester networks.
//!
//! This crate turns spam-event logs into behavioral similarity graphs of
//! email-address harvesters and partitions those graphs into communities
//! by maximizing normalized association. The pipeline is:
//!
//! 1. [`ingest`]: parse event logs and window them by calendar month.
//! 2. [`phishing`]: classify emails by subject keywords and label
//!    harvesters as phishers or non-phishers.
//! 3. [`similarity`]: build harvester-by-resource coincidence matrices
//!    (spam-server usage or hourly activity) and project them into a
//!    normalized pairwise-similarity matrix.
//! 4. [`graph`]: connect harvesters with a k-nearest-neighbor graph.
//! 5. [`spectral`]: partition each connected component with spectral
//!    relaxation, eigengap model selection, and discretization.
//! 6. [`validation`]: score partitions against labels (Rand / adjusted
//!    Rand), temporal coherence, and IP-prefix structure.
//! 7. [`synth`]: generate synthetic logs with planted communities, the
//!    ground-truth oracle for end-to-end testing.

pub mod graph;
pub mod ingest;
pub mod linalg;
pub mod phishing;
pub mod similarity;
pub mod spectral;
pub mod synth;
pub mod validation;
