//! Hot and cold storage tiers for AVS.
//!
//! [`HotStore`] holds recent data in per-day directories with a per-modality
//! time index and per-day GPS stores. [`archive`] moves whole days into
//! ustar archives on the cold tier and records them in a catalog;
//! [`retrieve`] answers time-range queries across both tiers.

pub mod archive;
pub mod error;
pub mod fsutil;
pub mod hotstore;
pub mod journal;
pub mod retrieve;
pub mod store;

pub use archive::{archive_before, catalog_lookup, plan_archive, ArchiveEntry, ArchiveOptions, ColdStore, ColdTar, PlannedDay};
pub use error::{Error, Result};
pub use hotstore::{HotItem, HotOptions, HotStore, HotUsage, RecoveryReport};
pub use retrieve::bench::{retrieval_bench, BenchParams, RetrievalReport};
pub use retrieve::{retrieve_range, ItemData, Mode, RetrievedItem, Retriever, Tier};
pub use store::Store;
