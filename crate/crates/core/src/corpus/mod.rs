//! Corpus generation, the binary shard format, the Dyck baseline, and corpus statistics.

pub mod dyck;
pub mod generate;
pub mod render;
pub mod shard;
pub mod zipf;

pub use dyck::{generate_dyck, DyckConfig, DyckSummary};
pub use generate::{generate_corpus, stats_path, CorpusStats};
pub use render::{render_trajectory, RenderFormat, Rendered};
pub use shard::{Shard, ShardHeader, ShardKind, ShardWriter};
pub use zipf::{zipf_report, ZipfReport};
