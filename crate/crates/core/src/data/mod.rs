//! Synthetic generators, dataset files and train/validation/test splits.

pub mod file;
pub mod split;
pub mod synth;

pub use file::{read_dataset, read_text, write_dataset, write_text, DatasetFile, DatasetMeta, SourceKind};
pub use split::{split, split_sizes, Split};
pub use synth::{gen_gaussian_mixture, gen_two_moons, generate, SynthConfig, SynthKind};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("invalid dataset configuration: {0}")]
    Config(String),
    #[error("invalid covariance: {0}")]
    Covariance(String),
    #[error("cannot split {total} samples: {partition} partition would be empty")]
    EmptyPartition { partition: &'static str, total: usize },
    #[error("not a dataset file (bad magic bytes)")]
    BadMagic,
    #[error("unsupported dataset version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("truncated header")]
    TruncatedHeader,
    #[error("truncated record {record}")]
    TruncatedRecord { record: usize },
    #[error("record {record}: index {index} out of bounds for ground set of size {n}")]
    IndexOutOfBounds { record: usize, index: usize, n: usize },
    #[error("record {record}: optimal subset is empty")]
    EmptySubset { record: usize },
    #[error("record {record}: duplicate index {index}")]
    DuplicateIndex { record: usize, index: usize },
    #[error("record {record}: ground set is empty")]
    EmptyGroundSet { record: usize },
    #[error("record {record}: feature width {got} does not match header width {expected}")]
    Width { record: usize, expected: usize, got: usize },
    #[error("record {record}: non-finite feature value")]
    NonFinite { record: usize },
    #[error("{0} trailing bytes after the last record")]
    TrailingBytes(usize),
    #[error("line {line}: {message}")]
    Text { line: usize, message: String },
    #[error("unknown source kind code {0}")]
    UnknownKind(u32),
    #[error("cannot read dataset {path}: {source}")]
    Read {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
