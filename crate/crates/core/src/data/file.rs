//! Dataset files.
//!
//! Binary layout, all integers and floats little-endian:
//!
//! ```text
//! header   magic      4 bytes  "ISDS"
//!          version    u32      1
//!          count      u32      number of records
//!          d          u32      feature width shared by all records
//!          kind       u32      0 external, 1 gaussian-mixture, 2 two-moons
//!          noise_var  f64      generator noise variance (0 if external)
//!          seed       u64      generator seed (0 if external)
//! record   n          u32      ground-set size
//!          features   n·d f64  row-major
//!          k          u32      |S*|
//!          indices    k u32    element indices of S*
//! ```
//!
//! The text form has one `# inset-dataset` header line followed by one
//! record per line: `n d idx:i,j,…;feat:x,y,…`.

use std::fs;
use std::path::Path;

use crate::sample::{SampleError, SetSample};
use crate::tensor::Tensor;

use super::{DataError, SynthKind};

pub const MAGIC: [u8; 4] = *b"ISDS";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SourceKind {
    /// Externally featurized data, e.g. precomputed text embeddings.
    External,
    Synthetic(SynthKind),
}

impl SourceKind {
    fn code(self) -> u32 {
        match self {
            SourceKind::External => 0,
            SourceKind::Synthetic(SynthKind::GaussianMixture) => 1,
            SourceKind::Synthetic(SynthKind::TwoMoons) => 2,
        }
    }

    fn from_code(code: u32) -> Result<Self, DataError> {
        match code {
            0 => Ok(SourceKind::External),
            1 => Ok(SourceKind::Synthetic(SynthKind::GaussianMixture)),
            2 => Ok(SourceKind::Synthetic(SynthKind::TwoMoons)),
            c => Err(DataError::UnknownKind(c)),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SourceKind::External => "external",
            SourceKind::Synthetic(k) => k.name(),
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        [
            SourceKind::External,
            SourceKind::Synthetic(SynthKind::GaussianMixture),
            SourceKind::Synthetic(SynthKind::TwoMoons),
        ]
        .into_iter()
        .find(|k| k.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetMeta {
    pub kind: SourceKind,
    pub noise_variance: f64,
    pub seed: u64,
}

impl DatasetMeta {
    pub fn external() -> Self {
        DatasetMeta {
            kind: SourceKind::External,
            noise_variance: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetFile {
    pub meta: DatasetMeta,
    pub samples: Vec<SetSample>,
}

impl DatasetFile {
    /// Shared feature width, 0 for an empty dataset.
    pub fn d(&self) -> usize {
        self.samples.first().map_or(0, SetSample::d)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, DataError> {
        let d = self.d();
        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&u32_of(self.samples.len())?.to_le_bytes());
        out.extend_from_slice(&u32_of(d)?.to_le_bytes());
        out.extend_from_slice(&self.meta.kind.code().to_le_bytes());
        out.extend_from_slice(&self.meta.noise_variance.to_le_bytes());
        out.extend_from_slice(&self.meta.seed.to_le_bytes());
        for (record, s) in self.samples.iter().enumerate() {
            if s.d() != d {
                return Err(DataError::Width {
                    record,
                    expected: d,
                    got: s.d(),
                });
            }
            out.extend_from_slice(&u32_of(s.n())?.to_le_bytes());
            for v in s.features().data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
            out.extend_from_slice(&u32_of(s.optimal_subset().len())?.to_le_bytes());
            for &i in s.optimal_subset() {
                out.extend_from_slice(&u32_of(i)?.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DataError> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4).ok_or(DataError::BadMagic)?;
        if magic != MAGIC {
            return Err(DataError::BadMagic);
        }
        let version = r.u32().ok_or(DataError::TruncatedHeader)?;
        if version != VERSION {
            return Err(DataError::VersionMismatch {
                found: version,
                expected: VERSION,
            });
        }
        let count = r.u32().ok_or(DataError::TruncatedHeader)? as usize;
        let d = r.u32().ok_or(DataError::TruncatedHeader)? as usize;
        let kind = SourceKind::from_code(r.u32().ok_or(DataError::TruncatedHeader)?)?;
        let noise_variance = r.f64().ok_or(DataError::TruncatedHeader)?;
        let seed = r.u64().ok_or(DataError::TruncatedHeader)?;
        let mut samples = Vec::with_capacity(count.min(1 << 16));
        for record in 0..count {
            let truncated = DataError::TruncatedRecord { record };
            let n = r.u32().ok_or(truncated)? as usize;
            let mut data = Vec::with_capacity(n * d);
            for _ in 0..n * d {
                data.push(r.f64().ok_or(DataError::TruncatedRecord { record })?);
            }
            let k = r.u32().ok_or(DataError::TruncatedRecord { record })? as usize;
            let mut idx = Vec::with_capacity(k);
            for _ in 0..k {
                idx.push(r.u32().ok_or(DataError::TruncatedRecord { record })? as usize);
            }
            samples.push(make_sample(record, n, d, data, idx)?);
        }
        if r.pos != bytes.len() {
            return Err(DataError::TrailingBytes(bytes.len() - r.pos));
        }
        Ok(DatasetFile {
            meta: DatasetMeta {
                kind,
                noise_variance,
                seed,
            },
            samples,
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "# inset-dataset v{VERSION} kind={} noise_variance={} seed={}\n",
            self.meta.kind.name(),
            self.meta.noise_variance,
            self.meta.seed
        );
        for s in &self.samples {
            let idx: Vec<String> = s.optimal_subset().iter().map(|i| i.to_string()).collect();
            let feat: Vec<String> = s.features().data().iter().map(|v| v.to_string()).collect();
            out.push_str(&format!(
                "{} {} idx:{};feat:{}\n",
                s.n(),
                s.d(),
                idx.join(","),
                feat.join(",")
            ));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, DataError> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(DataError::TruncatedHeader)?;
        let meta = parse_text_header(header)?;
        let mut samples = Vec::new();
        for (line_no, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let text_err = |message: String| DataError::Text {
                line: line_no + 1,
                message,
            };
            let record = samples.len();
            let (dims, rest) = line
                .split_once(" idx:")
                .ok_or_else(|| text_err("missing `idx:` section".into()))?;
            let (idx, feat) = rest
                .split_once(";feat:")
                .ok_or_else(|| text_err("missing `;feat:` section".into()))?;
            let mut dims = dims.split_whitespace().map(str::parse::<usize>);
            let (Some(Ok(n)), Some(Ok(d)), None) = (dims.next(), dims.next(), dims.next()) else {
                return Err(text_err("expected `n d` before `idx:`".into()));
            };
            let idx = parse_list::<usize>(idx).map_err(|e| text_err(format!("index: {e}")))?;
            let data = parse_list::<f64>(feat).map_err(|e| text_err(format!("feature: {e}")))?;
            if data.len() != n * d {
                return Err(DataError::TruncatedRecord { record });
            }
            if let Some(first) = samples.first().map(SetSample::d) {
                if first != d {
                    return Err(DataError::Width {
                        record,
                        expected: first,
                        got: d,
                    });
                }
            }
            samples.push(make_sample(record, n, d, data, idx)?);
        }
        Ok(DatasetFile { meta, samples })
    }
}

fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>, T::Err> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(|v| v.trim().parse()).collect()
}

fn parse_text_header(line: &str) -> Result<DatasetMeta, DataError> {
    let err = |message: &str| DataError::Text {
        line: 1,
        message: message.to_string(),
    };
    let mut parts = line.split_whitespace();
    if parts.next() != Some("#") || parts.next() != Some("inset-dataset") {
        return Err(err("missing `# inset-dataset` header"));
    }
    match parts.next() {
        Some(v) if v == format!("v{VERSION}") => {}
        Some(v) => {
            return Err(DataError::VersionMismatch {
                found: v.trim_start_matches('v').parse().unwrap_or(0),
                expected: VERSION,
            })
        }
        None => return Err(err("missing version")),
    }
    let mut meta = DatasetMeta::external();
    for kv in parts {
        let (k, v) = kv.split_once('=').ok_or_else(|| err("expected key=value"))?;
        match k {
            "kind" => meta.kind = SourceKind::from_name(v).ok_or_else(|| err("unknown kind"))?,
            "noise_variance" => {
                meta.noise_variance = v.parse().map_err(|_| err("bad noise_variance"))?
            }
            "seed" => meta.seed = v.parse().map_err(|_| err("bad seed"))?,
            _ => return Err(err("unknown header key")),
        }
    }
    Ok(meta)
}

fn make_sample(
    record: usize,
    n: usize,
    d: usize,
    data: Vec<f64>,
    idx: Vec<usize>,
) -> Result<SetSample, DataError> {
    if data.iter().any(|v| !v.is_finite()) {
        return Err(DataError::NonFinite { record });
    }
    let features = Tensor::from_vec(n, d, data).map_err(|_| DataError::TruncatedRecord { record })?;
    SetSample::new(features, idx).map_err(|e| match e {
        SampleError::IndexOutOfBounds { index, n } => DataError::IndexOutOfBounds { record, index, n },
        SampleError::DuplicateIndex(index) => DataError::DuplicateIndex { record, index },
        SampleError::EmptySubset => DataError::EmptySubset { record },
        SampleError::EmptyGroundSet => DataError::EmptyGroundSet { record },
    })
}

fn u32_of(v: usize) -> Result<u32, DataError> {
    u32::try_from(v).map_err(|_| DataError::Config(format!("{v} does not fit in 32 bits")))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let out = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(out)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn u64(&mut self) -> Option<u64> {
        self.take(8).map(|b| u64::from_le_bytes(b.try_into().unwrap()))
    }

    fn f64(&mut self) -> Option<f64> {
        self.take(8).map(|b| f64::from_le_bytes(b.try_into().unwrap()))
    }
}

pub fn write_dataset(path: impl AsRef<Path>, file: &DatasetFile) -> Result<(), DataError> {
    fs::write(path, file.to_bytes()?)?;
    Ok(())
}

fn read_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Read {
        path: path.to_path_buf(),
        source,
    }
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<DatasetFile, DataError> {
    let path = path.as_ref();
    DatasetFile::from_bytes(&fs::read(path).map_err(read_err(path))?)
}

pub fn write_text(path: impl AsRef<Path>, file: &DatasetFile) -> Result<(), DataError> {
    fs::write(path, file.to_text())?;
    Ok(())
}

pub fn read_text(path: impl AsRef<Path>) -> Result<DatasetFile, DataError> {
    let path = path.as_ref();
    DatasetFile::from_text(&fs::read_to_string(path).map_err(read_err(path))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;

    fn sample_file(k: usize, d: usize) -> DatasetFile {
        let mut rng = rng_from(7);
        let samples = (0..k)
            .map(|i| SetSample::new(Tensor::uniform(4 + i, d, 3.0, &mut rng), vec![0, 2 + i]).unwrap())
            .collect();
        DatasetFile {
            meta: DatasetMeta {
                kind: SourceKind::Synthetic(SynthKind::TwoMoons),
                noise_variance: 0.1,
                seed: 42,
            },
            samples,
        }
    }

    fn bits(f: &DatasetFile) -> Vec<u64> {
        f.samples
            .iter()
            .flat_map(|s| s.features().data().iter().map(|v| v.to_bits()))
            .collect()
    }

    #[test]
    fn binary_round_trip_is_bitwise() {
        let f = sample_file(3, 2);
        let back = DatasetFile::from_bytes(&f.to_bytes().unwrap()).unwrap();
        assert_eq!(back, f);
        assert_eq!(bits(&back), bits(&f));
        assert_eq!(back.meta.noise_variance, 0.1);
    }

    #[test]
    fn text_round_trip_is_bitwise() {
        let f = sample_file(3, 3);
        let back = DatasetFile::from_text(&f.to_text()).unwrap();
        assert_eq!(bits(&back), bits(&f));
        assert_eq!(back, f);
    }

    #[test]
    fn truncated_file_names_the_record() {
        let bytes = sample_file(3, 2).to_bytes().unwrap();
        let err = DatasetFile::from_bytes(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(matches!(err, DataError::TruncatedRecord { record: 2 }));
        assert_eq!(err.to_string(), "truncated record 2");
        assert!(matches!(
            DatasetFile::from_bytes(&bytes[..10]),
            Err(DataError::TruncatedHeader)
        ));
    }

    #[test]
    fn version_and_magic_are_checked() {
        let mut bytes = sample_file(1, 2).to_bytes().unwrap();
        bytes[4] = 9;
        assert!(matches!(
            DatasetFile::from_bytes(&bytes),
            Err(DataError::VersionMismatch { found: 9, expected: 1 })
        ));
        bytes[0] = b'X';
        assert!(matches!(DatasetFile::from_bytes(&bytes), Err(DataError::BadMagic)));
    }

    #[test]
    fn invalid_subsets_are_rejected_on_read() {
        let f = sample_file(1, 2);
        let mut bytes = f.to_bytes().unwrap();
        // Patch k to 0 and drop the two indices.
        let k_pos = bytes.len() - 12;
        bytes[k_pos..k_pos + 4].copy_from_slice(&0u32.to_le_bytes());
        bytes.truncate(bytes.len() - 8);
        assert!(matches!(
            DatasetFile::from_bytes(&bytes),
            Err(DataError::EmptySubset { record: 0 })
        ));

        let mut bytes = f.to_bytes().unwrap();
        let last = bytes.len() - 4;
        bytes[last..].copy_from_slice(&99u32.to_le_bytes());
        assert!(matches!(
            DatasetFile::from_bytes(&bytes),
            Err(DataError::IndexOutOfBounds { record: 0, index: 99, n: 4 })
        ));
    }

    #[test]
    fn wide_embeddings_need_no_special_casing() {
        let f = sample_file(2, 768);
        let back = DatasetFile::from_bytes(&f.to_bytes().unwrap()).unwrap();
        assert_eq!(back.d(), 768);
        assert_eq!(back, f);
    }
}
