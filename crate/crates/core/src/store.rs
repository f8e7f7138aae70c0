//! `polarstore/1`: a directory holding `manifest.json` and `vectors.bin`.
//!
//! `vectors.bin` is a concatenation of little-endian f32 vectors of the
//! store-wide dimension; the manifest lists one record per
//! (term, example, layer) with the byte offset of its vector. Vectors are read
//! lazily on demand and all averaging happens in f64.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT_TAG: &str = "polarstore/1";
pub const DTYPE: &str = "f32le";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const VECTORS_FILE: &str = "vectors.bin";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContextSource {
    Generated,
    Dictionary,
    Reddit,
    None,
    Template,
}

impl ContextSource {
    pub fn name(self) -> &'static str {
        match self {
            ContextSource::Generated => "generated",
            ContextSource::Dictionary => "dictionary",
            ContextSource::Reddit => "reddit",
            ContextSource::None => "none",
            ContextSource::Template => "template",
        }
    }
}

impl fmt::Display for ContextSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ContextSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "generated" => Ok(ContextSource::Generated),
            "dictionary" => Ok(ContextSource::Dictionary),
            "reddit" => Ok(ContextSource::Reddit),
            "none" => Ok(ContextSource::None),
            "template" => Ok(ContextSource::Template),
            other => Err(Error::Validation(format!("unknown context source `{other}`"))),
        }
    }
}

/// One word-level vector for a term in one context example at one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub term: String,
    pub example_id: String,
    pub source: ContextSource,
    /// 0 is the input embedding layer.
    pub layer: usize,
    pub vector: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub term: String,
    pub example_id: String,
    pub source: ContextSource,
    pub layer: usize,
    pub byte_offset: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreManifest {
    pub format_tag: String,
    pub dtype: String,
    pub dim: usize,
    pub layer_count: usize,
    pub model_label: String,
    /// Free-form provenance written by the producer (casing policy, span rule, ...).
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
    pub records: Vec<RecordMeta>,
}

/// Store-wide settings supplied when writing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoreHeader {
    pub model_label: String,
    pub dim: usize,
    pub layer_count: usize,
    pub metadata: BTreeMap<String, String>,
}

impl StoreHeader {
    pub fn new(model_label: impl Into<String>, dim: usize, layer_count: usize) -> Self {
        StoreHeader {
            model_label: model_label.into(),
            dim,
            layer_count,
            metadata: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum LayerSelector {
    /// Flat mean over every (example, layer) pair.
    #[default]
    AllLayersMean,
    SingleLayer(usize),
}

impl LayerSelector {
    fn admits(self, layer: usize) -> bool {
        match self {
            LayerSelector::AllLayersMean => true,
            LayerSelector::SingleLayer(k) => k == layer,
        }
    }
}

impl fmt::Display for LayerSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerSelector::AllLayersMean => f.write_str("all"),
            LayerSelector::SingleLayer(k) => write!(f, "{k}"),
        }
    }
}

impl FromStr for LayerSelector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("all") {
            return Ok(LayerSelector::AllLayersMean);
        }
        s.parse::<usize>()
            .map(LayerSelector::SingleLayer)
            .map_err(|_| Error::Validation(format!("layer selector must be `all` or an index, got `{s}`")))
    }
}

impl Serialize for LayerSelector {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for LayerSelector {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Restricts which context examples contribute to a term vector.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextFilter {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sources: Option<BTreeSet<ContextSource>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub example_ids: Option<BTreeSet<String>>,
}

impl ContextFilter {
    pub fn any() -> Self {
        Self::default()
    }

    pub fn sources(sources: impl IntoIterator<Item = ContextSource>) -> Self {
        ContextFilter {
            sources: Some(sources.into_iter().collect()),
            example_ids: None,
        }
    }

    pub fn is_any(&self) -> bool {
        self.sources.is_none() && self.example_ids.is_none()
    }

    fn admits(&self, meta: &RecordMeta) -> bool {
        self.sources.as_ref().is_none_or(|s| s.contains(&meta.source))
            && self
                .example_ids
                .as_ref()
                .is_none_or(|ids| ids.contains(&meta.example_id))
    }
}

/// Mean vector of a term plus the number of distinct contexts behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct TermVector {
    pub vector: Vec<f64>,
    /// Distinct example ids that contributed.
    pub contexts: usize,
    /// Records averaged (contexts × layers when complete).
    pub records: usize,
}

enum Backing {
    File { path: PathBuf, file: File },
    Memory(Vec<f32>),
}

/// Read-only handle over a `polarstore/1` store, on disk or in memory.
pub struct EmbeddingStore {
    manifest: StoreManifest,
    /// Record indices per term, sorted by (layer, example_id) so that
    /// summation order never depends on manifest order.
    index: HashMap<String, Vec<usize>>,
    backing: Backing,
}

impl fmt::Debug for EmbeddingStore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EmbeddingStore")
            .field("model_label", &self.manifest.model_label)
            .field("dim", &self.manifest.dim)
            .field("layer_count", &self.manifest.layer_count)
            .field("records", &self.manifest.records.len())
            .finish()
    }
}

impl EmbeddingStore {
    /// Opens a store directory, validating the manifest against the blob.
    /// No vector data is read here.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let open_err = |message: String| Error::StoreOpen {
            path: dir.to_path_buf(),
            message,
        };
        if !dir.is_dir() {
            return Err(open_err("not a directory".into()));
        }
        let manifest_path = dir.join(MANIFEST_FILE);
        let vectors_path = dir.join(VECTORS_FILE);
        if !manifest_path.is_file() {
            return Err(open_err(format!("missing {MANIFEST_FILE}")));
        }
        if !vectors_path.is_file() {
            return Err(open_err(format!("missing {VECTORS_FILE}")));
        }
        let text = std::fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let manifest: StoreManifest =
            serde_json::from_str(&text).map_err(|e| Error::json(&manifest_path, e))?;
        let file = File::open(&vectors_path).map_err(|e| Error::io(&vectors_path, e))?;
        let blob_len = file
            .metadata()
            .map_err(|e| Error::io(&vectors_path, e))?
            .len();

        validate_manifest(&manifest, blob_len).map_err(open_err)?;
        let index = build_index(&manifest.records);
        Ok(EmbeddingStore {
            manifest,
            index,
            backing: Backing::File {
                path: vectors_path,
                file,
            },
        })
    }

    /// Builds an in-memory store with the same layout `write_store` would produce.
    pub fn from_records(header: &StoreHeader, records: &[EmbeddingRecord]) -> Result<Self> {
        let manifest = layout_manifest(header, records)?;
        let mut data = Vec::with_capacity(records.len() * header.dim);
        for r in records {
            data.extend_from_slice(&r.vector);
        }
        let index = build_index(&manifest.records);
        Ok(EmbeddingStore {
            manifest,
            index,
            backing: Backing::Memory(data),
        })
    }

    pub fn manifest(&self) -> &StoreManifest {
        &self.manifest
    }

    pub fn dim(&self) -> usize {
        self.manifest.dim
    }

    pub fn layer_count(&self) -> usize {
        self.manifest.layer_count
    }

    pub fn model_label(&self) -> &str {
        &self.manifest.model_label
    }

    pub fn len(&self) -> usize {
        self.manifest.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.records.is_empty()
    }

    pub fn records(&self) -> &[RecordMeta] {
        &self.manifest.records
    }

    pub fn contains_term(&self, term: &str) -> bool {
        self.index.contains_key(term)
    }

    /// Distinct terms, sorted.
    pub fn terms(&self) -> Vec<&str> {
        let mut terms: Vec<&str> = self.index.keys().map(String::as_str).collect();
        terms.sort_unstable();
        terms
    }

    /// Context sources that occur among a term's records.
    pub fn sources_of(&self, term: &str) -> BTreeSet<ContextSource> {
        self.index
            .get(term)
            .map(|ids| ids.iter().map(|&i| self.manifest.records[i].source).collect())
            .unwrap_or_default()
    }

    /// Reads the raw f32 payload of record `i`.
    pub fn read_vector(&self, i: usize) -> Result<Vec<f32>> {
        let dim = self.manifest.dim;
        let meta = self.manifest.records.get(i).ok_or_else(|| {
            Error::Validation(format!("record index {i} out of range ({})", self.len()))
        })?;
        match &self.backing {
            Backing::Memory(data) => Ok(data[i * dim..(i + 1) * dim].to_vec()),
            Backing::File { path, file } => {
                let mut buf = vec![0u8; dim * 4];
                read_at(file, &mut buf, meta.byte_offset).map_err(|e| Error::io(path, e))?;
                Ok(buf
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect())
            }
        }
    }

    pub fn term_vector(&self, term: &str, selector: LayerSelector) -> Result<TermVector> {
        self.term_vector_filtered(term, selector, &ContextFilter::any())
    }

    /// Arithmetic mean of the term's vectors under the selector and filter.
    pub fn term_vector_filtered(
        &self,
        term: &str,
        selector: LayerSelector,
        filter: &ContextFilter,
    ) -> Result<TermVector> {
        if let LayerSelector::SingleLayer(k) = selector {
            if k >= self.layer_count() {
                return Err(Error::LayerOutOfRange {
                    layer: k,
                    layer_count: self.layer_count(),
                });
            }
        }
        let missing = || Error::MissingTerm(term.to_string());
        let ids = self.index.get(term).ok_or_else(missing)?;

        let mut sum = vec![0.0f64; self.dim()];
        let mut examples = HashSet::new();
        let mut n = 0usize;
        for &i in ids {
            let meta = &self.manifest.records[i];
            if !selector.admits(meta.layer) || !filter.admits(meta) {
                continue;
            }
            let v = self.read_vector(i)?;
            for (s, x) in sum.iter_mut().zip(&v) {
                *s += f64::from(*x);
            }
            examples.insert(meta.example_id.as_str());
            n += 1;
        }
        if n == 0 {
            return Err(missing());
        }
        let inv = n as f64;
        sum.iter_mut().for_each(|s| *s /= inv);
        Ok(TermVector {
            vector: sum,
            contexts: examples.len(),
            records: n,
        })
    }
}

#[cfg(unix)]
fn read_at(file: &File, buf: &mut [u8], offset: u64) -> std::io::Result<()> {
    use std::os::unix::fs::FileExt;
    file.read_exact_at(buf, offset)
}

#[cfg(windows)]
fn read_at(file: &File, mut buf: &mut [u8], mut offset: u64) -> std::io::Result<()> {
    use std::os::windows::fs::FileExt;
    while !buf.is_empty() {
        match file.seek_read(buf, offset)? {
            0 => return Err(std::io::ErrorKind::UnexpectedEof.into()),
            n => {
                buf = &mut buf[n..];
                offset += n as u64;
            }
        }
    }
    Ok(())
}

fn build_index(records: &[RecordMeta]) -> HashMap<String, Vec<usize>> {
    let mut index: HashMap<String, Vec<usize>> = HashMap::new();
    for (i, r) in records.iter().enumerate() {
        index.entry(r.term.clone()).or_default().push(i);
    }
    for ids in index.values_mut() {
        ids.sort_by(|&a, &b| {
            let (ra, rb) = (&records[a], &records[b]);
            (ra.layer, &ra.example_id).cmp(&(rb.layer, &rb.example_id))
        });
    }
    index
}

fn validate_manifest(m: &StoreManifest, blob_len: u64) -> std::result::Result<(), String> {
    if m.format_tag != FORMAT_TAG {
        return Err(format!(
            "format tag mismatch: expected `{FORMAT_TAG}`, found `{}`",
            m.format_tag
        ));
    }
    if m.dtype != DTYPE {
        return Err(format!("unsupported dtype `{}` (expected `{DTYPE}`)", m.dtype));
    }
    if m.dim == 0 {
        return Err("dim must be positive".into());
    }
    if m.layer_count == 0 {
        return Err("layer_count must be positive".into());
    }
    let span = (m.dim * 4) as u64;
    let mut keys = HashSet::new();
    for r in &m.records {
        if r.layer >= m.layer_count {
            return Err(format!(
                "record ({}, {}) has layer {} but layer_count is {}",
                r.term, r.example_id, r.layer, m.layer_count
            ));
        }
        if !keys.insert((&r.term, &r.example_id, r.layer)) {
            return Err(format!(
                "duplicate record ({}, {}, layer {})",
                r.term, r.example_id, r.layer
            ));
        }
    }

    let mut order: Vec<&RecordMeta> = m.records.iter().collect();
    order.sort_by_key(|r| r.byte_offset);
    for pair in order.windows(2) {
        if pair[0].byte_offset + span > pair[1].byte_offset {
            return Err(format!(
                "offset overlap: record at byte {} overlaps record at byte {}",
                pair[0].byte_offset, pair[1].byte_offset
            ));
        }
    }
    if let Some(last) = order.last() {
        let end = last.byte_offset + span;
        if end > blob_len {
            return Err(format!(
                "truncated blob: {VECTORS_FILE} has {blob_len} bytes, records need {end}"
            ));
        }
    }
    Ok(())
}

fn layout_manifest(header: &StoreHeader, records: &[EmbeddingRecord]) -> Result<StoreManifest> {
    if header.dim == 0 || header.layer_count == 0 {
        return Err(Error::StoreWrite("dim and layer_count must be positive".into()));
    }
    let span = (header.dim * 4) as u64;
    let mut keys = HashSet::new();
    let mut metas = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        if r.vector.len() != header.dim {
            return Err(Error::StoreWrite(format!(
                "record {i} ({}) has dimension {}, store dimension is {}",
                r.term,
                r.vector.len(),
                header.dim
            )));
        }
        if r.layer >= header.layer_count {
            return Err(Error::StoreWrite(format!(
                "record {i} ({}) has layer {} but layer_count is {}",
                r.term, r.layer, header.layer_count
            )));
        }
        if r.term.is_empty() {
            return Err(Error::StoreWrite(format!("record {i} has an empty term")));
        }
        if r.vector.iter().any(|x| !x.is_finite()) {
            return Err(Error::StoreWrite(format!("record {i} ({}) has non-finite values", r.term)));
        }
        if !keys.insert((&r.term, &r.example_id, r.layer)) {
            return Err(Error::StoreWrite(format!(
                "duplicate record ({}, {}, layer {})",
                r.term, r.example_id, r.layer
            )));
        }
        metas.push(RecordMeta {
            term: r.term.clone(),
            example_id: r.example_id.clone(),
            source: r.source,
            layer: r.layer,
            byte_offset: i as u64 * span,
        });
    }
    Ok(StoreManifest {
        format_tag: FORMAT_TAG.into(),
        dtype: DTYPE.into(),
        dim: header.dim,
        layer_count: header.layer_count,
        model_label: header.model_label.clone(),
        metadata: header.metadata.clone(),
        records: metas,
    })
}

/// Writes `manifest.json` and `vectors.bin` into `dir`, creating it if needed.
pub fn write_store(dir: impl AsRef<Path>, header: &StoreHeader, records: &[EmbeddingRecord]) -> Result<()> {
    let dir = dir.as_ref();
    let manifest = layout_manifest(header, records)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let vectors_path = dir.join(VECTORS_FILE);
    let file = File::create(&vectors_path).map_err(|e| Error::io(&vectors_path, e))?;
    let mut out = BufWriter::new(file);
    for r in records {
        for x in &r.vector {
            out.write_all(&x.to_le_bytes())
                .map_err(|e| Error::io(&vectors_path, e))?;
        }
    }
    out.flush().map_err(|e| Error::io(&vectors_path, e))?;

    let manifest_path = dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::json(&manifest_path, e))?;
    text.push('\n');
    std::fs::write(&manifest_path, text).map_err(|e| Error::io(&manifest_path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(term: &str, ex: &str, layer: usize, v: &[f32]) -> EmbeddingRecord {
        EmbeddingRecord {
            term: term.into(),
            example_id: ex.into(),
            source: ContextSource::Generated,
            layer,
            vector: v.to_vec(),
        }
    }

    #[test]
    fn minimal_store_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let header = StoreHeader::new("toy", 4, 1);
        write_store(dir.path(), &header, &[rec("nice", "e0", 0, &[1.0, 0.0, 0.0, 0.0])]).unwrap();
        let store = EmbeddingStore::open(dir.path()).unwrap();
        assert_eq!(store.len(), 1);
        assert_eq!(store.dim(), 4);
        let tv = store.term_vector("nice", LayerSelector::SingleLayer(0)).unwrap();
        assert_eq!(tv.vector, [1.0, 0.0, 0.0, 0.0]);
        assert_eq!(tv.contexts, 1);
    }

    #[test]
    fn two_point_mean() {
        let header = StoreHeader::new("toy", 2, 1);
        let store = EmbeddingStore::from_records(
            &header,
            &[rec("t", "a", 0, &[1.0, 0.0]), rec("t", "b", 0, &[0.0, 1.0])],
        )
        .unwrap();
        let tv = store.term_vector("t", LayerSelector::SingleLayer(0)).unwrap();
        assert_eq!(tv.vector, [0.5, 0.5]);
        assert_eq!(tv.contexts, 2);
    }

    #[test]
    fn empty_store_is_valid() {
        let dir = tempfile::tempdir().unwrap();
        write_store(dir.path(), &StoreHeader::new("empty", 8, 2), &[]).unwrap();
        let store = EmbeddingStore::open(dir.path()).unwrap();
        assert!(store.is_empty());
        assert!(matches!(
            store.term_vector("x", LayerSelector::AllLayersMean),
            Err(Error::MissingTerm(t)) if t == "x"
        ));
    }

    #[test]
    fn truncated_blob_detected() {
        let dir = tempfile::tempdir().unwrap();
        let header = StoreHeader::new("toy", 4, 1);
        write_store(
            dir.path(),
            &header,
            &[rec("a", "e0", 0, &[1.0; 4]), rec("b", "e0", 0, &[2.0; 4])],
        )
        .unwrap();
        let blob = dir.path().join(VECTORS_FILE);
        let bytes = std::fs::read(&blob).unwrap();
        std::fs::write(&blob, &bytes[..bytes.len() - 1]).unwrap();
        let err = EmbeddingStore::open(dir.path()).unwrap_err();
        assert!(err.to_string().contains("truncated blob"), "{err}");
    }

    #[test]
    fn overlap_and_tag_detected() {
        let dir = tempfile::tempdir().unwrap();
        let header = StoreHeader::new("toy", 4, 1);
        write_store(
            dir.path(),
            &header,
            &[rec("a", "e0", 0, &[1.0; 4]), rec("b", "e0", 0, &[2.0; 4])],
        )
        .unwrap();
        let path = dir.path().join(MANIFEST_FILE);
        let mut m: StoreManifest = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        m.records[1].byte_offset = 8;
        std::fs::write(&path, serde_json::to_string(&m).unwrap()).unwrap();
        let err = EmbeddingStore::open(dir.path()).unwrap_err();
        assert!(err.to_string().contains("offset overlap"), "{err}");

        m.records[1].byte_offset = 16;
        m.format_tag = "polarstore/0".into();
        std::fs::write(&path, serde_json::to_string(&m).unwrap()).unwrap();
        let err = EmbeddingStore::open(dir.path()).unwrap_err();
        assert!(err.to_string().contains("format tag"), "{err}");
    }

    #[test]
    fn missing_files() {
        let dir = tempfile::tempdir().unwrap();
        let err = EmbeddingStore::open(dir.path()).unwrap_err();
        assert!(err.to_string().contains(MANIFEST_FILE));
        assert!(EmbeddingStore::open(dir.path().join("nope")).is_err());
    }

    #[test]
    fn mixed_dimensions_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let header = StoreHeader::new("toy", 2, 1);
        let err = write_store(
            dir.path(),
            &header,
            &[rec("a", "e0", 0, &[1.0, 2.0]), rec("b", "e0", 0, &[1.0, 2.0, 3.0])],
        )
        .unwrap_err();
        assert!(matches!(err, Error::StoreWrite(_)));
    }

    #[test]
    fn selector_and_filter() {
        let header = StoreHeader::new("toy", 1, 2);
        let mut records = vec![
            rec("t", "a", 0, &[1.0]),
            rec("t", "a", 1, &[3.0]),
            rec("t", "b", 0, &[5.0]),
        ];
        records[2].source = ContextSource::Reddit;
        let store = EmbeddingStore::from_records(&header, &records).unwrap();
        let all = store.term_vector("t", LayerSelector::AllLayersMean).unwrap();
        assert_eq!(all.vector, [3.0]);
        assert_eq!((all.contexts, all.records), (2, 3));
        let gen = store
            .term_vector_filtered(
                "t",
                LayerSelector::AllLayersMean,
                &ContextFilter::sources([ContextSource::Generated]),
            )
            .unwrap();
        assert_eq!(gen.vector, [2.0]);
        assert!(matches!(
            store.term_vector("t", LayerSelector::SingleLayer(2)),
            Err(Error::LayerOutOfRange { .. })
        ));
        assert!(matches!(
            store.term_vector_filtered(
                "t",
                LayerSelector::SingleLayer(1),
                &ContextFilter::sources([ContextSource::Reddit])
            ),
            Err(Error::MissingTerm(_))
        ));
    }

    #[test]
    fn selector_parse() {
        assert_eq!("all".parse::<LayerSelector>().unwrap(), LayerSelector::AllLayersMean);
        assert_eq!("3".parse::<LayerSelector>().unwrap(), LayerSelector::SingleLayer(3));
        assert!("x".parse::<LayerSelector>().is_err());
    }
}
