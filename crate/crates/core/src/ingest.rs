//! Offline index build from per-source ingest files, and loading a built
//! index back into a query engine.
//!
//! Index directory layout:
//!
//! ```text
//! manifest.json     committed segment list
//! seg-NNNNNN.bin    postings segments
//! encoder.json      feature encoder parameters (absent without vectors)
//! palette.txt       color palette used at ingest
//! service.json      paths the HTTP service needs (image directory)
//! report.json       ingest report
//! ```

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::{info, warn};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::annotation::{encode_tags, TagLine};
use crate::color::{extract_bytes, Palette};
use crate::error::IngestError;
use crate::feature::{mean_sparsity, EncoderState, FeatureVector, SurrogateDocument, VectorLine, DEFAULT_SCALE, DEFAULT_THRESHOLD};
use crate::index::{IndexWriter, Snapshot, MANIFEST_FILE};
use crate::model::{Field, KeyframeId, KeyframeMeta, KeyframeRecord};
use crate::query::Engine;
use crate::spatial::{DetectionLine, HypernymMap, SpatialEncoder, DEFAULT_CONFIDENCE_THRESHOLD};

pub const ENCODER_FILE: &str = "encoder.json";
pub const PALETTE_FILE: &str = "palette.txt";
pub const SERVICE_FILE: &str = "service.json";
pub const REPORT_FILE: &str = "report.json";
pub const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

/// Where the inputs live. Relative paths resolve against the manifest's
/// directory. Only `metadata` is required; it defines the keyframe set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestManifest {
    pub metadata: PathBuf,
    /// Frames at `{images}/{video}/{segment}.{png|jpg|jpeg}`.
    #[serde(default)]
    pub images: Option<PathBuf>,
    #[serde(default)]
    pub detections: Option<PathBuf>,
    #[serde(default)]
    pub tags: Option<PathBuf>,
    #[serde(default)]
    pub vectors: Option<PathBuf>,
    #[serde(default)]
    pub palette: Option<PathBuf>,
    #[serde(default)]
    pub hypernyms: Option<PathBuf>,
    #[serde(default)]
    pub encoder: EncoderSettings,
    #[serde(default = "default_confidence")]
    pub confidence_threshold: f64,
}

fn default_confidence() -> f64 {
    DEFAULT_CONFIDENCE_THRESHOLD
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderSettings {
    pub seed: u64,
    pub threshold: f64,
    pub scale: f64,
    /// Vectors used to fit the mean, taken in id order.
    pub sample_size: usize,
}

impl Default for EncoderSettings {
    fn default() -> Self {
        Self { seed: 42, threshold: DEFAULT_THRESHOLD, scale: DEFAULT_SCALE, sample_size: 100_000 }
    }
}

impl IngestManifest {
    pub fn new(metadata: impl Into<PathBuf>) -> Self {
        Self {
            metadata: metadata.into(),
            images: None,
            detections: None,
            tags: None,
            vectors: None,
            palette: None,
            hypernyms: None,
            encoder: EncoderSettings::default(),
            confidence_threshold: DEFAULT_CONFIDENCE_THRESHOLD,
        }
    }

    /// Reads a manifest and makes its paths absolute.
    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let text = fs::read_to_string(path).map_err(|source| IngestError::Read { path: path.into(), source })?;
        let mut manifest: IngestManifest = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        manifest.resolve(base);
        Ok(manifest)
    }

    pub fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.metadata);
        for p in [&mut self.images, &mut self.detections, &mut self.tags, &mut self.vectors, &mut self.palette, &mut self.hypernyms]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
    }
}

/// Deterministic summary of one build.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub keyframes: usize,
    pub indexed: usize,
    /// Skipped records and unparsable lines, sorted.
    pub failures: Vec<IngestFailure>,
    /// Per source: keyframes without an entry in that source.
    pub missing: BTreeMap<String, usize>,
    /// Per source: entries whose id is not in the metadata.
    pub orphans: BTreeMap<String, usize>,
    pub fields: BTreeMap<String, FieldStats>,
    pub encoder: Option<EncoderSummary>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IngestFailure {
    pub source: String,
    /// Keyframe id, or `line N` when the line could not be parsed.
    pub at: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldStats {
    pub terms: usize,
    pub nonzero: u64,
    pub empty_docs: usize,
    /// `1 - nonzero / (docs * terms)`.
    pub sparsity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderSummary {
    pub dim: usize,
    pub seed: u64,
    pub threshold: f64,
    pub scale: f64,
    pub sample: usize,
    /// Mean fraction of the `2d` codewords absent from a document.
    pub mean_sparsity: f64,
}

/// Settings the HTTP service reads next to the index.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ServiceInfo {
    pub images: Option<PathBuf>,
}

pub fn field_stats(snapshot: &Snapshot) -> BTreeMap<String, FieldStats> {
    Field::ALL
        .iter()
        .map(|&f| {
            let index = snapshot.field(f);
            let cells = snapshot.len() as f64 * index.term_count() as f64;
            let nonzero = index.nonzero_entries();
            let empty_docs = (0..snapshot.len() as u32).filter(|&d| index.doc_len(d) == 0).count();
            let sparsity = if cells > 0.0 { 1.0 - nonzero as f64 / cells } else { 1.0 };
            (f.name().to_string(), FieldStats { terms: index.term_count(), nonzero, empty_docs, sparsity })
        })
        .collect()
}

struct Sources {
    meta: Vec<KeyframeMeta>,
    detections: Option<HashMap<KeyframeId, DetectionLine>>,
    tags: Option<HashMap<KeyframeId, TagLine>>,
    vectors: Option<HashMap<KeyframeId, FeatureVector>>,
}

fn source_label(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

fn open_lines(path: &Path) -> Result<impl Iterator<Item = (usize, Result<String, std::io::Error>)>, IngestError> {
    let file = fs::File::open(path).map_err(|source| IngestError::Read { path: path.into(), source })?;
    Ok(BufReader::new(file).lines().enumerate().map(|(i, l)| (i + 1, l)))
}

/// Parses JSON lines; bad lines are recorded as failures.
fn read_jsonl<T: DeserializeOwned>(path: &Path, source: &str, failures: &mut Vec<IngestFailure>) -> Result<Vec<T>, IngestError> {
    let mut out = Vec::new();
    for (line, text) in open_lines(path)? {
        let text = text.map_err(|source| IngestError::Read { path: path.into(), source })?;
        if text.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&text) {
            Ok(v) => out.push(v),
            Err(e) => failures.push(IngestFailure {
                source: source.into(),
                at: format!("line {line}"),
                reason: e.to_string(),
            }),
        }
    }
    Ok(out)
}

fn read_vectors(path: &Path, source: &str, failures: &mut Vec<IngestFailure>) -> Result<Vec<VectorLine>, IngestError> {
    let mut out = Vec::new();
    for (line, text) in open_lines(path)? {
        let text = text.map_err(|source| IngestError::Read { path: path.into(), source })?;
        if text.trim().is_empty() {
            continue;
        }
        match text.parse::<VectorLine>() {
            Ok(v) => out.push(v),
            Err(reason) => failures.push(IngestFailure { source: source.into(), at: format!("line {line}"), reason }),
        }
    }
    Ok(out)
}

/// Keys entries by id; later duplicates are failures.
fn keyed<T>(
    entries: Vec<T>,
    id: impl Fn(&T) -> &KeyframeId,
    source: &str,
    failures: &mut Vec<IngestFailure>,
) -> HashMap<KeyframeId, T> {
    let mut map = HashMap::new();
    for e in entries {
        let key = id(&e).clone();
        match map.entry(key) {
            std::collections::hash_map::Entry::Occupied(o) => failures.push(IngestFailure {
                source: source.into(),
                at: o.key().to_string(),
                reason: "duplicate id".into(),
            }),
            std::collections::hash_map::Entry::Vacant(v) => {
                v.insert(e);
            }
        }
    }
    map
}

fn find_image(dir: &Path, id: &KeyframeId) -> Option<PathBuf> {
    IMAGE_EXTENSIONS
        .iter()
        .map(|ext| dir.join(&id.video).join(format!("{}.{ext}", id.segment)))
        .find(|p| p.is_file())
}

pub fn image_path(dir: &Path, id: &KeyframeId) -> Option<PathBuf> {
    find_image(dir, id)
}

enum Outcome {
    Indexed(Box<KeyframeRecord>, Option<SurrogateDocument>, Vec<&'static str>),
    Skipped(IngestFailure),
}

struct Build<'a> {
    manifest: &'a IngestManifest,
    palette: &'a Palette,
    spatial: SpatialEncoder,
    encoder: Option<EncoderState>,
}

impl Build<'_> {
    fn record(&self, meta: &KeyframeMeta, sources: &Sources) -> Outcome {
        let id = &meta.id;
        let skip = |source: &str, reason: String| {
            Outcome::Skipped(IngestFailure { source: source.into(), at: id.to_string(), reason })
        };
        let mut missing = Vec::new();
        let mut record = KeyframeRecord::empty(id.clone(), meta.aspect());

        let mut colors = Vec::new();
        let mut image_bw = None;
        if let Some(dir) = &self.manifest.images {
            match find_image(dir, id) {
                Some(path) => {
                    let bytes = match fs::read(&path) {
                        Ok(b) => b,
                        Err(e) => return skip("images", e.to_string()),
                    };
                    match extract_bytes(&bytes, self.palette) {
                        Ok(x) => {
                            colors = x.cells;
                            image_bw = Some(x.is_bw);
                        }
                        Err(e) => return skip("images", e.to_string()),
                    }
                }
                None => missing.push("images"),
            }
        }
        record.is_bw = meta.is_bw.or(image_bw).unwrap_or(false);

        let mut detections = Vec::new();
        if let Some(map) = &sources.detections {
            match map.get(id) {
                Some(line) => {
                    for raw in &line.detections {
                        match raw.to_detection() {
                            Ok(d) => detections.push(d),
                            Err(e) => return skip("detections", e.to_string()),
                        }
                    }
                }
                None => missing.push("detections"),
            }
        }
        let (bboxes, classes) = self.spatial.encode(&detections, &colors);
        record.objcolor_bboxes = bboxes;
        record.objcolor_classes = classes;

        if let Some(map) = &sources.tags {
            match map.get(id) {
                Some(line) => match encode_tags(&line.tags) {
                    Ok(text) => record.scene_tags = text,
                    Err(e) => return skip("tags", e.to_string()),
                },
                None => missing.push("tags"),
            }
        }

        let mut features = None;
        if let Some(map) = &sources.vectors {
            match (map.get(id), &self.encoder) {
                (Some(v), Some(encoder)) => match encoder.encode(v) {
                    Ok(doc) => {
                        record.visual_features = doc.to_text();
                        features = Some(doc);
                    }
                    Err(e) => return skip("vectors", e.to_string()),
                },
                _ => missing.push("vectors"),
            }
        }
        Outcome::Indexed(Box::new(record), features, missing)
    }
}

/// Builds a new index at `out`. Refuses to touch a directory that already
/// holds an index unless `overwrite` is set.
pub fn build_index(manifest: &IngestManifest, out: &Path, overwrite: bool) -> Result<IngestReport, IngestError> {
    if out.join(MANIFEST_FILE).exists() {
        if !overwrite {
            return Err(IngestError::OutputExists(out.to_path_buf()));
        }
        clear_index_dir(out)?;
    }
    let mut failures = Vec::new();
    let mut report = IngestReport::default();

    let palette = match &manifest.palette {
        Some(p) => Palette::load(p)?,
        None => Palette::default(),
    };
    let hypernyms: HypernymMap = match &manifest.hypernyms {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|source| IngestError::Read { path: p.clone(), source })?;
            serde_json::from_str(&text)?
        }
        None => HypernymMap::default(),
    };

    let meta_entries: Vec<KeyframeMeta> = read_jsonl(&manifest.metadata, "metadata", &mut failures)?;
    let meta_map = keyed(meta_entries, |m| &m.id, "metadata", &mut failures);
    let mut meta: Vec<KeyframeMeta> = meta_map.into_values().collect();
    meta.sort_by(|a, b| a.id.cmp(&b.id));
    report.keyframes = meta.len();
    let known: std::collections::HashSet<&KeyframeId> = meta.iter().map(|m| &m.id).collect();

    let mut orphans = BTreeMap::new();
    let mut count_orphans = |name: &str, ids: &mut dyn Iterator<Item = &KeyframeId>| {
        orphans.insert(name.to_string(), ids.filter(|id| !known.contains(id)).count());
    };

    let detections = match &manifest.detections {
        Some(p) => {
            let lines: Vec<DetectionLine> = read_jsonl(p, "detections", &mut failures)?;
            let map = keyed(lines, |l| &l.id, "detections", &mut failures);
            count_orphans("detections", &mut map.keys());
            Some(map)
        }
        None => None,
    };
    let tags = match &manifest.tags {
        Some(p) => {
            let lines: Vec<TagLine> = read_jsonl(p, "tags", &mut failures)?;
            let map = keyed(lines, |l| &l.id, "tags", &mut failures);
            count_orphans("tags", &mut map.keys());
            Some(map)
        }
        None => None,
    };
    let vectors = match &manifest.vectors {
        Some(p) => {
            let lines = read_vectors(p, "vectors", &mut failures)?;
            let map = keyed(lines, |l| &l.id, "vectors", &mut failures);
            count_orphans("vectors", &mut map.keys());
            Some(map.into_iter().map(|(k, v)| (k, v.vector)).collect::<HashMap<_, _>>())
        }
        None => None,
    };
    report.orphans = orphans;

    let encoder = match &vectors {
        Some(map) if !map.is_empty() => {
            let s = manifest.encoder;
            let sample: Vec<FeatureVector> = meta
                .iter()
                .filter_map(|m| map.get(&m.id))
                .take(s.sample_size.max(1))
                .cloned()
                .collect();
            if sample.is_empty() {
                None
            } else {
                // the first vector fixes the dimension; others are checked per record
                let dim = sample[0].dim();
                let sample: Vec<_> = sample.into_iter().filter(|v| v.dim() == dim).collect();
                let encoder = EncoderState::fit(&sample, s.seed, s.threshold, s.scale)?;
                report.encoder = Some(EncoderSummary {
                    dim,
                    seed: s.seed,
                    threshold: s.threshold,
                    scale: s.scale,
                    sample: sample.len(),
                    mean_sparsity: 0.0,
                });
                Some(encoder)
            }
        }
        _ => None,
    };

    let sources = Sources { meta, detections, tags, vectors };
    let build = Build {
        manifest,
        palette: &palette,
        spatial: SpatialEncoder { confidence_threshold: manifest.confidence_threshold, hypernyms },
        encoder,
    };
    let outcomes: Vec<Outcome> = sources.meta.par_iter().map(|m| build.record(m, &sources)).collect();

    fs::create_dir_all(out)?;
    let mut writer = IndexWriter::open_dir(out)?;
    let mut missing: BTreeMap<String, usize> = BTreeMap::new();
    let mut feature_docs: Vec<SurrogateDocument> = Vec::new();
    for outcome in outcomes {
        match outcome {
            Outcome::Indexed(record, features, absent) => {
                for source in absent {
                    *missing.entry(source.to_string()).or_insert(0) += 1;
                }
                feature_docs.extend(features);
                writer.add(&record)?;
            }
            Outcome::Skipped(f) => {
                warn!("skipping {} ({}): {}", f.at, f.source, f.reason);
                failures.push(f);
            }
        }
    }
    if writer.pending() == 0 {
        return Err(IngestError::NothingIndexed);
    }
    let snapshot = writer.commit()?;
    report.indexed = snapshot.len();
    report.missing = missing;
    report.fields = field_stats(&snapshot);
    if let (Some(summary), Some(encoder)) = (report.encoder.as_mut(), &build.encoder) {
        summary.mean_sparsity = mean_sparsity(&feature_docs, encoder.dim());
        fs::write(out.join(ENCODER_FILE), encoder.to_json())?;
    }
    failures.sort();
    report.failures = failures;

    fs::write(out.join(PALETTE_FILE), palette.to_text())?;
    let service = ServiceInfo { images: manifest.images.clone() };
    fs::write(out.join(SERVICE_FILE), serde_json::to_vec_pretty(&service)?)?;
    fs::write(out.join(REPORT_FILE), serde_json::to_vec_pretty(&report)?)?;
    info!("indexed {} of {} keyframes, {} failures", report.indexed, report.keyframes, report.failures.len());
    Ok(report)
}

fn clear_index_dir(dir: &Path) -> Result<(), IngestError> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let name = source_label(&path);
        let ours = [MANIFEST_FILE, ENCODER_FILE, PALETTE_FILE, SERVICE_FILE, REPORT_FILE].contains(&name.as_str())
            || (name.starts_with("seg-") && (name.ends_with(".bin") || name.ends_with(".tmp")));
        if ours {
            fs::remove_file(path)?;
        }
    }
    Ok(())
}

/// A built index with everything needed to answer queries.
#[derive(Debug, Clone)]
pub struct LoadedIndex {
    pub dir: PathBuf,
    pub snapshot: Arc<Snapshot>,
    pub palette: Arc<Palette>,
    pub encoder: Option<Arc<EncoderState>>,
    pub service: ServiceInfo,
}

impl LoadedIndex {
    pub fn open(dir: &Path) -> Result<Self, IngestError> {
        let snapshot = Arc::new(crate::index::open(dir)?);
        let palette_path = dir.join(PALETTE_FILE);
        let palette = if palette_path.exists() { Palette::load(&palette_path)? } else { Palette::default() };
        let encoder_path = dir.join(ENCODER_FILE);
        let encoder = if encoder_path.exists() {
            let text = fs::read_to_string(&encoder_path)?;
            Some(Arc::new(EncoderState::from_json(&text)?))
        } else {
            None
        };
        let service_path = dir.join(SERVICE_FILE);
        let service = if service_path.exists() {
            serde_json::from_slice(&fs::read(service_path)?)?
        } else {
            ServiceInfo::default()
        };
        Ok(Self { dir: dir.to_path_buf(), snapshot, palette: Arc::new(palette), encoder, service })
    }

    pub fn engine(&self) -> Engine {
        let engine = Engine::new(self.snapshot.clone(), self.palette.clone());
        match &self.encoder {
            Some(e) => engine.with_encoder(e.clone()),
            None => engine,
        }
    }
}
