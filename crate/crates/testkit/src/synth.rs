//! Seeded synthetic corpora and query specs.

use std::collections::BTreeMap;

use kfs_core::annotation::{encode_tags, TagAnnotation};
use kfs_core::color::Palette;
use kfs_core::feature::{EncoderState, FeatureVector};
use kfs_core::model::GRID_SIZE;
use kfs_core::query::{CanvasItem, CanvasKind, QuerySpec};
use kfs_core::spatial::{ColorCellAssignment, Detection, SpatialEncoder};
use kfs_core::{Aspect, BoundingBox, ClassLabel, GridCell, KeyframeId, KeyframeRecord};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n` distinct letter-only names with a prefix: `objaa`, `objab`, ...
pub fn names(prefix: &str, n: usize) -> Vec<String> {
    (0..n)
        .map(|mut i| {
            let mut s = String::new();
            loop {
                s.insert(0, (b'a' + (i % 26) as u8) as char);
                i /= 26;
                if i == 0 {
                    break;
                }
            }
            format!("{prefix}{s:a>2}")
        })
        .collect()
}

/// Small random corpus of word tokens for ranker checks.
pub fn random_docs(rng: &mut impl Rng, max_docs: usize, max_terms: usize) -> (Vec<Vec<String>>, Vec<String>) {
    let vocab: Vec<String> = (0..rng.random_range(1..=max_terms)).map(|i| format!("w{i}x")).collect();
    let docs = (0..rng.random_range(1..=max_docs))
        .map(|_| {
            let len = rng.random_range(0..12);
            (0..len).map(|_| vocab.choose(rng).unwrap().clone()).collect()
        })
        .collect();
    (docs, vocab)
}

pub fn random_box(rng: &mut impl Rng) -> BoundingBox {
    let (w, h) = (rng.random_range(0.02..0.6), rng.random_range(0.02..0.6));
    let (x, y) = (rng.random_range(0.0..1.0 - w), rng.random_range(0.0..1.0 - h));
    BoundingBox::new(x, y, x + w, y + h).unwrap()
}

pub fn standard_normal(rng: &mut impl Rng, dim: usize) -> FeatureVector {
    FeatureVector((0..dim).map(|_| rng.sample(StandardNormal)).collect())
}

#[derive(Debug, Clone)]
pub struct CorpusConfig {
    pub records: usize,
    pub videos: usize,
    pub object_labels: usize,
    pub tag_vocab: usize,
    pub max_detections: usize,
    pub max_tags: usize,
    /// Fraction of frames flagged black and white.
    pub bw_rate: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            records: 1000,
            videos: 50,
            object_labels: 300,
            tag_vocab: 2000,
            max_detections: 6,
            max_tags: 10,
            bw_rate: 0.05,
        }
    }
}

/// Labels, tags and palette colors used by a synthetic corpus.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    pub objects: Vec<String>,
    pub tags: Vec<String>,
    pub colors: Vec<String>,
}

impl Vocabulary {
    pub fn new(config: &CorpusConfig, palette: &Palette) -> Self {
        Self {
            objects: names("obj", config.object_labels),
            tags: names("tag", config.tag_vocab),
            colors: palette.names().map(|n| n.to_string()).collect(),
        }
    }
}

/// Index of a skewed pick: small indices are much more likely.
fn skewed(rng: &mut impl Rng, n: usize) -> usize {
    let u: f64 = rng.random();
    ((u * u * u) * n as f64) as usize % n
}

/// Records built through the real field encoders from random detections,
/// color cells and tags.
pub fn corpus(config: &CorpusConfig, seed: u64) -> (Vec<KeyframeRecord>, Vocabulary) {
    let palette = Palette::default();
    let vocab = Vocabulary::new(config, &palette);
    let mut rng = rng(seed);
    let encoder = SpatialEncoder::default();
    let colors: Vec<ClassLabel> = palette.names().cloned().collect();
    let records = (0..config.records)
        .map(|i| {
            let id = KeyframeId::new(format!("{:05}", i % config.videos), (i / config.videos) as u32);
            let detections: Vec<Detection> = (0..rng.random_range(0..=config.max_detections))
                .map(|_| {
                    let label = ClassLabel::new(&vocab.objects[skewed(&mut rng, vocab.objects.len())]).unwrap();
                    Detection::new(vec![label], random_box(&mut rng), rng.random_range(0.3..1.0))
                })
                .collect();
            // a few dominant colors per frame, spread over the grid
            let frame_colors: Vec<&ClassLabel> = (0..rng.random_range(2..5)).map(|_| colors.choose(&mut rng).unwrap()).collect();
            let cells: Vec<ColorCellAssignment> = (0..GRID_SIZE * GRID_SIZE)
                .map(|k| {
                    let mut picked = vec![(*frame_colors.choose(&mut rng).unwrap()).clone()];
                    if rng.random_bool(0.3) {
                        let extra = (*frame_colors.choose(&mut rng).unwrap()).clone();
                        if extra != picked[0] {
                            picked.push(extra);
                        }
                    }
                    picked.sort();
                    ColorCellAssignment { cell: GridCell::new(k % GRID_SIZE, k / GRID_SIZE).unwrap(), colors: picked }
                })
                .collect();
            let (bboxes, classes) = encoder.encode(&detections, &cells);
            let tags: Vec<TagAnnotation> = (0..rng.random_range(1..=config.max_tags))
                .map(|_| {
                    let tag = ClassLabel::new(&vocab.tags[skewed(&mut rng, vocab.tags.len())]).unwrap();
                    TagAnnotation::new(tag, rng.random_range(0.05..3.0))
                })
                .collect();
            KeyframeRecord {
                scene_tags: encode_tags(&tags).unwrap(),
                objcolor_bboxes: bboxes,
                objcolor_classes: classes,
                visual_features: String::new(),
                is_bw: rng.random_bool(config.bw_rate),
                aspect: if rng.random_bool(0.7) { Aspect::Ar16x9 } else { Aspect::Ar4x3 },
                id,
            }
        })
        .collect();
    (records, vocab)
}

/// Adds encoded random feature vectors to every record; returns the vectors.
pub fn add_features(records: &mut [KeyframeRecord], encoder: &EncoderState, seed: u64) -> Vec<FeatureVector> {
    let mut rng = rng(seed);
    records
        .iter_mut()
        .map(|r| {
            let v = standard_normal(&mut rng, encoder.dim());
            r.visual_features = encoder.encode(&v).unwrap().to_text();
            v
        })
        .collect()
}

/// Random non-similarity spec mixing tags, wildcards, canvas boxes, caps
/// and flags. Always valid.
pub fn random_spec(rng: &mut impl Rng, vocab: &Vocabulary) -> QuerySpec {
    let mut spec = QuerySpec::default();
    let pick_object = |rng: &mut dyn rand::RngCore| vocab.objects[skewed_dyn(rng, vocab.objects.len())].clone();
    for _ in 0..rng.random_range(0..3) {
        let tag = &vocab.tags[skewed(rng, vocab.tags.len())];
        if rng.random_bool(0.25) {
            spec.tags.push(format!("{}*", &tag[..tag.len().min(4)]));
        } else {
            spec.tags.push(tag.clone());
        }
    }
    for _ in 0..rng.random_range(0..4) {
        let (label, kind) = if rng.random_bool(0.7) {
            (pick_object(rng), CanvasKind::Object)
        } else {
            (vocab.colors.choose(rng).unwrap().clone(), CanvasKind::Color)
        };
        spec.canvas.push(CanvasItem { label, bbox: random_box(rng), kind: Some(kind) });
    }
    if spec.tags.is_empty() && spec.canvas.is_empty() {
        spec.canvas.push(CanvasItem { label: pick_object(rng), bbox: random_box(rng), kind: None });
    }
    let mut caps = BTreeMap::new();
    for _ in 0..rng.random_range(0..3) {
        caps.insert(pick_object(rng), rng.random_range(0..3));
    }
    spec.occurrence_caps = caps;
    if rng.random_bool(0.3) {
        spec.flags.bw = Some(rng.random_bool(0.5));
    }
    if rng.random_bool(0.3) {
        spec.flags.aspect = Some(if rng.random_bool(0.5) { Aspect::Ar16x9 } else { Aspect::Ar4x3 });
    }
    spec
}

fn skewed_dyn(rng: &mut dyn rand::RngCore, n: usize) -> usize {
    let u: f64 = rng.random();
    ((u * u * u) * n as f64) as usize % n
}
