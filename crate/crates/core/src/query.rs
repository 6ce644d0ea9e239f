//! Query specs, compilation into per-field subqueries, and the cascade:
//! object-class search selects candidates, tag and location searches only
//! rescore them.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::color::Palette;
use crate::error::QueryError;
use crate::feature::{EncoderState, FeatureVector};
use crate::index::{sort_hits, DocOrdinal, Filter, QueryTerms, Snapshot};
use crate::model::{
    cells_covered, occurrence_token, Aspect, BoundingBox, ClassLabel, Field, KeyframeId,
};
use crate::ranker::{Ranker, RankerKind};
use crate::spatial::{encode_bboxes, encode_classes, ColorCellAssignment, Detection};

pub const SPEC_VERSION: u32 = 1;
pub const DEFAULT_RESCORE_WINDOW: usize = 10_000;
pub const DEFAULT_PAGE_SIZE: usize = 100;

/// What the user asked for. JSON contract shared with UI clients and logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuerySpec {
    #[serde(default = "spec_version")]
    pub version: u32,
    /// Exact tags, or prefixes ending in `*`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tags: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub canvas: Vec<CanvasItem>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub occurrence_caps: BTreeMap<String, u32>,
    #[serde(default, skip_serializing_if = "Flags::is_empty")]
    pub flags: Flags,
    /// Similarity mode: every other field must be empty.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub example_id: Option<KeyframeId>,
}

fn spec_version() -> u32 {
    SPEC_VERSION
}

impl Default for QuerySpec {
    fn default() -> Self {
        Self {
            version: SPEC_VERSION,
            tags: Vec::new(),
            canvas: Vec::new(),
            occurrence_caps: BTreeMap::new(),
            flags: Flags::default(),
            example_id: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CanvasItem {
    pub label: String,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    /// Inferred from the palette when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<CanvasKind>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CanvasKind {
    Object,
    Color,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Flags {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bw: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aspect: Option<Aspect>,
}

impl Flags {
    pub fn is_empty(&self) -> bool {
        self.bw.is_none() && self.aspect.is_none()
    }
}

impl QuerySpec {
    pub fn tags<S: Into<String>>(tags: impl IntoIterator<Item = S>) -> Self {
        Self { tags: tags.into_iter().map(Into::into).collect(), ..Self::default() }
    }

    pub fn similar_to(id: KeyframeId) -> Self {
        Self { example_id: Some(id), ..Self::default() }
    }

    pub fn with_box(mut self, label: &str, bbox: BoundingBox) -> Self {
        self.canvas.push(CanvasItem { label: label.to_string(), bbox, kind: None });
        self
    }

    pub fn is_similarity(&self) -> bool {
        self.example_id.is_some()
    }

    pub fn validate(&self) -> Result<(), QueryError> {
        if self.version != SPEC_VERSION {
            return Err(QueryError::InvalidSpec(format!("unsupported version {}", self.version)));
        }
        if self.is_similarity() {
            if !self.tags.is_empty() || !self.canvas.is_empty() || !self.occurrence_caps.is_empty() || !self.flags.is_empty() {
                return Err(QueryError::InvalidSpec("example_id excludes every other field".into()));
            }
            return Ok(());
        }
        if self.tags.iter().all(|t| t.trim().is_empty()) && self.canvas.is_empty() {
            return Err(QueryError::EmptySpec);
        }
        Ok(())
    }
}

/// Rankers for the location, tag and object-class fields, written
/// `R_BB-R_AN-R_OC`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankerTriple {
    pub r_bb: Ranker,
    pub r_an: Ranker,
    pub r_oc: Ranker,
}

impl RankerTriple {
    pub fn new(r_bb: RankerKind, r_an: RankerKind, r_oc: RankerKind) -> Self {
        Self { r_bb: r_bb.into(), r_an: r_an.into(), r_oc: r_oc.into() }
    }

    /// All 64 combinations, `r_bb` varying slowest.
    pub fn all() -> Vec<RankerTriple> {
        let mut out = Vec::with_capacity(64);
        for bb in RankerKind::ALL {
            for an in RankerKind::ALL {
                for oc in RankerKind::ALL {
                    out.push(RankerTriple::new(bb, an, oc));
                }
            }
        }
        out
    }
}

impl Default for RankerTriple {
    fn default() -> Self {
        RankerTriple::new(RankerKind::NormTf, RankerKind::Bm25, RankerKind::Tf)
    }
}

impl fmt::Display for RankerTriple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}-{}", self.r_bb, self.r_an, self.r_oc)
    }
}

impl FromStr for RankerTriple {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.trim().split('-').collect();
        let [bb, an, oc] = parts.as_slice() else {
            return Err(format!("ranker triple `{s}` must look like NormTF-BM25-TF"));
        };
        Ok(RankerTriple::new(bb.parse()?, an.parse()?, oc.parse()?))
    }
}

impl Serialize for RankerTriple {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for RankerTriple {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        String::deserialize(deserializer)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Relative weight of each stage in the fused score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionWeights {
    pub oc: f64,
    pub an: f64,
    pub bb: f64,
}

impl Default for FusionWeights {
    fn default() -> Self {
        Self { oc: 1.0, an: 1.0, bb: 2.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueryConfig {
    pub weights: FusionWeights,
    pub rescore_window: usize,
}

impl Default for QueryConfig {
    fn default() -> Self {
        Self { weights: FusionWeights::default(), rescore_window: DEFAULT_RESCORE_WINDOW }
    }
}

/// Per-field term vectors and filters derived from a spec.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CompiledQuery {
    pub oclass: QueryTerms,
    pub annotation: QueryTerms,
    pub bbox: QueryTerms,
    pub filter: Filter,
    /// True when the spec had tags, even if none of them matched the vocabulary.
    pub has_tags: bool,
}

impl CompiledQuery {
    pub fn has_canvas(&self) -> bool {
        !self.oclass.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub id: KeyframeId,
    pub score: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultPage {
    pub hits: Vec<Hit>,
    /// Matches before truncation to the page size.
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoGroup {
    pub video: String,
    pub hits: Vec<Hit>,
}

impl ResultPage {
    pub fn ids(&self) -> impl Iterator<Item = &KeyframeId> {
        self.hits.iter().map(|h| &h.id)
    }

    /// Groups by video in order of each video's best hit, keeping the
    /// order within each group.
    pub fn group_by_video(&self) -> Vec<VideoGroup> {
        let mut groups: Vec<VideoGroup> = Vec::new();
        let mut slot: std::collections::HashMap<&str, usize> = std::collections::HashMap::new();
        for hit in &self.hits {
            let i = *slot.entry(hit.id.video.as_str()).or_insert_with(|| {
                groups.push(VideoGroup { video: hit.id.video.clone(), hits: Vec::new() });
                groups.len() - 1
            });
            groups[i].hits.push(hit.clone());
        }
        groups
    }
}

/// Full cascade output, before paging.
#[derive(Debug, Clone, PartialEq)]
pub struct Execution {
    /// Stage-one candidates in stage-one order.
    pub candidates: Vec<DocOrdinal>,
    /// Final ranking; always a permutation of `candidates`.
    pub ranked: Vec<(DocOrdinal, f64)>,
}

/// Reference to the example of a similarity query.
#[derive(Debug, Clone, PartialEq)]
pub enum SimilarQuery {
    Id(KeyframeId),
    Vector(FeatureVector),
}

/// Read-only query executor over one committed snapshot.
#[derive(Debug, Clone)]
pub struct Engine {
    snapshot: Arc<Snapshot>,
    palette: Arc<Palette>,
    encoder: Option<Arc<EncoderState>>,
    config: QueryConfig,
}

impl Engine {
    pub fn new(snapshot: Arc<Snapshot>, palette: Arc<Palette>) -> Self {
        Self { snapshot, palette, encoder: None, config: QueryConfig::default() }
    }

    pub fn with_encoder(mut self, encoder: Arc<EncoderState>) -> Self {
        self.encoder = Some(encoder);
        self
    }

    pub fn with_config(mut self, config: QueryConfig) -> Self {
        self.config = config;
        self
    }

    pub fn snapshot(&self) -> &Arc<Snapshot> {
        &self.snapshot
    }

    pub fn palette(&self) -> &Palette {
        &self.palette
    }

    pub fn config(&self) -> &QueryConfig {
        &self.config
    }

    pub fn compile(&self, spec: &QuerySpec) -> Result<CompiledQuery, QueryError> {
        spec.validate()?;
        if spec.is_similarity() {
            return Err(QueryError::InvalidSpec("similarity spec has no subqueries".into()));
        }
        let mut out = CompiledQuery::default();

        for raw in &spec.tags {
            let raw = raw.trim();
            if raw.is_empty() {
                continue;
            }
            out.has_tags = true;
            if let Some(prefix) = raw.strip_suffix('*') {
                let prefix = normalize_prefix(prefix);
                for (term, _) in self.snapshot.expand_wildcard(Field::SceneTags, &prefix) {
                    out.annotation.add(&term, 1);
                }
            } else {
                out.annotation.add(label(raw)?.as_str(), 1);
            }
        }

        let mut objects = Vec::new();
        let mut colors = Vec::new();
        let mut color_cells = Vec::new();
        for item in &spec.canvas {
            let name = label(&item.label)?;
            let kind = item.kind.unwrap_or(if self.palette.contains(&name) {
                CanvasKind::Color
            } else {
                CanvasKind::Object
            });
            match kind {
                CanvasKind::Object => objects.push(Detection::new(vec![name], item.bbox, 1.0)),
                CanvasKind::Color => {
                    for cell in cells_covered(&item.bbox) {
                        color_cells.push(ColorCellAssignment { cell, colors: vec![name.clone()] });
                    }
                    colors.push(name);
                }
            }
        }
        out.bbox = QueryTerms::from_text(&encode_bboxes(&objects, &color_cells));
        out.oclass = QueryTerms::from_text(&encode_classes(&objects, &colors));

        for (raw, &cap) in &spec.occurrence_caps {
            let name = label(raw)?;
            out.filter.must_not.push((Field::ObjcolorClasses, occurrence_token(&name, cap + 1)));
        }
        out.filter.bw = spec.flags.bw;
        out.filter.aspect = spec.flags.aspect;
        Ok(out)
    }

    /// Runs the cascade and returns the first `page_size` hits.
    pub fn execute(&self, spec: &QuerySpec, triple: &RankerTriple, page_size: usize) -> Result<ResultPage, QueryError> {
        if let Some(id) = &spec.example_id {
            spec.validate()?;
            return self.similar(&SimilarQuery::Id(id.clone()), page_size);
        }
        let compiled = self.compile(spec)?;
        let run = self.run(&compiled, triple);
        Ok(self.page(&run.ranked, page_size))
    }

    pub fn run(&self, q: &CompiledQuery, triple: &RankerTriple) -> Execution {
        let snapshot = &self.snapshot;
        if !q.has_canvas() {
            let hits = snapshot.score(Field::SceneTags, &q.annotation, &triple.r_an);
            let ranked: Vec<_> = if q.filter.is_empty() {
                hits
            } else {
                hits.into_iter().filter(|&(d, _)| snapshot.matches(d, &q.filter)).collect()
            };
            return Execution { candidates: ranked.iter().map(|h| h.0).collect(), ranked };
        }

        let stage1: Vec<(DocOrdinal, f64)> = snapshot
            .score(Field::ObjcolorClasses, &q.oclass, &triple.r_oc)
            .into_iter()
            .filter(|&(d, _)| snapshot.matches(d, &q.filter))
            .collect();
        let candidates: Vec<DocOrdinal> = stage1.iter().map(|h| h.0).collect();

        let window = stage1.len().min(self.config.rescore_window);
        let docs = &candidates[..window];
        let w = self.config.weights;
        let mut fused: Vec<f64> = normalized(stage1[..window].iter().map(|h| h.1)).map(|s| w.oc * s).collect();
        if q.has_tags && !q.annotation.is_empty() {
            let scores = snapshot.score_candidates(Field::SceneTags, &q.annotation, &triple.r_an, docs);
            for (f, s) in fused.iter_mut().zip(normalized(scores.into_iter())) {
                *f += w.an * s;
            }
        }
        if !q.bbox.is_empty() {
            let scores = snapshot.score_candidates(Field::ObjcolorBboxes, &q.bbox, &triple.r_bb, docs);
            for (f, s) in fused.iter_mut().zip(normalized(scores.into_iter())) {
                *f += w.bb * s;
            }
        }

        let mut order: Vec<usize> = (0..window).collect();
        // stable: equal fused scores keep stage-one rank
        order.sort_by(|&a, &b| fused[b].total_cmp(&fused[a]));
        let mut ranked: Vec<(DocOrdinal, f64)> = order.into_iter().map(|i| (docs[i], fused[i])).collect();
        ranked.extend(candidates[window..].iter().map(|&d| (d, 0.0)));
        Execution { candidates, ranked }
    }

    /// Top-`k` keyframes by TF score of surrogate feature documents, ties
    /// by id. Keyframes without features never appear.
    pub fn similar(&self, query: &SimilarQuery, k: usize) -> Result<ResultPage, QueryError> {
        let snapshot = &self.snapshot;
        let terms: QueryTerms = match query {
            SimilarQuery::Id(id) => {
                let ord = snapshot.ordinal(id).ok_or_else(|| QueryError::UnknownId(id.clone()))?;
                snapshot.field(Field::VisualFeatures).doc_terms(ord).collect()
            }
            SimilarQuery::Vector(v) => {
                let encoder = self.encoder.as_ref().ok_or(QueryError::NoEncoder)?;
                encoder.encode(v)?.terms().collect()
            }
        };
        let features = snapshot.field(Field::VisualFeatures);
        let candidates: Vec<DocOrdinal> =
            (0..snapshot.len() as DocOrdinal).filter(|&d| features.doc_len(d) > 0).collect();
        let scores = snapshot.score_candidates(Field::VisualFeatures, &terms, &Ranker::new(RankerKind::Tf), &candidates);
        let mut hits: Vec<(DocOrdinal, f64)> = candidates.into_iter().zip(scores).collect();
        let total = hits.len();
        let by_score_then_id = |a: &(DocOrdinal, f64), b: &(DocOrdinal, f64)| {
            b.1.total_cmp(&a.1).then_with(|| snapshot.doc(a.0).id.cmp(&snapshot.doc(b.0).id))
        };
        if k < hits.len() && k > 0 {
            hits.select_nth_unstable_by(k - 1, by_score_then_id);
            hits.truncate(k);
        }
        hits.sort_by(by_score_then_id);
        hits.truncate(k);
        let mut page = self.page(&hits, k);
        page.total = total;
        Ok(page)
    }

    fn page(&self, ranked: &[(DocOrdinal, f64)], page_size: usize) -> ResultPage {
        ResultPage {
            hits: ranked
                .iter()
                .take(page_size)
                .map(|&(d, score)| Hit { id: self.snapshot.doc(d).id.clone(), score })
                .collect(),
            total: ranked.len(),
        }
    }

    /// Plain single-field scoring, exposed for diagnostics.
    pub fn score_field(&self, field: Field, terms: &QueryTerms, ranker: &Ranker) -> Vec<(DocOrdinal, f64)> {
        let mut hits = self.snapshot.score(field, terms, ranker);
        sort_hits(&mut hits);
        hits
    }
}

fn label(raw: &str) -> Result<ClassLabel, QueryError> {
    ClassLabel::new(raw).map_err(|e| QueryError::InvalidSpec(e.to_string()))
}

/// Same character rules as labels, without the trailing-digit guard.
pub fn normalize_prefix(raw: &str) -> String {
    raw.chars()
        .flat_map(char::to_lowercase)
        .filter(|c| c.is_ascii_lowercase() || c.is_ascii_digit())
        .collect()
}

/// Parses cap text such as `1 person 3 car 0 dog`: repeated `<count> <label>`
/// pairs. A label given twice keeps the last count.
pub fn parse_caps(text: &str) -> Result<BTreeMap<String, u32>, QueryError> {
    let words: Vec<&str> = text.split_whitespace().collect();
    if !words.len().is_multiple_of(2) {
        return Err(QueryError::InvalidSpec(format!("caps `{text}`: expected `<count> <label>` pairs")));
    }
    let mut caps = BTreeMap::new();
    for pair in words.chunks(2) {
        let n: u32 = pair[0]
            .parse()
            .map_err(|_| QueryError::InvalidSpec(format!("caps: `{}` is not a count", pair[0])))?;
        caps.insert(label(pair[1])?.as_str().to_string(), n);
    }
    Ok(caps)
}

/// Divides by the maximum; all zeros when the maximum is not positive.
fn normalized(scores: impl Iterator<Item = f64> + Clone) -> impl Iterator<Item = f64> {
    let max = scores.clone().fold(0.0f64, f64::max);
    scores.map(move |s| if max > 0.0 { s / max } else { 0.0 })
}
