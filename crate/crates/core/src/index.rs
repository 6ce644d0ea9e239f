//! Inverted index over the four keyframe text fields.
//!
//! Documents are appended through an [`IndexWriter`]; nothing becomes visible
//! to readers until [`IndexWriter::commit`] publishes a new immutable
//! [`Snapshot`]. Queries hold an `Arc<Snapshot>` and never observe a
//! half-applied commit.
//!
//! On disk an index is a directory of segment files plus `manifest.json`.
//! Each commit writes the documents added since the previous commit as one
//! segment, then atomically replaces the manifest.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::error::IndexError;
use crate::model::{tokenize, Aspect, Field, KeyframeId, KeyframeRecord};
use crate::ranker::{bm25_idf, bm25_tf, tfidf_idf, Ranker, RankerKind};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// Prefixes shorter than this never expand.
pub const MIN_WILDCARD_PREFIX: usize = 2;
pub const MAX_WILDCARD_EXPANSIONS: usize = 256;

pub type DocOrdinal = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub doc: DocOrdinal,
    pub tf: u32,
}

/// Filterable per-document attributes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocMeta {
    pub id: KeyframeId,
    pub is_bw: bool,
    pub aspect: Aspect,
}

/// Query-side term frequencies, merged and ordered by term.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct QueryTerms(BTreeMap<String, u32>);

impl QueryTerms {
    pub fn new() -> Self {
        Self::default()
    }

    /// Counts whitespace-separated tokens.
    pub fn from_text(text: &str) -> Self {
        let mut q = Self::new();
        for t in tokenize(text) {
            q.add(t, 1);
        }
        q
    }

    pub fn add(&mut self, term: &str, qtf: u32) {
        if qtf > 0 {
            *self.0.entry(term.to_string()).or_insert(0) += qtf;
        }
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u32)> {
        self.0.iter().map(|(t, &f)| (t.as_str(), f))
    }

    pub fn norm(&self) -> f64 {
        self.0.values().map(|&f| (f as f64) * (f as f64)).sum::<f64>().sqrt()
    }
}

impl<S: AsRef<str>> FromIterator<(S, u32)> for QueryTerms {
    fn from_iter<I: IntoIterator<Item = (S, u32)>>(iter: I) -> Self {
        let mut q = QueryTerms::new();
        for (t, f) in iter {
            q.add(t.as_ref(), f);
        }
        q
    }
}

/// Mutable postings for one field.
#[derive(Debug, Clone, Default)]
struct FieldBuilder {
    dict: HashMap<String, u32>,
    terms: Vec<String>,
    postings: Vec<Vec<Posting>>,
    /// Per document `(term id, tf)`, ordered by term id.
    forward: Vec<Vec<(u32, u32)>>,
    doc_len: Vec<u32>,
}

impl FieldBuilder {
    fn add_doc(&mut self, doc: DocOrdinal, text: &str) {
        let mut counts: HashMap<u32, u32> = HashMap::new();
        let mut len = 0u32;
        for token in tokenize(text) {
            let id = match self.dict.get(token) {
                Some(&id) => id,
                None => {
                    let id = self.terms.len() as u32;
                    self.dict.insert(token.to_string(), id);
                    self.terms.push(token.to_string());
                    self.postings.push(Vec::new());
                    id
                }
            };
            *counts.entry(id).or_insert(0) += 1;
            len += 1;
        }
        let mut entries: Vec<(u32, u32)> = counts.into_iter().collect();
        entries.sort_unstable();
        for &(id, tf) in &entries {
            self.postings[id as usize].push(Posting { doc, tf });
        }
        self.forward.push(entries);
        self.doc_len.push(len);
    }

    fn freeze(self, doc_count: u32) -> FieldIndex {
        let mut sorted: Vec<u32> = (0..self.terms.len() as u32).collect();
        sorted.sort_unstable_by(|&a, &b| self.terms[a as usize].cmp(&self.terms[b as usize]));

        let mut tf_sq = vec![0.0f64; self.doc_len.len()];
        let mut tfidf_sq = vec![0.0f64; self.doc_len.len()];
        for list in &self.postings {
            let idf = tfidf_idf(doc_count, list.len() as u32);
            for p in list {
                let tf = p.tf as f64;
                tf_sq[p.doc as usize] += tf * tf;
                tfidf_sq[p.doc as usize] += (tf * idf) * (tf * idf);
            }
        }
        let total_len = self.doc_len.iter().map(|&l| l as u64).sum();
        FieldIndex {
            tf_norm: tf_sq.into_iter().map(f64::sqrt).collect(),
            tfidf_norm: tfidf_sq.into_iter().map(f64::sqrt).collect(),
            sorted,
            total_len,
            data: self,
        }
    }
}

/// Committed postings of one field plus the statistics the rankers use.
#[derive(Debug, Clone)]
pub struct FieldIndex {
    data: FieldBuilder,
    /// Term ids in lexicographic order of their text.
    sorted: Vec<u32>,
    total_len: u64,
    tf_norm: Vec<f64>,
    tfidf_norm: Vec<f64>,
}

impl FieldIndex {
    pub fn postings(&self, term: &str) -> &[Posting] {
        match self.data.dict.get(term) {
            Some(&id) => &self.data.postings[id as usize],
            None => &[],
        }
    }

    pub fn df(&self, term: &str) -> u32 {
        self.postings(term).len() as u32
    }

    pub fn doc_len(&self, doc: DocOrdinal) -> u32 {
        self.data.doc_len[doc as usize]
    }

    pub fn avg_len(&self) -> f64 {
        if self.data.doc_len.is_empty() {
            0.0
        } else {
            self.total_len as f64 / self.data.doc_len.len() as f64
        }
    }

    pub fn term_count(&self) -> usize {
        self.data.terms.len()
    }

    /// Number of `(doc, term)` pairs with a nonzero frequency.
    pub fn nonzero_entries(&self) -> u64 {
        self.data.postings.iter().map(|p| p.len() as u64).sum()
    }

    /// Term frequencies of one document.
    pub fn doc_terms(&self, doc: DocOrdinal) -> impl Iterator<Item = (&str, u32)> {
        self.data.forward[doc as usize]
            .iter()
            .map(|&(id, tf)| (self.data.terms[id as usize].as_str(), tf))
    }

    pub fn contains(&self, term: &str, doc: DocOrdinal) -> bool {
        self.postings(term).binary_search_by_key(&doc, |p| p.doc).is_ok()
    }

    /// Terms starting with `prefix`, by descending document frequency.
    pub fn expand_prefix(&self, prefix: &str) -> Vec<(String, u32)> {
        if prefix.chars().count() < MIN_WILDCARD_PREFIX {
            return Vec::new();
        }
        let terms = &self.data.terms;
        let start = self.sorted.partition_point(|&id| terms[id as usize].as_str() < prefix);
        let mut out: Vec<(String, u32)> = self.sorted[start..]
            .iter()
            .map(|&id| &terms[id as usize])
            .take_while(|t| t.starts_with(prefix))
            .map(|t| (t.clone(), self.df(t)))
            .collect();
        out.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        out.truncate(MAX_WILDCARD_EXPANSIONS);
        out
    }
}

/// An immutable, committed view of the index.
#[derive(Debug, Clone)]
pub struct Snapshot {
    docs: Vec<DocMeta>,
    ids: HashMap<KeyframeId, DocOrdinal>,
    fields: Vec<FieldIndex>,
}

impl Default for Snapshot {
    fn default() -> Self {
        SnapshotBuilder::default().freeze()
    }
}

impl Snapshot {
    /// Builds a committed snapshot directly from records.
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a KeyframeRecord>) -> Result<Self, IndexError> {
        let mut builder = SnapshotBuilder::default();
        for r in records {
            builder.add(r)?;
        }
        Ok(builder.freeze())
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn doc(&self, ord: DocOrdinal) -> &DocMeta {
        &self.docs[ord as usize]
    }

    pub fn docs(&self) -> &[DocMeta] {
        &self.docs
    }

    pub fn ordinal(&self, id: &KeyframeId) -> Option<DocOrdinal> {
        self.ids.get(id).copied()
    }

    pub fn field(&self, field: Field) -> &FieldIndex {
        &self.fields[field.index()]
    }

    pub fn expand_wildcard(&self, field: Field, prefix: &str) -> Vec<(String, u32)> {
        self.field(field).expand_prefix(prefix)
    }

    /// Scores every document that contains at least one query term, sorted by
    /// descending score with ties broken by ordinal.
    pub fn score(&self, field: Field, query: &QueryTerms, ranker: &Ranker) -> Vec<(DocOrdinal, f64)> {
        let mut acc = Accumulator::dense(self.len());
        self.accumulate(field, query, ranker, &mut acc);
        let mut out = acc.into_hits();
        sort_hits(&mut out);
        out
    }

    /// Scores only `candidates`; entries without any query term score 0.
    /// The output is parallel to `candidates`.
    pub fn score_candidates(
        &self,
        field: Field,
        query: &QueryTerms,
        ranker: &Ranker,
        candidates: &[DocOrdinal],
    ) -> Vec<f64> {
        let mut acc = Accumulator::restricted(self.len(), candidates);
        self.accumulate(field, query, ranker, &mut acc);
        acc.into_parallel(candidates)
    }

    fn accumulate(&self, field: Field, query: &QueryTerms, ranker: &Ranker, acc: &mut Accumulator) {
        let index = self.field(field);
        let n = self.len() as u32;
        let query_norm = query.norm();
        let avg_len = index.avg_len();
        for (term, qtf) in query.iter() {
            let postings = index.postings(term);
            if postings.is_empty() {
                continue;
            }
            let qtf = qtf as f64;
            let df = postings.len() as u32;
            match ranker.kind {
                RankerKind::Tf => {
                    for p in postings {
                        acc.add(p.doc, qtf * p.tf as f64);
                    }
                }
                RankerKind::NormTf => {
                    for p in postings {
                        acc.add(p.doc, qtf * p.tf as f64 / (query_norm * index.tf_norm[p.doc as usize]));
                    }
                }
                RankerKind::TfIdf => {
                    let idf = tfidf_idf(n, df);
                    for p in postings {
                        acc.add(p.doc, qtf * p.tf as f64 * idf * idf / index.tfidf_norm[p.doc as usize]);
                    }
                }
                RankerKind::Bm25 => {
                    let idf = bm25_idf(n, df);
                    for p in postings {
                        let len = index.data.doc_len[p.doc as usize];
                        acc.add(p.doc, qtf * idf * bm25_tf(p.tf, len, avg_len, ranker.k1, ranker.b));
                    }
                }
            }
        }
    }

    /// Keeps candidates that satisfy every condition of `filter`, in order.
    pub fn filter(&self, candidates: &[DocOrdinal], filter: &Filter) -> Vec<DocOrdinal> {
        candidates.iter().copied().filter(|&d| self.matches(d, filter)).collect()
    }

    pub fn matches(&self, doc: DocOrdinal, filter: &Filter) -> bool {
        let meta = self.doc(doc);
        if filter.bw.is_some_and(|bw| bw != meta.is_bw) {
            return false;
        }
        if filter.aspect.is_some_and(|a| a != meta.aspect) {
            return false;
        }
        filter.must_have.iter().all(|(f, t)| self.field(*f).contains(t, doc))
            && !filter.must_not.iter().any(|(f, t)| self.field(*f).contains(t, doc))
    }
}

/// Descending score, then ascending ordinal.
pub fn sort_hits(hits: &mut [(DocOrdinal, f64)]) {
    hits.sort_unstable_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
}

/// Score accumulator: a dense array with a touched list, optionally limited
/// to a candidate set.
struct Accumulator {
    scores: Vec<f64>,
    touched: Vec<DocOrdinal>,
    seen: Vec<bool>,
    allowed: Option<Vec<bool>>,
}

impl Accumulator {
    fn dense(n: usize) -> Self {
        Self { scores: vec![0.0; n], touched: Vec::new(), seen: vec![false; n], allowed: None }
    }

    fn restricted(n: usize, candidates: &[DocOrdinal]) -> Self {
        let mut allowed = vec![false; n];
        for &c in candidates {
            allowed[c as usize] = true;
        }
        Self { allowed: Some(allowed), ..Self::dense(n) }
    }

    #[inline]
    fn add(&mut self, doc: DocOrdinal, value: f64) {
        let i = doc as usize;
        if let Some(allowed) = &self.allowed {
            if !allowed[i] {
                return;
            }
        }
        if !self.seen[i] {
            self.seen[i] = true;
            self.touched.push(doc);
        }
        self.scores[i] += value;
    }

    fn into_hits(self) -> Vec<(DocOrdinal, f64)> {
        self.touched.iter().map(|&d| (d, self.scores[d as usize])).collect()
    }

    fn into_parallel(self, candidates: &[DocOrdinal]) -> Vec<f64> {
        candidates.iter().map(|&d| self.scores[d as usize]).collect()
    }
}

/// Term and metadata conditions applied to candidate documents.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Filter {
    pub must_have: Vec<(Field, String)>,
    pub must_not: Vec<(Field, String)>,
    pub bw: Option<bool>,
    pub aspect: Option<Aspect>,
}

impl Filter {
    pub fn is_empty(&self) -> bool {
        self.must_have.is_empty() && self.must_not.is_empty() && self.bw.is_none() && self.aspect.is_none()
    }
}

#[derive(Debug, Clone, Default)]
struct SnapshotBuilder {
    docs: Vec<DocMeta>,
    ids: HashMap<KeyframeId, DocOrdinal>,
    fields: [FieldBuilder; 4],
}

impl SnapshotBuilder {
    fn add(&mut self, record: &KeyframeRecord) -> Result<DocOrdinal, IndexError> {
        if self.ids.contains_key(&record.id) {
            return Err(IndexError::DuplicateId(record.id.clone()));
        }
        let ord = self.docs.len() as DocOrdinal;
        for field in Field::ALL {
            self.fields[field.index()].add_doc(ord, record.field(field));
        }
        self.ids.insert(record.id.clone(), ord);
        self.docs.push(DocMeta { id: record.id.clone(), is_bw: record.is_bw, aspect: record.aspect });
        Ok(ord)
    }

    fn freeze(self) -> Snapshot {
        let n = self.docs.len() as u32;
        Snapshot {
            fields: self.fields.into_iter().map(|f| f.freeze(n)).collect(),
            docs: self.docs,
            ids: self.ids,
        }
    }

    /// Encodes documents `[from, len)` as a standalone segment.
    fn segment(&self, from: usize) -> SegmentData {
        let docs = self.docs[from..].to_vec();
        let fields = self
            .fields
            .iter()
            .map(|f| {
                let mut terms: BTreeMap<&str, Vec<Posting>> = BTreeMap::new();
                for (local, entries) in f.forward[from..].iter().enumerate() {
                    for &(id, tf) in entries {
                        terms
                            .entry(f.terms[id as usize].as_str())
                            .or_default()
                            .push(Posting { doc: local as DocOrdinal, tf });
                    }
                }
                SegmentField {
                    terms: terms.into_iter().map(|(t, p)| (t.to_string(), p)).collect(),
                    doc_len: f.doc_len[from..].to_vec(),
                }
            })
            .collect();
        SegmentData { docs, fields }
    }

    fn append_segment(&mut self, segment: SegmentData) -> Result<(), IndexError> {
        if segment.fields.len() != Field::ALL.len() {
            return Err(IndexError::Corrupt("segment field count".into()));
        }
        let base = self.docs.len() as DocOrdinal;
        let count = segment.docs.len();
        for (i, meta) in segment.docs.into_iter().enumerate() {
            if self.ids.insert(meta.id.clone(), base + i as DocOrdinal).is_some() {
                return Err(IndexError::DuplicateId(meta.id));
            }
            self.docs.push(meta);
        }
        for (builder, seg) in self.fields.iter_mut().zip(segment.fields) {
            if seg.doc_len.len() != count {
                return Err(IndexError::Corrupt("segment doc length count".into()));
            }
            let mut forward: Vec<Vec<(u32, u32)>> = vec![Vec::new(); count];
            for (term, postings) in seg.terms {
                let id = match builder.dict.get(&term) {
                    Some(&id) => id,
                    None => {
                        let id = builder.terms.len() as u32;
                        builder.dict.insert(term.clone(), id);
                        builder.terms.push(term);
                        builder.postings.push(Vec::new());
                        id
                    }
                };
                let mut last = None;
                for p in postings {
                    if p.tf == 0 || (p.doc as usize) >= count || last.is_some_and(|l| p.doc <= l) {
                        return Err(IndexError::Corrupt("posting list out of order".into()));
                    }
                    last = Some(p.doc);
                    builder.postings[id as usize].push(Posting { doc: base + p.doc, tf: p.tf });
                    forward[p.doc as usize].push((id, p.tf));
                }
            }
            for mut entries in forward {
                entries.sort_unstable();
                builder.forward.push(entries);
            }
            builder.doc_len.extend(seg.doc_len);
        }
        Ok(())
    }
}

/// One committed batch of documents, stored with local ordinals.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct SegmentData {
    docs: Vec<DocMeta>,
    /// Indexed by [`Field::index`].
    fields: Vec<SegmentField>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SegmentField {
    /// Sorted term dictionary with postings.
    terms: Vec<(String, Vec<Posting>)>,
    doc_len: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentEntry {
    pub file: String,
    pub doc_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub generation: u64,
    pub doc_count: usize,
    pub segments: Vec<SegmentEntry>,
}

impl Manifest {
    pub fn read(dir: &Path) -> Result<Self, IndexError> {
        let path = dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Err(IndexError::MissingManifest(dir.to_path_buf()));
        }
        let manifest: Manifest = serde_json::from_slice(&fs::read(path)?)?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(IndexError::UnsupportedVersion(manifest.format_version));
        }
        Ok(manifest)
    }
}

/// Writes `bytes` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), std::io::Error> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

/// Loads the committed snapshot of an index directory.
pub fn open(dir: &Path) -> Result<Snapshot, IndexError> {
    let manifest = Manifest::read(dir)?;
    let mut builder = SnapshotBuilder::default();
    for seg in &manifest.segments {
        let data: SegmentData = bincode::deserialize(&fs::read(dir.join(&seg.file))?)?;
        if data.docs.len() != seg.doc_count {
            return Err(IndexError::Corrupt(format!("{} doc count", seg.file)));
        }
        builder.append_segment(data)?;
    }
    if builder.docs.len() != manifest.doc_count {
        return Err(IndexError::Corrupt("manifest doc count".into()));
    }
    Ok(builder.freeze())
}

/// Shared handle to the latest committed snapshot.
#[derive(Debug, Clone, Default)]
pub struct IndexReader {
    current: Arc<RwLock<Arc<Snapshot>>>,
}

impl IndexReader {
    pub fn new(snapshot: Snapshot) -> Self {
        Self { current: Arc::new(RwLock::new(Arc::new(snapshot))) }
    }

    pub fn open(dir: &Path) -> Result<Self, IndexError> {
        Ok(Self::new(open(dir)?))
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.current.read().expect("snapshot lock poisoned").clone()
    }

    fn publish(&self, snapshot: Arc<Snapshot>) {
        *self.current.write().expect("snapshot lock poisoned") = snapshot;
    }
}

/// Single writer. Uncommitted documents are invisible to readers.
#[derive(Debug)]
pub struct IndexWriter {
    dir: Option<PathBuf>,
    builder: SnapshotBuilder,
    committed_docs: usize,
    manifest: Manifest,
    reader: IndexReader,
}

impl IndexWriter {
    /// A writer whose commits only live in memory.
    pub fn in_memory() -> Self {
        Self {
            dir: None,
            builder: SnapshotBuilder::default(),
            committed_docs: 0,
            manifest: Manifest { format_version: FORMAT_VERSION, generation: 0, doc_count: 0, segments: Vec::new() },
            reader: IndexReader::default(),
        }
    }

    /// Creates a new index directory, or continues an existing one.
    pub fn open_dir(dir: &Path) -> Result<Self, IndexError> {
        fs::create_dir_all(dir)?;
        let mut writer = Self::in_memory();
        writer.dir = Some(dir.to_path_buf());
        if dir.join(MANIFEST_FILE).exists() {
            let manifest = Manifest::read(dir)?;
            for seg in &manifest.segments {
                let data: SegmentData = bincode::deserialize(&fs::read(dir.join(&seg.file))?)?;
                writer.builder.append_segment(data)?;
            }
            writer.committed_docs = writer.builder.docs.len();
            writer.manifest = manifest;
            writer.reader.publish(Arc::new(writer.builder.clone().freeze()));
        }
        Ok(writer)
    }

    pub fn reader(&self) -> IndexReader {
        self.reader.clone()
    }

    pub fn pending(&self) -> usize {
        self.builder.docs.len() - self.committed_docs
    }

    pub fn add(&mut self, record: &KeyframeRecord) -> Result<DocOrdinal, IndexError> {
        self.builder.add(record)
    }

    /// Publishes everything added so far. On-disk indexes first write the
    /// new segment, then swap the manifest.
    pub fn commit(&mut self) -> Result<Arc<Snapshot>, IndexError> {
        if let Some(dir) = &self.dir {
            if self.pending() > 0 || self.manifest.generation == 0 {
                let generation = self.manifest.generation + 1;
                let mut next = self.manifest.clone();
                if self.pending() > 0 {
                    let file = format!("seg-{generation:06}.bin");
                    let segment = self.builder.segment(self.committed_docs);
                    write_atomic(&dir.join(&file), &bincode::serialize(&segment)?)?;
                    next.segments.push(SegmentEntry { file, doc_count: self.pending() });
                }
                next.generation = generation;
                next.doc_count = self.builder.docs.len();
                write_atomic(&dir.join(MANIFEST_FILE), &serde_json::to_vec_pretty(&next)?)?;
                self.manifest = next;
            }
        }
        self.committed_docs = self.builder.docs.len();
        let snapshot = Arc::new(self.builder.clone().freeze());
        self.reader.publish(snapshot.clone());
        Ok(snapshot)
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }
}

/// Distinct terms of a field across the whole snapshot.
pub fn vocabulary(snapshot: &Snapshot, field: Field) -> HashSet<&str> {
    snapshot.field(field).data.terms.iter().map(String::as_str).collect()
}
