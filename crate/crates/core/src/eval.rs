//! Query-log replay: reciprocal ranks, MRR and MRR@k over every ranker triple.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::io::BufRead;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::EvalError;
use crate::model::KeyframeId;
use crate::query::{Engine, QuerySpec, RankerTriple};

pub const DEFAULT_K_LIST: [usize; 7] = [1, 5, 10, 25, 50, 100, 1000];
pub const EVAL_PAGE_SIZE: usize = 1000;

/// Published figures from the original study, on a corpus and log that are
/// not available here. Printed for context only.
pub const REFERENCE_NOTE: &str = "reference (original study, different corpus, not comparable): \
best MRR 0.023 NormTF-BM25-TF, worst 0.004 BM25-NormTF-BM25";

/// One logged query with the keyframes of its target clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedQuery {
    pub query: QuerySpec,
    #[serde(alias = "ground_truth")]
    pub truth: Vec<KeyframeId>,
}

impl LoggedQuery {
    pub fn truth_set(&self) -> HashSet<&KeyframeId> {
        self.truth.iter().collect()
    }
}

/// Reads one JSON object per line; blank lines and `#` comments are skipped.
pub fn read_log(reader: impl BufRead) -> Result<Vec<LoggedQuery>, EvalError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let entry: LoggedQuery =
            serde_json::from_str(text).map_err(|source| EvalError::LogSyntax { line: i + 1, source })?;
        if entry.truth.is_empty() {
            return Err(EvalError::InvalidEntry { line: i + 1, reason: "empty truth".into() });
        }
        out.push(entry);
    }
    Ok(out)
}

pub fn write_log(queries: &[LoggedQuery]) -> String {
    let mut out = String::new();
    for q in queries {
        out.push_str(&serde_json::to_string(q).expect("log entries serialize"));
        out.push('\n');
    }
    out
}

/// Placeholder for importing competition server logs, whose format is not
/// public. Always fails.
pub fn convert_server_log(_text: &str) -> Result<Vec<LoggedQuery>, EvalError> {
    Err(EvalError::Unsupported("competition server logs; write the native JSONL format instead".into()))
}

/// 1-based rank of the first result that is in `truth`.
pub fn first_hit_rank<'a>(
    results: impl IntoIterator<Item = &'a KeyframeId>,
    truth: &HashSet<&KeyframeId>,
) -> Option<usize> {
    results.into_iter().position(|id| truth.contains(id)).map(|p| p + 1)
}

pub fn reciprocal_rank<'a>(
    results: impl IntoIterator<Item = &'a KeyframeId>,
    truth: &HashSet<&KeyframeId>,
) -> Result<f64, EvalError> {
    if truth.is_empty() {
        return Err(EvalError::EmptyTruth);
    }
    Ok(first_hit_rank(results, truth).map_or(0.0, |r| 1.0 / r as f64))
}

pub fn rr_at_k(rank: Option<usize>, k: usize) -> f64 {
    match rank {
        Some(r) if r <= k => 1.0 / r as f64,
        _ => 0.0,
    }
}

pub fn mrr(ranks: &[Option<usize>]) -> f64 {
    mrr_at_k(ranks, usize::MAX)
}

pub fn mrr_at_k(ranks: &[Option<usize>], k: usize) -> f64 {
    if ranks.is_empty() {
        return 0.0;
    }
    ranks.iter().map(|&r| rr_at_k(r, k)).sum::<f64>() / ranks.len() as f64
}

/// Replays logs against one engine.
#[derive(Debug, Clone)]
pub struct Evaluator<'a> {
    engine: &'a Engine,
    page_size: usize,
}

impl<'a> Evaluator<'a> {
    pub fn new(engine: &'a Engine) -> Self {
        Self { engine, page_size: EVAL_PAGE_SIZE }
    }

    pub fn with_page_size(mut self, page_size: usize) -> Self {
        self.page_size = page_size;
        self
    }

    /// First truth rank within the page, or `None`.
    pub fn rank(&self, query: &LoggedQuery, triple: &RankerTriple) -> Result<Option<usize>, EvalError> {
        let page = self.engine.execute(&query.query, triple, self.page_size)?;
        Ok(first_hit_rank(page.ids(), &query.truth_set()))
    }

    pub fn ranks(&self, queries: &[LoggedQuery], triple: &RankerTriple) -> Result<Vec<Option<usize>>, EvalError> {
        queries.par_iter().map(|q| self.rank(q, triple)).collect()
    }

    pub fn mrr(&self, queries: &[LoggedQuery], triple: &RankerTriple) -> Result<f64, EvalError> {
        Ok(mrr(&self.ranks(queries, triple)?))
    }

    pub fn mrr_at_k(&self, queries: &[LoggedQuery], triple: &RankerTriple, k: usize) -> Result<f64, EvalError> {
        Ok(mrr_at_k(&self.ranks(queries, triple)?, k))
    }

    /// Runs every query under every triple. Queries that never surface a
    /// truth id, or that fail to execute, are left out of |Q|.
    pub fn sweep(&self, queries: &[LoggedQuery], triples: &[RankerTriple], k_list: &[usize]) -> SweepReport {
        let jobs: Vec<(usize, usize)> =
            (0..triples.len()).flat_map(|t| (0..queries.len()).map(move |q| (t, q))).collect();
        let results: Vec<Result<Option<usize>, String>> = jobs
            .par_iter()
            .map(|&(t, q)| self.rank(&queries[q], &triples[t]).map_err(|e| e.to_string()))
            .collect();
        let at = |t: usize, q: usize| &results[t * queries.len() + q];

        let mut failed = BTreeMap::new();
        for q in 0..queries.len() {
            if let Some(Err(e)) = (0..triples.len()).map(|t| at(t, q)).find(|r| r.is_err()) {
                failed.insert(q, e.clone());
            }
        }
        let eligible: Vec<usize> = (0..queries.len())
            .filter(|q| !failed.contains_key(q))
            .filter(|&q| (0..triples.len()).any(|t| matches!(at(t, q), Ok(Some(_)))))
            .collect();

        let mut entries: Vec<TripleReport> = triples
            .iter()
            .enumerate()
            .map(|(t, triple)| {
                let ranks: Vec<Option<usize>> =
                    eligible.iter().map(|&q| at(t, q).clone().ok().flatten()).collect();
                TripleReport {
                    triple: *triple,
                    mrr: mrr(&ranks),
                    mrr_at_k: k_list.iter().map(|&k| (k, mrr_at_k(&ranks, k))).collect(),
                    ranks,
                }
            })
            .collect();
        entries.sort_by(|a, b| b.mrr.total_cmp(&a.mrr).then_with(|| a.triple.to_string().cmp(&b.triple.to_string())));

        let index_ids = self.engine.snapshot();
        let missing_truth = queries
            .iter()
            .map(|q| q.truth.iter().filter(|id| index_ids.ordinal(id).is_none()).count())
            .sum();

        SweepReport {
            total_queries: queries.len(),
            eligible_queries: eligible.len(),
            eligible,
            failed,
            missing_truth_ids: missing_truth,
            page_size: self.page_size,
            k_list: k_list.to_vec(),
            entries,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripleReport {
    pub triple: RankerTriple,
    pub mrr: f64,
    pub mrr_at_k: BTreeMap<usize, f64>,
    /// First truth rank per eligible query, in `SweepReport::eligible` order.
    pub ranks: Vec<Option<usize>>,
}

impl TripleReport {
    pub fn reciprocal_ranks(&self) -> Vec<f64> {
        self.ranks.iter().map(|&r| rr_at_k(r, usize::MAX)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub total_queries: usize,
    /// |Q|: queries that surfaced truth under at least one triple.
    pub eligible_queries: usize,
    pub eligible: Vec<usize>,
    /// Log index to error message.
    pub failed: BTreeMap<usize, String>,
    pub missing_truth_ids: usize,
    pub page_size: usize,
    pub k_list: Vec<usize>,
    /// Sorted by descending MRR.
    pub entries: Vec<TripleReport>,
}

impl SweepReport {
    pub fn best(&self) -> Option<&TripleReport> {
        self.entries.first()
    }

    pub fn entry(&self, triple: &RankerTriple) -> Option<&TripleReport> {
        self.entries.iter().find(|e| &e.triple == triple)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# {REFERENCE_NOTE}");
        let _ = writeln!(
            out,
            "# queries {} eligible |Q|={} excluded {} failed {} missing truth ids {}",
            self.total_queries,
            self.eligible_queries,
            self.total_queries - self.eligible_queries - self.failed.len(),
            self.failed.len(),
            self.missing_truth_ids
        );
        let _ = write!(out, "{:>4}  {:<22} {:>8}", "rank", "R_BB-R_AN-R_OC", "MRR");
        for k in &self.k_list {
            let _ = write!(out, " {:>8}", format!("@{k}"));
        }
        out.push('\n');
        for (i, e) in self.entries.iter().enumerate() {
            let _ = write!(out, "{:>4}  {:<22} {:>8.5}", i + 1, e.triple.to_string(), e.mrr);
            for k in &self.k_list {
                let _ = write!(out, " {:>8.5}", e.mrr_at_k[k]);
            }
            out.push('\n');
        }
        out
    }
}
