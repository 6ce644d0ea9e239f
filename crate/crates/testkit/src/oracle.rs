//! Straight-line scorers written from the ranker formulas, one document at a
//! time, with no shared code from the index.

use std::collections::BTreeMap;

use kfs_core::query::FusionWeights;
use kfs_core::{KeyframeRecord, RankerKind};

pub const K1: f64 = 1.2;
pub const B: f64 = 0.75;

fn counts<S: AsRef<str>>(tokens: &[S]) -> BTreeMap<&str, f64> {
    let mut m = BTreeMap::new();
    for t in tokens {
        *m.entry(t.as_ref()).or_insert(0.0) += 1.0;
    }
    m
}

/// Score of every document for `query`, `None` when the document shares no
/// term with the query.
pub fn scores<S: AsRef<str>, Q: AsRef<str>>(kind: RankerKind, docs: &[Vec<S>], query: &[Q]) -> Vec<Option<f64>> {
    let n = docs.len() as f64;
    let q = counts(query);
    let tfs: Vec<BTreeMap<&str, f64>> = docs.iter().map(|d| counts(d)).collect();
    let df = |t: &str| tfs.iter().filter(|d| d.contains_key(t)).count() as f64;
    let avg_len = docs.iter().map(|d| d.len() as f64).sum::<f64>() / n;
    let tfidf_idf = |t: &str| 1.0 + (n / (1.0 + df(t))).ln();

    tfs.iter()
        .zip(docs)
        .map(|(d, tokens)| {
            if !q.keys().any(|t| d.contains_key(t)) {
                return None;
            }
            let tf = |t: &str| d.get(t).copied().unwrap_or(0.0);
            let s = match kind {
                RankerKind::Tf => q.iter().map(|(t, qtf)| qtf * tf(t)).sum(),
                RankerKind::NormTf => {
                    let dot: f64 = q.iter().map(|(t, qtf)| qtf * tf(t)).sum();
                    let qn = q.values().map(|v| v * v).sum::<f64>().sqrt();
                    let dn = d.values().map(|v| v * v).sum::<f64>().sqrt();
                    dot / (qn * dn)
                }
                RankerKind::TfIdf => {
                    let num: f64 = q.iter().map(|(t, qtf)| qtf * tf(t) * tfidf_idf(t).powi(2)).sum();
                    let dn = d.iter().map(|(t, v)| (v * tfidf_idf(t)).powi(2)).sum::<f64>().sqrt();
                    num / dn
                }
                RankerKind::Bm25 => {
                    let len = tokens.len() as f64;
                    q.iter()
                        .map(|(t, qtf)| {
                            let f = tf(t);
                            if f == 0.0 {
                                return 0.0;
                            }
                            let idf = (1.0 + (n - df(t) + 0.5) / (df(t) + 0.5)).ln();
                            qtf * idf * f * (K1 + 1.0) / (f + K1 * (1.0 - B + B * len / avg_len))
                        })
                        .sum()
                }
            };
            Some(s)
        })
        .collect()
}

/// Matching documents by descending score, ties by position.
pub fn ranking(scores: &[Option<f64>]) -> Vec<(usize, f64)> {
    let mut out: Vec<(usize, f64)> = scores.iter().enumerate().filter_map(|(i, s)| s.map(|s| (i, s))).collect();
    out.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    out
}

pub fn field_tokens(records: &[KeyframeRecord], pick: impl Fn(&KeyframeRecord) -> &str) -> Vec<Vec<String>> {
    records.iter().map(|r| pick(r).split_whitespace().map(String::from).collect()).collect()
}

/// Term lists of a compiled query, written out by hand.
#[derive(Debug, Clone, Default)]
pub struct CascadeQuery {
    pub oclass: Vec<String>,
    pub annotation: Vec<String>,
    pub bbox: Vec<String>,
}

/// Reference cascade: stage one by `r_oc` over classes (or `r_an` over tags
/// when there is no canvas), rescoring inside the window, fused by
/// max-normalized weighted sum, ties by stage-one position.
pub fn cascade(
    records: &[KeyframeRecord],
    q: &CascadeQuery,
    (r_bb, r_an, r_oc): (RankerKind, RankerKind, RankerKind),
    keep: impl Fn(&KeyframeRecord) -> bool,
    weights: FusionWeights,
    window: usize,
) -> Vec<(usize, f64)> {
    let tags = field_tokens(records, |r| &r.scene_tags);
    if q.oclass.is_empty() {
        return ranking(&scores(r_an, &tags, &q.annotation)).into_iter().filter(|&(i, _)| keep(&records[i])).collect();
    }
    let classes = field_tokens(records, |r| &r.objcolor_classes);
    let bboxes = field_tokens(records, |r| &r.objcolor_bboxes);
    let stage1: Vec<(usize, f64)> =
        ranking(&scores(r_oc, &classes, &q.oclass)).into_iter().filter(|&(i, _)| keep(&records[i])).collect();
    let w = window.min(stage1.len());

    let norm = |v: Vec<f64>| -> Vec<f64> {
        let max = v.iter().cloned().fold(0.0, f64::max);
        v.into_iter().map(|x| if max > 0.0 { x / max } else { 0.0 }).collect()
    };
    let oc = norm(stage1[..w].iter().map(|h| h.1).collect());
    let an = if q.annotation.is_empty() {
        vec![0.0; w]
    } else {
        let s = scores(r_an, &tags, &q.annotation);
        norm(stage1[..w].iter().map(|h| s[h.0].unwrap_or(0.0)).collect())
    };
    let bb = if q.bbox.is_empty() {
        vec![0.0; w]
    } else {
        let s = scores(r_bb, &bboxes, &q.bbox);
        norm(stage1[..w].iter().map(|h| s[h.0].unwrap_or(0.0)).collect())
    };
    let mut fused: Vec<(usize, usize, f64)> = (0..w)
        .map(|i| (i, stage1[i].0, weights.oc * oc[i] + weights.an * an[i] + weights.bb * bb[i]))
        .collect();
    fused.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap().then(a.0.cmp(&b.0)));
    let mut out: Vec<(usize, f64)> = fused.into_iter().map(|(_, d, s)| (d, s)).collect();
    out.extend(stage1[w..].iter().map(|h| (h.0, 0.0)));
    out
}

/// Exact dot product of two integer vectors.
pub fn int_dot(a: &[u32], b: &[u32]) -> u64 {
    a.iter().zip(b).map(|(&x, &y)| x as u64 * y as u64).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_values() {
        let docs = vec![vec!["a", "a", "b"], vec!["b"], vec!["c"]];
        let tf = scores(RankerKind::Tf, &docs, &["a", "b"]);
        assert_eq!(tf, vec![Some(3.0), Some(1.0), None]);
        let cos = scores(RankerKind::NormTf, &docs, &["b"]);
        assert!((cos[0].unwrap() - 1.0 / 5f64.sqrt()).abs() < 1e-15);
        assert_eq!(cos[1], Some(1.0));
    }
}
