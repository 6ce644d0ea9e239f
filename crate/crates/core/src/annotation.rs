//! Scene-tag field encoding: each tag is repeated `ceil(relevance)` times so
//! that the field's term frequencies carry the tag relevance.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::EncodeError;
use crate::model::{ClassLabel, KeyframeId};

/// Upper bound on how many times a single tag is repeated.
pub const MAX_TAG_REPETITIONS: u32 = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagAnnotation {
    pub tag: ClassLabel,
    pub relevance: f64,
}

impl TagAnnotation {
    pub fn new(tag: ClassLabel, relevance: f64) -> Self {
        Self { tag, relevance }
    }
}

/// One line of the tag ingest file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagLine {
    pub id: KeyframeId,
    pub tags: Vec<TagAnnotation>,
}

/// Number of repetitions for a relevance score.
pub fn repetitions(relevance: f64) -> u32 {
    (relevance.ceil() as u32).clamp(1, MAX_TAG_REPETITIONS)
}

/// Builds the scene-tags text field.
///
/// Duplicate tags are merged by summing their relevances before rounding up.
/// Distinct tags are emitted by descending relevance, then name.
pub fn encode_tags(annotations: &[TagAnnotation]) -> Result<String, EncodeError> {
    let mut merged: BTreeMap<&ClassLabel, f64> = BTreeMap::new();
    for a in annotations {
        if !a.relevance.is_finite() || a.relevance <= 0.0 {
            return Err(EncodeError::NonPositiveRelevance {
                tag: a.tag.to_string(),
                relevance: a.relevance,
            });
        }
        *merged.entry(&a.tag).or_insert(0.0) += a.relevance;
    }

    let mut ordered: Vec<(&ClassLabel, f64)> = merged.into_iter().collect();
    ordered.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));

    let mut out = String::new();
    for (tag, relevance) in ordered {
        for _ in 0..repetitions(relevance) {
            if !out.is_empty() {
                out.push(' ');
            }
            out.push_str(tag.as_str());
        }
    }
    Ok(out)
}
