//! Object and color location encoding.
//!
//! Two fields come out of here. The bboxes field holds one `cell+label`
//! token per grid cell an object (or color) lies over. The classes field
//! holds `label+n` occurrence tokens, `n = 1..count`, followed by the bare
//! names of the palette colors present anywhere in the frame.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::model::{cell_token, cells_covered, occurrence_token, BoundingBox, ClassLabel, GridCell, KeyframeId};

pub const DEFAULT_CONFIDENCE_THRESHOLD: f64 = 0.25;

/// Occurrence numbering stops here for any single label.
pub const MAX_OCCURRENCES: u32 = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub labels: Vec<ClassLabel>,
    pub bbox: BoundingBox,
    pub confidence: f64,
}

impl Detection {
    /// Deduplicates labels (first occurrence wins) and clamps confidence.
    pub fn new(labels: Vec<ClassLabel>, bbox: BoundingBox, confidence: f64) -> Self {
        let mut seen = BTreeSet::new();
        let labels = labels.into_iter().filter(|l| seen.insert(l.clone())).collect();
        Self {
            labels,
            bbox,
            confidence: confidence.clamp(0.0, 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColorCellAssignment {
    pub cell: GridCell,
    pub colors: Vec<ClassLabel>,
}

/// Detection as it appears in the ingest file; boxes are clamped on conversion.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawDetection {
    pub labels: Vec<String>,
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    #[serde(default = "full_confidence")]
    pub confidence: f64,
}

fn full_confidence() -> f64 {
    1.0
}

impl RawDetection {
    pub fn to_detection(&self) -> Result<Detection, ModelError> {
        let labels = self
            .labels
            .iter()
            .map(|l| ClassLabel::new(l))
            .collect::<Result<Vec<_>, _>>()?;
        if labels.is_empty() {
            return Err(ModelError::EmptyLabel(String::new()));
        }
        let [x0, y0, x1, y1] = self.bbox;
        Ok(Detection::new(labels, BoundingBox::clamped(x0, y0, x1, y1)?, self.confidence))
    }
}

/// One line of the detection ingest file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectionLine {
    pub id: KeyframeId,
    pub detections: Vec<RawDetection>,
}

/// Label to ancestor labels, e.g. `car -> [vehicle]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HypernymMap(HashMap<ClassLabel, Vec<ClassLabel>>);

impl HypernymMap {
    pub fn new(map: HashMap<ClassLabel, Vec<ClassLabel>>) -> Self {
        Self(map)
    }

    /// Appends the ancestors of every label that are not already present.
    pub fn expand(&self, detection: &Detection) -> Detection {
        let mut labels = detection.labels.clone();
        for label in &detection.labels {
            if let Some(ancestors) = self.0.get(label) {
                labels.extend(ancestors.iter().cloned());
            }
        }
        Detection::new(labels, detection.bbox, detection.confidence)
    }
}

/// Ingest-time settings for the spatial fields.
#[derive(Debug, Clone)]
pub struct SpatialEncoder {
    pub confidence_threshold: f64,
    pub hypernyms: HypernymMap,
}

impl Default for SpatialEncoder {
    fn default() -> Self {
        Self {
            confidence_threshold: DEFAULT_CONFIDENCE_THRESHOLD,
            hypernyms: HypernymMap::default(),
        }
    }
}

impl SpatialEncoder {
    /// Drops low-confidence detections and applies hypernym expansion.
    pub fn prepare(&self, detections: &[Detection]) -> Vec<Detection> {
        detections
            .iter()
            .filter(|d| d.confidence >= self.confidence_threshold)
            .map(|d| self.hypernyms.expand(d))
            .collect()
    }

    /// Returns `(bboxes field, classes field)`.
    pub fn encode(&self, detections: &[Detection], color_cells: &[ColorCellAssignment]) -> (String, String) {
        let kept = self.prepare(detections);
        let colors = image_colors(color_cells);
        (encode_bboxes(&kept, color_cells), encode_classes(&kept, &colors))
    }
}

/// Distinct colors across all cells, ordered by name.
pub fn image_colors(color_cells: &[ColorCellAssignment]) -> Vec<ClassLabel> {
    color_cells
        .iter()
        .flat_map(|c| c.colors.iter().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// Location tokens: per detection, per covered cell (row-major), per label;
/// then per color cell, per color.
pub fn encode_bboxes(detections: &[Detection], color_cells: &[ColorCellAssignment]) -> String {
    let mut tokens = Vec::new();
    for detection in detections {
        for cell in cells_covered(&detection.bbox) {
            for label in &detection.labels {
                tokens.push(cell_token(cell, label));
            }
        }
    }
    for assignment in color_cells {
        for color in &assignment.colors {
            tokens.push(cell_token(assignment.cell, color));
        }
    }
    tokens.join(" ")
}

/// Occurrence tokens `label1..labelN` per label (labels in order of first
/// appearance, N capped at [`MAX_OCCURRENCES`]), then each palette color once.
pub fn encode_classes(detections: &[Detection], palette_colors: &[ClassLabel]) -> String {
    let mut order: Vec<&ClassLabel> = Vec::new();
    let mut counts: HashMap<&ClassLabel, u32> = HashMap::new();
    for label in detections.iter().flat_map(|d| d.labels.iter()) {
        let count = counts.entry(label).or_insert_with(|| {
            order.push(label);
            0
        });
        *count += 1;
    }

    let mut tokens = Vec::new();
    for label in order {
        for n in 1..=counts[label].min(MAX_OCCURRENCES) {
            tokens.push(occurrence_token(label, n));
        }
    }
    let mut seen = BTreeSet::new();
    for color in palette_colors {
        if seen.insert(color) {
            tokens.push(color.to_string());
        }
    }
    tokens.join(" ")
}
