//! Shared domain types: keyframe identity, the indexed record, grid cells,
//! bounding boxes, class labels and the token grammar that glues them together.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::ModelError;

/// Number of grid columns and rows overlaid on every keyframe.
pub const GRID_SIZE: usize = 7;

/// Minimum side of a normalized bounding box.
pub const MIN_BOX_SIDE: f64 = 1e-3;

/// A cell counts as covered when the box overlaps it by more than this
/// (normalized units) along both axes. Absorbs coordinate rounding slivers.
pub const SLIVER_TOLERANCE: f64 = 1e-4;

/// Identity of one keyframe: the video it belongs to and its segment index.
///
/// Serialized as `{"video": .., "segment": ..}`; the compact string form
/// `video:segment` is also accepted when deserializing.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct KeyframeId {
    pub video: String,
    pub segment: u32,
}

impl KeyframeId {
    pub fn new(video: impl Into<String>, segment: u32) -> Self {
        Self {
            video: video.into(),
            segment,
        }
    }
}

impl fmt::Display for KeyframeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.video, self.segment)
    }
}

impl FromStr for KeyframeId {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (video, segment) = s
            .rsplit_once(':')
            .ok_or_else(|| ModelError::InvalidId(s.to_string()))?;
        if video.is_empty() {
            return Err(ModelError::InvalidId(s.to_string()));
        }
        let segment = segment
            .parse()
            .map_err(|_| ModelError::InvalidId(s.to_string()))?;
        Ok(Self::new(video, segment))
    }
}

impl<'de> Deserialize<'de> for KeyframeId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Object { video: String, segment: u32 },
            Compact(String),
        }
        #[derive(Deserialize)]
        struct Plain {
            video: String,
            segment: u32,
        }
        if !deserializer.is_human_readable() {
            let Plain { video, segment } = Plain::deserialize(deserializer)?;
            return Ok(KeyframeId { video, segment });
        }
        match Repr::deserialize(deserializer)? {
            Repr::Object { video, segment } => Ok(KeyframeId { video, segment }),
            Repr::Compact(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Frame shape class used by the aspect-ratio filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Aspect {
    #[serde(rename = "4:3", alias = "AR_4_3")]
    Ar4x3,
    #[serde(rename = "16:9", alias = "AR_16_9")]
    Ar16x9,
    #[serde(rename = "other")]
    Other,
}

impl Aspect {
    /// Classifies a frame by width/height, with a 0.05 tolerance on the ratio.
    pub fn classify(width: u32, height: u32) -> Aspect {
        if height == 0 {
            return Aspect::Other;
        }
        let ratio = width as f64 / height as f64;
        if (ratio - 4.0 / 3.0).abs() < 0.05 {
            Aspect::Ar4x3
        } else if (ratio - 16.0 / 9.0).abs() < 0.05 {
            Aspect::Ar16x9
        } else {
            Aspect::Other
        }
    }
}

/// One indexed keyframe: four whitespace-tokenized text fields plus the
/// metadata the filters look at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyframeRecord {
    pub id: KeyframeId,
    #[serde(default)]
    pub scene_tags: String,
    #[serde(default)]
    pub objcolor_bboxes: String,
    #[serde(default)]
    pub objcolor_classes: String,
    #[serde(default)]
    pub visual_features: String,
    #[serde(default)]
    pub is_bw: bool,
    pub aspect: Aspect,
}

impl KeyframeRecord {
    pub fn empty(id: KeyframeId, aspect: Aspect) -> Self {
        Self {
            id,
            scene_tags: String::new(),
            objcolor_bboxes: String::new(),
            objcolor_classes: String::new(),
            visual_features: String::new(),
            is_bw: false,
            aspect,
        }
    }

    pub fn field(&self, field: Field) -> &str {
        match field {
            Field::SceneTags => &self.scene_tags,
            Field::ObjcolorBboxes => &self.objcolor_bboxes,
            Field::ObjcolorClasses => &self.objcolor_classes,
            Field::VisualFeatures => &self.visual_features,
        }
    }
}

/// The four text fields of a [`KeyframeRecord`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    SceneTags,
    ObjcolorBboxes,
    ObjcolorClasses,
    VisualFeatures,
}

impl Field {
    pub const ALL: [Field; 4] = [
        Field::SceneTags,
        Field::ObjcolorBboxes,
        Field::ObjcolorClasses,
        Field::VisualFeatures,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Field::SceneTags => "scene_tags",
            Field::ObjcolorBboxes => "objcolor_bboxes",
            Field::ObjcolorClasses => "objcolor_classes",
            Field::VisualFeatures => "visual_features",
        }
    }
}

impl FromStr for Field {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Field::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| ModelError::UnknownField(s.to_string()))
    }
}

/// A cell of the 7x7 grid. Columns `a..g` run left to right, rows `1..7`
/// top to bottom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GridCell {
    // row first: the derived ordering is row-major
    row: u8,
    column: u8,
}

impl GridCell {
    /// Zero-based column and row.
    pub fn new(column: usize, row: usize) -> Result<Self, ModelError> {
        if column >= GRID_SIZE || row >= GRID_SIZE {
            return Err(ModelError::InvalidCell(format!("({column}, {row})")));
        }
        Ok(Self {
            column: column as u8,
            row: row as u8,
        })
    }

    /// Column letter `a..g` and one-based row `1..7`.
    pub fn from_name(column: char, row: u8) -> Result<Self, ModelError> {
        let c = (column as u32).wrapping_sub('a' as u32) as usize;
        let r = (row as usize).wrapping_sub(1);
        Self::new(c, r).map_err(|_| ModelError::InvalidCell(format!("{column}{row}")))
    }

    pub fn column(self) -> usize {
        self.column as usize
    }

    pub fn row(self) -> usize {
        self.row as usize
    }

    pub fn column_letter(self) -> char {
        (b'a' + self.column) as char
    }

    /// All 49 cells in row-major order.
    pub fn all() -> impl Iterator<Item = GridCell> {
        (0..GRID_SIZE).flat_map(|row| (0..GRID_SIZE).map(move |column| GridCell::new(column, row).unwrap()))
    }

    /// Normalized extent `(x0, y0, x1, y1)` of the cell.
    pub fn extent(self) -> (f64, f64, f64, f64) {
        let n = GRID_SIZE as f64;
        (
            self.column as f64 / n,
            self.row as f64 / n,
            (self.column + 1) as f64 / n,
            (self.row + 1) as f64 / n,
        )
    }

    pub fn as_box(self) -> BoundingBox {
        let (x0, y0, x1, y1) = self.extent();
        BoundingBox { x_min: x0, y_min: y0, x_max: x1, y_max: y1 }
    }
}

impl fmt::Display for GridCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.column_letter(), self.row + 1)
    }
}

impl FromStr for GridCell {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut chars = s.chars();
        match (chars.next(), chars.next(), chars.next()) {
            (Some(c), Some(r), None) if r.is_ascii_digit() => {
                GridCell::from_name(c, r.to_digit(10).unwrap() as u8)
            }
            _ => Err(ModelError::InvalidCell(s.to_string())),
        }
    }
}

/// Axis-aligned box in normalized image coordinates, origin top-left.
/// Serialized as `[x_min, y_min, x_max, y_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, ModelError> {
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        let ok = [x_min, y_min, x_max, y_max].into_iter().all(in_unit)
            && x_max - x_min >= MIN_BOX_SIDE - 1e-12
            && y_max - y_min >= MIN_BOX_SIDE - 1e-12;
        if !ok {
            return Err(ModelError::InvalidBox([x_min, y_min, x_max, y_max]));
        }
        Ok(Self { x_min, y_min, x_max, y_max })
    }

    /// Clamps to the unit square and widens degenerate sides to
    /// [`MIN_BOX_SIDE`] around their center. Used on detector output, which
    /// occasionally spills outside the frame.
    pub fn clamped(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, ModelError> {
        if ![x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite()) {
            return Err(ModelError::InvalidBox([x_min, y_min, x_max, y_max]));
        }
        fn side(lo: f64, hi: f64) -> (f64, f64) {
            let (lo, hi) = (lo.min(hi).clamp(0.0, 1.0), lo.max(hi).clamp(0.0, 1.0));
            if hi - lo >= MIN_BOX_SIDE {
                return (lo, hi);
            }
            let center = ((lo + hi) / 2.0).clamp(MIN_BOX_SIDE / 2.0, 1.0 - MIN_BOX_SIDE / 2.0);
            (center - MIN_BOX_SIDE / 2.0, center + MIN_BOX_SIDE / 2.0)
        }
        let (x0, x1) = side(x_min, x_max);
        let (y0, y1) = side(y_min, y_max);
        Self::new(x0, y0, x1, y1)
    }

    pub fn full() -> Self {
        Self { x_min: 0.0, y_min: 0.0, x_max: 1.0, y_max: 1.0 }
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)
    }

    /// Smallest box containing both.
    pub fn hull(&self, other: &BoundingBox) -> BoundingBox {
        BoundingBox {
            x_min: self.x_min.min(other.x_min),
            y_min: self.y_min.min(other.y_min),
            x_max: self.x_max.max(other.x_max),
            y_max: self.y_max.max(other.y_max),
        }
    }

    pub fn contains(&self, other: &BoundingBox) -> bool {
        self.x_min <= other.x_min
            && self.y_min <= other.y_min
            && self.x_max >= other.x_max
            && self.y_max >= other.y_max
    }
}

impl Serialize for BoundingBox {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        [self.x_min, self.y_min, self.x_max, self.y_max].serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for BoundingBox {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let [x0, y0, x1, y1] = <[f64; 4]>::deserialize(deserializer)?;
        BoundingBox::new(x0, y0, x1, y1).map_err(serde::de::Error::custom)
    }
}

/// A normalized object class or color name.
///
/// Labels are lowercase `[a-z0-9]` and never end in a digit, so that
/// `label + count` and `cell + label` tokens parse back unambiguously.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct ClassLabel(String);

impl ClassLabel {
    /// Lowercases, drops anything outside `[a-z0-9]` and appends an `x` when
    /// the result would end in a digit.
    pub fn new(raw: &str) -> Result<Self, ModelError> {
        let mut name: String = raw
            .chars()
            .flat_map(char::to_lowercase)
            .filter(|c| c.is_ascii_lowercase() || c.is_ascii_digit())
            .collect();
        if name.is_empty() {
            return Err(ModelError::EmptyLabel(raw.to_string()));
        }
        if name.ends_with(|c: char| c.is_ascii_digit()) {
            name.push('x');
        }
        Ok(Self(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for ClassLabel {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ClassLabel::new(s)
    }
}

impl<'de> Deserialize<'de> for ClassLabel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        ClassLabel::new(&raw).map_err(serde::de::Error::custom)
    }
}

/// Location-plus-class token, e.g. `e3car`.
pub fn cell_token(cell: GridCell, label: &ClassLabel) -> String {
    format!("{cell}{label}")
}

/// Class-plus-occurrence token, e.g. `person2`.
pub fn occurrence_token(label: &ClassLabel, n: u32) -> String {
    debug_assert!(n >= 1, "occurrence counts start at 1");
    format!("{label}{n}")
}

/// Inverse of [`cell_token`].
pub fn parse_cell_token(token: &str) -> Option<(GridCell, ClassLabel)> {
    if token.len() < 3 || !token.is_char_boundary(2) {
        return None;
    }
    let (cell, label) = token.split_at(2);
    let cell = cell.parse().ok()?;
    let label = ClassLabel::new(label).ok()?;
    (label.as_str() == &token[2..]).then_some((cell, label))
}

/// Inverse of [`occurrence_token`].
pub fn parse_occurrence_token(token: &str) -> Option<(ClassLabel, u32)> {
    let split = token.trim_end_matches(|c: char| c.is_ascii_digit()).len();
    let (label, digits) = token.split_at(split);
    if digits.is_empty() || digits.starts_with('0') {
        return None;
    }
    let n = digits.parse().ok()?;
    let label = ClassLabel::new(label).ok()?;
    (label.as_str() == &token[..split]).then_some((label, n))
}

/// Grid cells a box is located over: every cell it overlaps by more than
/// [`SLIVER_TOLERANCE`] along both axes. Always contains the cell holding
/// the box center, since every box side is at least [`MIN_BOX_SIDE`].
pub fn cells_covered(bbox: &BoundingBox) -> BTreeSet<GridCell> {
    let columns = covered_span(bbox.x_min, bbox.x_max);
    let rows = covered_span(bbox.y_min, bbox.y_max);
    rows.flat_map(|row| columns.clone().map(move |column| GridCell::new(column, row).unwrap()))
        .collect()
}

fn covered_span(lo: f64, hi: f64) -> std::ops::Range<usize> {
    let n = GRID_SIZE as f64;
    let overlaps = |i: usize| {
        let (a, b) = (i as f64 / n, (i + 1) as f64 / n);
        hi.min(b) - lo.max(a) > SLIVER_TOLERANCE
    };
    let first = (0..GRID_SIZE).find(|&i| overlaps(i));
    let last = (0..GRID_SIZE).rev().find(|&i| overlaps(i));
    match (first, last) {
        (Some(first), Some(last)) => first..last + 1,
        _ => 0..0,
    }
}

/// Keyframe metadata as ingested, one JSON object per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyframeMeta {
    pub id: KeyframeId,
    pub width: u32,
    pub height: u32,
    #[serde(default)]
    pub is_bw: Option<bool>,
    #[serde(default)]
    pub aspect: Option<Aspect>,
}

impl KeyframeMeta {
    pub fn aspect(&self) -> Aspect {
        self.aspect.unwrap_or_else(|| Aspect::classify(self.width, self.height))
    }
}

/// Splits a text field into tokens.
pub fn tokenize(field: &str) -> impl Iterator<Item = &str> {
    field.split_whitespace()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn label(s: &str) -> ClassLabel {
        ClassLabel::new(s).unwrap()
    }

    fn cell(name: &str) -> GridCell {
        name.parse().unwrap()
    }

    #[test]
    fn cell_token_examples() {
        assert_eq!(cell_token(cell("e3"), &label("car")), "e3car");
        assert_eq!(cell_token(GridCell::from_name('a', 1).unwrap(), &label("person")), "a1person");
        assert_eq!(cell_token(GridCell::from_name('g', 7).unwrap(), &label("black")), "g7black");
    }

    #[test]
    fn occurrence_token_examples() {
        assert_eq!(occurrence_token(&label("person"), 2), "person2");
        assert_eq!(occurrence_token(&label("horse"), 1), "horse1");
        assert_eq!(occurrence_token(&label("car"), 10), "car10");
    }

    #[test]
    fn label_normalization() {
        assert_eq!(label("Traffic Light").as_str(), "trafficlight");
        assert_eq!(label("mp3").as_str(), "mp3x");
        assert_eq!(label("T-Shirt").as_str(), "tshirt");
        assert!(ClassLabel::new(" - ").is_err());
    }

    #[test]
    fn grid_cells() {
        assert_eq!(GridCell::all().count(), 49);
        assert_eq!(cell("e3").column(), 4);
        assert_eq!(cell("e3").row(), 2);
        assert!("h1".parse::<GridCell>().is_err());
        assert!("a8".parse::<GridCell>().is_err());
        assert!("a0".parse::<GridCell>().is_err());
    }

    #[test]
    fn full_box_covers_everything() {
        assert_eq!(cells_covered(&BoundingBox::full()).len(), 49);
    }

    #[test]
    fn cell_extent_box_covers_only_that_cell() {
        let e3 = cell("e3");
        let covered = cells_covered(&e3.as_box());
        assert_eq!(covered.into_iter().collect::<Vec<_>>(), vec![e3]);
    }

    #[test]
    fn box_over_columns_e_to_g_rows_3_to_5() {
        let bbox = BoundingBox::new(0.5714, 0.2857, 1.0, 0.7143).unwrap();
        let got: Vec<String> = cells_covered(&bbox).iter().map(|c| c.to_string()).collect();
        assert_eq!(got, ["e3", "f3", "g3", "e4", "f4", "g4", "e5", "f5", "g5"]);
    }

    #[test]
    fn invalid_boxes_rejected() {
        assert!(BoundingBox::new(0.5, 0.0, 0.5, 1.0).is_err());
        assert!(BoundingBox::new(0.6, 0.0, 0.5, 1.0).is_err());
        assert!(BoundingBox::new(-0.1, 0.0, 0.5, 1.0).is_err());
        assert!(BoundingBox::clamped(-0.1, 0.2, 0.5, 1.3).is_ok());
        let tiny = BoundingBox::clamped(0.5, 0.5, 0.5, 0.5).unwrap();
        assert!(tiny.x_max - tiny.x_min >= MIN_BOX_SIDE - 1e-15);
    }

    #[test]
    fn keyframe_id_forms() {
        let id: KeyframeId = serde_json::from_str(r#"{"video":"00012","segment":4}"#).unwrap();
        let compact: KeyframeId = serde_json::from_str(r#""00012:4""#).unwrap();
        assert_eq!(id, compact);
        assert_eq!(id.to_string(), "00012:4");
        assert!("nosegment".parse::<KeyframeId>().is_err());
    }

    #[test]
    fn aspect_classification() {
        assert_eq!(Aspect::classify(640, 480), Aspect::Ar4x3);
        assert_eq!(Aspect::classify(1920, 1080), Aspect::Ar16x9);
        assert_eq!(Aspect::classify(1000, 1000), Aspect::Other);
        assert_eq!(Aspect::classify(10, 0), Aspect::Other);
    }

    #[test]
    fn metadata_line() {
        let m: KeyframeMeta =
            serde_json::from_str(r#"{"id":{"video":"v1","segment":0},"width":1280,"height":720}"#).unwrap();
        assert_eq!(m.aspect(), Aspect::Ar16x9);
        assert_eq!(m.is_bw, None);
    }

    fn arb_label() -> impl Strategy<Value = ClassLabel> {
        "[a-zA-Z][a-zA-Z0-9 ]{0,12}".prop_filter_map("normalizes", |s| ClassLabel::new(&s).ok())
    }

    fn arb_box() -> impl Strategy<Value = BoundingBox> {
        (0.0..0.99f64, 0.0..0.99f64, 0.001..1.0f64, 0.001..1.0f64).prop_map(|(x, y, w, h)| {
            let x1 = (x + w).min(1.0).max(x + MIN_BOX_SIDE);
            let y1 = (y + h).min(1.0).max(y + MIN_BOX_SIDE);
            BoundingBox::new(x, y, x1, y1).unwrap()
        })
    }

    proptest! {
        #[test]
        fn cell_tokens_round_trip(column in 0usize..7, row in 0usize..7, label in arb_label()) {
            let cell = GridCell::new(column, row).unwrap();
            let token = cell_token(cell, &label);
            prop_assert_eq!(parse_cell_token(&token), Some((cell, label)));
        }

        #[test]
        fn occurrence_tokens_round_trip(label in arb_label(), n in 1u32..10_000) {
            let token = occurrence_token(&label, n);
            prop_assert_eq!(parse_occurrence_token(&token), Some((label, n)));
        }

        #[test]
        fn center_cell_always_covered(b in arb_box()) {
            let (cx, cy) = b.center();
            let column = ((cx * 7.0) as usize).min(6);
            let row = ((cy * 7.0) as usize).min(6);
            prop_assert!(cells_covered(&b).contains(&GridCell::new(column, row).unwrap()));
        }

        #[test]
        fn enlarging_never_removes_cells(a in arb_box(), b in arb_box()) {
            let big = a.hull(&b);
            prop_assert!(cells_covered(&a).is_subset(&cells_covered(&big)));
        }

        #[test]
        fn hull_covers_union(a in arb_box(), b in arb_box()) {
            let hull = cells_covered(&a.hull(&b));
            let union: BTreeSet<_> = cells_covered(&a).union(&cells_covered(&b)).copied().collect();
            prop_assert!(hull.is_superset(&union));
        }
    }
}
