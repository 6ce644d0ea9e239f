//! Frozen corpora with known answers.

use kfs_core::eval::LoggedQuery;
use kfs_core::query::{CanvasItem, CanvasKind, QuerySpec};
use kfs_core::{Aspect, BoundingBox, KeyframeId, KeyframeRecord};

pub fn record(video: &str, segment: u32, tags: &str, classes: &str, bboxes: &str) -> KeyframeRecord {
    KeyframeRecord {
        scene_tags: tags.into(),
        objcolor_classes: classes.into(),
        objcolor_bboxes: bboxes.into(),
        ..KeyframeRecord::empty(KeyframeId::new(video, segment), Aspect::Ar16x9)
    }
}

pub fn object(label: &str, bbox: [f64; 4]) -> CanvasItem {
    CanvasItem {
        label: label.into(),
        bbox: BoundingBox::new(bbox[0], bbox[1], bbox[2], bbox[3]).unwrap(),
        kind: Some(CanvasKind::Object),
    }
}

/// The car box spanning columns e..g and rows 3..5.
pub const CAR_BOX: [f64; 4] = [0.62, 0.33, 0.95, 0.70];
pub const CAR_TOKENS: [&str; 9] = ["e3car", "f3car", "g3car", "e4car", "f4car", "g4car", "e5car", "f5car", "g5car"];

/// Top-left box covering cells a1, b1, a2, b2.
pub const PERSON_BOX: [f64; 4] = [0.0, 0.0, 0.25, 0.25];

/// Six keyframes for the cascade trace: a "person" box top-left plus the tag
/// "park". Keyframe `k:3` has no person and is never a candidate.
pub fn cascade_corpus() -> (Vec<KeyframeRecord>, QuerySpec) {
    let records = vec![
        record("k", 0, "beach beach", "person1 person2 person3", "a1person b1person a2person b2person c3person d4person e5person"),
        record("k", 1, "", "person1 person2", "a1person f6person g6person f7person g7person"),
        record("k", 2, "park", "person1 car1", "f5person f6person d4car"),
        record("k", 3, "street park", "dog1", "a1dog"),
        record("k", 4, "park tree tree", "person1", "a1person a2person"),
        record("k", 5, "park park", "person1", "a1person b1person a2person b2person"),
    ];
    let spec = QuerySpec { tags: vec!["park".into()], canvas: vec![object("person", PERSON_BOX)], ..QuerySpec::default() };
    (records, spec)
}

/// Three queries, each decided by one stage only:
///
/// * `sunset` (tags only): the truth `d:2` is first only under BM25. Filler
///   keyframes carry eight tag tokens so the average length is not tiny.
/// * zebra + lion boxes: no keyframe has matching locations, so the class
///   ranker decides; the truth `d:12` is first only under TF.
/// * car box: every candidate has classes `car1`, so the location ranker
///   decides; the truth `d:24` is first only under NormTF.
pub fn dominance() -> (Vec<KeyframeRecord>, Vec<LoggedQuery>) {
    let mut records = vec![
        // tags
        record("d", 0, "sunset sunset", "", ""),
        record("d", 1, &format!("{}{}", "sunset ".repeat(10), (0..30).map(|i| format!("sky{} ", alpha(i))).collect::<String>()), "", ""),
        record("d", 2, &format!("{}beach", "sunset ".repeat(6)), "", ""),
        // classes
        record("d", 10, "", "zebra1", ""),
        record("d", 11, "", "lion1", ""),
        record("d", 12, "", "zebra1 lion1 bird1 bird2 bird3 bird4 bird5 bird6 bird7", ""),
    ];
    // locations
    let car = CAR_TOKENS.join(" ");
    let doubled = CAR_TOKENS.iter().flat_map(|t| [*t, *t]).collect::<Vec<_>>().join(" ");
    records.push(record("d", 20, "", "car1", &format!("{car} a1sky b1sky")));
    records.push(record("d", 21, "", "car1", &format!("{doubled} a7tree b7tree c7tree d7tree e7tree")));
    records.push(record("d", 22, "", "car1", "e3car e3car"));
    records.push(record("d", 24, "", "car1", &format!("{car} g7tree")));
    for i in 0..30 {
        records.push(record(
            "f",
            i,
            "noise noise noise noise noise noise noise noise",
            "",
            "f3car g3car e4car f4car g4car e5car f5car g5car a1sky b1sky",
        ));
    }
    let log = vec![
        LoggedQuery { query: QuerySpec::tags(["sunset"]), truth: vec![KeyframeId::new("d", 2)] },
        LoggedQuery {
            query: QuerySpec {
                canvas: vec![object("zebra", [0.0, 0.0, 0.2, 0.2]), object("lion", [0.8, 0.8, 1.0, 1.0])],
                ..QuerySpec::default()
            },
            truth: vec![KeyframeId::new("d", 12)],
        },
        LoggedQuery {
            query: QuerySpec { canvas: vec![object("car", CAR_BOX)], ..QuerySpec::default() },
            truth: vec![KeyframeId::new("d", 24)],
        },
    ];
    (records, log)
}

fn alpha(i: usize) -> String {
    format!("{}{}", (b'a' + (i / 26) as u8) as char, (b'a' + (i % 26) as u8) as char)
}

/// Target rank of the truth of each query in [`mrr_log`]; `None` means the
/// truth never appears.
pub const MRR_LOG_RANKS: [Option<usize>; 10] =
    [Some(1), Some(2), Some(3), Some(4), Some(5), Some(7), Some(10), Some(20), Some(150), None];

/// Ten tag queries. For a target rank `r` the truth holds the tag once
/// padded with `r - 1` copies of `pad`, and distractor `k` (`1..r`) holds it
/// once with `k - 1` pads. Every ranker scores shorter documents higher;
/// under TF all tie and the truth, added last, keeps rank `r`.
pub fn mrr_log() -> (Vec<KeyframeRecord>, Vec<LoggedQuery>) {
    let mut records = Vec::new();
    let mut log = Vec::new();
    let padded = |tag: &str, pads: usize| format!("{tag}{}", " pad".repeat(pads));
    for (q, target) in MRR_LOG_RANKS.iter().enumerate() {
        let video = format!("m{}", alpha(q));
        let tag = format!("q{}", alpha(q));
        match target {
            Some(r) => {
                for k in 1..*r {
                    records.push(record(&video, k as u32, &padded(&tag, k - 1), "", ""));
                }
                records.push(record(&video, 0, &padded(&tag, r - 1), "", ""));
            }
            None => {
                for k in 1..=3 {
                    records.push(record(&video, k, &tag, "", ""));
                }
                records.push(record(&video, 0, "unrelated", "", ""));
            }
        }
        log.push(LoggedQuery { query: QuerySpec::tags([tag]), truth: vec![KeyframeId::new(&video, 0)] });
    }
    (records, log)
}
