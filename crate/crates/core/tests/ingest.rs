use std::fs;

use kfs_core::error::IngestError;
use kfs_core::ingest::{build_index, IngestManifest, LoadedIndex, REPORT_FILE};
use kfs_core::query::{QuerySpec, RankerTriple, SimilarQuery};
use kfs_core::{Aspect, Field, KeyframeId};
use kfs_testkit::dataset;
use kfs_testkit::fixtures::CAR_TOKENS;

fn build(dir: &std::path::Path) -> (IngestManifest, std::path::PathBuf) {
    let manifest = IngestManifest::load(&dataset::write(dir).unwrap()).unwrap();
    let out = dir.join("index");
    build_index(&manifest, &out, false).unwrap();
    (manifest, out)
}

#[test]
fn complete_dataset_indexes_every_keyframe() {
    let tmp = tempfile::tempdir().unwrap();
    let (_, out) = build(tmp.path());
    let report: kfs_core::ingest::IngestReport = serde_json::from_slice(&fs::read(out.join(REPORT_FILE)).unwrap()).unwrap();
    assert_eq!(report.keyframes, 10);
    assert_eq!(report.indexed, 10);
    assert!(report.failures.is_empty(), "{:?}", report.failures);
    assert_eq!(report.missing.get("vectors"), Some(&2));
    assert_eq!(report.encoder.as_ref().unwrap().dim, dataset::VECTOR_DIM);

    let loaded = LoadedIndex::open(&out).unwrap();
    let s = &loaded.snapshot;
    let va0 = s.doc(s.ordinal(&KeyframeId::new("va", 0)).unwrap());
    assert_eq!(va0.aspect, Aspect::Ar16x9);
    assert!(!va0.is_bw);
    let vb = s.doc(s.ordinal(&KeyframeId::new("vb", 4)).unwrap());
    assert_eq!(vb.aspect, Aspect::Ar4x3);
    assert!(vb.is_bw);

    let bboxes = s.field(Field::ObjcolorBboxes);
    let classes = s.field(Field::ObjcolorClasses);
    let va0 = s.ordinal(&KeyframeId::new("va", 0)).unwrap();
    let tokens: Vec<(String, u32)> = bboxes.doc_terms(va0).map(|(t, n)| (t.to_string(), n)).collect();
    for t in CAR_TOKENS {
        assert!(tokens.iter().any(|(x, _)| x == t), "{t}");
    }
    // low-confidence person is dropped, colors land in their cells
    assert!(!tokens.iter().any(|(x, _)| x.ends_with("person")));
    assert!(tokens.iter().any(|(x, _)| x == "a1red"));
    assert!(tokens.iter().any(|(x, _)| x == "g7blue"));
    let class_terms: Vec<String> = classes.doc_terms(va0).map(|(t, _)| t.to_string()).collect();
    assert!(class_terms.contains(&"car1".to_string()));
    assert!(class_terms.contains(&"red".to_string()));
    assert!(class_terms.contains(&"blue".to_string()));

    // tags: relevance 2 gives two repetitions
    let tags: Vec<(String, u32)> = s.field(Field::SceneTags).doc_terms(va0).map(|(t, n)| (t.to_string(), n)).collect();
    assert_eq!(tags, [("street".to_string(), 2)]);

    let engine = loaded.engine();
    let page = engine
        .execute(&QuerySpec { tags: vec!["park".into()], ..QuerySpec::default() }, &RankerTriple::default(), 100)
        .unwrap();
    assert_eq!(page.total, 5);
    assert!(page.hits.iter().all(|h| h.id.video == "vb"));
}

#[test]
fn keyframes_without_vectors_are_never_similar() {
    let tmp = tempfile::tempdir().unwrap();
    let (_, out) = build(tmp.path());
    let engine = LoadedIndex::open(&out).unwrap().engine();
    for id in dataset::ids() {
        let page = engine.similar(&SimilarQuery::Id(id), 100).unwrap();
        assert_eq!(page.total, 8);
        for missing in dataset::without_vectors() {
            assert!(page.hits.iter().all(|h| h.id != missing));
        }
    }
}

#[test]
fn rebuild_is_deterministic_and_guarded() {
    let tmp = tempfile::tempdir().unwrap();
    let (manifest, out) = build(tmp.path());
    let first = fs::read(out.join(REPORT_FILE)).unwrap();
    assert!(matches!(build_index(&manifest, &out, false), Err(IngestError::OutputExists(_))));
    build_index(&manifest, &out, true).unwrap();
    assert_eq!(fs::read(out.join(REPORT_FILE)).unwrap(), first);
    let again = tmp.path().join("again");
    build_index(&manifest, &again, false).unwrap();
    assert_eq!(fs::read(again.join(REPORT_FILE)).unwrap(), first);
    assert_eq!(
        fs::read(again.join("encoder.json")).unwrap(),
        fs::read(out.join("encoder.json")).unwrap()
    );
}

#[test]
fn bad_inputs_skip_only_their_record() {
    let tmp = tempfile::tempdir().unwrap();
    let path = dataset::write(tmp.path()).unwrap();
    fs::write(tmp.path().join("frames/va/1.png"), b"not a png").unwrap();
    let mut tags = fs::read_to_string(tmp.path().join("tags.jsonl")).unwrap();
    tags.push_str("{broken\n");
    fs::write(tmp.path().join("tags.jsonl"), tags).unwrap();
    fs::remove_file(tmp.path().join("frames/vb/2.png")).unwrap();

    let manifest = IngestManifest::load(&path).unwrap();
    let report = build_index(&manifest, &tmp.path().join("index"), false).unwrap();
    assert_eq!(report.indexed, 9);
    let at: Vec<(&str, &str)> = report.failures.iter().map(|f| (f.source.as_str(), f.at.as_str())).collect();
    assert_eq!(at, [("images", "va:1"), ("tags", "line 11")]);
    // a missing frame is not a failure
    assert_eq!(report.missing.get("images"), Some(&1));
}

#[test]
fn empty_metadata_indexes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let path = dataset::write(tmp.path()).unwrap();
    fs::write(tmp.path().join("metadata.jsonl"), "").unwrap();
    let manifest = IngestManifest::load(&path).unwrap();
    assert!(matches!(build_index(&manifest, &tmp.path().join("index"), false), Err(IngestError::NothingIndexed)));
}
