use std::sync::Arc;

use kfs_core::color::Palette;
use kfs_core::error::QueryError;
use kfs_core::feature::{EncoderState, FeatureVector, RotationRecipe};
use kfs_core::query::{Engine, QuerySpec, RankerTriple, SimilarQuery};
use kfs_core::{Aspect, KeyframeId, KeyframeRecord, Snapshot};
use kfs_testkit::{oracle, synth};

fn engine(records: &[KeyframeRecord], encoder: EncoderState) -> Engine {
    Engine::new(Arc::new(Snapshot::from_records(records).unwrap()), Arc::new(Palette::default()))
        .with_encoder(Arc::new(encoder))
}

#[test]
fn orthogonal_pair() {
    let enc = EncoderState::new(vec![0.0, 0.0], RotationRecipe::Identity, 0.0, 1.0).unwrap();
    let mut records: Vec<KeyframeRecord> = (0..3)
        .map(|i| KeyframeRecord::empty(KeyframeId::new("s", i), Aspect::Ar16x9))
        .collect();
    records[0].visual_features = enc.encode(&FeatureVector(vec![3.0, 0.0])).unwrap().to_text();
    records[1].visual_features = enc.encode(&FeatureVector(vec![0.0, 5.0])).unwrap().to_text();
    assert_eq!(records[0].visual_features, "v1 v1 v1");
    let e = engine(&records, enc);

    let page = e.similar(&SimilarQuery::Id(KeyframeId::new("s", 0)), 10).unwrap();
    let got: Vec<(String, f64)> = page.hits.iter().map(|h| (h.id.to_string(), h.score)).collect();
    // s:2 has no features and never shows up
    assert_eq!(got, [("s:0".to_string(), 9.0), ("s:1".to_string(), 0.0)]);
    assert_eq!(page.total, 2);

    let page = e.execute(&QuerySpec::similar_to(KeyframeId::new("s", 1)), &RankerTriple::default(), 1).unwrap();
    assert_eq!(page.hits[0].id, KeyframeId::new("s", 1));
    assert_eq!(page.hits[0].score, 25.0);

    // (1, -2) feeds v1 once and the negative slot of the second axis twice
    let page = e.similar(&SimilarQuery::Vector(FeatureVector(vec![1.0, -2.0])), 10).unwrap();
    assert_eq!(page.hits.iter().map(|h| h.score).collect::<Vec<_>>(), [3.0, 0.0]);
}

#[test]
fn errors() {
    let enc = EncoderState::new(vec![0.0; 2], RotationRecipe::Identity, 0.0, 1.0).unwrap();
    let records = vec![KeyframeRecord::empty(KeyframeId::new("s", 0), Aspect::Ar16x9)];
    let e = engine(&records, enc);
    assert!(matches!(e.similar(&SimilarQuery::Id(KeyframeId::new("s", 9)), 5), Err(QueryError::UnknownId(_))));
    assert!(matches!(e.similar(&SimilarQuery::Vector(FeatureVector(vec![1.0])), 5), Err(QueryError::Encode(_))));
    let bare = Engine::new(Arc::new(Snapshot::from_records(&records).unwrap()), Arc::new(Palette::default()));
    assert!(matches!(bare.similar(&SimilarQuery::Vector(FeatureVector(vec![1.0, 1.0])), 5), Err(QueryError::NoEncoder)));
    let mixed = QuerySpec { tags: vec!["x".into()], ..QuerySpec::similar_to(KeyframeId::new("s", 0)) };
    assert!(e.execute(&mixed, &RankerTriple::default(), 5).is_err());
}

#[test]
fn top_k_matches_exact_integer_dot() {
    let dim = 64;
    let mut rng = synth::rng(5);
    let sample: Vec<FeatureVector> = (0..1000).map(|_| synth::standard_normal(&mut rng, dim)).collect();
    let enc = EncoderState::fit(&sample, 42, 1.8, 10.0).unwrap();
    let quantized: Vec<Vec<u32>> = sample.iter().map(|v| enc.quantize(v).unwrap()).collect();
    let records: Vec<KeyframeRecord> = quantized
        .iter()
        .enumerate()
        .map(|(i, q)| KeyframeRecord {
            visual_features: kfs_core::feature::to_document(q).to_text(),
            ..KeyframeRecord::empty(KeyframeId::new(format!("v{:02}", i % 40), (i / 40) as u32), Aspect::Ar16x9)
        })
        .collect();
    let e = engine(&records, enc.clone());

    for probe in 0..25 {
        let query = synth::standard_normal(&mut rng, dim);
        let qv = enc.quantize(&query).unwrap();
        let mut want: Vec<(u64, &KeyframeId, usize)> = quantized
            .iter()
            .enumerate()
            .filter(|(_, q)| q.iter().any(|&x| x > 0))
            .map(|(i, q)| (oracle::int_dot(&qv, q), &records[i].id, i))
            .collect();
        want.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(b.1)));
        let page = e.similar(&SimilarQuery::Vector(query), 10).unwrap();
        assert_eq!(page.total, want.len(), "probe {probe}");
        let got: Vec<(u64, &KeyframeId)> = page.hits.iter().map(|h| (h.score as u64, &h.id)).collect();
        let expect: Vec<(u64, &KeyframeId)> = want[..10].iter().map(|w| (w.0, w.1)).collect();
        assert_eq!(got, expect, "probe {probe}");

        // by id: the stored document is the query
        let id = records[probe].id.clone();
        let by_id = e.similar(&SimilarQuery::Id(id), 3).unwrap();
        let self_dot = oracle::int_dot(&quantized[probe], &quantized[probe]);
        assert!(by_id.hits[0].score >= self_dot as f64);
    }
}
