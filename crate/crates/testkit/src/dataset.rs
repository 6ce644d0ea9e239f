//! A small on-disk ingest dataset: metadata, frames, detections, tags and
//! feature vectors for ten keyframes in two videos.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use kfs_core::feature::{FeatureVector, VectorLine};
use kfs_core::KeyframeId;
use rand::Rng;
use serde_json::json;

use crate::fixtures::CAR_BOX;
use crate::synth;

pub const VECTOR_DIM: usize = 8;
pub const FRAME_SIDE: u32 = 70;

/// All ids in the dataset, sorted.
pub fn ids() -> Vec<KeyframeId> {
    ["va", "vb"].iter().flat_map(|v| (0..5).map(move |s| KeyframeId::new(*v, s))).collect()
}

/// Keyframes with no feature vector.
pub fn without_vectors() -> Vec<KeyframeId> {
    vec![KeyframeId::new("va", 4), KeyframeId::new("vb", 4)]
}

/// `vb:4` is a gray frame; the rest are red on the left four columns and
/// blue on the right three.
pub fn frame(id: &KeyframeId) -> RgbImage {
    if id.video == "vb" && id.segment == 4 {
        return RgbImage::from_pixel(FRAME_SIDE, FRAME_SIDE, Rgb([128, 128, 128]));
    }
    RgbImage::from_fn(FRAME_SIDE, FRAME_SIDE, |x, _| if x < 40 { Rgb([220, 20, 20]) } else { Rgb([20, 40, 220]) })
}

fn write_lines(path: &Path, lines: impl IntoIterator<Item = String>) -> io::Result<()> {
    let mut text = String::new();
    for l in lines {
        text.push_str(&l);
        text.push('\n');
    }
    fs::write(path, text)
}

/// Writes the dataset under `dir` and returns the manifest path.
///
/// * `va:*` have a car over the right side (plus a low-confidence person)
///   and the tag `street`; `vb:*` have a dog top-left and the tag `park`.
/// * `vb:*` frames are 4:3, `va:*` are 16:9.
pub fn write(dir: &Path) -> io::Result<PathBuf> {
    let frames = dir.join("frames");
    let mut meta = Vec::new();
    let mut dets = Vec::new();
    let mut tags = Vec::new();
    let mut vectors = Vec::new();
    let mut rng = synth::rng(17);
    for id in ids() {
        let video_dir = frames.join(&id.video);
        fs::create_dir_all(&video_dir)?;
        frame(&id).save(video_dir.join(format!("{}.png", id.segment))).map_err(io::Error::other)?;
        let (w, h) = if id.video == "va" { (1280, 720) } else { (640, 480) };
        meta.push(json!({ "id": id.to_string(), "width": w, "height": h }).to_string());
        let detections = if id.video == "va" {
            json!([
                { "labels": ["car"], "box": CAR_BOX, "confidence": 0.9 },
                { "labels": ["person"], "box": [0.0, 0.0, 0.2, 0.2], "confidence": 0.1 }
            ])
        } else {
            json!([{ "labels": ["dog"], "box": [0.0, 0.0, 0.3, 0.3], "confidence": 0.8 }])
        };
        dets.push(json!({ "id": id.to_string(), "detections": detections }).to_string());
        let tag = if id.video == "va" { json!({ "tag": "street", "relevance": 2.0 }) } else { json!({ "tag": "park", "relevance": 1.0 }) };
        tags.push(json!({ "id": id.to_string(), "tags": [tag] }).to_string());
        let v = synth::standard_normal(&mut rng, VECTOR_DIM);
        let v = FeatureVector(v.0.iter().map(|x| x * rng.random_range(1.0..3.0)).collect());
        if !without_vectors().contains(&id) {
            vectors.push(VectorLine { id: id.clone(), vector: v }.to_line());
        }
    }
    write_lines(&dir.join("metadata.jsonl"), meta)?;
    write_lines(&dir.join("detections.jsonl"), dets)?;
    write_lines(&dir.join("tags.jsonl"), tags)?;
    write_lines(&dir.join("vectors.csv"), vectors)?;
    let manifest = json!({
        "metadata": "metadata.jsonl",
        "images": "frames",
        "detections": "detections.jsonl",
        "tags": "tags.jsonl",
        "vectors": "vectors.csv",
        "encoder": { "seed": 42, "threshold": 0.5, "scale": 10.0, "sample_size": 100 }
    });
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest).map_err(io::Error::other)?)?;
    Ok(path)
}
