//! The four text scoring functions.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub const DEFAULT_K1: f64 = 1.2;
pub const DEFAULT_B: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RankerKind {
    Bm25,
    TfIdf,
    Tf,
    NormTf,
}

impl RankerKind {
    pub const ALL: [RankerKind; 4] = [RankerKind::Bm25, RankerKind::TfIdf, RankerKind::Tf, RankerKind::NormTf];

    pub fn name(self) -> &'static str {
        match self {
            RankerKind::Bm25 => "BM25",
            RankerKind::TfIdf => "TFIDF",
            RankerKind::Tf => "TF",
            RankerKind::NormTf => "NormTF",
        }
    }
}

impl fmt::Display for RankerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RankerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RankerKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown ranker `{s}` (expected BM25, TFIDF, TF or NormTF)"))
    }
}

impl Serialize for RankerKind {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for RankerKind {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        String::deserialize(deserializer)?.parse().map_err(serde::de::Error::custom)
    }
}

/// A ranker kind plus its parameters (only BM25 has any).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ranker {
    pub kind: RankerKind,
    #[serde(default = "default_k1")]
    pub k1: f64,
    #[serde(default = "default_b")]
    pub b: f64,
}

fn default_k1() -> f64 {
    DEFAULT_K1
}

fn default_b() -> f64 {
    DEFAULT_B
}

impl Ranker {
    pub fn new(kind: RankerKind) -> Self {
        Self { kind, k1: DEFAULT_K1, b: DEFAULT_B }
    }

    pub fn bm25(k1: f64, b: f64) -> Result<Self, String> {
        if k1.is_nan() || k1 <= 0.0 || !(0.0..=1.0).contains(&b) {
            return Err(format!("BM25 needs k1 > 0 and 0 <= b <= 1, got k1={k1} b={b}"));
        }
        Ok(Self { kind: RankerKind::Bm25, k1, b })
    }
}

impl From<RankerKind> for Ranker {
    fn from(kind: RankerKind) -> Self {
        Ranker::new(kind)
    }
}

impl fmt::Display for Ranker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.kind.fmt(f)
    }
}

/// `1 + ln(N / (1 + df))`, the TFIDF term weight.
pub fn tfidf_idf(doc_count: u32, df: u32) -> f64 {
    1.0 + (doc_count as f64 / (1.0 + df as f64)).ln()
}

/// `ln(1 + (N - df + 0.5) / (df + 0.5))`, the BM25 term weight.
pub fn bm25_idf(doc_count: u32, df: u32) -> f64 {
    let (n, df) = (doc_count as f64, df as f64);
    (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
}

/// BM25 term-frequency saturation with length normalization.
pub fn bm25_tf(tf: u32, doc_len: u32, avg_len: f64, k1: f64, b: f64) -> f64 {
    let tf = tf as f64;
    tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * doc_len as f64 / avg_len))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for k in RankerKind::ALL {
            assert_eq!(k.name().parse::<RankerKind>().unwrap(), k);
        }
        assert_eq!("normtf".parse::<RankerKind>().unwrap(), RankerKind::NormTf);
        assert!("cosine".parse::<RankerKind>().is_err());
        let r: Ranker = serde_json::from_str(r#"{"kind":"BM25"}"#).unwrap();
        assert_eq!(r, Ranker::new(RankerKind::Bm25));
    }

    #[test]
    fn bm25_parameter_checks() {
        assert!(Ranker::bm25(0.0, 0.5).is_err());
        assert!(Ranker::bm25(1.2, 1.5).is_err());
        assert!(Ranker::bm25(2.0, 0.0).is_ok());
    }

    #[test]
    fn weights_are_positive() {
        for n in 1..50 {
            for df in 1..=n {
                assert!(tfidf_idf(n, df) > 0.0);
                assert!(bm25_idf(n, df) > 0.0);
            }
        }
    }
}
