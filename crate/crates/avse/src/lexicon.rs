//! The phrase table shipped next to the binary.

use serde::Deserialize;

pub const LEXICON_JSON: &str = include_str!("../resources/lexicon.json");

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ScoreMap {
    pub offset: f64,
    pub slope: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct Phrase {
    pub phrase: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct Lexicon {
    pub version: u32,
    pub score_map: ScoreMap,
    pub phrases: Vec<Phrase>,
}

pub fn shipped() -> Lexicon {
    serde_json::from_str(LEXICON_JSON).expect("bundled lexicon parses")
}
