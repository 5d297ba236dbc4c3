//! Data files compiled into the binary: gazetteer, training corpora and the
//! witness scorer. Scenarios fall back to these when they name no file.

pub const GAZETTEER_TSV: &str = include_str!("../data/gazetteer.tsv");
pub const RELEVANCE_CORPUS: &str = include_str!("../data/relevance.jsonl");
pub const DAMAGE_CORPUS: &str = include_str!("../data/damage.jsonl");
pub const WITNESS_WEIGHTS: &str = include_str!("../data/witness_weights.json");
pub const WITNESS_CENTROID: &str = include_str!("../data/witness_centroid.json");
