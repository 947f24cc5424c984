use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::preprocess::{ExamplePoint, Gender};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const DEFAULT_MAX_SEQUENCE_LENGTH: usize = 64;
const STD_FLOOR: f64 = 1e-8;

/// Diagnosis code to index map. Index 0 is padding, 1 is unknown, and
/// known codes follow in sorted order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    pub max_sequence_length: usize,
    #[serde(skip)]
    index: BTreeMap<String, usize>,
}

impl Vocabulary {
    pub fn build<'a>(examples: impl IntoIterator<Item = &'a ExamplePoint>, max_sequence_length: usize) -> Self {
        let codes: BTreeSet<&str> = examples
            .into_iter()
            .flat_map(|e| e.diagnosis_codes.iter().map(String::as_str))
            .collect();
        Self::from_tokens(codes.into_iter().map(str::to_string).collect(), max_sequence_length)
    }

    fn from_tokens(tokens: Vec<String>, max_sequence_length: usize) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i + 2)).collect();
        Self {
            tokens,
            max_sequence_length: max_sequence_length.max(1),
            index,
        }
    }

    /// Rebuilds the lookup map after deserialization.
    pub fn reindex(&mut self) {
        self.index = self.tokens.iter().enumerate().map(|(i, t)| (t.clone(), i + 2)).collect();
    }

    /// Total number of indices including PAD and UNK.
    pub fn size(&self) -> usize {
        self.tokens.len() + 2
    }

    pub fn index_of(&self, code: &str) -> usize {
        self.index.get(code).copied().unwrap_or(UNK)
    }

    pub fn code_of(&self, index: usize) -> Option<&str> {
        index.checked_sub(2).and_then(|i| self.tokens.get(i)).map(String::as_str)
    }

    /// Fixed-length index sequence and validity mask. Only the most recent
    /// `max_sequence_length` codes are kept; an empty history becomes a
    /// single valid UNK so attention always has a position to attend to.
    pub fn encode_codes(&self, codes: &[String]) -> (Vec<usize>, Vec<bool>) {
        let len = self.max_sequence_length;
        let mut indices = vec![PAD; len];
        let mut mask = vec![false; len];
        if codes.is_empty() {
            indices[0] = UNK;
            mask[0] = true;
            return (indices, mask);
        }
        let start = codes.len().saturating_sub(len);
        for (pos, code) in codes[start..].iter().enumerate() {
            indices[pos] = self.index_of(code);
            mask[pos] = true;
        }
        (indices, mask)
    }
}

/// Column layout of the dense (vitals + demographics) input.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub vitals: Vec<String>,
    pub races: Vec<String>,
}

impl FeatureSchema {
    /// Numeric columns (vitals then age) that get z-scored.
    pub fn numeric_width(&self) -> usize {
        self.vitals.len() + 1
    }

    pub fn width(&self) -> usize {
        self.numeric_width() + Gender::ALL.len() + self.races.len()
    }

    pub fn column_names(&self) -> Vec<String> {
        let mut names = self.vitals.clone();
        names.push("age_years".into());
        names.extend(Gender::ALL.iter().map(|g| format!("gender={}", g.as_str())));
        names.extend(self.races.iter().map(|r| format!("race={r}")));
        names
    }
}

/// Per-column mean and standard deviation from the training split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Population statistics of each column, std floored at 1e-8.
    pub fn fit(rows: &[Vec<f64>]) -> Self {
        let width = rows.first().map_or(0, Vec::len);
        let n = rows.len().max(1) as f64;
        let mut mean = vec![0.0; width];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; width];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var.into_iter().map(|s| (s / n).sqrt().max(STD_FLOOR)).collect();
        Self { mean, std }
    }

    pub fn apply(&self, value: f64, column: usize) -> f64 {
        (value - self.mean[column]) / self.std[column]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodedExample {
    pub code_indices: Vec<usize>,
    pub mask: Vec<bool>,
    pub dense_features: Vec<f64>,
    pub label: u8,
}

/// Everything fitted on a training split that is needed to encode new
/// examples the same way.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub vocab: Vocabulary,
    pub schema: FeatureSchema,
    pub standardizer: Standardizer,
}

impl Encoder {
    pub fn fit(train: &[&ExamplePoint], max_sequence_length: usize) -> Self {
        let vocab = Vocabulary::build(train.iter().copied(), max_sequence_length);
        let vitals: BTreeSet<&str> = train
            .iter()
            .flat_map(|e| e.vitals_features.keys().map(String::as_str))
            .collect();
        let races: BTreeSet<&str> = train.iter().map(|e| e.race.as_str()).collect();
        let schema = FeatureSchema {
            vitals: vitals.into_iter().map(str::to_string).collect(),
            races: races.into_iter().map(str::to_string).collect(),
        };
        let raw: Vec<Vec<f64>> = train.iter().map(|e| raw_numeric(&schema, e, None)).collect();
        let standardizer = Standardizer::fit(&raw);
        Self {
            vocab,
            schema,
            standardizer,
        }
    }

    pub fn encode(&self, example: &ExamplePoint) -> EncodedExample {
        let (code_indices, mask) = self.vocab.encode_codes(&example.diagnosis_codes);
        let numeric = raw_numeric(&self.schema, example, Some(&self.standardizer.mean));
        let mut dense: Vec<f64> = numeric
            .iter()
            .enumerate()
            .map(|(c, &v)| self.standardizer.apply(v, c))
            .collect();
        dense.extend(Gender::ALL.iter().map(|&g| if example.gender == g { 1.0 } else { 0.0 }));
        dense.extend(self.schema.races.iter().map(|r| if &example.race == r { 1.0 } else { 0.0 }));
        EncodedExample {
            code_indices,
            mask,
            dense_features: dense,
            label: example.label,
        }
    }

    pub fn encode_all(&self, examples: &[&ExamplePoint]) -> Vec<EncodedExample> {
        examples.iter().map(|e| self.encode(e)).collect()
    }

    pub fn dense_width(&self) -> usize {
        self.schema.width()
    }
}

/// Vitals in schema order followed by age. A vital absent from the example
/// takes `fallback` (the training mean) when given, otherwise 0.
fn raw_numeric(schema: &FeatureSchema, e: &ExamplePoint, fallback: Option<&[f64]>) -> Vec<f64> {
    let mut row: Vec<f64> = schema
        .vitals
        .iter()
        .enumerate()
        .map(|(c, name)| {
            e.vitals_features
                .get(name)
                .copied()
                .unwrap_or_else(|| fallback.map_or(0.0, |m| m[c]))
        })
        .collect();
    row.push(e.age_years);
    row
}

/// Encodes `examples` with an encoder fitted on the training split.
pub fn encode(examples: &[&ExamplePoint], encoder: &Encoder) -> Vec<EncodedExample> {
    encoder.encode_all(examples)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example(codes: &[&str], weight: f64, label: u8) -> ExamplePoint {
        ExamplePoint {
            patient_id: format!("p{weight}"),
            diagnosis_codes: codes.iter().map(|s| s.to_string()).collect(),
            vitals_features: [("weight".to_string(), weight)].into_iter().collect(),
            age_years: 50.0,
            gender: Gender::Female,
            race: "white".into(),
            label,
        }
    }

    #[test]
    fn empty_history_gets_unk_sentinel() {
        let vocab = Vocabulary::build(&[example(&["I10"], 1.0, 0)], 4);
        let (idx, mask) = vocab.encode_codes(&[]);
        assert_eq!(idx, [UNK, PAD, PAD, PAD]);
        assert_eq!(mask, [true, false, false, false]);
    }

    #[test]
    fn unseen_code_maps_to_unk() {
        let vocab = Vocabulary::build(&[example(&["I10", "E78.5"], 1.0, 0)], 4);
        assert_eq!(vocab.size(), 4);
        assert_eq!(vocab.index_of("Z99.9"), UNK);
        assert_ne!(vocab.index_of("I10"), UNK);
        assert_ne!(vocab.index_of("I10"), PAD);
    }

    #[test]
    fn truncation_keeps_most_recent() {
        let codes = ["A01", "B02", "C03", "D04", "E05"];
        let vocab = Vocabulary::build(&[example(&codes, 1.0, 0)], 3);
        let owned: Vec<String> = codes.iter().map(|s| s.to_string()).collect();
        let (idx, mask) = vocab.encode_codes(&owned);
        let decoded: Vec<&str> = idx.iter().filter_map(|&i| vocab.code_of(i)).collect();
        assert_eq!(decoded, ["C03", "D04", "E05"]);
        assert_eq!(mask, [true; 3]);
    }

    #[test]
    fn z_score_arithmetic() {
        // Column with mean 10 and population std 2.
        let s = Standardizer::fit(&[vec![8.0], vec![12.0]]);
        assert_eq!(s.mean, [10.0]);
        assert_eq!(s.std, [2.0]);
        assert_eq!(s.apply(12.0, 0), 1.0);
        let constant = Standardizer::fit(&[vec![3.0], vec![3.0]]);
        assert_eq!(constant.std, [1e-8]);
    }

    #[test]
    fn dense_layout() {
        let train = [example(&["I10"], 60.0, 0), example(&["I10"], 80.0, 1)];
        let refs: Vec<&ExamplePoint> = train.iter().collect();
        let enc = Encoder::fit(&refs, 8);
        assert_eq!(enc.schema.column_names(), [
            "weight",
            "age_years",
            "gender=male",
            "gender=female",
            "gender=unspecified",
            "race=white"
        ]);
        let e = enc.encode(&train[1]);
        assert_eq!(e.dense_features[0], 1.0);
        assert_eq!(&e.dense_features[2..], &[0.0, 1.0, 0.0, 1.0]);
    }
}
