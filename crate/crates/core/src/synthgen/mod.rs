//! Seeded synthetic EHR cohorts with a planted comorbidity signal.
//!
//! Positives and negatives share history lengths, vitals and demographics;
//! the only label signal is how often the marker codes appear in the
//! pre-diagnosis history. Everything planted is recorded in a bookkeeping
//! structure so tests can check the pipeline against it.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{write_json, write_jsonl};
use crate::nn::RngStream;
use crate::preprocess::{is_t2dm_code, is_valid_icd10, Encounter, Gender, RawCohort, RawPatient, VITAL_ATTRIBUTES};

/// Missing-value percentages of a large outpatient EHR extract, used as
/// the default missingness profile.
pub const REFERENCE_MISSING_PERCENT: [(&str, f64); 17] = [
    ("weight", 12.67),
    ("height", 21.53),
    ("bmi", 28.34),
    ("lean_body_weight", 64.71),
    ("ideal_body_weight", 65.14),
    ("neck_circumference", 92.22),
    ("waist", 91.80),
    ("oxygen_saturation", 89.15),
    ("peak_expiratory_flow", 99.99),
    ("blood_type", 99.82),
    ("blood_rh", 99.94),
    ("finger_stick", 98.98),
    ("pulse", 28.91),
    ("respiration", 53.93),
    ("temperature", 51.66),
    ("systolic_bp", 16.48),
    ("diastolic_bp", 16.44),
];

const DIAGNOSIS_CODES: [&str; 3] = ["E11.9", "E11.65", "E11.22"];
const ORIENTATIONS: [(&str, f64); 5] = [
    ("heterosexual", 0.85),
    ("homosexual", 0.05),
    ("bisexual", 0.04),
    ("other", 0.02),
    ("declined", 0.04),
];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkerLift {
    /// Probability that a positive patient carries a given marker.
    pub p_pos: f64,
    /// Probability that a negative patient carries a given marker.
    pub p_neg: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_patients: usize,
    pub positive_prevalence: f64,
    pub marker_codes: Vec<String>,
    pub marker_lift: MarkerLift,
    /// Inclusive range of visits in the history window.
    pub encounters_per_patient: (usize, usize),
    /// Inclusive range of background codes per visit.
    pub codes_per_encounter: (usize, usize),
    pub background_codes: usize,
    /// Fraction of patients given fewer than four prior visits, so they are
    /// removed by history filtering.
    pub short_history_fraction: f64,
    /// Per-attribute probability that a visit lacks the value.
    pub missing_rate: BTreeMap<String, f64>,
    pub gender_weights: BTreeMap<Gender, f64>,
    pub race_weights: BTreeMap<String, f64>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_patients: 10_000,
            positive_prevalence: 0.1,
            marker_codes: vec!["I10".into(), "E66.9".into(), "E78.5".into()],
            marker_lift: MarkerLift { p_pos: 0.8, p_neg: 0.2 },
            encounters_per_patient: (5, 12),
            codes_per_encounter: (1, 2),
            background_codes: 60,
            short_history_fraction: 0.02,
            missing_rate: REFERENCE_MISSING_PERCENT
                .iter()
                .map(|&(k, v)| (k.to_string(), v / 100.0))
                .collect(),
            gender_weights: BTreeMap::from([(Gender::Male, 0.49), (Gender::Female, 0.49), (Gender::Unspecified, 0.02)]),
            race_weights: BTreeMap::from([
                ("white".to_string(), 0.50),
                ("black".to_string(), 0.35),
                ("asian".to_string(), 0.07),
                ("hispanic".to_string(), 0.05),
                ("other".to_string(), 0.03),
            ]),
            seed: 42,
        }
    }
}

fn probability(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("{name} must be in [0, 1], got {p}")));
    }
    Ok(())
}

fn weights<K>(name: &str, w: &BTreeMap<K, f64>) -> Result<()> {
    if w.values().any(|&v| !(v >= 0.0 && v.is_finite())) || w.values().sum::<f64>() <= 0.0 {
        return Err(Error::InvalidArgument(format!("{name} weights must be non-negative with a positive sum")));
    }
    Ok(())
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_patients == 0 {
            return Err(Error::InvalidArgument("n_patients must be positive".into()));
        }
        if !(self.positive_prevalence > 0.0 && self.positive_prevalence < 1.0) {
            return Err(Error::InvalidArgument("positive_prevalence must be in (0, 1)".into()));
        }
        probability("marker_lift.p_pos", self.marker_lift.p_pos)?;
        probability("marker_lift.p_neg", self.marker_lift.p_neg)?;
        if self.marker_lift.p_pos <= self.marker_lift.p_neg {
            return Err(Error::InvalidArgument("marker_lift.p_pos must exceed p_neg".into()));
        }
        probability("short_history_fraction", self.short_history_fraction)?;
        let (lo, hi) = self.encounters_per_patient;
        if lo < 5 || lo > hi {
            return Err(Error::InvalidArgument(format!(
                "encounters_per_patient must satisfy 5 <= min <= max, got {lo}..={hi}"
            )));
        }
        let (clo, chi) = self.codes_per_encounter;
        if clo == 0 || clo > chi || self.background_codes < chi {
            return Err(Error::InvalidArgument(
                "codes_per_encounter must be a positive range within the background pool".into(),
            ));
        }
        let mut seen = BTreeSet::new();
        for m in &self.marker_codes {
            if !is_valid_icd10(m) || is_t2dm_code(m) || !seen.insert(m) {
                return Err(Error::InvalidArgument(format!("invalid or duplicate marker code `{m}`")));
            }
        }
        for (k, &v) in &self.missing_rate {
            if !VITAL_ATTRIBUTES.contains(&k.as_str()) {
                return Err(Error::InvalidArgument(format!("unknown vitals attribute `{k}`")));
            }
            probability(&format!("missing_rate.{k}"), v)?;
        }
        weights("gender", &self.gender_weights)?;
        weights("race", &self.race_weights)
    }

    pub fn missing_rate_of(&self, attribute: &str) -> f64 {
        self.missing_rate.get(attribute).copied().unwrap_or(0.0)
    }
}

/// Everything planted for one patient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatientFacts {
    pub patient_id: String,
    pub label: u8,
    pub short_history: bool,
    pub num_encounters: usize,
    /// Index of the first diagnosis visit (positives only).
    pub diagnosis_index: Option<usize>,
    pub markers: Vec<String>,
    /// Visits with a recorded value, per attribute.
    pub observed: BTreeMap<String, usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SynthTotals {
    pub patients: usize,
    pub positives: usize,
    pub negatives: usize,
    pub encounters: usize,
    pub expected_after_history_filter: (usize, usize),
    pub marker_patients_positive: BTreeMap<String, usize>,
    pub marker_patients_negative: BTreeMap<String, usize>,
    pub observed: BTreeMap<String, usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bookkeeping {
    pub config: SynthConfig,
    pub totals: SynthTotals,
    pub patients: Vec<PatientFacts>,
}

#[derive(Clone, Debug)]
pub struct SynthCohort {
    pub patients: Vec<RawPatient>,
    pub encounters: Vec<Encounter>,
    pub bookkeeping: Bookkeeping,
}

impl SynthCohort {
    pub fn into_raw(self) -> RawCohort {
        RawCohort {
            patients: self.patients,
            encounters: self.encounters,
            parse_errors: Vec::new(),
        }
    }

    pub fn write(&self, patients: &Path, encounters: &Path, bookkeeping: &Path) -> Result<()> {
        write_jsonl(patients, &self.patients)?;
        write_jsonl(encounters, &self.encounters)?;
        write_json(bookkeeping, &self.bookkeeping)
    }
}

/// Deterministic pool of ICD-shaped codes that avoids the diagnosis
/// family and the markers.
pub fn background_pool(size: usize, markers: &[String]) -> Vec<String> {
    const LETTERS: &[u8] = b"ABCDFGHIJKLMNRSZ";
    let mut pool = BTreeSet::new();
    let mut out = Vec::with_capacity(size);
    let mut i = 0usize;
    while out.len() < size {
        let letter = LETTERS[i % LETTERS.len()] as char;
        let number = 10 + (i / LETTERS.len() * 37 + i * 11) % 90;
        let code = if i.is_multiple_of(3) {
            format!("{letter}{number:02}")
        } else {
            format!("{letter}{number:02}.{}", i % 10)
        };
        if !markers.contains(&code) && pool.insert(code.clone()) {
            out.push(code);
        }
        i += 1;
    }
    out
}

fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

/// Per-patient baseline for the vitals, conditioned on gender and age.
struct VitalsProfile {
    height: f64,
    bmi: f64,
    male: bool,
    age: f64,
    blood_type: f64,
    blood_rh: f64,
}

impl VitalsProfile {
    fn draw(rng: &mut RngStream, gender: Gender, age: f64) -> Self {
        let male = match gender {
            Gender::Male => true,
            Gender::Female => false,
            Gender::Unspecified => rng.bernoulli(0.5),
        };
        let adult = (age / 18.0).min(1.0);
        let full_height = if male { rng.normal(176.0, 7.0) } else { rng.normal(163.0, 6.5) };
        let height = 100.0 + (full_height - 100.0) * adult.max(0.2);
        let bmi = (rng.normal(26.5, 4.5) + 0.04 * (age - 45.0)).clamp(15.0, 50.0);
        Self {
            height,
            bmi,
            male,
            age,
            blood_type: (rng.int_inclusive(1, 4)) as f64,
            blood_rh: f64::from(u8::from(rng.bernoulli(0.85))),
        }
    }

    fn sample(&self, rng: &mut RngStream, attribute: &str) -> f64 {
        let h = self.height;
        let weight = self.bmi * (h / 100.0).powi(2) + rng.normal(0.0, 1.5);
        match attribute {
            "weight" => round1(weight),
            "height" => round1(h + rng.normal(0.0, 0.5)),
            "bmi" => round1(weight / (h / 100.0).powi(2)),
            "lean_body_weight" => round1(if self.male {
                0.407 * weight + 0.267 * h - 19.2
            } else {
                0.252 * weight + 0.473 * h - 48.3
            }),
            "ideal_body_weight" => round1(if self.male { 50.0 } else { 45.5 } + 0.9 * (h - 152.4)),
            "neck_circumference" => round1(rng.normal(if self.male { 39.0 } else { 33.5 }, 2.5)),
            "waist" => round1(rng.normal(0.45 * h + 2.0 * (self.bmi - 25.0), 6.0)),
            "oxygen_saturation" => round1(rng.normal(97.5, 1.2).min(100.0)),
            "peak_expiratory_flow" => round1(rng.normal(if self.male { 520.0 } else { 380.0 }, 70.0)),
            "blood_type" => self.blood_type,
            "blood_rh" => self.blood_rh,
            "finger_stick" => round1(rng.normal(105.0, 20.0)),
            "pulse" => rng.normal(75.0, 10.0).round(),
            "respiration" => rng.normal(16.0, 2.0).round(),
            "temperature" => round1(rng.normal(36.8, 0.35)),
            "systolic_bp" => rng.normal(112.0 + 0.35 * self.age, 14.0).round(),
            "diastolic_bp" => rng.normal(72.0 + 0.12 * self.age, 9.0).round(),
            _ => unreachable!("unknown vitals attribute"),
        }
    }
}

fn pick<'a, K>(rng: &mut RngStream, w: &'a BTreeMap<K, f64>) -> &'a K {
    let weights: Vec<f64> = w.values().copied().collect();
    w.keys().nth(rng.categorical(&weights)).expect("non-empty weights")
}

/// Generates a cohort. Identical configurations give identical output.
pub fn generate_cohort(cfg: &SynthConfig) -> Result<SynthCohort> {
    cfg.validate()?;
    let pool = background_pool(cfg.background_codes, &cfg.marker_codes);
    let pool_weights: Vec<f64> = (0..pool.len()).map(|r| 1.0 / ((r + 1) as f64).powf(0.7)).collect();
    let orientation_weights: Vec<f64> = ORIENTATIONS.iter().map(|o| o.1).collect();
    let epoch = NaiveDate::from_ymd_opt(2010, 1, 1).expect("valid date");
    let root = RngStream::new(cfg.seed);
    let width = cfg.n_patients.to_string().len().max(5);

    let mut patients = Vec::with_capacity(cfg.n_patients);
    let mut encounters = Vec::new();
    let mut facts = Vec::with_capacity(cfg.n_patients);
    let mut totals = SynthTotals {
        patients: cfg.n_patients,
        marker_patients_positive: cfg.marker_codes.iter().map(|m| (m.clone(), 0)).collect(),
        marker_patients_negative: cfg.marker_codes.iter().map(|m| (m.clone(), 0)).collect(),
        observed: VITAL_ATTRIBUTES.iter().map(|a| (a.to_string(), 0)).collect(),
        ..SynthTotals::default()
    };

    for i in 0..cfg.n_patients {
        let mut rng = root.substream(i as u64);
        let patient_id = format!("P{i:0width$}");
        let positive = rng.bernoulli(cfg.positive_prevalence);
        let short = rng.bernoulli(cfg.short_history_fraction);
        let gender = *pick(&mut rng, &cfg.gender_weights);
        let race = pick(&mut rng, &cfg.race_weights).clone();
        let orientation = ORIENTATIONS[rng.categorical(&orientation_weights)].0;
        let age_at_start = rng.uniform_range(4.0, 88.0);
        let start = epoch + Duration::days(rng.int_inclusive(0, 7 * 365) as i64);
        let dob = start - Duration::days((age_at_start * 365.25) as i64);

        // Visits in the history window; positives then get a diagnosis visit
        // and possibly follow-ups.
        let history = if short {
            if positive {
                rng.int_inclusive(0, 3)
            } else {
                rng.int_inclusive(1, 3)
            }
        } else {
            rng.int_inclusive(cfg.encounters_per_patient.0, cfg.encounters_per_patient.1)
        };
        let total = if positive { history + 1 + rng.int_inclusive(0, 2) } else { history };

        let mut visit_codes: Vec<Vec<String>> = (0..total)
            .map(|_| {
                let n = rng.int_inclusive(cfg.codes_per_encounter.0, cfg.codes_per_encounter.1);
                let mut codes: Vec<String> = Vec::with_capacity(n + 1);
                while codes.len() < n {
                    let c = &pool[rng.categorical(&pool_weights)];
                    if !codes.contains(c) {
                        codes.push(c.clone());
                    }
                }
                codes
            })
            .collect();
        if positive {
            for (v, codes) in visit_codes.iter_mut().enumerate().skip(history) {
                let dx = if v == history {
                    DIAGNOSIS_CODES[rng.int_inclusive(0, DIAGNOSIS_CODES.len() - 1)]
                } else {
                    DIAGNOSIS_CODES[0]
                };
                codes.insert(0, dx.to_string());
            }
        }

        let p_marker = if positive { cfg.marker_lift.p_pos } else { cfg.marker_lift.p_neg };
        let mut markers = Vec::new();
        for m in &cfg.marker_codes {
            if !rng.bernoulli(p_marker) || history == 0 {
                continue;
            }
            let times = rng.int_inclusive(1, history.min(3));
            let mut slots: Vec<usize> = (0..history).collect();
            rng.shuffle(&mut slots);
            for &v in &slots[..times] {
                visit_codes[v].push(m.clone());
            }
            markers.push(m.clone());
            let counts = if positive {
                &mut totals.marker_patients_positive
            } else {
                &mut totals.marker_patients_negative
            };
            *counts.get_mut(m).expect("marker registered") += 1;
        }

        let profile = VitalsProfile::draw(&mut rng, gender, age_at_start);
        let mut observed: BTreeMap<String, usize> = VITAL_ATTRIBUTES.iter().map(|a| (a.to_string(), 0)).collect();
        let mut date = start;
        for (v, codes) in visit_codes.into_iter().enumerate() {
            if v > 0 {
                date += Duration::days(rng.int_inclusive(14, 200) as i64);
            }
            let mut vitals = BTreeMap::new();
            for attr in VITAL_ATTRIBUTES {
                let missing = rng.bernoulli(cfg.missing_rate_of(attr));
                let value = profile.sample(&mut rng, attr);
                if !missing {
                    *observed.get_mut(attr).expect("attribute registered") += 1;
                }
                vitals.insert(attr.to_string(), (!missing).then_some(value));
            }
            encounters.push(Encounter {
                patient_id: patient_id.clone(),
                date,
                icd_codes: codes,
                vitals,
            });
        }

        for (a, n) in &observed {
            *totals.observed.get_mut(a).expect("attribute registered") += n;
        }
        totals.encounters += total;
        if positive {
            totals.positives += 1;
            if history >= 4 {
                totals.expected_after_history_filter.0 += 1;
            }
        } else {
            totals.negatives += 1;
            if history >= 4 {
                totals.expected_after_history_filter.1 += 1;
            }
        }
        patients.push(RawPatient {
            patient_id: patient_id.clone(),
            dob: Some(dob),
            gender: Some(gender),
            race: Some(race),
            sexual_orientation: Some(orientation.to_string()),
        });
        facts.push(PatientFacts {
            patient_id,
            label: u8::from(positive),
            short_history: short,
            num_encounters: total,
            diagnosis_index: positive.then_some(history),
            markers,
            observed,
        });
    }

    Ok(SynthCohort {
        patients,
        encounters,
        bookkeeping: Bookkeeping {
            config: cfg.clone(),
            totals,
            patients: facts,
        },
    })
}

/// Accuracy of the Bayes-optimal rule on a balanced set when the only
/// signal is how many of `m` independent markers a patient carries.
pub fn marker_bayes_accuracy(m: usize, p_pos: f64, p_neg: f64) -> f64 {
    let binom = |k: usize, p: f64| {
        let c = (0..k).fold(1.0, |acc, j| acc * (m - j) as f64 / (j + 1) as f64);
        c * p.powi(k as i32) * (1.0 - p).powi((m - k) as i32)
    };
    (0..=m).map(|k| binom(k, p_pos).max(binom(k, p_neg))).sum::<f64>() / 2.0
}
