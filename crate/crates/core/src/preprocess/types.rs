use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Code family marking a type-2 diabetes diagnosis.
pub const T2DM_PREFIX: &str = "E11";

/// The seventeen vitals attributes an encounter may carry.
pub const VITAL_ATTRIBUTES: [&str; 17] = [
    "weight",
    "height",
    "bmi",
    "lean_body_weight",
    "ideal_body_weight",
    "neck_circumference",
    "waist",
    "oxygen_saturation",
    "peak_expiratory_flow",
    "blood_type",
    "blood_rh",
    "finger_stick",
    "pulse",
    "respiration",
    "temperature",
    "systolic_bp",
    "diastolic_bp",
];

pub fn is_t2dm_code(code: &str) -> bool {
    code.starts_with(T2DM_PREFIX)
}

/// Letter, digit, then a digit or letter, optionally followed by `.` and
/// one to four alphanumeric subcode characters (`I10`, `E78.5`, `S72.001A`).
pub fn is_valid_icd10(code: &str) -> bool {
    let (head, sub) = match code.split_once('.') {
        Some((h, s)) => (h, Some(s)),
        None => (code, None),
    };
    let h = head.as_bytes();
    let head_ok = h.len() == 3
        && h[0].is_ascii_uppercase()
        && h[1].is_ascii_digit()
        && (h[2].is_ascii_digit() || h[2].is_ascii_uppercase());
    let sub_ok = sub.is_none_or(|s| {
        (1..=4).contains(&s.len()) && s.bytes().all(|b| b.is_ascii_digit() || b.is_ascii_uppercase())
    });
    head_ok && sub_ok
}

/// One dated visit. A vitals entry of `None` (or an absent key) means the
/// value was not recorded.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Encounter {
    pub patient_id: String,
    pub date: NaiveDate,
    pub icd_codes: Vec<String>,
    #[serde(default)]
    pub vitals: BTreeMap<String, Option<f64>>,
}

impl Encounter {
    pub fn vital(&self, attribute: &str) -> Option<f64> {
        self.vitals.get(attribute).copied().flatten()
    }

    pub fn has_t2dm(&self) -> bool {
        self.icd_codes.iter().any(|c| is_t2dm_code(c))
    }

    pub fn validate(&self) -> Result<()> {
        if self.patient_id.is_empty() {
            return Err(Error::InvalidRecord("encounter without patient_id".into()));
        }
        if let Some(bad) = self.icd_codes.iter().find(|c| !is_valid_icd10(c)) {
            return Err(Error::InvalidRecord(format!(
                "patient {} on {}: malformed ICD-10-CM code `{bad}`",
                self.patient_id, self.date
            )));
        }
        if let Some(bad) = self.vitals.keys().find(|k| !VITAL_ATTRIBUTES.contains(&k.as_str())) {
            return Err(Error::InvalidRecord(format!(
                "patient {} on {}: unknown vitals attribute `{bad}`",
                self.patient_id, self.date
            )));
        }
        if let Some((k, _)) = self.vitals.iter().find(|(_, v)| v.is_some_and(|x| !x.is_finite())) {
            return Err(Error::InvalidRecord(format!(
                "patient {} on {}: non-finite value for `{k}`",
                self.patient_id, self.date
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
    Unspecified,
}

impl Gender {
    pub const ALL: [Gender; 3] = [Gender::Male, Gender::Female, Gender::Unspecified];

    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Male => "male",
            Gender::Female => "female",
            Gender::Unspecified => "unspecified",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub patient_id: String,
    pub date_of_birth: NaiveDate,
    pub gender: Gender,
    pub race: String,
    pub sexual_orientation: String,
    pub encounters: Vec<Encounter>,
}

impl PatientRecord {
    /// Validates and orders the encounters by date (ties broken by codes so
    /// the order never depends on input order).
    pub fn new(
        patient_id: impl Into<String>,
        date_of_birth: NaiveDate,
        gender: Gender,
        race: impl Into<String>,
        sexual_orientation: impl Into<String>,
        mut encounters: Vec<Encounter>,
    ) -> Result<Self> {
        let patient_id = patient_id.into();
        if encounters.is_empty() {
            return Err(Error::InvalidRecord(format!("patient {patient_id} has no encounters")));
        }
        for e in &encounters {
            e.validate()?;
            if e.patient_id != patient_id {
                return Err(Error::InvalidRecord(format!(
                    "encounter for {} filed under {patient_id}",
                    e.patient_id
                )));
            }
        }
        encounters.sort_by(|a, b| a.date.cmp(&b.date).then_with(|| a.icd_codes.cmp(&b.icd_codes)));
        if date_of_birth > encounters[0].date {
            return Err(Error::InvalidRecord(format!(
                "patient {patient_id} born after first encounter"
            )));
        }
        Ok(Self {
            patient_id,
            date_of_birth,
            gender,
            race: race.into(),
            sexual_orientation: sexual_orientation.into(),
            encounters,
        })
    }

    /// Index of the first encounter carrying an E11 code.
    pub fn first_t2dm_index(&self) -> Option<usize> {
        self.encounters.iter().position(Encounter::has_t2dm)
    }

    pub fn is_positive(&self) -> bool {
        self.first_t2dm_index().is_some()
    }

    /// Age in fractional years (days / 365.25) on `date`.
    pub fn age_at(&self, date: NaiveDate) -> f64 {
        (date - self.date_of_birth).num_days() as f64 / 365.25
    }
}

/// One patient collapsed to a single labelled instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExamplePoint {
    pub patient_id: String,
    pub diagnosis_codes: Vec<String>,
    pub vitals_features: BTreeMap<String, f64>,
    pub age_years: f64,
    pub gender: Gender,
    pub race: String,
    pub label: u8,
}

impl ExamplePoint {
    pub fn is_positive(&self) -> bool {
        self.label == 1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImputationConfig {
    /// EWMA smoothing factor in `(0, 1]`.
    pub alpha: f64,
    /// Attributes missing in more than this percentage of records are dropped.
    pub drop_threshold: f64,
}

impl Default for ImputationConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            drop_threshold: 50.0,
        }
    }
}

impl ImputationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "alpha must be in (0, 1], got {}",
                self.alpha
            )));
        }
        if !(self.drop_threshold > 0.0 && self.drop_threshold <= 100.0) {
            return Err(Error::InvalidArgument(format!(
                "drop threshold must be in (0, 100], got {}",
                self.drop_threshold
            )));
        }
        Ok(())
    }
}
