use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::raw::RawCohort;
use super::types::{is_t2dm_code, Encounter, ExamplePoint, ImputationConfig, PatientRecord, VITAL_ATTRIBUTES};
use crate::error::{Error, Result};

/// Minimum number of encounters before the first E11 diagnosis (positives)
/// or in total (negatives).
pub const MIN_HISTORY: usize = 4;

/// Percentage of `records` with no value for `attribute`.
pub fn missing_ratio(records: &[Encounter], attribute: &str) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("missing ratio over no records".into()));
    }
    let missing = records.iter().filter(|e| e.vital(attribute).is_none()).count();
    Ok(missing as f64 * 100.0 / records.len() as f64)
}

/// Complement of [`missing_ratio`].
pub fn present_ratio(records: &[Encounter], attribute: &str) -> Result<f64> {
    Ok(100.0 - missing_ratio(records, attribute)?)
}

/// Splits patients into kept positives and kept negatives. Positives need
/// at least four encounters strictly before their first E11 encounter;
/// negatives need at least four encounters overall.
pub fn filter_min_history(patients: Vec<PatientRecord>) -> (Vec<PatientRecord>, Vec<PatientRecord>) {
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    for p in patients {
        match p.first_t2dm_index() {
            Some(idx) if idx >= MIN_HISTORY => positives.push(p),
            Some(_) => {}
            None if p.encounters.len() >= MIN_HISTORY => negatives.push(p),
            None => {}
        }
    }
    (positives, negatives)
}

/// Fills gaps in one vitals attribute with a forward exponentially weighted
/// moving average.
///
/// Walking encounters in date order, the running value starts at the first
/// observation and is updated as `s = alpha * x + (1 - alpha) * s` at every
/// later observation. A gap takes the current `s`; gaps before the first
/// observation take the first observed value. Observed values are kept.
pub fn ewma_impute(patient: &PatientRecord, attribute: &str, cfg: &ImputationConfig) -> Result<PatientRecord> {
    let first = patient
        .encounters
        .iter()
        .find_map(|e| e.vital(attribute))
        .ok_or_else(|| Error::NoObservations {
            patient_id: patient.patient_id.clone(),
            attribute: attribute.to_string(),
        })?;
    let mut out = patient.clone();
    let mut smoothed = first;
    let mut seen = false;
    for e in &mut out.encounters {
        match e.vital(attribute) {
            Some(x) => {
                smoothed = if seen {
                    cfg.alpha * x + (1.0 - cfg.alpha) * smoothed
                } else {
                    x
                };
                seen = true;
            }
            None => {
                e.vitals.insert(attribute.to_string(), Some(smoothed));
            }
        }
    }
    Ok(out)
}

/// Unique codes in first-occurrence order, E11 codes excluded.
fn union_codes<'a>(encounters: impl IntoIterator<Item = &'a Encounter>) -> Vec<String> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for e in encounters {
        for c in &e.icd_codes {
            if !is_t2dm_code(c) && seen.insert(c.as_str()) {
                out.push(c.clone());
            }
        }
    }
    out
}

/// Collapses a filtered, imputed patient into one example.
///
/// Positives take diagnoses from every encounter before the first E11
/// encounter and vitals from that encounter; negatives take diagnoses from
/// all encounters and vitals from the last one. Age is measured at the
/// vitals encounter.
pub fn build_example(patient: &PatientRecord) -> ExamplePoint {
    let (codes, source, label) = match patient.first_t2dm_index() {
        Some(idx) => (union_codes(&patient.encounters[..idx]), &patient.encounters[idx], 1),
        None => (
            union_codes(&patient.encounters),
            patient.encounters.last().expect("validated patients have encounters"),
            0,
        ),
    };
    let vitals_features = source
        .vitals
        .iter()
        .filter_map(|(k, v)| v.map(|x| (k.clone(), x)))
        .collect();
    ExamplePoint {
        patient_id: patient.patient_id.clone(),
        diagnosis_codes: codes,
        vitals_features,
        age_years: patient.age_at(source.date),
        gender: patient.gender,
        race: patient.race.clone(),
        label,
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCounts {
    pub positive: usize,
    pub negative: usize,
}

impl StageCounts {
    fn of(patients: &[PatientRecord]) -> Self {
        let positive = patients.iter().filter(|p| p.is_positive()).count();
        Self {
            positive,
            negative: patients.len() - positive,
        }
    }

    pub fn total(&self) -> usize {
        self.positive + self.negative
    }
}

/// Counts after each pipeline stage plus everything that was rejected.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    /// Patient records that failed validation before any stage ran.
    pub rejected_records: usize,
    pub input: StageCounts,
    pub after_history_filter: StageCounts,
    /// Missing-value percentage per attribute over the history-filtered records.
    pub missing_ratios: BTreeMap<String, f64>,
    pub retained_attributes: Vec<String>,
    pub dropped_attributes: Vec<String>,
    pub after_vitals_filter: StageCounts,
    pub examples: StageCounts,
    pub errors: Vec<String>,
}

/// Runs history filtering, attribute dropping, patient dropping, EWMA
/// imputation and example construction. Output is sorted by patient id, so
/// it does not depend on input order.
pub fn run_pipeline(patients: Vec<PatientRecord>, cfg: &ImputationConfig) -> Result<(Vec<ExamplePoint>, PipelineReport)> {
    cfg.validate()?;
    let mut report = PipelineReport {
        input: StageCounts::of(&patients),
        ..PipelineReport::default()
    };

    let (positives, negatives) = filter_min_history(patients);
    let mut kept: Vec<PatientRecord> = positives.into_iter().chain(negatives).collect();
    kept.sort_by(|a, b| a.patient_id.cmp(&b.patient_id));
    report.after_history_filter = StageCounts::of(&kept);

    let all_encounters: Vec<Encounter> = kept.iter().flat_map(|p| p.encounters.iter().cloned()).collect();
    if !all_encounters.is_empty() {
        for attr in VITAL_ATTRIBUTES {
            let ratio = missing_ratio(&all_encounters, attr)?;
            report.missing_ratios.insert(attr.to_string(), ratio);
            if ratio > cfg.drop_threshold {
                report.dropped_attributes.push(attr.to_string());
            } else {
                report.retained_attributes.push(attr.to_string());
            }
        }
    }
    let retained: BTreeSet<&str> = report.retained_attributes.iter().map(String::as_str).collect();

    let mut examples = Vec::with_capacity(kept.len());
    let mut survivors = Vec::with_capacity(kept.len());
    for mut patient in kept {
        for e in &mut patient.encounters {
            e.vitals.retain(|k, _| retained.contains(k.as_str()));
        }
        let mut imputed = Ok(patient);
        for attr in &report.retained_attributes {
            imputed = imputed.and_then(|p| ewma_impute(&p, attr, cfg));
        }
        match imputed {
            Ok(p) => survivors.push(p),
            Err(e) => report.errors.push(e.to_string()),
        }
    }
    report.after_vitals_filter = StageCounts::of(&survivors);
    for p in &survivors {
        examples.push(build_example(p));
    }
    report.examples = StageCounts {
        positive: examples.iter().filter(|e| e.is_positive()).count(),
        negative: examples.iter().filter(|e| !e.is_positive()).count(),
    };
    report.errors.sort();
    Ok((examples, report))
}

/// Assembles raw rows into patients, then runs [`run_pipeline`]. Rows that
/// fail validation are counted and reported instead of aborting the run.
pub fn run_pipeline_raw(raw: RawCohort, cfg: &ImputationConfig) -> Result<(Vec<ExamplePoint>, PipelineReport)> {
    let assembled = raw.assemble();
    let (examples, mut report) = run_pipeline(assembled.patients, cfg)?;
    report.rejected_records = assembled.rejected;
    report.errors.extend(assembled.errors);
    report.errors.sort();
    Ok((examples, report))
}

/// Groups encounters by patient id, keeping first-seen patient order.
pub(crate) fn group_encounters(encounters: Vec<Encounter>) -> HashMap<String, Vec<Encounter>> {
    let mut by_patient: HashMap<String, Vec<Encounter>> = HashMap::new();
    for e in encounters {
        by_patient.entry(e.patient_id.clone()).or_default().push(e);
    }
    by_patient
}
