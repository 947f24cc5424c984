use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::pipeline::group_encounters;
use super::types::{Encounter, Gender, PatientRecord};
use crate::error::Result;
use crate::io::{read_jsonl, write_jsonl};

/// A line of the patients file. Demographic fields are optional here so
/// incomplete rows can be reported instead of failing the whole read.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawPatient {
    pub patient_id: String,
    #[serde(default)]
    pub dob: Option<NaiveDate>,
    #[serde(default)]
    pub gender: Option<Gender>,
    #[serde(default)]
    pub race: Option<String>,
    #[serde(default)]
    pub sexual_orientation: Option<String>,
}

/// Unvalidated contents of a patients file and an encounters file.
#[derive(Clone, Debug, Default)]
pub struct RawCohort {
    pub patients: Vec<RawPatient>,
    pub encounters: Vec<Encounter>,
    /// Lines that could not be parsed at all.
    pub parse_errors: Vec<String>,
}

#[derive(Debug, Default)]
pub struct Assembled {
    pub patients: Vec<PatientRecord>,
    pub rejected: usize,
    pub errors: Vec<String>,
}

impl RawCohort {
    pub fn read(patients_path: &Path, encounters_path: &Path) -> Result<Self> {
        let patients = read_jsonl::<RawPatient>(patients_path)?;
        let encounters = read_jsonl::<Encounter>(encounters_path)?;
        let mut parse_errors = patients.errors;
        parse_errors.extend(encounters.errors);
        Ok(Self {
            patients: patients.records,
            encounters: encounters.records,
            parse_errors,
        })
    }

    pub fn write(&self, patients_path: &Path, encounters_path: &Path) -> Result<()> {
        write_jsonl(patients_path, &self.patients)?;
        write_jsonl(encounters_path, &self.encounters)
    }

    /// Joins encounters to patients and validates each patient. Patients
    /// with missing demographics, no encounters, or malformed encounters
    /// are rejected whole.
    pub fn assemble(self) -> Assembled {
        let mut out = Assembled {
            errors: self.parse_errors,
            ..Assembled::default()
        };
        let mut by_patient = group_encounters(self.encounters);
        let mut demographics: BTreeMap<String, RawPatient> = BTreeMap::new();
        for p in self.patients {
            if demographics.contains_key(&p.patient_id) {
                out.errors.push(format!("duplicate patient id {}", p.patient_id));
                out.rejected += 1;
                continue;
            }
            demographics.insert(p.patient_id.clone(), p);
        }
        for (id, p) in demographics {
            let encounters = by_patient.remove(&id).unwrap_or_default();
            let (Some(dob), Some(gender), Some(race), Some(orientation)) =
                (p.dob, p.gender, p.race, p.sexual_orientation)
            else {
                out.errors.push(format!("patient {id}: missing demographics"));
                out.rejected += 1;
                continue;
            };
            match PatientRecord::new(id, dob, gender, race, orientation, encounters) {
                Ok(rec) => out.patients.push(rec),
                Err(e) => {
                    out.errors.push(e.to_string());
                    out.rejected += 1;
                }
            }
        }
        let mut orphans: Vec<_> = by_patient.into_keys().collect();
        orphans.sort();
        for id in orphans {
            out.errors.push(format!("encounters for unknown patient {id}"));
        }
        out
    }
}
