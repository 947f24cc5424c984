use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::preprocess::{ExamplePoint, Gender};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DemographicAxis {
    Age,
    Gender,
    Race,
}

impl DemographicAxis {
    pub const ALL: [DemographicAxis; 3] = [DemographicAxis::Age, DemographicAxis::Gender, DemographicAxis::Race];

    pub fn as_str(self) -> &'static str {
        match self {
            DemographicAxis::Age => "age",
            DemographicAxis::Gender => "gender",
            DemographicAxis::Race => "race",
        }
    }
}

impl fmt::Display for DemographicAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DemographicAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "age" => Ok(DemographicAxis::Age),
            "gender" => Ok(DemographicAxis::Gender),
            "race" => Ok(DemographicAxis::Race),
            other => Err(Error::InvalidArgument(format!("unknown demographic axis `{other}`"))),
        }
    }
}

/// Lower bounds (years) of the age buckets, in order.
pub const AGE_BUCKETS: [(&str, f64); 7] = [
    ("infant", 0.0),
    ("preschooler", 2.0),
    ("child", 6.0),
    ("teen", 13.0),
    ("adult", 19.0),
    ("middle-aged", 45.0),
    ("senior", 65.0),
];

pub fn age_bucket(age_years: f64) -> &'static str {
    AGE_BUCKETS
        .iter()
        .rev()
        .find(|(_, low)| age_years >= *low)
        .map_or(AGE_BUCKETS[0].0, |(name, _)| name)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemographicGroup {
    pub axis: DemographicAxis,
    pub name: String,
    pub members: Vec<usize>,
}

fn group_key(example: &ExamplePoint, axis: DemographicAxis) -> (usize, String) {
    match axis {
        DemographicAxis::Age => {
            let name = age_bucket(example.age_years);
            let rank = AGE_BUCKETS.iter().position(|(n, _)| *n == name).unwrap_or(0);
            (rank, name.to_string())
        }
        DemographicAxis::Gender => {
            let rank = Gender::ALL.iter().position(|g| *g == example.gender).unwrap_or(0);
            (rank, example.gender.as_str().to_string())
        }
        DemographicAxis::Race => (0, example.race.clone()),
    }
}

/// Partitions `examples` along one axis. Only non-empty groups are
/// returned, age and gender in their natural order, race alphabetically.
pub fn group_by(examples: &[ExamplePoint], axis: DemographicAxis) -> Vec<DemographicGroup> {
    let mut groups: BTreeMap<(usize, String), Vec<usize>> = BTreeMap::new();
    for (i, e) in examples.iter().enumerate() {
        groups.entry(group_key(e, axis)).or_default().push(i);
    }
    groups
        .into_iter()
        .map(|((_, name), members)| DemographicGroup { axis, name, members })
        .collect()
}
