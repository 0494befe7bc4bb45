//! Loaders for the Horse Colic and International Stroke Trial data, plus
//! the step that turns fitted outcome models into empirical populations.
//!
//! Column choices are listed in `docs/dataset_manifest.md`.

use std::collections::{BTreeMap, HashMap};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::empirical::EmpiricalPopulation;
use crate::error::{Error, Result};
use crate::features::{FeatureKind, FeatureSpec, FeatureValue};
use crate::glm::{predict_mu, FitResult};
use crate::population::PopulationModel;

/// Level given to categorical cells that are missing in the source.
pub const MISSING_LEVEL: &str = "missing";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClinicalRow {
    pub features: BTreeMap<String, FeatureValue>,
    pub treatment: bool,
    pub outcome: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImputationStrategy {
    /// Numeric gaps take the column median; categorical gaps become their
    /// own level.
    #[default]
    Median,
    /// Rows with any missing feature are dropped.
    Drop,
}

impl std::str::FromStr for ImputationStrategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "median" => Ok(Self::Median),
            "drop" => Ok(Self::Drop),
            other => Err(Error::InvalidClass(format!("unknown imputation {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LoadStats {
    pub records: usize,
    /// Records outside the study definition (euthanized horses, other
    /// trial arms, unknown treatment or outcome).
    pub excluded: usize,
    pub dropped_missing: usize,
    pub imputed_cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub schema: Vec<FeatureSpec>,
    pub rows: Vec<ClinicalRow>,
    pub stats: LoadStats,
}

impl Dataset {
    pub fn treatment_rate(&self) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        self.rows.iter().filter(|r| r.treatment).count() as f64 / self.rows.len() as f64
    }

    pub fn treatments(&self) -> Vec<bool> {
        self.rows.iter().map(|r| r.treatment).collect()
    }

    pub fn outcomes(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.outcome).collect()
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.schema.iter().map(|f| f.name.clone()).collect()
    }
}

/// A raw row before imputation: `None` marks a missing cell.
struct RawRow {
    cells: Vec<Option<String>>,
    treatment: bool,
    outcome: f64,
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    Some(if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    })
}

fn finish(
    name: &str,
    schema: Vec<FeatureSpec>,
    raw: Vec<(usize, RawRow)>,
    mut stats: LoadStats,
    strategy: ImputationStrategy,
) -> Result<Dataset> {
    let raw: Vec<(usize, RawRow)> = match strategy {
        ImputationStrategy::Median => raw,
        ImputationStrategy::Drop => {
            let before = raw.len();
            let kept: Vec<_> = raw
                .into_iter()
                .filter(|(_, r)| r.cells.iter().all(Option::is_some))
                .collect();
            stats.dropped_missing = before - kept.len();
            kept
        }
    };

    let mut parsed: Vec<Vec<Option<f64>>> = vec![Vec::new(); schema.len()];
    for (j, spec) in schema.iter().enumerate() {
        if spec.kind != FeatureKind::Numeric {
            continue;
        }
        for (line, r) in &raw {
            let v = match &r.cells[j] {
                None => None,
                Some(s) => Some(s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(
                    || Error::MalformedRecord {
                        line: *line,
                        reason: format!("{}: {s:?} is not a number", spec.name),
                    },
                )?),
            };
            parsed[j].push(v);
        }
    }
    let mut fill = vec![0.0; schema.len()];
    for (j, spec) in schema.iter().enumerate() {
        if spec.kind == FeatureKind::Numeric {
            let mut present: Vec<f64> = parsed[j].iter().flatten().copied().collect();
            fill[j] = median(&mut present).unwrap_or(0.0);
        }
    }

    let mut rows = Vec::with_capacity(raw.len());
    for (i, (_, r)) in raw.into_iter().enumerate() {
        let mut features = BTreeMap::new();
        for (j, spec) in schema.iter().enumerate() {
            let value = match spec.kind {
                FeatureKind::Numeric => FeatureValue::Number(parsed[j][i].unwrap_or_else(|| {
                    stats.imputed_cells += 1;
                    fill[j]
                })),
                FeatureKind::Categorical => match &r.cells[j] {
                    Some(s) => FeatureValue::Category(s.clone()),
                    None => {
                        stats.imputed_cells += 1;
                        FeatureValue::category(MISSING_LEVEL)
                    }
                },
            };
            features.insert(spec.name.clone(), value);
        }
        rows.push(ClinicalRow {
            features,
            treatment: r.treatment,
            outcome: r.outcome,
        });
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(Dataset {
        name: name.to_string(),
        schema,
        rows,
        stats,
    })
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    if !path.exists() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    Ok(std::fs::read(path)?)
}

// ---------------------------------------------------------------------------
// Horse Colic

/// Zero-based column positions of the retained pre-surgery features.
const HORSE_FEATURES: [(usize, &str, FeatureKind); 20] = [
    (1, "age", FeatureKind::Categorical),
    (3, "rectal_temperature", FeatureKind::Numeric),
    (4, "pulse", FeatureKind::Numeric),
    (5, "respiratory_rate", FeatureKind::Numeric),
    (6, "temperature_of_extremities", FeatureKind::Categorical),
    (7, "peripheral_pulse", FeatureKind::Categorical),
    (8, "mucous_membranes", FeatureKind::Categorical),
    (9, "capillary_refill_time", FeatureKind::Categorical),
    (10, "pain", FeatureKind::Categorical),
    (11, "peristalsis", FeatureKind::Categorical),
    (12, "abdominal_distension", FeatureKind::Categorical),
    (13, "nasogastric_tube", FeatureKind::Categorical),
    (14, "nasogastric_reflux", FeatureKind::Categorical),
    (15, "nasogastric_reflux_ph", FeatureKind::Numeric),
    (16, "rectal_examination_feces", FeatureKind::Categorical),
    (17, "abdomen", FeatureKind::Categorical),
    (18, "packed_cell_volume", FeatureKind::Numeric),
    (19, "total_protein", FeatureKind::Numeric),
    (20, "abdominocentesis_appearance", FeatureKind::Categorical),
    (21, "abdominocentesis_total_protein", FeatureKind::Numeric),
];
const HORSE_SURGERY: usize = 0;
const HORSE_OUTCOME: usize = 22;
const HORSE_MIN_COLUMNS: usize = 23;

pub fn horse_colic_schema() -> Vec<FeatureSpec> {
    HORSE_FEATURES
        .iter()
        .map(|(_, name, kind)| FeatureSpec {
            name: name.to_string(),
            kind: *kind,
        })
        .collect()
}

/// Parses the whitespace-separated UCI file. Surgery is the treatment,
/// survival is `+1` and death `−1`; euthanized horses and records with an
/// unknown surgery or outcome code are excluded.
pub fn parse_horse_colic(text: &str, strategy: ImputationStrategy) -> Result<Dataset> {
    let mut stats = LoadStats::default();
    let mut raw = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        stats.records += 1;
        if fields.len() < HORSE_MIN_COLUMNS {
            return Err(Error::MalformedRecord {
                line: line_no,
                reason: format!(
                    "expected at least {HORSE_MIN_COLUMNS} fields, got {}",
                    fields.len()
                ),
            });
        }
        let code = |j: usize| -> Option<&str> { Some(fields[j]).filter(|s| *s != "?") };
        let treatment = match code(HORSE_SURGERY) {
            Some("1") => true,
            Some("2") => false,
            None => {
                stats.excluded += 1;
                continue;
            }
            Some(other) => {
                return Err(Error::MalformedRecord {
                    line: line_no,
                    reason: format!("surgery code {other:?}"),
                })
            }
        };
        let outcome = match code(HORSE_OUTCOME) {
            Some("1") => 1.0,
            Some("2") => -1.0,
            Some("3") | None => {
                stats.excluded += 1;
                continue;
            }
            Some(other) => {
                return Err(Error::MalformedRecord {
                    line: line_no,
                    reason: format!("outcome code {other:?}"),
                })
            }
        };
        let cells = HORSE_FEATURES
            .iter()
            .map(|(j, _, _)| code(*j).map(str::to_string))
            .collect();
        raw.push((
            line_no,
            RawRow {
                cells,
                treatment,
                outcome,
            },
        ));
    }
    finish("horse-colic", horse_colic_schema(), raw, stats, strategy)
}

pub fn load_horse_colic(path: &Path, strategy: ImputationStrategy) -> Result<Dataset> {
    let bytes = read_file(path)?;
    let text = String::from_utf8_lossy(&bytes);
    parse_horse_colic(&text, strategy)
}

// ---------------------------------------------------------------------------
// International Stroke Trial

const IST_FEATURES: [(&str, FeatureKind); 20] = [
    ("RDELAY", FeatureKind::Numeric),
    ("RCONSC", FeatureKind::Categorical),
    ("SEX", FeatureKind::Categorical),
    ("AGE", FeatureKind::Numeric),
    ("RSLEEP", FeatureKind::Categorical),
    ("RATRIAL", FeatureKind::Categorical),
    ("RCT", FeatureKind::Categorical),
    ("RVISINF", FeatureKind::Categorical),
    ("RHEP24", FeatureKind::Categorical),
    ("RASP3", FeatureKind::Categorical),
    ("RSBP", FeatureKind::Numeric),
    ("RDEF1", FeatureKind::Categorical),
    ("RDEF2", FeatureKind::Categorical),
    ("RDEF3", FeatureKind::Categorical),
    ("RDEF4", FeatureKind::Categorical),
    ("RDEF5", FeatureKind::Categorical),
    ("RDEF6", FeatureKind::Categorical),
    ("RDEF7", FeatureKind::Categorical),
    ("RDEF8", FeatureKind::Categorical),
    ("STYPE", FeatureKind::Categorical),
];

pub const IST_EXPECTED_ROWS: usize = 7264;
pub const IST_EXPECTED_RATE: f64 = 0.33;
pub const HORSE_EXPECTED_RATE: f64 = 0.6;

pub fn ist_schema() -> Vec<FeatureSpec> {
    IST_FEATURES
        .iter()
        .map(|(name, kind)| FeatureSpec {
            name: name.to_string(),
            kind: *kind,
        })
        .collect()
}

/// The six events entering the composite stroke outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct OutcomeIndicators {
    pub death: bool,
    pub recurrent_stroke: bool,
    pub pe_or_intracranial_bleed: bool,
    pub other_side_effects: bool,
    pub full_recovery: bool,
    pub discharged_within_14_days: bool,
}

impl OutcomeIndicators {
    /// All 64 indicator combinations, bit `k` driving the `k`-th field.
    pub fn all_combinations() -> impl Iterator<Item = Self> {
        (0u8..64).map(|m| Self {
            death: m & 1 != 0,
            recurrent_stroke: m & 2 != 0,
            pe_or_intracranial_bleed: m & 4 != 0,
            other_side_effects: m & 8 != 0,
            full_recovery: m & 16 != 0,
            discharged_within_14_days: m & 32 != 0,
        })
    }
}

fn ind(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Scalar stroke outcome in `[−4, 3]`.
pub fn composite_outcome(i: &OutcomeIndicators) -> f64 {
    -2.0 * ind(i.death)
        - ind(i.recurrent_stroke)
        - 0.5 * ind(i.pe_or_intracranial_bleed)
        - 0.5 * ind(i.other_side_effects)
        + 2.0 * ind(i.full_recovery)
        + ind(i.discharged_within_14_days)
}

/// Source columns read to build [`OutcomeIndicators`].
pub const IST_INDICATOR_COLUMNS: [&str; 9] = [
    "FDEAD", "OCCODE", "DRSISC", "DRSUNK", "DRSH", "DPE", "DSIDE", "FRECOVER", "DALIVE",
];

/// Builds indicators from a record keyed by column name. Any value other
/// than `Y` (including unknown) counts as the event not occurring; death
/// is also read from the six-month outcome code.
pub fn indicators_from_record(record: &HashMap<&str, &str>) -> Result<OutcomeIndicators> {
    for col in IST_INDICATOR_COLUMNS {
        if !record.contains_key(col) {
            return Err(Error::MissingIndicator(col.to_string()));
        }
    }
    let yes = |c: &str| record[c].trim() == "Y";
    Ok(OutcomeIndicators {
        death: yes("FDEAD") || record["OCCODE"].trim() == "1",
        recurrent_stroke: yes("DRSISC") || yes("DRSUNK"),
        pe_or_intracranial_bleed: yes("DPE") || yes("DRSH"),
        other_side_effects: yes("DSIDE"),
        full_recovery: yes("FRECOVER"),
        discharged_within_14_days: yes("DALIVE"),
    })
}

/// Parses the published trial CSV. Aspirin with medium-dose heparin is
/// treated, aspirin alone is control, every other arm is excluded.
pub fn parse_ist<R: Read>(reader: R, strategy: ImputationStrategy) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::MalformedRecord {
            line: 1,
            reason: e.to_string(),
        })?
        .clone();
    let col: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let need = |name: &str| -> Result<usize> {
        col.get(name)
            .copied()
            .ok_or_else(|| Error::MissingFeature(name.to_string()))
    };
    let rxasp = need("RXASP")?;
    let rxhep = need("RXHEP")?;
    let feature_cols = IST_FEATURES
        .iter()
        .map(|(name, _)| need(name))
        .collect::<Result<Vec<_>>>()?;
    for c in IST_INDICATOR_COLUMNS {
        if !col.contains_key(c) {
            return Err(Error::MissingIndicator(c.to_string()));
        }
    }

    let mut stats = LoadStats::default();
    let mut raw = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::MalformedRecord {
            line,
            reason: e.to_string(),
        })?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        stats.records += 1;
        if rec.len() < headers.len() {
            return Err(Error::MalformedRecord {
                line,
                reason: format!("expected {} fields, got {}", headers.len(), rec.len()),
            });
        }
        let treatment = match (&rec[rxasp], &rec[rxhep]) {
            ("Y", "M") | ("Y", "H") => true,
            ("Y", "N") => false,
            _ => {
                stats.excluded += 1;
                continue;
            }
        };
        let record: HashMap<&str, &str> = IST_INDICATOR_COLUMNS
            .iter()
            .map(|c| (*c, &rec[col[c]]))
            .collect();
        let outcome = composite_outcome(&indicators_from_record(&record)?);
        let cells = feature_cols
            .iter()
            .map(|&j| Some(rec[j].to_string()).filter(|s| !s.is_empty()))
            .collect::<Vec<_>>();
        raw.push((
            line,
            RawRow {
                cells,
                treatment,
                outcome,
            },
        ));
    }
    finish("ist", ist_schema(), raw, stats, strategy)
}

pub fn load_ist(path: &Path, strategy: ImputationStrategy) -> Result<Dataset> {
    let bytes = read_file(path)?;
    parse_ist(bytes.as_slice(), strategy)
}

/// Checks a loaded trial extract against the expected cohort size and
/// treatment rate.
pub fn validate_ist_cohort(ds: &Dataset) -> Result<()> {
    if ds.rows.len() != IST_EXPECTED_ROWS {
        return Err(Error::DatasetMismatch(format!(
            "expected {IST_EXPECTED_ROWS} patients in the two arms, found {}",
            ds.rows.len()
        )));
    }
    let rate = ds.treatment_rate();
    if (rate - IST_EXPECTED_RATE).abs() > 0.02 {
        return Err(Error::DatasetMismatch(format!(
            "treatment rate {rate:.4} is not within 0.02 of {IST_EXPECTED_RATE}"
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Empirical populations

/// Distinct feature vectors of `rows` with fitted potential outcomes.
pub fn build_empirical_population(
    rows: &[ClinicalRow],
    fit: &FitResult,
) -> Result<EmpiricalPopulation> {
    let names: Vec<String> = fit
        .encoding
        .features
        .iter()
        .map(|f| f.name.clone())
        .collect();
    let mut entries = Vec::with_capacity(rows.len());
    let mut cache: HashMap<Vec<FeatureValue>, (f64, f64)> = HashMap::new();
    for r in rows {
        let key = names
            .iter()
            .map(|n| {
                r.features
                    .get(n)
                    .cloned()
                    .ok_or_else(|| Error::MissingFeature(n.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        let mus = match cache.get(&key) {
            Some(m) => *m,
            None => {
                let x = fit.encoding.encode(r)?;
                let m = (predict_mu(fit, &x, false)?, predict_mu(fit, &x, true)?);
                cache.insert(key.clone(), m);
                m
            }
        };
        entries.push((key, mus.0, mus.1));
    }
    EmpiricalPopulation::from_rows(names, entries)
}

/// Full-information population model over the observed feature vectors.
pub fn build_empirical_model(rows: &[ClinicalRow], fit: &FitResult) -> Result<PopulationModel> {
    build_empirical_population(rows, fit)?.to_population_model()
}
