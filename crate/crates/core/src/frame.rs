//! Population frames and observation sets.
//!
//! A frame is the ordered list of groups (strata) with their unit counts and,
//! for simulation, the true per-group mean and standard deviation. Group order
//! is the file order and is used for every deterministic tie-break downstream.

use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("cannot open {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed header: expected `group,size` or `group,size,mean,sd`, found `{0}`")]
    Header(String),
    #[error("malformed header: expected `group,stage,value`, found `{0}`")]
    ObservationHeader(String),
    #[error("malformed row at row {row}: {reason}")]
    Malformed { row: usize, reason: String },
    #[error("duplicate group id `{id}` at row {row}")]
    DuplicateId { id: String, row: usize },
    #[error("nonpositive size at row {row}")]
    NonpositiveSize { row: usize },
    #[error("negative sd at row {row}")]
    NegativeSd { row: usize },
    #[error("unknown group `{id}` at row {row}")]
    UnknownGroup { id: String, row: usize },
    #[error("stage must be 1 or 2 at row {row}, found `{found}`")]
    BadStage { row: usize, found: String },
    #[error("non-numeric value at row {row}: `{found}`")]
    BadValue { row: usize, found: String },
    #[error("group `{id}` has more observations than its size {size}")]
    TooManyObservations { id: String, size: u64 },
    #[error("a frame needs at least one group")]
    Empty,
    #[error("invalid group `{id}`: {reason}")]
    InvalidGroup { id: String, reason: String },
    #[error("group `{0}` has no true mean/sd, required for simulation")]
    Unspecified(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// True parameters of a group, known only in simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupTruth {
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub id: String,
    pub size: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<GroupTruth>,
}

impl GroupSpec {
    pub fn new(id: impl Into<String>, size: u64) -> Self {
        GroupSpec {
            id: id.into(),
            size,
            truth: None,
        }
    }

    pub fn with_truth(id: impl Into<String>, size: u64, mean: f64, sd: f64) -> Self {
        GroupSpec {
            id: id.into(),
            size,
            truth: Some(GroupTruth { mean, sd }),
        }
    }

    pub fn true_mean(&self) -> Option<f64> {
        self.truth.map(|t| t.mean)
    }

    pub fn true_sd(&self) -> Option<f64> {
        self.truth.map(|t| t.sd)
    }

    fn validate(&self) -> Result<(), FrameError> {
        let bad = |reason: &str| FrameError::InvalidGroup {
            id: self.id.clone(),
            reason: reason.to_string(),
        };
        if self.size == 0 {
            return Err(bad("size must be at least 1"));
        }
        if let Some(t) = self.truth {
            if !t.mean.is_finite() {
                return Err(bad("mean must be finite"));
            }
            if !t.sd.is_finite() || t.sd < 0.0 {
                return Err(bad("sd must be finite and nonnegative"));
            }
        }
        Ok(())
    }
}

/// Ordered groups with cached total size. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FrameRepr", into = "FrameRepr")]
pub struct PopulationFrame {
    groups: Vec<GroupSpec>,
    total_size: u64,
}

#[derive(Serialize, Deserialize)]
struct FrameRepr {
    groups: Vec<GroupSpec>,
}

impl TryFrom<FrameRepr> for PopulationFrame {
    type Error = FrameError;
    fn try_from(r: FrameRepr) -> Result<Self, FrameError> {
        PopulationFrame::new(r.groups)
    }
}

impl From<PopulationFrame> for FrameRepr {
    fn from(f: PopulationFrame) -> Self {
        FrameRepr { groups: f.groups }
    }
}

impl PopulationFrame {
    pub fn new(groups: Vec<GroupSpec>) -> Result<Self, FrameError> {
        if groups.is_empty() {
            return Err(FrameError::Empty);
        }
        let mut seen = HashSet::new();
        for (i, g) in groups.iter().enumerate() {
            g.validate()?;
            if !seen.insert(g.id.as_str()) {
                return Err(FrameError::DuplicateId {
                    id: g.id.clone(),
                    row: i + 2,
                });
            }
        }
        let total_size = groups.iter().map(|g| g.size).sum();
        Ok(PopulationFrame { groups, total_size })
    }

    /// Equal-size frame with the given true sds and zero means, using ids `g1..gk`.
    pub fn simulated(sizes: &[u64], means: &[f64], sds: &[f64]) -> Result<Self, FrameError> {
        assert_eq!(sizes.len(), sds.len());
        assert_eq!(sizes.len(), means.len());
        let groups = sizes
            .iter()
            .zip(means)
            .zip(sds)
            .enumerate()
            .map(|(i, ((&n, &m), &s))| GroupSpec::with_truth(format!("g{}", i + 1), n, m, s))
            .collect();
        Self::new(groups)
    }

    pub fn groups(&self) -> &[GroupSpec] {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn total_size(&self) -> u64 {
        self.total_size
    }

    pub fn sizes(&self) -> Vec<u64> {
        self.groups.iter().map(|g| g.size).collect()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.groups.iter().position(|g| g.id == id)
    }

    pub fn is_fully_specified(&self) -> bool {
        self.groups.iter().all(|g| g.truth.is_some())
    }

    /// Fails with the first group lacking true parameters.
    pub fn require_truth(&self) -> Result<Vec<GroupTruth>, FrameError> {
        self.groups
            .iter()
            .map(|g| g.truth.ok_or_else(|| FrameError::Unspecified(g.id.clone())))
            .collect()
    }

    /// Population mean (1/N) Σ N_i μ_i, when every group carries a true mean.
    pub fn true_population_mean(&self) -> Option<f64> {
        let mut acc = 0.0;
        for g in &self.groups {
            acc += g.size as f64 * g.true_mean()?;
        }
        Some(acc / self.total_size as f64)
    }

    pub fn true_sds(&self) -> Option<Vec<f64>> {
        self.groups.iter().map(|g| g.true_sd()).collect()
    }

    /// Same groups and sizes with replaced true parameters.
    pub fn with_truths(&self, means: &[f64], sds: &[f64]) -> Result<Self, FrameError> {
        let groups = self
            .groups
            .iter()
            .zip(means.iter().zip(sds))
            .map(|(g, (&m, &s))| GroupSpec::with_truth(g.id.clone(), g.size, m, s))
            .collect();
        Self::new(groups)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), FrameError> {
        let mut w = csv::Writer::from_writer(out);
        let full = self.groups.iter().any(|g| g.truth.is_some());
        if full {
            w.write_record(["group", "size", "mean", "sd"])?;
        } else {
            w.write_record(["group", "size"])?;
        }
        for g in &self.groups {
            let size = g.size.to_string();
            if full {
                let (m, s) = match g.truth {
                    Some(t) => (t.mean.to_string(), t.sd.to_string()),
                    None => (String::new(), String::new()),
                };
                w.write_record([g.id.as_str(), &size, &m, &s])?;
            } else {
                w.write_record([g.id.as_str(), &size])?;
            }
        }
        w.flush().map_err(|source| FrameError::Io {
            path: "<writer>".into(),
            source,
        })?;
        Ok(())
    }
}

fn open(path: &Path) -> Result<File, FrameError> {
    File::open(path).map_err(|source| FrameError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input)
}

pub fn load_frame(path: impl AsRef<Path>) -> Result<PopulationFrame, FrameError> {
    read_frame(open(path.as_ref())?)
}

/// Parses a frame CSV. Row numbers in errors count the header as row 1.
pub fn read_frame<R: Read>(input: R) -> Result<PopulationFrame, FrameError> {
    let mut rdr = reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(|s| s.to_ascii_lowercase()).collect();
    let with_truth = match header.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        ["group", "size"] => false,
        ["group", "size", "mean", "sd"] => true,
        _ => return Err(FrameError::Header(header.join(","))),
    };
    let width = header.len();

    let mut groups = Vec::new();
    let mut seen = HashSet::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| FrameError::Malformed {
            row,
            reason: e.to_string(),
        })?;
        if rec.len() != width {
            return Err(FrameError::Malformed {
                row,
                reason: format!("expected {width} fields, found {}", rec.len()),
            });
        }
        let id = rec[0].to_string();
        if id.is_empty() {
            return Err(FrameError::Malformed {
                row,
                reason: "empty group id".into(),
            });
        }
        let size: i64 = rec[1].parse().map_err(|_| FrameError::Malformed {
            row,
            reason: format!("size `{}` is not an integer", &rec[1]),
        })?;
        if size <= 0 {
            return Err(FrameError::NonpositiveSize { row });
        }
        let truth = if with_truth {
            match (rec[2].is_empty(), rec[3].is_empty()) {
                (true, true) => None,
                (false, false) => {
                    let num = |s: &str, what: &str| {
                        s.parse::<f64>()
                            .ok()
                            .filter(|v| v.is_finite())
                            .ok_or_else(|| FrameError::Malformed {
                                row,
                                reason: format!("{what} `{s}` is not a finite number"),
                            })
                    };
                    let mean = num(&rec[2], "mean")?;
                    let sd = num(&rec[3], "sd")?;
                    if sd < 0.0 {
                        return Err(FrameError::NegativeSd { row });
                    }
                    Some(GroupTruth { mean, sd })
                }
                _ => {
                    return Err(FrameError::Malformed {
                        row,
                        reason: "mean and sd must both be present or both empty".into(),
                    })
                }
            }
        } else {
            None
        };
        if !seen.insert(id.clone()) {
            return Err(FrameError::DuplicateId { id, row });
        }
        groups.push(GroupSpec {
            id,
            size: size as u64,
            truth,
        });
    }
    PopulationFrame::new(groups)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Stage {
    Pilot,
    Main,
}

impl From<Stage> for u8 {
    fn from(s: Stage) -> u8 {
        match s {
            Stage::Pilot => 1,
            Stage::Main => 2,
        }
    }
}

impl TryFrom<u8> for Stage {
    type Error = String;
    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            1 => Ok(Stage::Pilot),
            2 => Ok(Stage::Main),
            _ => Err(format!("stage must be 1 or 2, found {v}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub value: f64,
    pub stage: Stage,
}

/// Measured values per group, aligned with the frame's group order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservationSet {
    ids: Vec<String>,
    sizes: Vec<u64>,
    groups: Vec<Vec<Observation>>,
}

impl ObservationSet {
    pub fn new(frame: &PopulationFrame) -> Self {
        ObservationSet {
            ids: frame.groups().iter().map(|g| g.id.clone()).collect(),
            sizes: frame.sizes(),
            groups: vec![Vec::new(); frame.len()],
        }
    }

    pub fn push(&mut self, group: usize, stage: Stage, value: f64) -> Result<(), FrameError> {
        let obs = &mut self.groups[group];
        if obs.len() as u64 >= self.sizes[group] {
            return Err(FrameError::TooManyObservations {
                id: self.ids[group].clone(),
                size: self.sizes[group],
            });
        }
        obs.push(Observation { value, stage });
        Ok(())
    }

    pub fn extend(
        &mut self,
        group: usize,
        stage: Stage,
        values: impl IntoIterator<Item = f64>,
    ) -> Result<(), FrameError> {
        values.into_iter().try_for_each(|v| self.push(group, stage, v))
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn group(&self, i: usize) -> &[Observation] {
        &self.groups[i]
    }

    pub fn values(&self, i: usize) -> impl Iterator<Item = f64> + '_ {
        self.groups[i].iter().map(|o| o.value)
    }

    pub fn counts(&self) -> Vec<u64> {
        self.groups.iter().map(|g| g.len() as u64).collect()
    }

    pub fn total(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.total() == 0
    }

    /// Copy restricted to one stage.
    pub fn stage(&self, stage: Stage) -> ObservationSet {
        ObservationSet {
            ids: self.ids.clone(),
            sizes: self.sizes.clone(),
            groups: self
                .groups
                .iter()
                .map(|g| g.iter().copied().filter(|o| o.stage == stage).collect())
                .collect(),
        }
    }

    /// Applies `f` to every value, keeping stages.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> ObservationSet {
        let mut out = self.clone();
        for g in &mut out.groups {
            for o in g.iter_mut() {
                o.value = f(o.value);
            }
        }
        out
    }
}

pub fn load_observations(
    path: impl AsRef<Path>,
    frame: &PopulationFrame,
) -> Result<ObservationSet, FrameError> {
    read_observations(open(path.as_ref())?, frame)
}

pub fn read_observations<R: Read>(
    input: R,
    frame: &PopulationFrame,
) -> Result<ObservationSet, FrameError> {
    let mut rdr = reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(|s| s.to_ascii_lowercase()).collect();
    if header != ["group", "stage", "value"] {
        return Err(FrameError::ObservationHeader(header.join(",")));
    }
    let mut set = ObservationSet::new(frame);
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| FrameError::Malformed {
            row,
            reason: e.to_string(),
        })?;
        if rec.len() != 3 {
            return Err(FrameError::Malformed {
                row,
                reason: format!("expected 3 fields, found {}", rec.len()),
            });
        }
        let group = frame.index_of(&rec[0]).ok_or_else(|| FrameError::UnknownGroup {
            id: rec[0].to_string(),
            row,
        })?;
        let stage = rec[1]
            .parse::<u8>()
            .ok()
            .and_then(|s| Stage::try_from(s).ok())
            .ok_or_else(|| FrameError::BadStage {
                row,
                found: rec[1].to_string(),
            })?;
        let value = rec[2]
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| FrameError::BadValue {
                row,
                found: rec[2].to_string(),
            })?;
        set.push(group, stage, value)?;
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn frame_from(text: &str) -> Result<PopulationFrame, FrameError> {
        read_frame(text.as_bytes())
    }

    #[test]
    fn parses_full_frame() {
        let f = frame_from("group,size,mean,sd\ng1,10000,0,1\ng2,10000,0,3\n").unwrap();
        assert_eq!(f.len(), 2);
        assert_eq!(f.total_size(), 20000);
        assert_eq!(f.groups()[1].true_sd(), Some(3.0));
        assert!(f.is_fully_specified());
    }

    #[test]
    fn sums_sizes() {
        let f = frame_from("group,size\na,3\nb,7\n").unwrap();
        assert_eq!(f.total_size(), 10);
        assert!(!f.is_fully_specified());
        assert_eq!(f.groups()[0].id, "a");
    }

    #[test]
    fn rejects_negative_size_with_row() {
        let err = frame_from("group,size\ng1,-5\n").unwrap_err();
        assert_eq!(err.to_string(), "nonpositive size at row 2");
        let err = frame_from("group,size\ng1,4\ng2,0\n").unwrap_err();
        assert!(matches!(err, FrameError::NonpositiveSize { row: 3 }));
    }

    #[test]
    fn rejects_duplicates_and_negative_sd() {
        let err = frame_from("group,size\na,1\na,2\n").unwrap_err();
        assert!(matches!(err, FrameError::DuplicateId { row: 3, .. }));
        let err = frame_from("group,size,mean,sd\na,1,0,-1\n").unwrap_err();
        assert!(matches!(err, FrameError::NegativeSd { row: 2 }));
    }

    #[test]
    fn rejects_malformed_rows() {
        let err = frame_from("group,size\na,1,9\n").unwrap_err();
        assert!(matches!(err, FrameError::Malformed { row: 2, .. }));
        let err = frame_from("group,size\na,x\n").unwrap_err();
        assert!(matches!(err, FrameError::Malformed { row: 2, .. }));
        let err = frame_from("group,size,mean,sd\na,1,0,\n").unwrap_err();
        assert!(matches!(err, FrameError::Malformed { row: 2, .. }));
        assert!(matches!(frame_from("id,n\n"), Err(FrameError::Header(_))));
        assert!(matches!(frame_from("group,size\n"), Err(FrameError::Empty)));
    }

    #[test]
    fn loads_observations() {
        let f = frame_from("group,size\ng1,10\ng2,10\n").unwrap();
        let obs = read_observations("group,stage,value\ng1,1,0.5\ng1,2,0.7\n".as_bytes(), &f).unwrap();
        assert_eq!(obs.counts(), vec![2, 0]);
        assert_eq!(obs.group(0)[0].stage, Stage::Pilot);
        assert_eq!(obs.group(0)[1].stage, Stage::Main);
        assert_eq!(obs.stage(Stage::Main).counts(), vec![1, 0]);
    }

    #[test]
    fn observation_errors() {
        let f = frame_from("group,size\ng1,2\n").unwrap();
        let err = read_observations("group,stage,value\nzzz,1,0\n".as_bytes(), &f).unwrap_err();
        assert!(err.to_string().contains("zzz"));
        let err = read_observations("group,stage,value\ng1,3,0\n".as_bytes(), &f).unwrap_err();
        assert!(matches!(err, FrameError::BadStage { row: 2, .. }));
        let err = read_observations("group,stage,value\ng1,1,abc\n".as_bytes(), &f).unwrap_err();
        assert!(matches!(err, FrameError::BadValue { row: 2, .. }));
        let err =
            read_observations("group,stage,value\ng1,1,0\ng1,1,0\ng1,1,0\n".as_bytes(), &f).unwrap_err();
        assert!(matches!(err, FrameError::TooManyObservations { .. }));
    }

    #[test]
    fn empty_observation_file_is_valid() {
        let f = frame_from("group,size\ng1,2\n").unwrap();
        let obs = read_observations("group,stage,value\n".as_bytes(), &f).unwrap();
        assert!(obs.is_empty());
    }

    fn arb_frame() -> impl Strategy<Value = PopulationFrame> {
        prop::collection::vec(
            (1u64..1_000_000, prop::option::of((-1e6f64..1e6, 0f64..1e3))),
            1..20,
        )
        .prop_map(|rows| {
            let groups = rows
                .into_iter()
                .enumerate()
                .map(|(i, (n, t))| GroupSpec {
                    id: format!("grp{i}"),
                    size: n,
                    truth: t.map(|(mean, sd)| GroupTruth { mean, sd }),
                })
                .collect();
            PopulationFrame::new(groups).unwrap()
        })
    }

    proptest! {
        #[test]
        fn csv_round_trip(frame in arb_frame()) {
            let mut buf = Vec::new();
            frame.write_csv(&mut buf).unwrap();
            let back = read_frame(buf.as_slice()).unwrap();
            prop_assert_eq!(&back, &frame);
            prop_assert_eq!(back.total_size(), frame.sizes().iter().sum::<u64>());
        }
    }
}
