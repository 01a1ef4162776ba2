//! Inverse-probability-weighted population mean and its plug-in interval.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alloc::SdVector;
use crate::frame::{ObservationSet, PopulationFrame};
use crate::stats::{mean, normal_quantile, sample_variance};

#[derive(Debug, Error, PartialEq)]
pub enum EstimateError {
    #[error("no observations")]
    Empty,
    #[error("group {group}: weight count {declared} does not match {observed} observations")]
    CountMismatch {
        group: usize,
        declared: u64,
        observed: u64,
    },
    #[error("observation set has {found} groups, frame has {expected}")]
    GroupMismatch { expected: usize, found: usize },
    #[error("group {group} has a single observation and no external sd")]
    SingleObservation { group: usize },
    #[error("confidence level must lie in (0,1), found {0}")]
    BadLevel(f64),
    #[error("external sd vector has {found} entries, frame has {expected} groups")]
    SdLength { expected: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub count: u64,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
}

pub fn summarize(values: &[f64]) -> GroupSummary {
    GroupSummary {
        count: values.len() as u64,
        mean: mean(values),
        sd: sample_variance(values).map(f64::sqrt),
    }
}

/// Count, mean and (n − 1) sample sd for every group.
pub fn group_stats(obs: &ObservationSet) -> Vec<GroupSummary> {
    (0..obs.num_groups())
        .map(|i| summarize(&obs.values(i).collect::<Vec<_>>()))
        .collect()
}

fn check_counts(obs: &ObservationSet, frame: &PopulationFrame, counts: &[u64]) -> Result<(), EstimateError> {
    if obs.num_groups() != frame.len() || counts.len() != frame.len() {
        return Err(EstimateError::GroupMismatch {
            expected: frame.len(),
            found: obs.num_groups().min(counts.len()),
        });
    }
    for (group, (&declared, observed)) in counts.iter().zip(obs.counts()).enumerate() {
        if declared != observed {
            return Err(EstimateError::CountMismatch {
                group,
                declared,
                observed,
            });
        }
    }
    if obs.is_empty() {
        return Err(EstimateError::Empty);
    }
    Ok(())
}

/// `Σ_i Σ_j (N_i/n_i) X_i^j / Σ_i Σ_j (N_i/n_i)`.
///
/// Unsampled groups contribute no terms. When every sampled group has the same
/// sampling rate the weights cancel and the plain mean is returned.
pub fn ipw_mean(obs: &ObservationSet, frame: &PopulationFrame, counts: &[u64]) -> Result<f64, EstimateError> {
    check_counts(obs, frame, counts)?;
    Ok(weighted_mean(obs, frame, counts))
}

fn weighted_mean(obs: &ObservationSet, frame: &PopulationFrame, counts: &[u64]) -> f64 {
    let sampled: Vec<usize> = (0..frame.len()).filter(|&i| counts[i] > 0).collect();
    let sizes = frame.sizes();
    let (i0, rest) = sampled.split_first().expect("nonempty");
    let uniform_rate = rest
        .iter()
        .all(|&i| counts[i] as u128 * sizes[*i0] as u128 == counts[*i0] as u128 * sizes[i] as u128);
    if uniform_rate {
        let all: Vec<f64> = sampled.iter().flat_map(|&i| obs.values(i)).collect();
        return mean(&all).expect("nonempty");
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for &i in &sampled {
        let values: Vec<f64> = obs.values(i).collect();
        num += sizes[i] as f64 * mean(&values).expect("sampled");
        den += sizes[i] as f64;
    }
    num / den
}

/// Where the per-group sds in the plug-in variance come from.
#[derive(Debug, Clone, PartialEq)]
pub enum SdSource {
    Sample,
    External(SdVector),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub mu_hat: f64,
    pub variance: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub level: f64,
    pub group_means: Vec<Option<f64>>,
    pub group_sds: Vec<Option<f64>>,
    pub group_counts: Vec<u64>,
    /// Set when some group has no observations; μ̂ then ignores those units.
    pub unsampled_groups: bool,
}

impl EstimateResult {
    pub fn se(&self) -> f64 {
        self.variance.sqrt()
    }

    pub fn ci_width(&self) -> f64 {
        self.ci_high - self.ci_low
    }

    /// Header plus one row: `mu_hat,se,ci_low,ci_high,level`.
    pub fn write_csv_summary<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "mu_hat,se,ci_low,ci_high,level")?;
        writeln!(
            out,
            "{},{},{},{},{}",
            self.mu_hat,
            self.se(),
            self.ci_low,
            self.ci_high,
            self.level
        )
    }
}

/// IPW estimate with variance `Σ N_i² σ̂_i² / n_i / (Σ N_i)²` over sampled
/// groups and a normal-quantile interval.
pub fn estimate_with_ci(
    obs: &ObservationSet,
    frame: &PopulationFrame,
    counts: &[u64],
    sd: &SdSource,
    level: f64,
) -> Result<EstimateResult, EstimateError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(EstimateError::BadLevel(level));
    }
    check_counts(obs, frame, counts)?;
    if let SdSource::External(s) = sd {
        if s.len() != frame.len() {
            return Err(EstimateError::SdLength {
                expected: frame.len(),
                found: s.len(),
            });
        }
    }
    let stats = group_stats(obs);
    let mu_hat = weighted_mean(obs, frame, counts);

    let mut var_num = 0.0;
    let mut den = 0.0;
    for (i, (g, st)) in frame.groups().iter().zip(&stats).enumerate() {
        if st.count == 0 {
            continue;
        }
        let s = match sd {
            SdSource::External(v) => v.as_slice()[i],
            SdSource::Sample => st.sd.ok_or(EstimateError::SingleObservation { group: i })?,
        };
        let size = g.size as f64;
        var_num += size * size * s * s / st.count as f64;
        den += size;
    }
    let variance = var_num / (den * den);
    let half = normal_quantile(0.5 + level / 2.0) * variance.sqrt();
    Ok(EstimateResult {
        mu_hat,
        variance,
        ci_low: mu_hat - half,
        ci_high: mu_hat + half,
        level,
        group_means: stats.iter().map(|s| s.mean).collect(),
        group_sds: stats.iter().map(|s| s.sd).collect(),
        group_counts: stats.iter().map(|s| s.count).collect(),
        unsampled_groups: stats.iter().any(|s| s.count == 0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::{GroupSpec, Stage};
    use proptest::prelude::*;

    fn frame(sizes: &[u64]) -> PopulationFrame {
        PopulationFrame::new(
            sizes
                .iter()
                .enumerate()
                .map(|(i, &n)| GroupSpec::new(format!("g{}", i + 1), n))
                .collect(),
        )
        .unwrap()
    }

    fn obs(frame: &PopulationFrame, data: &[&[f64]]) -> ObservationSet {
        let mut o = ObservationSet::new(frame);
        for (i, vals) in data.iter().enumerate() {
            o.extend(i, Stage::Main, vals.iter().copied()).unwrap();
        }
        o
    }

    #[test]
    fn stats_examples() {
        let f = frame(&[10, 10, 10]);
        let s = group_stats(&obs(&f, &[&[1.0, 1.0, 1.0], &[0.0, 2.0], &[5.0]]));
        assert_eq!(s[0], GroupSummary { count: 3, mean: Some(1.0), sd: Some(0.0) });
        assert_eq!(s[1].mean, Some(1.0));
        assert_eq!(s[1].sd, Some(2f64.sqrt()));
        assert_eq!(s[2], GroupSummary { count: 1, mean: Some(5.0), sd: None });
    }

    #[test]
    fn ipw_examples() {
        let f = frame(&[10]);
        assert_eq!(ipw_mean(&obs(&f, &[&[2.0, 4.0, 6.0]]), &f, &[3]).unwrap(), 4.0);

        let f = frame(&[10, 90]);
        let m = ipw_mean(&obs(&f, &[&[0.0], &[1.0]]), &f, &[1, 1]).unwrap();
        assert!((m - 0.9).abs() < 1e-15);

        let f = frame(&[7, 300, 41]);
        let o = obs(&f, &[&[2.5, 2.5], &[2.5; 9], &[2.5]]);
        assert_eq!(ipw_mean(&o, &f, &[2, 9, 1]).unwrap(), 2.5);
    }

    #[test]
    fn ipw_errors() {
        let f = frame(&[10, 10]);
        let o = obs(&f, &[&[1.0], &[]]);
        assert_eq!(
            ipw_mean(&o, &f, &[2, 0]),
            Err(EstimateError::CountMismatch { group: 0, declared: 2, observed: 1 })
        );
        assert_eq!(ipw_mean(&obs(&f, &[&[], &[]]), &f, &[0, 0]), Err(EstimateError::Empty));
    }

    #[test]
    fn constant_data_gives_degenerate_interval() {
        let f = frame(&[50, 70]);
        let o = obs(&f, &[&[3.0, 3.0, 3.0], &[3.0, 3.0]]);
        let r = estimate_with_ci(&o, &f, &[3, 2], &SdSource::Sample, 0.9).unwrap();
        assert_eq!((r.ci_low, r.mu_hat, r.ci_high), (3.0, 3.0, 3.0));
        assert_eq!(r.variance, 0.0);
    }

    #[test]
    fn single_group_variance_and_interval() {
        let f = frame(&[100]);
        let o = obs(&f, &[&[-1.0, 1.0, -3.0, 3.0]]);
        // External sd 2 gives variance (1/100²)·100²·4/4 = 1.
        let sd = SdVector::new(vec![2.0]).unwrap();
        let r = estimate_with_ci(&o, &f, &[4], &SdSource::External(sd), 0.95).unwrap();
        assert_eq!(r.variance, 1.0);
        assert!((r.ci_high - r.mu_hat - 1.959963984540054).abs() < 1e-8);
        assert!(r.ci_low <= r.mu_hat && r.mu_hat <= r.ci_high);
    }

    #[test]
    fn symmetric_groups_give_pooled_mean() {
        let f = frame(&[40, 40]);
        let data = [1.0, 4.0, 2.0, 8.0];
        let o = obs(&f, &[&data, &data]);
        let r = estimate_with_ci(&o, &f, &[4, 4], &SdSource::Sample, 0.95).unwrap();
        assert_eq!(r.mu_hat, 3.75);
    }

    #[test]
    fn single_observation_needs_external_sd() {
        let f = frame(&[40, 40]);
        let o = obs(&f, &[&[1.0], &[2.0, 3.0]]);
        assert_eq!(
            estimate_with_ci(&o, &f, &[1, 2], &SdSource::Sample, 0.95),
            Err(EstimateError::SingleObservation { group: 0 })
        );
        assert!(matches!(
            estimate_with_ci(&o, &f, &[1, 2], &SdSource::Sample, 1.0),
            Err(EstimateError::BadLevel(_))
        ));
    }

    #[test]
    fn unsampled_group_is_flagged() {
        let f = frame(&[40, 40]);
        let o = obs(&f, &[&[], &[2.0, 3.0]]);
        let r = estimate_with_ci(&o, &f, &[0, 2], &SdSource::Sample, 0.95).unwrap();
        assert!(r.unsampled_groups);
        assert_eq!(r.mu_hat, 2.5);
    }

    #[test]
    fn csv_summary_line() {
        let f = frame(&[10]);
        let o = obs(&f, &[&[1.0, 1.0]]);
        let r = estimate_with_ci(&o, &f, &[2], &SdSource::Sample, 0.95).unwrap();
        let mut buf = Vec::new();
        r.write_csv_summary(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "mu_hat,se,ci_low,ci_high,level\n1,0,1,1,0.95\n");
    }

    fn sample() -> impl Strategy<Value = (Vec<u64>, Vec<Vec<f64>>)> {
        prop::collection::vec((1u64..50, 1usize..8), 1..6).prop_flat_map(|shape| {
            let sizes: Vec<u64> = shape.iter().map(|&(m, c)| m * 10 + c as u64).collect();
            let data = shape
                .iter()
                .map(|&(_, c)| prop::collection::vec(-100.0f64..100.0, c))
                .collect::<Vec<_>>();
            (Just(sizes), data)
        })
    }

    proptest! {
        #[test]
        fn constant_rate_reduces_to_plain_mean(rate in 1u64..5, data in prop::collection::vec(prop::collection::vec(-50.0f64..50.0, 1..6), 1..5)) {
            // Group i has size rate·n_i, so every n_i/N_i equals 1/rate.
            let sizes: Vec<u64> = data.iter().map(|d| d.len() as u64 * rate).collect();
            let f = frame(&sizes);
            let refs: Vec<&[f64]> = data.iter().map(|d| d.as_slice()).collect();
            let o = obs(&f, &refs);
            let all: Vec<f64> = data.concat();
            let plain = mean(&all).unwrap();
            prop_assert_eq!(ipw_mean(&o, &f, &o.counts()).unwrap(), plain);
        }

        #[test]
        fn affine_equivariance((sizes, data) in sample(), a in -5.0f64..5.0, b in -100.0f64..100.0) {
            let f = frame(&sizes);
            let refs: Vec<&[f64]> = data.iter().map(|d| d.as_slice()).collect();
            let o = obs(&f, &refs);
            let m = ipw_mean(&o, &f, &o.counts()).unwrap();
            let t = ipw_mean(&o.map_values(|x| a * x + b), &f, &o.counts()).unwrap();
            prop_assert!((t - (a * m + b)).abs() <= 1e-12 * (1.0 + (a * m).abs() + b.abs()) * 100.0);
        }

        #[test]
        fn interval_brackets_estimate((sizes, data) in sample(), level in 0.01f64..0.999) {
            let f = frame(&sizes);
            let refs: Vec<&[f64]> = data.iter().map(|d| d.as_slice()).collect();
            let o = obs(&f, &refs);
            let sd = SdVector::new(vec![1.0; sizes.len()]).unwrap();
            let r = estimate_with_ci(&o, &f, &o.counts(), &SdSource::External(sd), level).unwrap();
            prop_assert!(r.ci_low <= r.mu_hat && r.mu_hat <= r.ci_high);
            prop_assert!(r.variance >= 0.0);
            prop_assert_eq!(r.group_counts, o.counts());
        }
    }
}
