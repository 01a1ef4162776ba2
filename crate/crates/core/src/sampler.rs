//! Sources of measured values for the adaptive designs.

use crate::frame::{FrameError, GroupSpec, PopulationFrame};
use crate::rng::{NormalStream, StreamKey};

/// Produces the value of the `draw`-th unit measured in `group`.
///
/// Draw indices count all units ever measured in the group, across stages,
/// so a stage-2 draw continues where the pilot stopped.
pub trait UnitSampler {
    fn value(&mut self, group: usize, draw: u64) -> f64;

    fn draw(&mut self, group: usize, start: u64, count: u64) -> Vec<f64> {
        (start..start + count).map(|d| self.value(group, d)).collect()
    }
}

impl<F: FnMut(usize, u64) -> f64> UnitSampler for F {
    fn value(&mut self, group: usize, draw: u64) -> f64 {
        self(group, draw)
    }
}

/// `count` iid draws from N(μ, σ²) on `stream`; σ = 0 yields copies of μ.
pub fn draw_group(group: &GroupSpec, count: u64, stream: &mut NormalStream) -> Result<Vec<f64>, FrameError> {
    let t = group
        .truth
        .ok_or_else(|| FrameError::Unspecified(group.id.clone()))?;
    if t.sd == 0.0 {
        return Ok(vec![t.mean; count as usize]);
    }
    Ok((0..count).map(|_| t.mean + t.sd * stream.next_normal()).collect())
}

/// Normal draws from a fully specified frame, one stream per group.
#[derive(Debug, Clone)]
pub struct NormalFrameSampler {
    groups: Vec<GroupSpec>,
    key: StreamKey,
}

impl NormalFrameSampler {
    pub fn new(frame: &PopulationFrame, key: StreamKey) -> Result<Self, FrameError> {
        frame.require_truth()?;
        Ok(NormalFrameSampler {
            groups: frame.groups().to_vec(),
            key,
        })
    }

    pub fn seeded(frame: &PopulationFrame, seed: u64) -> Result<Self, FrameError> {
        Self::new(frame, StreamKey::replication(seed, 0, 0))
    }
}

impl UnitSampler for NormalFrameSampler {
    fn value(&mut self, group: usize, draw: u64) -> f64 {
        self.draw(group, draw, 1)[0]
    }

    fn draw(&mut self, group: usize, start: u64, count: u64) -> Vec<f64> {
        let mut stream = self.key.stream(group as u64, start);
        draw_group(&self.groups[group], count, &mut stream).expect("frame checked at construction")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_normal() {
        let g = GroupSpec::with_truth("a", 10, 3.0, 0.0);
        let mut s = StreamKey::replication(1, 0, 0).stream(0, 0);
        assert_eq!(draw_group(&g, 4, &mut s).unwrap(), vec![3.0; 4]);
    }

    #[test]
    fn unspecified_group_rejected() {
        let g = GroupSpec::new("a", 10);
        let mut s = StreamKey::replication(1, 0, 0).stream(0, 0);
        assert!(matches!(draw_group(&g, 1, &mut s), Err(FrameError::Unspecified(_))));
    }

    #[test]
    fn million_draws_match_moments() {
        // 4-sigma envelopes: mean se is 1e-3, sd se is about 7e-4.
        let g = GroupSpec::with_truth("a", 2_000_000, 0.0, 1.0);
        let mut s = StreamKey::replication(2024, 0, 0).stream(0, 0);
        let xs = draw_group(&g, 1_000_000, &mut s).unwrap();
        let m = crate::stats::mean(&xs).unwrap();
        let sd = crate::stats::sample_variance(&xs).unwrap().sqrt();
        assert!(m.abs() < 0.004, "{m}");
        assert!((sd - 1.0).abs() < 0.005, "{sd}");
    }

    #[test]
    fn sampler_is_deterministic_and_splittable() {
        let f = PopulationFrame::simulated(&[100, 100], &[0.0, 5.0], &[1.0, 2.0]).unwrap();
        let mut a = NormalFrameSampler::seeded(&f, 9).unwrap();
        let mut b = NormalFrameSampler::seeded(&f, 9).unwrap();
        let whole = a.draw(1, 0, 10);
        let mut parts = b.draw(1, 0, 4);
        parts.extend(b.draw(1, 4, 6));
        assert_eq!(whole, parts);
        assert_eq!(a.value(1, 7), whole[7]);
    }
}
