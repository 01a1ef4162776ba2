//! Integer apportionment of real-valued allocations.

use std::cmp::Ordering;

/// Largest-remainder (Hamilton) rounding under per-group capacities.
///
/// Each weight is floored; the leftover units go to the groups with the
/// largest fractional parts, ties to the lower index. Groups already at
/// capacity are skipped. The result sums to `round(Σ weights)`.
pub fn largest_remainder(weights: &[f64], caps: &[u64]) -> Vec<u64> {
    debug_assert_eq!(weights.len(), caps.len());
    let total: f64 = weights.iter().sum();
    let target = total.round() as u64;

    let mut counts: Vec<u64> = weights
        .iter()
        .zip(caps)
        .map(|(&w, &cap)| (w.max(0.0).floor() as u64).min(cap))
        .collect();
    let assigned: u64 = counts.iter().sum();
    let mut leftover = target.saturating_sub(assigned);

    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = weights[a] - weights[a].floor();
        let fb = weights[b] - weights[b].floor();
        fb.partial_cmp(&fa).unwrap_or(Ordering::Equal).then(a.cmp(&b))
    });

    // One pass normally suffices; further passes only absorb float slop.
    while leftover > 0 {
        let before = leftover;
        for &i in &order {
            if leftover == 0 {
                break;
            }
            if counts[i] < caps[i] {
                counts[i] += 1;
                leftover -= 1;
            }
        }
        if leftover == before {
            break;
        }
    }
    counts
}

/// Raises every group to `min(minimum, cap)` by taking single units from the
/// group with the largest count (lowest index on ties) that stays at or above
/// its own floor. Returns `None` when the total cannot cover the floors.
pub fn enforce_minimum(counts: &mut [u64], caps: &[u64], minimum: u64) -> Option<()> {
    let floors: Vec<u64> = caps.iter().map(|&c| c.min(minimum)).collect();
    let need: u64 = floors.iter().sum();
    if counts.iter().sum::<u64>() < need {
        return None;
    }
    for i in 0..counts.len() {
        while counts[i] < floors[i] {
            let donor = (0..counts.len())
                .filter(|&j| j != i && counts[j] > floors[j])
                .max_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a)))?;
            counts[donor] -= 1;
            counts[i] += 1;
        }
    }
    Some(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const BIG: u64 = u64::MAX;

    #[test]
    fn hamilton_examples() {
        assert_eq!(largest_remainder(&[3.333, 3.333, 3.334], &[BIG; 3]), vec![3, 3, 4]);
        assert_eq!(largest_remainder(&[2.5, 2.5], &[BIG; 2]), vec![3, 2]);
        assert_eq!(largest_remainder(&[7.0], &[BIG]), vec![7]);
    }

    #[test]
    fn capped_group_is_skipped() {
        assert_eq!(largest_remainder(&[2.0, 1.5, 1.5], &[2, 10, 10]), vec![2, 2, 1]);
        assert_eq!(largest_remainder(&[1.9, 0.1], &[1, 5]), vec![1, 1]);
    }

    #[test]
    fn minimum_takes_from_largest() {
        let mut c = vec![0, 7, 3];
        enforce_minimum(&mut c, &[10, 10, 10], 1).unwrap();
        assert_eq!(c, vec![1, 6, 3]);

        let mut c = vec![0, 5, 5];
        enforce_minimum(&mut c, &[10, 10, 10], 2).unwrap();
        assert_eq!(c, vec![2, 4, 4]);

        let mut c = vec![0, 1];
        assert!(enforce_minimum(&mut c, &[10, 10], 2).is_none());
    }

    #[test]
    fn minimum_respects_small_caps() {
        let mut c = vec![0, 10];
        enforce_minimum(&mut c, &[1, 100], 2).unwrap();
        assert_eq!(c, vec![1, 9]);
    }
}
