use std::collections::{BTreeMap, BTreeSet};

use crate::rt_e2::Rnti;

/// Remainders closer than this count as equal, so floating-point noise never
/// overrides the ascending-rnti tie-break.
const REMAINDER_QUANTUM: f64 = 1e-9;

/// Reusable scratch space for [`Allocator::split`].
#[derive(Clone, Debug, Default)]
pub struct Allocator {
    order: Vec<(i64, usize)>,
}

impl Allocator {
    /// Splits `n` RBs in proportion to `weights` by the largest-remainder
    /// method. Entries are in ascending rnti order; equal remainders favor
    /// the lower index. Returns `false` and leaves `out` zeroed when no
    /// weight is positive.
    pub fn split(&mut self, weights: &[f64], n: u32, out: &mut [u32]) -> bool {
        debug_assert_eq!(weights.len(), out.len());
        out.fill(0);
        let total: f64 = weights.iter().filter(|w| **w > 0.0).sum();
        if !total.is_finite() || total <= 0.0 {
            return false;
        }
        self.order.clear();
        let mut assigned: u64 = 0;
        for (i, &w) in weights.iter().enumerate() {
            let w = if w > 0.0 { w } else { 0.0 };
            let quota = w / total * n as f64;
            let floor = quota.floor();
            out[i] = floor as u32;
            assigned += out[i] as u64;
            let rem = ((quota - floor) / REMAINDER_QUANTUM).round() as i64;
            self.order.push((rem, i));
        }
        // rounding can make the floors overshoot by one when a quota lands a
        // hair above an integer
        while assigned > n as u64 {
            let i = (0..out.len()).rev().find(|&i| out[i] > 0).unwrap_or(0);
            out[i] -= 1;
            assigned -= 1;
        }
        let mut leftover = n as u64 - assigned;
        self.order
            .sort_unstable_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(_, i) in &self.order {
            if leftover == 0 {
                break;
            }
            if weights[i] > 0.0 {
                out[i] += 1;
                leftover -= 1;
            }
        }
        // every positive-weight UE already got one extra RB; cycle again
        while leftover > 0 {
            for &(_, i) in &self.order {
                if leftover == 0 {
                    break;
                }
                if weights[i] > 0.0 {
                    out[i] += 1;
                    leftover -= 1;
                }
            }
        }
        true
    }
}

/// Proportional RB split over the `active` UEs.
///
/// Weights of inactive or unknown UEs are ignored. When no active UE has a
/// positive weight, the RBs are split equally.
pub fn allocate_rbs(
    weights: &BTreeMap<Rnti, f64>,
    n_rbs: u32,
    active: &BTreeSet<Rnti>,
) -> BTreeMap<Rnti, u32> {
    for rnti in weights.keys().filter(|r| !active.contains(r)) {
        tracing::debug!(rnti, "weight for inactive or unknown UE ignored");
    }
    let ues: Vec<Rnti> = active.iter().copied().collect();
    let mut w: Vec<f64> = ues
        .iter()
        .map(|r| weights.get(r).copied().unwrap_or(0.0))
        .collect();
    let mut out = vec![0u32; ues.len()];
    let mut a = Allocator::default();
    if !a.split(&w, n_rbs, &mut out) {
        w.fill(1.0);
        a.split(&w, n_rbs, &mut out);
    }
    ues.into_iter().zip(out).collect()
}
