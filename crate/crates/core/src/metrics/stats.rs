use alloc::vec::Vec;

use super::report::median;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MoodTest {
    pub pooled_median: f64,
    /// Counts strictly above the pooled median in the first and second sample.
    pub above: [usize; 2],
    /// Counts at or below the pooled median.
    pub below: [usize; 2],
    pub chi_square: f64,
    pub p_value: f64,
}

/// Mood's median test: a 2x2 table of counts above versus at-or-below the
/// pooled median, chi-square statistic with one degree of freedom and no
/// continuity correction.
pub fn moods_median_test(a: &[f64], b: &[f64]) -> Result<MoodTest> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::arg("both samples must be nonempty"));
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(Error::arg("samples contain NaN"));
    }
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let med = median(&pooled).expect("nonempty");
    let count = |s: &[f64]| s.iter().filter(|&&v| v > med).count();
    let above = [count(a), count(b)];
    let below = [a.len() - above[0], b.len() - above[1]];
    let total_above = (above[0] + above[1]) as f64;
    let total_below = (below[0] + below[1]) as f64;
    if total_above == 0.0 || total_below == 0.0 {
        return Err(Error::UndefinedTest);
    }
    let n = pooled.len() as f64;
    let sizes = [a.len() as f64, b.len() as f64];
    let mut chi = 0.0;
    for j in 0..2 {
        for (obs, tot) in [(above[j] as f64, total_above), (below[j] as f64, total_below)] {
            let expected = sizes[j] * tot / n;
            chi += (obs - expected) * (obs - expected) / expected;
        }
    }
    Ok(MoodTest {
        pooled_median: med,
        above,
        below,
        chi_square: chi,
        // upper tail of chi-square with one degree of freedom
        p_value: libm::erfc(libm::sqrt(chi / 2.0)).clamp(0.0, 1.0),
    })
}
