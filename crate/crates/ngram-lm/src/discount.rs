//! Good-Turing discounting in the Katz formulation.
//!
//! For counts r up to a cutoff k, the discount ratio is
//! d_r = (r*/r - A) / (1 - A) with r* = (r+1) n_{r+1} / n_r and
//! A = (k+1) n_{k+1} / n_1, where n_r is the number of distinct n-grams seen
//! exactly r times. Counts above the cutoff are left undiscounted. When the
//! statistics cannot support the formula (a required n_r is zero, A >= 1, or
//! some d_r falls outside (0, 1]), discounting is disabled for the order and
//! a warning is attached instead of failing the build.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Per-count discount ratios for one n-gram order.
#[derive(Debug, Clone)]
pub struct DiscountTable {
    cutoff: u64,
    /// ratios[r - 1] = d_r for r in 1..=cutoff.
    ratios: Vec<f64>,
    disabled: bool,
    warning: Option<String>,
}

impl DiscountTable {
    /// A table that discounts nothing.
    pub fn all_ones(cutoff: u64, warning: Option<String>) -> Self {
        DiscountTable {
            cutoff,
            ratios: vec![1.0; cutoff as usize],
            disabled: true,
            warning,
        }
    }

    pub fn cutoff(&self) -> u64 {
        self.cutoff
    }

    pub fn is_disabled(&self) -> bool {
        self.disabled
    }

    pub fn warning(&self) -> Option<&str> {
        self.warning.as_deref()
    }

    /// The ratio applied to a raw count.
    pub fn ratio(&self, count: u64) -> f64 {
        if count == 0 || count > self.cutoff {
            1.0
        } else {
            self.ratios[(count - 1) as usize]
        }
    }

    /// Discounted frequency for a raw count.
    pub fn discounted(&self, count: u64) -> f64 {
        self.ratio(count) * count as f64
    }
}

/// Computes Katz-style Good-Turing discount ratios from count-of-counts.
pub fn good_turing_discounts(
    count_of_counts: &BTreeMap<u64, u64>,
    cutoff: u64,
) -> Result<DiscountTable> {
    if cutoff < 1 {
        return Err(Error::InvalidCutoff(cutoff));
    }
    let n = |r: u64| count_of_counts.get(&r).copied().unwrap_or(0);
    for r in 1..=cutoff + 1 {
        if n(r) == 0 {
            return Ok(DiscountTable::all_ones(
                cutoff,
                Some(format!(
                    "discounting disabled: no n-grams with count {r} (need counts-of-counts up to {})",
                    cutoff + 1
                )),
            ));
        }
    }
    let a = (cutoff + 1) as f64 * n(cutoff + 1) as f64 / n(1) as f64;
    if !(a.is_finite() && a < 1.0) {
        return Ok(DiscountTable::all_ones(
            cutoff,
            Some(format!("discounting disabled: degenerate statistics (A = {a})")),
        ));
    }
    let mut ratios = Vec::with_capacity(cutoff as usize);
    for r in 1..=cutoff {
        let r_star = (r + 1) as f64 * n(r + 1) as f64 / n(r) as f64;
        let d = (r_star / r as f64 - a) / (1.0 - a);
        if !d.is_finite() || d <= 0.0 || d > 1.0 {
            return Ok(DiscountTable::all_ones(
                cutoff,
                Some(format!(
                    "discounting disabled: discount for count {r} is {d}, outside (0, 1]"
                )),
            ));
        }
        ratios.push(d);
    }
    Ok(DiscountTable {
        cutoff,
        ratios,
        disabled: false,
        warning: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coc(pairs: &[(u64, u64)]) -> BTreeMap<u64, u64> {
        pairs.iter().copied().collect()
    }

    #[test]
    fn no_singletons_falls_back_to_all_ones() {
        let table = good_turing_discounts(&coc(&[(2, 10), (3, 5)]), 1).unwrap();
        assert!(table.is_disabled());
        assert!(table.warning().is_some());
        assert_eq!(table.ratio(1), 1.0);
        assert_eq!(table.ratio(100), 1.0);
    }

    #[test]
    fn unit_a_is_degenerate_and_falls_back() {
        // n_1 = 10, n_2 = 5, k = 1: A = 2 * 5 / 10 = 1.
        let table = good_turing_discounts(&coc(&[(1, 10), (2, 5)]), 1).unwrap();
        assert!(table.is_disabled());
        assert!(table.warning().unwrap().contains("A = 1"));
    }

    #[test]
    fn katz_formula_matches_scripted_values() {
        // Verified against an independent evaluation of the formula.
        let table = good_turing_discounts(
            &coc(&[
                (1, 1000),
                (2, 280),
                (3, 130),
                (4, 76),
                (5, 49),
                (6, 35),
                (7, 26),
                (8, 20),
            ]),
            7,
        )
        .unwrap();
        assert!(!table.is_disabled());
        let expected = [
            0.4761904761904762,
            0.6386054421768707,
            0.7374847374847375,
            0.7689536340852131,
            0.8299319727891156,
            0.8412698412698413,
            0.8560962846677134,
        ];
        for (r, want) in (1..=7).zip(expected) {
            let got = table.ratio(r);
            assert!((got - want).abs() < 1e-15, "d_{r}: got {got}, want {want}");
        }
        assert_eq!(table.ratio(8), 1.0);
    }

    #[test]
    fn out_of_range_discount_disables_the_order() {
        // With n_6 = n_7 = 2, d_6 = (7 * 2/2 / 6 - A) / (1 - A) > 1, so the
        // whole order falls back.
        let table = good_turing_discounts(
            &coc(&[
                (1, 100),
                (2, 25),
                (3, 10),
                (4, 5),
                (5, 3),
                (6, 2),
                (7, 2),
                (8, 1),
            ]),
            7,
        )
        .unwrap();
        assert!(table.is_disabled());
        assert!(table.warning().unwrap().contains("count 6"));
    }

    #[test]
    fn zero_cutoff_is_an_error() {
        assert!(matches!(
            good_turing_discounts(&coc(&[(1, 10)]), 0),
            Err(Error::InvalidCutoff(0))
        ));
    }
}
