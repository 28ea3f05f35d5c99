//! Implementation-phase judgment: category determination then range
//! membership, plus the conventional single-threshold baseline.

use crate::forest::argmax_f64;

use super::ranges::{ExitRangeTable, Interval};

/// Outcome of one early-exit judgment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Judgment {
    pub exit: bool,
    /// Category with the maximum confidence (ties to the lowest index).
    pub category: usize,
    /// That category's confidence.
    pub confidence: f64,
}

/// Range-based judgment for branch `m`: picks the argmax category d and
/// exits iff P[d] lies inside the calibrated cell (m, d). An empty cell
/// never exits. Pure function of its inputs.
pub fn judge_exit(table: &ExitRangeTable, m: usize, confidence: &[f64]) -> Judgment {
    let category = argmax_f64(confidence);
    let p = confidence[category];
    let exit = table.ranges[m][category].iter().any(|iv| iv.contains(p));
    Judgment { exit, category, confidence: p }
}

/// Conventional baseline: exit iff the maximum confidence strictly
/// exceeds the preset threshold.
pub fn conventional_threshold_judge(threshold: f64, confidence: &[f64]) -> Judgment {
    let category = argmax_f64(confidence);
    let p = confidence[category];
    Judgment { exit: p > threshold, category, confidence: p }
}

/// The range table that reproduces the threshold baseline exactly:
/// every cell is (threshold, 1], realized as the closed interval
/// starting at the next representable value above the threshold.
pub fn threshold_equivalent_table(
    threshold: f64,
    num_branches: usize,
    num_classes: usize,
) -> ExitRangeTable {
    let lo = threshold.next_up();
    ExitRangeTable::uniform(num_branches, num_classes, Interval { lo, hi: 1.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn table_with_cell(m: usize, n: usize, iv: Interval) -> ExitRangeTable {
        let mut t = ExitRangeTable::empty(2, 3);
        t.ranges[m][n].push(iv);
        t
    }

    #[test]
    fn fig5_exit_at_branch_two() {
        // Confidence [0.3, 0.5, 0.2]: category 2 (index 1) wins with 0.5,
        // which lies inside the calibrated range, so the sample exits.
        let t = table_with_cell(1, 1, Interval { lo: 0.45, hi: 0.8 });
        let j = judge_exit(&t, 1, &[0.3, 0.5, 0.2]);
        assert!(j.exit);
        assert_eq!(j.category, 1);
        assert_eq!(j.confidence, 0.5);
    }

    #[test]
    fn fig5_continue_at_branch_one() {
        // Confidence [0.4, 0.3, 0.3]: category 1 (index 0) wins with 0.4,
        // outside the range, so the sample returns to the backbone.
        let t = table_with_cell(0, 0, Interval { lo: 0.6, hi: 1.0 });
        let j = judge_exit(&t, 0, &[0.4, 0.3, 0.3]);
        assert!(!j.exit);
        assert_eq!(j.category, 0);
    }

    #[test]
    fn empty_cell_never_exits() {
        let t = ExitRangeTable::empty(2, 3);
        let j = judge_exit(&t, 0, &[0.9, 0.05, 0.05]);
        assert!(!j.exit);
    }

    #[test]
    fn argmax_ties_break_to_lowest_index() {
        let t = table_with_cell(0, 0, Interval { lo: 0.0, hi: 1.0 });
        let j = judge_exit(&t, 0, &[0.4, 0.4, 0.2]);
        assert_eq!(j.category, 0);
        assert!(j.exit);
    }

    #[test]
    fn threshold_boundary_is_strict() {
        let j = conventional_threshold_judge(0.6, &[0.61, 0.39]);
        assert!(j.exit);
        let j = conventional_threshold_judge(0.6, &[0.6, 0.4]);
        assert!(!j.exit, "exactly at threshold must continue");
    }

    #[test]
    fn threshold_equivalence_on_random_vectors() {
        let table = threshold_equivalent_table(0.6, 1, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let mut v: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..1.0)).collect();
            let s: f64 = v.iter().sum();
            for x in v.iter_mut() {
                *x /= s;
            }
            let a = conventional_threshold_judge(0.6, &v);
            let b = judge_exit(&table, 0, &v);
            assert_eq!(a.exit, b.exit, "diverged on {v:?}");
            assert_eq!(a.category, b.category);
        }
        // The boundary value itself matches too.
        let v = [0.6, 0.4, 0.0, 0.0];
        assert_eq!(
            conventional_threshold_judge(0.6, &v).exit,
            judge_exit(&table, 0, &v).exit
        );
    }
}
