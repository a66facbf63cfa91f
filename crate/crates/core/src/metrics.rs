//! Training metrics and the convergence rule.

/// One evaluation point of a training run.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    /// Completed training iterations.
    pub iteration: u64,
    /// Cumulative training wall time, evaluation excluded.
    pub seconds: f64,
    /// Total team reward per episode, averaged over the evaluation episodes.
    pub avg_total_reward: f64,
    /// Collection time of the iteration (slowest learner).
    pub collect_s: f64,
    /// Update time of the iteration (slowest learner).
    pub update_s: f64,
}

/// Window length of the convergence rule.
pub const CONVERGENCE_WINDOW: usize = 90;
/// Variance tolerance relative to the window's absolute mean.
pub const CONVERGENCE_TOLERANCE: f64 = 0.02;

/// Population mean and variance.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (mean, xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n)
}

/// Earliest window end `k` (exclusive, so the window is `series[k-90..k]`)
/// whose population variance is at most 2% of the absolute mean.
pub fn detect_convergence(series: &[f64]) -> Option<usize> {
    (CONVERGENCE_WINDOW..=series.len()).find(|&k| {
        let (mean, var) = mean_var(&series[k - CONVERGENCE_WINDOW..k]);
        var <= CONVERGENCE_TOLERANCE * mean.abs()
    })
}

/// Convergence iteration and reward of a run: the row that closes the
/// first converged window.
pub fn convergence(rows: &[MetricsRow]) -> Option<(u64, f64)> {
    let rewards: Vec<f64> = rows.iter().map(|r| r.avg_total_reward).collect();
    detect_convergence(&rewards).map(|k| (rows[k - 1].iteration, rows[k - 1].avg_total_reward))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_series_converges_at_first_full_window() {
        assert_eq!(detect_convergence(&[3.0; 200]), Some(90));
        assert_eq!(detect_convergence(&[3.0; 89]), None);
    }

    #[test]
    fn alternating_series_never_converges() {
        let s: Vec<f64> = (0..500).map(|k| if k % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert_eq!(detect_convergence(&s), None);
    }

    #[test]
    fn decaying_noise_matches_direct_window_scan() {
        // x_k = 10 + (-1)^k * 3 * 0.97^k; recompute every window by hand
        let s: Vec<f64> = (0..400).map(|k| 10.0 + if k % 2 == 0 { 3.0 } else { -3.0 } * 0.97f64.powi(k)).collect();
        let mut expected = None;
        for end in 90..=s.len() {
            let w = &s[end - 90..end];
            let m = w.iter().sum::<f64>() / 90.0;
            let v = w.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / 90.0;
            if v <= 0.02 * m.abs() {
                expected = Some(end);
                break;
            }
        }
        assert!(expected.is_some_and(|k| k > 90));
        assert_eq!(detect_convergence(&s), expected);
    }

    #[test]
    fn convergence_reports_the_closing_row() {
        let rows: Vec<MetricsRow> = (0..120)
            .map(|k| MetricsRow { iteration: k + 1, seconds: 0.0, avg_total_reward: 5.0, collect_s: 0.0, update_s: 0.0 })
            .collect();
        assert_eq!(convergence(&rows), Some((90, 5.0)));
    }
}
