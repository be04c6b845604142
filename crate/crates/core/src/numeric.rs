//! Small summary-statistics helpers shared by the estimators and the lab.
//!
//! Every reduction here runs in slice order so results are bitwise
//! reproducible regardless of how the inputs were produced.

/// Neumaier-compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0_f64;
    let mut carry = 0.0_f64;
    for x in values {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            carry += (sum - t) + x;
        } else {
            carry += (x - t) + sum;
        }
        sum = t;
    }
    sum + carry
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (n - 1 denominator).
pub fn sample_sd(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return f64::NAN;
    }
    // Centring on the first value makes a constant sample exactly zero.
    let x0 = values[0];
    let m = x0 + values.iter().map(|x| x - x0).sum::<f64>() / values.len() as f64;
    let ss: f64 = values.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

pub fn sample_variance(values: &[f64]) -> f64 {
    let sd = sample_sd(values);
    sd * sd
}

/// Index of the order statistic used as the `q` quantile of `n` sorted
/// values (inverse empirical CDF: the smallest `x` with `F(x) >= q`).
pub fn order_statistic_index(n: usize, q: f64) -> usize {
    assert!(n > 0, "order statistic of an empty sample");
    // The epsilon absorbs representation error such as 1000 * 0.975.
    let rank = (q * n as f64 - 1e-9).ceil();
    (rank.max(1.0) as usize).min(n) - 1
}

/// `q` quantile of an already sorted slice, as an order statistic.
pub fn sorted_quantile(sorted: &[f64], q: f64) -> f64 {
    sorted[order_statistic_index(sorted.len(), q)]
}

pub fn sorted_copy(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Two-sided percentile interval at `level` from the order statistics of
/// `values`.
pub fn percentile_interval(values: &[f64], level: f64) -> (f64, f64) {
    let sorted = sorted_copy(values);
    let alpha = 1.0 - level;
    (
        sorted_quantile(&sorted, alpha / 2.0),
        sorted_quantile(&sorted, 1.0 - alpha / 2.0),
    )
}

/// Logistic function, evaluated without overflow for large |x|.
pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
