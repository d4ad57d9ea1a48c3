use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Integer-valued sample summarised losslessly: every value, exact counts, mean and
/// sample (n - 1) standard deviation.
///
/// Sums are accumulated in integers so the summary does not depend on reduction order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub mean: f64,
    pub std_dev: f64,
    pub histogram: BTreeMap<u64, u64>,
    #[serde(skip)]
    pub values: Vec<u64>,
}

impl Distribution {
    pub fn from_values(values: Vec<u64>) -> Self {
        let (mean, std_dev) = mean_and_std(&values);
        let mut histogram = BTreeMap::new();
        for &v in &values {
            *histogram.entry(v).or_insert(0) += 1;
        }
        Self {
            mean,
            std_dev,
            histogram,
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Fraction of samples equal to `value`.
    pub fn frequency(&self, value: u64) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        *self.histogram.get(&value).unwrap_or(&0) as f64 / self.values.len() as f64
    }
}

/// Mean and sample standard deviation computed from exact integer moments.
pub fn mean_and_std(values: &[u64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let sum: u128 = values.iter().map(|&v| v as u128).sum();
    let sum_sq: u128 = values.iter().map(|&v| (v as u128) * (v as u128)).sum();
    let mean = sum as f64 / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    // n * sum_sq - sum^2 is exact and non-negative
    let numerator = (n as u128) * sum_sq - sum * sum;
    let var = numerator as f64 / (n as f64 * (n - 1) as f64);
    (mean, var.sqrt())
}
