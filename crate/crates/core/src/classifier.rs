use crate::dataset::FeatureMatrix;
use crate::error::{Error, Result};

/// Anything that maps a frequency vector to an author label.
pub trait Classifier {
    fn n_features(&self) -> usize;

    fn predict(&self, x: &[f64]) -> Result<usize>;

    fn check_dimension(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features() {
            return Err(Error::Dimension {
                expected: self.n_features(),
                actual: x.len(),
            });
        }
        Ok(())
    }

    fn predict_all(&self, data: &FeatureMatrix) -> Result<Vec<usize>> {
        data.rows.iter().map(|r| self.predict(&r.features)).collect()
    }

    /// Percentage of misclassified rows.
    fn error_rate(&self, data: &FeatureMatrix) -> Result<f64> {
        let predictions = self.predict_all(data)?;
        Ok(error_percent(&data.labels(), &predictions))
    }
}

pub fn error_percent(targets: &[usize], outputs: &[usize]) -> f64 {
    if targets.is_empty() {
        return 0.0;
    }
    let wrong = targets.iter().zip(outputs).filter(|(t, o)| t != o).count();
    100.0 * wrong as f64 / targets.len() as f64
}

/// Index of the largest value; the first one wins ties. NaN never wins.
pub(crate) fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_value = f64::NEG_INFINITY;
    for (i, v) in values.into_iter().enumerate() {
        if v > best_value {
            best = i;
            best_value = v;
        }
    }
    best
}
