use serde::{Deserialize, Serialize};

use super::EvtError;

/// Loss observations from one design point and one replication.
///
/// Keeps the observations in arrival order plus a sorted copy for order
/// statistics. All values are finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Sample {
    values: Vec<f64>,
    sorted: Vec<f64>,
}

impl Sample {
    pub fn new(values: Vec<f64>) -> Result<Self, EvtError> {
        if values.is_empty() {
            return Err(EvtError::EmptySample);
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(EvtError::NonFinite { index, value });
        }
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        Ok(Self { values, sorted })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Ascending order statistics.
    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    /// Pool several samples into one.
    pub fn pooled<'a, I: IntoIterator<Item = &'a Sample>>(samples: I) -> Result<Self, EvtError> {
        Self::new(samples.into_iter().flat_map(|s| s.values.iter().copied()).collect())
    }
}

impl TryFrom<Vec<f64>> for Sample {
    type Error = EvtError;

    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(values)
    }
}

impl From<Sample> for Vec<f64> {
    fn from(s: Sample) -> Self {
        s.values
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_and_nan() {
        assert!(matches!(Sample::new(vec![]), Err(EvtError::EmptySample)));
        assert!(matches!(Sample::new(vec![1.0, f64::NAN]), Err(EvtError::NonFinite { index: 1, .. })));
    }

    #[test]
    fn keeps_order_and_sorted_copy() {
        let s = Sample::new(vec![3.0, 1.0, 2.0]).unwrap();
        assert_eq!(s.values(), &[3.0, 1.0, 2.0]);
        assert_eq!(s.sorted(), &[1.0, 2.0, 3.0]);
    }
}
