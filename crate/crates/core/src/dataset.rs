use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::CoefficientVector;

/// Input/output coefficient pairs `(uᵢ, yᵢ) ∈ ℝᵐ × ℝᵐ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDataset", into = "RawDataset")]
pub struct Dataset {
    inputs: Vec<CoefficientVector>,
    outputs: Vec<CoefficientVector>,
}

impl Dataset {
    pub fn new(inputs: Vec<CoefficientVector>, outputs: Vec<CoefficientVector>) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::InvalidArgument("dataset must contain at least one pair".into()));
        }
        if inputs.len() != outputs.len() {
            return Err(Error::DimensionMismatch {
                context: "dataset output count",
                expected: inputs.len(),
                found: outputs.len(),
            });
        }
        let m = inputs[0].len();
        if m == 0 {
            return Err(Error::InvalidArgument("coefficient vectors must be nonempty".into()));
        }
        for v in inputs.iter().chain(outputs.iter()) {
            if v.len() != m {
                return Err(Error::DimensionMismatch {
                    context: "dataset coefficient dimension",
                    expected: m,
                    found: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("dataset"));
            }
        }
        Ok(Self { inputs, outputs })
    }

    pub fn n(&self) -> usize {
        self.inputs.len()
    }

    pub fn m(&self) -> usize {
        self.inputs[0].len()
    }

    pub fn inputs(&self) -> &[CoefficientVector] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[CoefficientVector] {
        &self.outputs
    }

    /// `(y₁, …, yₙ)` stacked into one `nm` vector.
    pub fn stacked_outputs(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.n() * self.m(),
            self.outputs.iter().flat_map(|y| y.iter().copied()),
        )
    }
}

#[derive(Serialize, Deserialize)]
struct RawDataset {
    inputs: Vec<Vec<f64>>,
    outputs: Vec<Vec<f64>>,
}

impl TryFrom<RawDataset> for Dataset {
    type Error = Error;

    fn try_from(raw: RawDataset) -> Result<Self> {
        Dataset::new(
            raw.inputs.into_iter().map(DVector::from_vec).collect(),
            raw.outputs.into_iter().map(DVector::from_vec).collect(),
        )
    }
}

impl From<Dataset> for RawDataset {
    fn from(d: Dataset) -> Self {
        RawDataset {
            inputs: d.inputs.iter().map(|v| v.as_slice().to_vec()).collect(),
            outputs: d.outputs.iter().map(|v| v.as_slice().to_vec()).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_inconsistent_data() {
        let a = DVector::from_vec(vec![1.0, 2.0]);
        let b = DVector::from_vec(vec![1.0]);
        assert!(Dataset::new(vec![], vec![]).is_err());
        assert!(Dataset::new(vec![a.clone()], vec![]).is_err());
        assert!(Dataset::new(vec![a.clone()], vec![b.clone()]).is_err());
        assert!(Dataset::new(vec![a.clone(), b], vec![a.clone(), a.clone()]).is_err());
        let ok = Dataset::new(vec![a.clone()], vec![a]).unwrap();
        assert_eq!((ok.n(), ok.m()), (1, 2));
    }

    #[test]
    fn json_round_trip_validates() {
        let d = Dataset::new(
            vec![DVector::from_vec(vec![1.0, 0.0])],
            vec![DVector::from_vec(vec![0.5, -0.25])],
        )
        .unwrap();
        let text = serde_json::to_string(&d).unwrap();
        assert_eq!(serde_json::from_str::<Dataset>(&text).unwrap(), d);
        let bad = r#"{"inputs": [[1.0, 0.0]], "outputs": [[1.0]]}"#;
        assert!(serde_json::from_str::<Dataset>(bad).is_err());
    }
}
