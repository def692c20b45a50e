//! Serde adapters for nalgebra types as plain nested arrays.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub mod vectors {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[DVector<f64>], s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<&[f64]> = v.iter().map(|x| x.as_slice()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<DVector<f64>>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        Ok(rows.into_iter().map(DVector::from_vec).collect())
    }
}

/// Square matrices as a flat row-major array; the dimension is recovered
/// from the length.
pub mod square_row_major {
    use super::*;
    use serde::de::Error;

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let flat: Vec<f64> = m.transpose().as_slice().to_vec();
        flat.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let flat = Vec::<f64>::deserialize(d)?;
        let dim = (flat.len() as f64).sqrt().round() as usize;
        if dim * dim != flat.len() {
            return Err(D::Error::custom(format!(
                "row-major matrix of length {} is not square",
                flat.len()
            )));
        }
        Ok(DMatrix::from_row_slice(dim, dim, &flat))
    }
}
