//! Row-major nested-array (de)serialization for dense matrices.

use nalgebra::DMatrix;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::Real;

pub fn to_rows<T: Real>(m: &DMatrix<T>) -> Vec<Vec<T>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Builds a matrix from row-major rows. `cols` is needed when there are no rows.
pub fn from_rows<T: Real>(rows: &[Vec<T>], cols: Option<usize>) -> Result<DMatrix<T>, String> {
    let ncols = rows.first().map(|r| r.len()).or(cols).unwrap_or(0);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err("rows have different lengths".into());
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub fn serialize<T: Real, S: Serializer>(m: &DMatrix<T>, s: S) -> Result<S::Ok, S::Error> {
    to_rows(m).serialize(s)
}

pub fn deserialize<'de, T: Real, D: Deserializer<'de>>(d: D) -> Result<DMatrix<T>, D::Error> {
    let rows = Vec::<Vec<T>>::deserialize(d)?;
    from_rows(&rows, None).map_err(D::Error::custom)
}

pub mod opt {
    use super::*;

    pub fn serialize<T: Real, S: Serializer>(
        m: &Option<DMatrix<T>>,
        s: S,
    ) -> Result<S::Ok, S::Error> {
        m.as_ref().map(to_rows).serialize(s)
    }

    pub fn deserialize<'de, T: Real, D: Deserializer<'de>>(
        d: D,
    ) -> Result<Option<DMatrix<T>>, D::Error> {
        let rows = Option::<Vec<Vec<T>>>::deserialize(d)?;
        rows.map(|r| from_rows(&r, None).map_err(D::Error::custom))
            .transpose()
    }
}
