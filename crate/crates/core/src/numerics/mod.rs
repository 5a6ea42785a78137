//! Tolerance-aware dense linear algebra: rank, pseudoinverse, null spaces,
//! eigenvalues, and pole placement.
//!
//! Every rank decision goes through a [`RankTolerance`]; noise-free data in
//! floating point never has exact rank deficiencies.

mod placement;
mod poles;
mod svd;

use nalgebra::{ComplexField, DMatrix, RealField, Schur};
use serde::{Deserialize, Serialize};

use crate::{Error, Real, Result};

pub use placement::{
    controllability_matrix, controllable_decomposition, pbh_controllable, place_poles,
    place_poles_with, ControllableDecomposition, PbhProbe, PbhReport, PlacementOptions,
};
pub(crate) use placement::spectrum_error;
pub use poles::{poly_from_roots, PoleSet};

/// Threshold below which singular values count as zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "value", rename_all = "snake_case")]
pub enum RankTolerance<T> {
    /// Resolved as `value * sigma_max * max(rows, cols)`.
    Relative(T),
    Absolute(T),
}

impl<T: Real> Default for RankTolerance<T> {
    fn default() -> Self {
        RankTolerance::Relative(T::lit(T::DEFAULT_REL_TOL))
    }
}

impl<T: Real> RankTolerance<T> {
    pub fn threshold(&self, sigma_max: T, rows: usize, cols: usize) -> T {
        match *self {
            RankTolerance::Relative(v) => v * sigma_max * T::lit(rows.max(cols) as f64),
            RankTolerance::Absolute(v) => v,
        }
    }

    pub fn value(&self) -> T {
        match *self {
            RankTolerance::Relative(v) | RankTolerance::Absolute(v) => v,
        }
    }
}

/// Part of the complex plane a PBH test is restricted to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    All,
    /// `|lambda| >= 1`, i.e. stabilizability.
    UnitCircleExterior,
}

impl Region {
    /// Modes within `sqrt(eps)` of the unit circle are treated as unstable.
    pub fn contains<T: Real>(&self, lambda: &nalgebra::Complex<T>) -> bool {
        match self {
            Region::All => true,
            Region::UnitCircleExterior => {
                crate::scalar::modulus(lambda) >= T::one() - T::default_epsilon().sqrt()
            }
        }
    }
}

/// Rank with the singular spectrum it was read from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub rank: usize,
    pub threshold: f64,
    pub singular_values: Vec<f64>,
    /// `sigma_rank / sigma_{rank+1}`; infinite when nothing was cut off.
    pub gap: f64,
}

pub(crate) fn ensure_finite<N: ComplexField>(m: &DMatrix<N>) -> Result<()> {
    if m.iter().all(|v| v.clone().is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidMatrix("non-finite entry".into()))
    }
}

pub(crate) fn ensure_square<N: ComplexField>(m: &DMatrix<N>, what: &str) -> Result<()> {
    if m.is_square() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )))
    }
}

/// SVD with singular values sorted in descending order. When `cols > rows`
/// the matrix is padded with zero rows so that `v_h` spans all of `C^cols`.
struct SortedSvd<N: ComplexField> {
    u: DMatrix<N>,
    s: Vec<N::RealField>,
    v_h: DMatrix<N>,
}

fn sorted_svd<N: ComplexField>(m: &DMatrix<N>) -> SortedSvd<N>
where
    N::RealField: Real,
{
    let (rows, cols) = m.shape();
    let padded;
    let a = if cols > rows {
        padded = m.clone().resize_vertically(cols, N::zero());
        &padded
    } else {
        m
    };
    let svd::Svd { u, s, v_h } = svd::svd_tall(a);
    SortedSvd { u, s, v_h }
}

fn rank_from_spectrum<T: Real>(s: &[T], tol: &RankTolerance<T>, rows: usize, cols: usize) -> (usize, T) {
    let sigma_max = s.first().copied().unwrap_or_else(T::zero);
    let thr = tol.threshold(sigma_max, rows, cols);
    (s.iter().filter(|&&v| v > thr).count(), thr)
}

/// Singular values in descending order.
pub fn singular_values<N: ComplexField>(m: &DMatrix<N>) -> Vec<N::RealField>
where
    N::RealField: Real,
{
    if m.is_empty() {
        return Vec::new();
    }
    if m.nrows() >= m.ncols() {
        svd::svd_tall(m).s
    } else {
        svd::svd_tall(&m.adjoint()).s
    }
}

pub fn rank_tol<N: ComplexField>(m: &DMatrix<N>, tol: &RankTolerance<N::RealField>) -> Result<usize>
where
    N::RealField: Real,
{
    rank_report(m, tol).map(|r| r.rank)
}

pub fn rank_report<N: ComplexField>(
    m: &DMatrix<N>,
    tol: &RankTolerance<N::RealField>,
) -> Result<RankReport>
where
    N::RealField: Real,
{
    rank_report_scaled(m, tol, <N::RealField as num_traits::Zero>::zero())
}

/// Like [`rank_report`], but a relative tolerance is resolved against
/// `max(sigma_max, scale)`. Needed when `m` is a probe built from larger
/// matrices (a PBH pencil at an eigenvalue can vanish entirely, and then its
/// own `sigma_max` says nothing about what counts as zero).
pub fn rank_report_scaled<N: ComplexField>(
    m: &DMatrix<N>,
    tol: &RankTolerance<N::RealField>,
    scale: N::RealField,
) -> Result<RankReport>
where
    N::RealField: Real,
{
    ensure_finite(m)?;
    let s = singular_values(m);
    let sigma_ref = RealField::max(s.first().copied().unwrap_or(scale), scale);
    let thr = tol.threshold(sigma_ref, m.nrows(), m.ncols());
    let rank = s.iter().filter(|&&v| v > thr).count();
    let gap = match (rank, s.get(rank)) {
        (0, _) | (_, None) => f64::INFINITY,
        (k, Some(&next)) => {
            let next = next.as_f64();
            if next == 0.0 {
                f64::INFINITY
            } else {
                s[k - 1].as_f64() / next
            }
        }
    };
    Ok(RankReport {
        rank,
        threshold: thr.as_f64(),
        singular_values: s.iter().map(|v| v.as_f64()).collect(),
        gap,
    })
}

/// Moore-Penrose pseudoinverse with the default cutoff.
pub fn pinv<T: Real>(m: &DMatrix<T>) -> Result<DMatrix<T>> {
    pinv_tol(m, &RankTolerance::default())
}

pub fn pinv_tol<T: Real>(m: &DMatrix<T>, tol: &RankTolerance<T>) -> Result<DMatrix<T>> {
    ensure_finite(m)?;
    let (rows, cols) = m.shape();
    if m.is_empty() {
        return Ok(DMatrix::zeros(cols, rows));
    }
    let svd = sorted_svd(m);
    let (rank, _) = rank_from_spectrum(&svd.s, tol, rows, cols);
    let mut out = DMatrix::zeros(cols, rows);
    for k in 0..rank {
        out += svd.v_h.row(k).transpose() * svd.u.view((0, k), (rows, 1)).transpose() * (T::one() / svd.s[k]);
    }
    Ok(out)
}

/// Basis (as columns) of `{v : M v = 0}`, ordered from the smallest
/// singular value upwards.
pub fn null_columns<N: ComplexField>(m: &DMatrix<N>, tol: &RankTolerance<N::RealField>) -> Result<DMatrix<N>>
where
    N::RealField: Real,
{
    ensure_finite(m)?;
    let cols = m.ncols();
    if m.nrows() == 0 {
        return Ok(DMatrix::identity(cols, cols));
    }
    let svd = sorted_svd(m);
    let (rank, _) = rank_from_spectrum(&svd.s, tol, m.nrows(), cols);
    Ok(trailing_right_vectors(&svd, cols - rank))
}

/// The `count` right singular vectors with the smallest singular values,
/// smallest first, as columns.
pub(crate) fn smallest_right_vectors<N: ComplexField>(m: &DMatrix<N>, count: usize) -> DMatrix<N>
where
    N::RealField: Real,
{
    let svd = sorted_svd(m);
    trailing_right_vectors(&svd, count)
}

fn trailing_right_vectors<N: ComplexField>(svd: &SortedSvd<N>, count: usize) -> DMatrix<N> {
    let k = svd.v_h.nrows();
    DMatrix::from_fn(svd.v_h.ncols(), count, |r, c| svd.v_h[(k - 1 - c, r)].clone().conjugate())
}

/// Basis (as rows) of the left annihilator `{q : q M = 0}`; zero rows when
/// `M` has full row rank.
pub fn null_rows<T: Real>(m: &DMatrix<T>, tol: &RankTolerance<T>) -> Result<DMatrix<T>> {
    Ok(null_columns(&m.transpose(), tol)?.transpose())
}

/// Orthonormal basis (as columns) of the column space of `m`.
pub fn range_basis<T: Real>(m: &DMatrix<T>, tol: &RankTolerance<T>) -> Result<DMatrix<T>> {
    ensure_finite(m)?;
    if m.is_empty() {
        return Ok(DMatrix::zeros(m.nrows(), 0));
    }
    let svd = sorted_svd(m);
    let (rank, _) = rank_from_spectrum(&svd.s, tol, m.nrows(), m.ncols());
    // rows added by zero padding carry nothing for nonzero singular values
    Ok(svd.u.view((0, 0), (m.nrows(), rank)).into_owned())
}

/// Orthogonal completion: a square orthogonal matrix whose leading columns
/// span the same space as the orthonormal columns of `basis`.
pub(crate) fn orthogonal_completion<T: Real>(basis: &DMatrix<T>) -> DMatrix<T> {
    let n = basis.nrows();
    let k = basis.ncols();
    if k == 0 {
        return DMatrix::identity(n, n);
    }
    let complement = smallest_right_vectors(&basis.transpose(), n - k);
    let mut q = DMatrix::zeros(n, n);
    q.columns_mut(0, k).copy_from(basis);
    q.columns_mut(k, n - k).copy_from(&complement);
    q
}

/// Eigenvalues of a real square matrix, sorted by real then imaginary part.
pub fn eig<T: Real>(m: &DMatrix<T>) -> Result<PoleSet<T>> {
    ensure_square(m, "eigenvalue argument")?;
    ensure_finite(m)?;
    let n = m.nrows();
    if n == 0 {
        return Ok(PoleSet::empty());
    }
    let schur = Schur::try_new(m.clone(), T::default_epsilon(), 10_000 * n)
        .ok_or(Error::EigenFailure { order: n })?;
    let mut values: Vec<_> = schur.complex_eigenvalues().iter().copied().collect();
    poles::sort_complex(&mut values);
    Ok(PoleSet::from_values_unchecked(values))
}

/// `true` iff every eigenvalue has modulus `< 1 - margin`.
pub fn is_schur<T: Real>(m: &DMatrix<T>, margin: T) -> Result<bool> {
    Ok(eig(m)?.spectral_radius() < T::one() - margin)
}

/// Monic characteristic polynomial coefficients, constant term first.
pub fn charpoly<T: Real>(m: &DMatrix<T>) -> Result<Vec<T>> {
    ensure_square(m, "characteristic polynomial argument")?;
    let n = m.nrows();
    let mut coeffs = vec![T::zero(); n + 1];
    coeffs[n] = T::one();
    let mut mk = DMatrix::<T>::zeros(n, n);
    for k in 1..=n {
        mk = m * &mk + DMatrix::identity(n, n) * coeffs[n - k + 1];
        coeffs[n - k] = -(m * &mk).trace() / T::lit(k as f64);
    }
    Ok(coeffs)
}

/// Evaluates a real polynomial (constant term first) at a square matrix.
pub fn poly_at_matrix<T: Real>(coeffs: &[T], m: &DMatrix<T>) -> DMatrix<T> {
    let n = m.nrows();
    let mut acc = DMatrix::<T>::zeros(n, n);
    for &c in coeffs.iter().rev() {
        acc = &acc * m + DMatrix::identity(n, n) * c;
    }
    acc
}

/// Largest absolute entry.
pub fn max_abs<N: ComplexField>(m: &DMatrix<N>) -> N::RealField
where
    N::RealField: Real,
{
    m.iter()
        .map(|v| v.clone().abs())
        .fold(<N::RealField as num_traits::Zero>::zero(), |a, b| if b > a { b } else { a })
}

/// Vertical concatenation of blocks sharing a column count.
pub fn vstack<T: Real>(blocks: &[&DMatrix<T>]) -> Result<DMatrix<T>> {
    let cols = blocks.first().map(|b| b.ncols()).unwrap_or(0);
    if let Some(bad) = blocks.iter().find(|b| b.ncols() != cols) {
        return Err(Error::DimensionMismatch(format!(
            "vstack: {} columns vs {cols}",
            bad.ncols()
        )));
    }
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        out.rows_mut(at, b.nrows()).copy_from(*b);
        at += b.nrows();
    }
    Ok(out)
}

pub fn hstack<T: Real>(blocks: &[&DMatrix<T>]) -> Result<DMatrix<T>> {
    let t: Vec<DMatrix<T>> = blocks.iter().map(|b| b.transpose()).collect();
    let refs: Vec<&DMatrix<T>> = t.iter().collect();
    Ok(vstack(&refs)
        .map_err(|_| Error::DimensionMismatch("hstack: row counts differ".into()))?
        .transpose())
}

pub(crate) fn to_complex<T: Real>(m: &DMatrix<T>) -> DMatrix<nalgebra::Complex<T>> {
    m.map(|v| nalgebra::Complex::new(v, T::zero()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn tol() -> RankTolerance<f64> {
        RankTolerance::default()
    }

    #[test]
    fn rank_of_identity_and_zero() {
        assert_eq!(rank_tol(&DMatrix::<f64>::identity(3, 3), &tol()).unwrap(), 3);
        assert_eq!(rank_tol(&DMatrix::<f64>::zeros(2, 4), &tol()).unwrap(), 0);
    }

    #[test]
    fn duplicate_rows_do_not_raise_rank() {
        let f = dmatrix![1.0, 1.0, -2.0, 0.0, 2.0];
        let ff = vstack(&[&f, &f]).unwrap();
        assert_eq!(rank_tol(&ff, &tol()).unwrap(), 1);
        let rep = rank_report(&ff, &tol()).unwrap();
        assert!(rep.singular_values[1] < 1e-14);
        assert!(rep.gap > 1e10);
    }

    #[test]
    fn rank_rejects_non_finite() {
        let m = dmatrix![1.0, f64::NAN];
        assert!(matches!(rank_tol(&m, &tol()), Err(Error::InvalidMatrix(_))));
    }

    #[test]
    fn absolute_tolerance_is_used_verbatim() {
        let m = dmatrix![1.0, 0.0; 0.0, 1e-3];
        assert_eq!(rank_tol(&m, &RankTolerance::Absolute(1e-2)).unwrap(), 1);
        assert_eq!(rank_tol(&m, &RankTolerance::Absolute(1e-4)).unwrap(), 2);
    }

    #[test]
    fn pinv_of_invertible_is_inverse() {
        let m = dmatrix![2.0, 1.0; 1.0, 3.0];
        let inv = m.clone().try_inverse().unwrap();
        assert!((pinv(&m).unwrap() - inv).amax() < 1e-14);
    }

    #[test]
    fn pinv_of_row_vector() {
        let v = dmatrix![1.0, 1.0, -2.0, 0.0, 2.0];
        let p = pinv(&v).unwrap();
        let expected = v.transpose() / 10.0;
        assert!((&p - expected).amax() < 1e-15);
        assert!(((&v * &p)[(0, 0)] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn pinv_of_empty_has_transposed_shape() {
        let m = DMatrix::<f64>::zeros(0, 4);
        assert_eq!(pinv(&m).unwrap().shape(), (4, 0));
    }

    #[test]
    fn null_rows_of_full_row_rank_is_empty() {
        let m = dmatrix![1.0, 0.0, 2.0; 0.0, 1.0, 1.0];
        assert_eq!(null_rows(&m, &tol()).unwrap().nrows(), 0);
    }

    #[test]
    fn null_rows_of_repeated_row() {
        let v = dmatrix![0.3, -1.2, 2.0];
        let m = vstack(&[&v, &v]).unwrap();
        let q = null_rows(&m, &tol()).unwrap();
        assert_eq!(q.shape(), (1, 2));
        assert!((q[(0, 0)] + q[(0, 1)]).abs() < 1e-14);
        assert!((&q * &m).amax() < 1e-14);
    }

    #[test]
    fn eig_identity_and_scalar() {
        let e = eig(&DMatrix::<f64>::identity(3, 3)).unwrap();
        assert!(e.iter().all(|z| (z.re - 1.0).abs() < 1e-14 && z.im == 0.0));
        let e = eig(&dmatrix![0.39]).unwrap();
        assert_eq!(e.len(), 1);
        assert!((e[0].re - 0.39).abs() < 1e-15);
    }

    #[test]
    fn eig_rejects_non_square() {
        assert!(matches!(
            eig(&DMatrix::<f64>::zeros(2, 3)),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn schur_checks() {
        assert!(is_schur(&dmatrix![0.39], 0.0).unwrap());
        assert!(!is_schur(&DMatrix::<f64>::identity(2, 2), 0.0).unwrap());
        let rot = dmatrix![0.0, -0.5; 0.5, 0.0];
        assert!(is_schur(&rot, 0.0).unwrap());
        assert!(!is_schur(&rot, 0.6).unwrap());
    }

    #[test]
    fn charpoly_of_companion() {
        // lambda^2 - 0.3 lambda + 0.02 has roots 0.1, 0.2
        let m = dmatrix![0.0, 1.0; -0.02, 0.3];
        let c = charpoly(&m).unwrap();
        assert!((c[0] - 0.02).abs() < 1e-15 && (c[1] + 0.3).abs() < 1e-15 && c[2] == 1.0);
        assert!(poly_at_matrix(&c, &m).amax() < 1e-15);
    }

    #[test]
    fn wide_range_basis() {
        let b = range_basis(&dmatrix![2.0, 2.0], &tol()).unwrap();
        assert_eq!(b.shape(), (1, 1));
        assert!((b[(0, 0)].abs() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn orthogonal_completion_is_orthogonal() {
        let b = range_basis(&dmatrix![1.0; 1.0; 0.0], &tol()).unwrap();
        let q = orthogonal_completion(&b);
        assert!((q.transpose() * &q - DMatrix::identity(3, 3)).amax() < 1e-14);
    }

    #[test]
    fn f32_rank_and_pinv() {
        let m = dmatrix![1.0f32, 2.0; 2.0, 4.0; 0.0, 0.0];
        assert_eq!(rank_tol(&m, &RankTolerance::default()).unwrap(), 1);
        let p = pinv(&m).unwrap();
        assert!((&m * &p * &m - &m).amax() < 1e-5);
    }
}
