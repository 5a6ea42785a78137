use nalgebra::{Complex, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{
    charpoly, eig, ensure_finite, ensure_square, hstack, orthogonal_completion, pinv,
    poly_at_matrix, poly_from_roots, range_basis, rank_report_scaled, singular_values,
    smallest_right_vectors, to_complex, PoleSet, RankTolerance, Region,
};
use crate::scalar::modulus;
use crate::{Error, Real, Result};

/// Rank of `[lambda I - T2, T1]` at one candidate mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PbhProbe {
    pub lambda: (f64, f64),
    pub rank: usize,
    pub min_singular_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PbhReport {
    pub controllable: bool,
    pub region: Region,
    pub order: usize,
    pub probes: Vec<PbhProbe>,
    pub uncontrollable_modes: Vec<(f64, f64)>,
}

fn check_pair<T: Real>(t2: &DMatrix<T>, t1: &DMatrix<T>) -> Result<()> {
    ensure_square(t2, "state matrix of the pair")?;
    if t1.nrows() != t2.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "input matrix has {} rows, state matrix has order {}",
            t1.nrows(),
            t2.nrows()
        )));
    }
    ensure_finite(t2)?;
    ensure_finite(t1)
}

/// PBH controllability test for `(t2, t1)`.
///
/// `[lambda I - T2, T1]` can only lose rank at eigenvalues of `T2`, so the
/// test probes exactly those (one representative per conjugate pair).
pub fn pbh_controllable<T: Real>(
    t2: &DMatrix<T>,
    t1: &DMatrix<T>,
    region: Region,
    tol: &RankTolerance<T>,
) -> Result<PbhReport> {
    check_pair(t2, t1)?;
    let n0 = t2.nrows();
    let mut probes = Vec::new();
    let mut bad = Vec::new();
    // zero is judged against the size of the pair, not of the probe
    let pair_scale = singular_values(&hstack(&[t2, t1])?).first().copied().unwrap_or_else(T::zero);
    for lambda in eig(t2)?.iter() {
        if lambda.im < T::zero() || !region.contains(lambda) {
            continue;
        }
        let scale = pair_scale.max(modulus(lambda));
        let rep = if lambda.im == T::zero() {
            let shifted = DMatrix::identity(n0, n0) * lambda.re - t2;
            rank_report_scaled(&hstack(&[&shifted, t1])?, tol, scale)?
        } else {
            let shifted = DMatrix::identity(n0, n0) * *lambda - to_complex(t2);
            let mut m = DMatrix::zeros(n0, n0 + t1.ncols());
            m.columns_mut(0, n0).copy_from(&shifted);
            m.columns_mut(n0, t1.ncols()).copy_from(&to_complex(t1));
            rank_report_scaled(&m, tol, scale)?
        };
        let lam = (lambda.re.as_f64(), lambda.im.as_f64());
        if rep.rank < n0 {
            bad.push(lam);
        }
        probes.push(PbhProbe {
            lambda: lam,
            rank: rep.rank,
            min_singular_value: rep.singular_values.get(n0.saturating_sub(1)).copied().unwrap_or(0.0),
        });
    }
    Ok(PbhReport {
        controllable: bad.is_empty(),
        region,
        order: n0,
        probes,
        uncontrollable_modes: bad,
    })
}

/// `[T1, T2 T1, ..., T2^{n0-1} T1]`.
pub fn controllability_matrix<T: Real>(t2: &DMatrix<T>, t1: &DMatrix<T>) -> Result<DMatrix<T>> {
    check_pair(t2, t1)?;
    let n0 = t2.nrows();
    let m = t1.ncols();
    let mut out = DMatrix::zeros(n0, n0 * m);
    let mut block = t1.clone();
    for k in 0..n0 {
        out.columns_mut(k * m, m).copy_from(&block);
        block = t2 * block;
    }
    Ok(out)
}

/// Orthogonal change of basis `Q` with `Q^T T2 Q = [[Ac, A12], [0, Au]]`
/// and `Q^T T1 = [Bc; 0]`.
#[derive(Debug, Clone)]
pub struct ControllableDecomposition<T: Real> {
    pub q: DMatrix<T>,
    pub controllable_dim: usize,
    pub a_c: DMatrix<T>,
    pub a_u: DMatrix<T>,
    pub b_c: DMatrix<T>,
}

pub fn controllable_decomposition<T: Real>(
    t2: &DMatrix<T>,
    t1: &DMatrix<T>,
    tol: &RankTolerance<T>,
) -> Result<ControllableDecomposition<T>> {
    let ctrb = controllability_matrix(t2, t1)?;
    let basis = range_basis(&ctrb, tol)?;
    let nc = basis.ncols();
    let n0 = t2.nrows();
    let q = orthogonal_completion(&basis);
    let at = q.transpose() * t2 * &q;
    let bt = q.transpose() * t1;
    Ok(ControllableDecomposition {
        a_c: at.view((0, 0), (nc, nc)).into_owned(),
        a_u: at.view((nc, nc), (n0 - nc, n0 - nc)).into_owned(),
        b_c: bt.rows(0, nc).into_owned(),
        q,
        controllable_dim: nc,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct PlacementOptions {
    /// Seed for the randomized retries.
    pub seed: u64,
    /// Randomized retries per strategy.
    pub attempts: usize,
}

impl Default for PlacementOptions {
    fn default() -> Self {
        Self {
            seed: 0x5eed,
            attempts: 32,
        }
    }
}

/// Gain `K` such that `eig(T1 K + T2)` equals `desired`.
pub fn place_poles<T: Real>(
    t2: &DMatrix<T>,
    t1: &DMatrix<T>,
    desired: &PoleSet<T>,
) -> Result<DMatrix<T>> {
    place_poles_with(t2, t1, desired, &PlacementOptions::default())
}

/// Order one is solved in closed form with the minimum-norm gain. Higher
/// orders use eigenstructure assignment: for each pole a vector `[v; w]` in
/// the kernel of `[lambda I - T2, -T1]`, then `K = W V^{-1}`. Conjugate pairs
/// contribute real and imaginary parts so `K` stays real. Pole multiplicities
/// above the input count go through a cyclic single-input reduction with
/// Ackermann's formula.
pub fn place_poles_with<T: Real>(
    t2: &DMatrix<T>,
    t1: &DMatrix<T>,
    desired: &PoleSet<T>,
    opts: &PlacementOptions,
) -> Result<DMatrix<T>> {
    check_pair(t2, t1)?;
    let n0 = t2.nrows();
    let m = t1.ncols();
    if desired.len() != n0 {
        return Err(Error::BadPoleSet(format!(
            "{} poles requested for a pair of order {n0}",
            desired.len()
        )));
    }
    if !desired.is_conjugate_closed() {
        return Err(Error::BadPoleSet(format!("{desired} is not conjugate-closed")));
    }
    if n0 == 0 {
        return Ok(DMatrix::zeros(m, 0));
    }
    let pbh = pbh_controllable(t2, t1, Region::All, &RankTolerance::default())?;
    if !pbh.controllable {
        return Err(Error::UncontrollablePair {
            modes: pbh.uncontrollable_modes,
        });
    }

    let mut best_err = T::lit(f64::INFINITY);
    let consider = |k: DMatrix<T>, best_err: &mut T| -> Option<DMatrix<T>> {
        let err = spectrum_error(&(t1 * &k + t2), desired).ok()?;
        if err < *best_err {
            *best_err = err;
        }
        (err <= acceptance(desired)).then_some(k)
    };

    // zero gain is the minimum-norm answer whenever it already works
    if let Some(k) = consider(DMatrix::zeros(m, n0), &mut best_err) {
        return Ok(k);
    }

    if n0 == 1 {
        let lambda = desired[0].re;
        let k = pinv(t1)? * (DMatrix::from_element(1, 1, lambda) - t2);
        return consider(k, &mut best_err)
            .ok_or(Error::IllConditionedAssignment { pole_error: best_err.as_f64() });
    }

    let groups = group_poles(desired);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    if groups.iter().all(|g| g.1 <= m) {
        if let Some(k) = eigenstructure(t2, t1, &groups, None).and_then(|k| consider(k, &mut best_err)) {
            return Ok(k);
        }
        let found: Vec<DMatrix<T>> = (0..opts.attempts)
            .filter_map(|_| eigenstructure(t2, t1, &groups, Some(&mut rng)))
            .filter_map(|k| consider(k, &mut best_err))
            .collect();
        if let Some(k) = min_norm(found) {
            return Ok(k);
        }
    }
    let found: Vec<DMatrix<T>> = (0..opts.attempts)
        .filter_map(|i| cyclic_ackermann(t2, t1, desired, i == 0, &mut rng))
        .filter_map(|k| consider(k, &mut best_err))
        .collect();
    min_norm(found).ok_or(Error::IllConditionedAssignment {
        pole_error: best_err.as_f64(),
    })
}

fn acceptance<T: Real>(desired: &PoleSet<T>) -> T {
    T::lit(T::PLACEMENT_TOL) * T::one().max(desired.spectral_radius())
}

fn min_norm<T: Real>(ks: Vec<DMatrix<T>>) -> Option<DMatrix<T>> {
    ks.into_iter()
        .min_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap_or(std::cmp::Ordering::Equal))
}

/// Pole error of `n` against `desired`: nearest-neighbour distance when the
/// desired poles are well separated, otherwise the relative characteristic
/// polynomial mismatch (eigenvalues of repeated poles are too sensitive to
/// compare directly).
pub(crate) fn spectrum_error<T: Real>(n: &DMatrix<T>, desired: &PoleSet<T>) -> Result<T> {
    let scale = T::one().max(desired.spectral_radius());
    if desired.min_separation() > T::lit(1e-6) * scale {
        return Ok(desired.matching_error(&eig(n)?));
    }
    let have = charpoly(n)?;
    let want = poly_from_roots(desired);
    let cscale = want.iter().fold(T::one(), |a, c| a.max(c.abs()));
    Ok(have
        .iter()
        .zip(&want)
        .map(|(a, b)| (*a - *b).abs() / cscale)
        .fold(T::zero(), |a, b| a.max(b)))
}

/// Representative poles (nonnegative imaginary part) with multiplicities.
fn group_poles<T: Real>(desired: &PoleSet<T>) -> Vec<(Complex<T>, usize)> {
    let mut groups: Vec<(Complex<T>, usize)> = Vec::new();
    for z in desired.sorted().iter() {
        let tol = T::lit(T::PLACEMENT_TOL) * (T::one() + modulus(z));
        let z = if z.im.abs() <= tol {
            Complex::new(z.re, T::zero())
        } else if z.im < T::zero() {
            continue;
        } else {
            *z
        };
        match groups.iter_mut().find(|(g, _)| modulus(&(g - z)) <= tol) {
            Some(g) => g.1 += 1,
            None => groups.push((z, 1)),
        }
    }
    groups
}

fn normal_vec<T: Real>(rng: &mut ChaCha8Rng, len: usize) -> DVector<T> {
    DVector::from_fn(len, |_, _| {
        let x: f64 = StandardNormal.sample(rng);
        T::lit(x)
    })
}

fn eigenstructure<T: Real>(
    t2: &DMatrix<T>,
    t1: &DMatrix<T>,
    groups: &[(Complex<T>, usize)],
    mut rng: Option<&mut ChaCha8Rng>,
) -> Option<DMatrix<T>> {
    let n0 = t2.nrows();
    let m = t1.ncols();
    let mut v = DMatrix::<T>::zeros(n0, n0);
    let mut w = DMatrix::<T>::zeros(m, n0);
    let mut col = 0;
    for &(lambda, mult) in groups {
        let mut coef = |j: usize| -> DVector<T> {
            match rng.as_deref_mut() {
                Some(r) => normal_vec(r, m),
                None => {
                    let mut e = DVector::zeros(m);
                    e[j] = T::one();
                    e
                }
            }
        };
        if lambda.im == T::zero() {
            let mut kernel = DMatrix::<T>::zeros(n0, n0 + m);
            kernel
                .columns_mut(0, n0)
                .copy_from(&(DMatrix::identity(n0, n0) * lambda.re - t2));
            kernel.columns_mut(n0, m).copy_from(&(-t1));
            let basis = smallest_right_vectors(&kernel, m);
            for j in 0..mult {
                let z = &basis * coef(j);
                v.set_column(col, &z.rows(0, n0));
                w.set_column(col, &z.rows(n0, m));
                col += 1;
            }
        } else {
            let mut kernel = DMatrix::<Complex<T>>::zeros(n0, n0 + m);
            kernel
                .columns_mut(0, n0)
                .copy_from(&(DMatrix::identity(n0, n0) * lambda - to_complex(t2)));
            kernel.columns_mut(n0, m).copy_from(&(-to_complex(t1)));
            let basis = smallest_right_vectors(&kernel, m);
            for j in 0..mult {
                let z = &basis * to_complex(&DMatrix::from_column_slice(m, 1, coef(j).as_slice()));
                for k in 0..n0 {
                    v[(k, col)] = z[k].re;
                    v[(k, col + 1)] = z[k].im;
                }
                for k in 0..m {
                    w[(k, col)] = z[n0 + k].re;
                    w[(k, col + 1)] = z[n0 + k].im;
                }
                col += 2;
            }
        }
    }
    if col != n0 {
        return None;
    }
    let s = singular_values(&v);
    if s.last().copied().unwrap_or_else(T::zero) <= T::lit(1e-13).max(T::default_epsilon() * T::lit(100.0)) * s[0] {
        return None;
    }
    // K V = W
    let kt = v.transpose().lu().solve(&w.transpose())?;
    Some(kt.transpose())
}

fn cyclic_ackermann<T: Real>(
    t2: &DMatrix<T>,
    t1: &DMatrix<T>,
    desired: &PoleSet<T>,
    zero_preshift: bool,
    rng: &mut ChaCha8Rng,
) -> Option<DMatrix<T>> {
    let n0 = t2.nrows();
    let m = t1.ncols();
    let k0 = if zero_preshift {
        DMatrix::zeros(m, n0)
    } else {
        let scale = T::lit(0.5) * t2.norm().max(T::one()) / t1.norm().max(T::default_epsilon());
        DMatrix::from_fn(m, n0, |_, _| {
            let x: f64 = StandardNormal.sample(rng);
            T::lit(x) * scale
        })
    };
    let shifted = t2 + t1 * &k0;
    let g = normal_vec::<T>(rng, m);
    let b = t1 * &g;
    let mut ctrb = DMatrix::<T>::zeros(n0, n0);
    let mut col = b.clone();
    for k in 0..n0 {
        ctrb.set_column(k, &col);
        col = &shifted * col;
    }
    let s = singular_values(&ctrb);
    if s.last().copied().unwrap_or_else(T::zero) <= T::lit(1e-13) * s[0] {
        return None;
    }
    let mut e_last = DVector::<T>::zeros(n0);
    e_last[n0 - 1] = T::one();
    let x = ctrb.transpose().lu().solve(&e_last)?;
    let p = poly_at_matrix(&poly_from_roots(desired), &shifted);
    let k_row = -(x.transpose() * p);
    Some(k0 + g * k_row)
}
