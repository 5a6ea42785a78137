//! Minimum-row target augmentation.
//!
//! When `F A` leaves the row space of `F`, no controller of order `r`
//! exists, but one of order `r + d` may exist for `[F; R]`. The smallest
//! such `d` is `rk O(A, F) - r`, and suitable rows of `R` can be read off
//! the observability matrix, which is recoverable from data by projecting
//! the target Hankel matrix onto the orthogonal complement of the input
//! Hankel row space.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::existence::{check_nesting, check_pencil, extract_t1t2};
use crate::numerics::{
    pinv, rank_report, rank_tol, singular_values, vstack, PoleSet, RankTolerance, Region,
};
use crate::synthesis::{design_controller, ControllerDesign};
use crate::trajectory::{check_assumption2, hankel_matrix, partition, TrajectoryDataset};
use crate::{serde_mat, Error, Real, Result};

/// `Zh = Z_{0,t,T-t+1}`, `Gamma = I - Uh^- Uh`, `Xrow = X_{0,T-t+1}`.
#[derive(Debug, Clone)]
pub struct ProjectedHankel<T: Real> {
    pub zh: DMatrix<T>,
    pub uh: DMatrix<T>,
    pub gamma_perp_u: DMatrix<T>,
    pub xrow: DMatrix<T>,
}

impl<T: Real> ProjectedHankel<T> {
    pub fn new(ds: &TrajectoryDataset<T>, t: usize) -> Result<Self> {
        let z = ds.z.as_ref().ok_or(Error::MissingChannel("z"))?;
        let horizon = ds.horizon();
        if t == 0 || t > horizon {
            return Err(Error::OutOfRange(format!("t = {t} with horizon {horizon}")));
        }
        let cols = horizon - t + 1;
        let uh = hankel_matrix(&ds.u, 0, t, cols)?;
        let gamma_perp_u = DMatrix::identity(cols, cols) - pinv(&uh)? * &uh;
        Ok(Self {
            zh: hankel_matrix(z, 0, t, cols)?,
            xrow: hankel_matrix(&ds.x, 0, 1, cols)?,
            uh,
            gamma_perp_u,
        })
    }

    /// `Zh Gamma`.
    pub fn projected_target(&self) -> DMatrix<T> {
        &self.zh * &self.gamma_perp_u
    }

    /// `Zh Gamma (Xrow Gamma)^-`.
    pub fn observability(&self) -> Result<DMatrix<T>> {
        Ok(self.projected_target() * pinv(&(&self.xrow * &self.gamma_perp_u))?)
    }
}

fn excited<T: Real>(ds: &TrajectoryDataset<T>, t: usize, tol: &RankTolerance<T>) -> Result<()> {
    let rep = check_assumption2(ds, t, tol)?;
    if rep.holds {
        Ok(())
    } else {
        Err(Error::Excitation(format!(
            "depth-{t} excitation matrix has rank {} < {}",
            rep.rank.rank, rep.expected_rank
        )))
    }
}

/// Recovered `[F; F A; ...; F A^{t-1}]` and its rank (read from `Zh Gamma`).
pub fn recover_ot<T: Real>(
    ds: &TrajectoryDataset<T>,
    t: usize,
    tol: &RankTolerance<T>,
) -> Result<(DMatrix<T>, usize)> {
    excited(ds, t, tol)?;
    let ph = ProjectedHankel::new(ds, t)?;
    let rank = rank_tol(&ph.projected_target(), tol)?;
    Ok((ph.observability()?, rank))
}

pub fn compute_dmin<T: Real>(ds: &TrajectoryDataset<T>, t: usize, tol: &RankTolerance<T>) -> Result<usize> {
    let (_, rank) = recover_ot(ds, t, tol)?;
    Ok(rank.saturating_sub(ds.r()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentedConditions {
    pub nesting_aug: bool,
    pub pencil_aug: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct AugmentationResult<T: Real> {
    #[serde(rename = "R", with = "serde_mat")]
    pub r: DMatrix<T>,
    pub d_min: usize,
    pub t_used: usize,
    #[serde(rename = "O_t_hat", with = "serde_mat")]
    pub o_t_hat: DMatrix<T>,
    #[serde(rename = "F_hat", with = "serde_mat")]
    pub f_hat: DMatrix<T>,
    /// Row indices of `O_t_hat` that make up `R`.
    pub selected_rows: Vec<usize>,
    pub cond_checks: AugmentedConditions,
}

impl<T: Real> AugmentationResult<T> {
    /// `[F_hat; R]`.
    pub fn augmented_target(&self) -> Result<DMatrix<T>> {
        vstack(&[&self.f_hat, &self.r])
    }
}

/// Nesting and pencil conditions for the target `[Z; R X]`.
pub fn check_augmented_conditions<T: Real>(
    ds: &TrajectoryDataset<T>,
    r: &DMatrix<T>,
    tol: &RankTolerance<T>,
) -> Result<AugmentedConditions> {
    let dp = partition(ds)?.augmented(r)?;
    let nesting_aug = check_nesting(&dp, tol)?.holds;
    let pencil_aug = match check_pencil(&dp, Region::All, tol) {
        Ok(p) => p.holds,
        Err(Error::RankDeficientZp { .. }) => false,
        Err(e) => return Err(e),
    };
    Ok(AugmentedConditions { nesting_aug, pencil_aug })
}

/// Greedy scan over the rows of the recovered observability matrix, after
/// the first `r` (which reproduce `F`), keeping a row when it raises the
/// rank of `[F_hat; R]`.
pub fn build_r<T: Real>(ds: &TrajectoryDataset<T>, t: usize, tol: &RankTolerance<T>) -> Result<AugmentationResult<T>> {
    excited(ds, t, tol)?;
    let ph = ProjectedHankel::new(ds, t)?;
    let projected = ph.projected_target();
    let target = rank_tol(&projected, tol)?;
    let o_t_hat = ph.observability()?;
    let dp = partition(ds)?;
    let f_hat = dp.target_map()?;
    let r = ds.r();
    let d_min = target.saturating_sub(r);
    let n = ds.n();

    let mut rows: Vec<usize> = Vec::new();
    let mut stacked = f_hat.clone();
    let mut rank = rank_tol(&stacked, tol)?;
    for i in r..o_t_hat.nrows() {
        if rows.len() == d_min {
            break;
        }
        let cand = vstack(&[&stacked, &o_t_hat.rows(i, 1).into_owned()])?;
        let cr = rank_tol(&cand, tol)?;
        if cr > rank {
            stacked = cand;
            rank = cr;
            rows.push(i);
        }
    }
    if rows.len() < d_min || rank != target {
        return Err(Error::SelectionFailure {
            target,
            reached: rank,
            singular_values: singular_values(&projected).iter().map(|v| v.as_f64()).collect(),
        });
    }
    let r_mat = DMatrix::from_fn(rows.len(), n, |i, j| o_t_hat[(rows[i], j)]);
    let cond_checks = check_augmented_conditions(ds, &r_mat, tol)?;
    Ok(AugmentationResult {
        r: r_mat,
        d_min,
        t_used: t,
        o_t_hat,
        f_hat,
        selected_rows: rows,
        cond_checks,
    })
}

/// Augmentation rows from the observability indices of `(A, F)`: each row
/// `F_i` contributes `F_i A, ..., F_i A^{v_i - 1}`, scanned in the order
/// `F_1, ..., F_r, F_1 A, ..., F_r A, ...` and stopping a row at its first
/// dependent power.
pub fn build_r_model<T: Real>(a: &DMatrix<T>, f: &DMatrix<T>, tol: &RankTolerance<T>) -> Result<DMatrix<T>> {
    let n = a.nrows();
    let mut active: Vec<bool> = vec![true; f.nrows()];
    let mut kept = DMatrix::<T>::zeros(0, n);
    let mut rank = 0;
    let mut extra = Vec::new();
    let mut power = f.clone();
    for k in 0..n {
        for i in 0..f.nrows() {
            if !active[i] {
                continue;
            }
            let row = power.rows(i, 1).into_owned();
            let cand = vstack(&[&kept, &row])?;
            let cr = rank_tol(&cand, tol)?;
            if cr > rank {
                kept = cand;
                rank = cr;
                if k > 0 {
                    extra.push(row);
                }
            } else {
                active[i] = false;
            }
        }
        if !active.iter().any(|&a| a) {
            break;
        }
        power = power * a;
    }
    let refs: Vec<&DMatrix<T>> = extra.iter().collect();
    if refs.is_empty() {
        return Ok(DMatrix::zeros(0, n));
    }
    vstack(&refs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct AugmentedDesign<T: Real> {
    pub augmentation: AugmentationResult<T>,
    pub controller: ControllerDesign<T>,
}

/// The four-step procedure: (1) pencil condition on the raw target,
/// (2) `R` from data, (3) pair of the augmented target and its
/// controllability, (4) pole placement with `u = K [F_hat; R] x`.
pub fn augmented_pipeline<T: Real>(
    ds: &TrajectoryDataset<T>,
    desired: &PoleSet<T>,
    t: usize,
    tol: &RankTolerance<T>,
) -> Result<AugmentedDesign<T>> {
    let dp = partition(ds)?;
    if !check_pencil(&dp, Region::All, tol)?.holds {
        return Err(Error::Step1Failed);
    }
    let augmentation = build_r(ds, t, tol)?;
    let dpa = dp.augmented(&augmentation.r)?;
    let pair = extract_t1t2(&dpa)?;
    // controllability of the augmented pair, read from the augmented pencil
    let pencil = check_pencil(&dpa, Region::All, tol)?;
    if !pencil.holds {
        return Err(Error::Step3Failed {
            modes: pencil.pbh.uncontrollable_modes,
        });
    }
    let mut controller = design_controller(&pair, desired)?;
    controller.f_eff = Some(augmentation.augmented_target()?);
    Ok(AugmentedDesign {
        augmentation,
        controller,
    })
}

/// Rank of `[F; R]` with diagnostics, used to confirm row-space equality.
pub fn stacked_rank<T: Real>(f: &DMatrix<T>, r: &DMatrix<T>, tol: &RankTolerance<T>) -> Result<usize> {
    Ok(rank_report(&vstack(&[f, r])?, tol)?.rank)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{generate_experiment, observability_matrix, DemoCase, InputLaw};
    use crate::synthesis::synthesize;
    use nalgebra::dmatrix;

    fn data(c: DemoCase, seed: u64) -> TrajectoryDataset<f64> {
        generate_experiment(&c.plant(), DemoCase::HORIZON, seed, &InputLaw::Uniform01).unwrap()
    }

    #[test]
    fn projector_properties() {
        let ds = data(DemoCase::Case2, 3);
        let ph = ProjectedHankel::new(&ds, 5).unwrap();
        let g = &ph.gamma_perp_u;
        assert!((&ph.uh * g).amax() < 1e-10);
        assert!((g * g - g).amax() < 1e-10);
        assert!((g - g.transpose()).amax() < 1e-10);
    }

    #[test]
    fn recovered_observability_matches_model() {
        let ds = data(DemoCase::Case2, 3);
        let model = DemoCase::Case2.plant::<f64>();
        let (ot, rank) = recover_ot(&ds, 5, &RankTolerance::default()).unwrap();
        let want = observability_matrix(&model.a, &model.f, 5);
        assert!((&ot - &want).amax() < 1e-6 * want.amax());
        assert_eq!(rank, 2);
        let (o1, _) = recover_ot(&ds, 1, &RankTolerance::default()).unwrap();
        let dp = partition(&ds).unwrap();
        assert!((o1 - dp.target_map().unwrap()).amax() < 1e-8);
    }

    #[test]
    fn dmin_for_benchmark_targets() {
        let tol = RankTolerance::default();
        assert_eq!(compute_dmin(&data(DemoCase::Case2, 4), 5, &tol).unwrap(), 1);
        assert_eq!(compute_dmin(&data(DemoCase::Case1, 4), 5, &tol).unwrap(), 0);
    }

    #[test]
    fn case2_pipeline_and_known_row() {
        let ds = data(DemoCase::Case2, 9);
        let tol = RankTolerance::default();
        let out = augmented_pipeline(&ds, &PoleSet::real(&[0.3, 0.4]), 5, &tol).unwrap();
        assert_eq!(out.augmentation.d_min, 1);
        assert_eq!(out.controller.order, 2);
        assert!(out.augmentation.cond_checks.nesting_aug && out.augmentation.cond_checks.pencil_aug);
        let known = dmatrix![0.75, 1.0, -2.0, 0.25, 2.25];
        let c = check_augmented_conditions(&ds, &known, &tol).unwrap();
        assert!(c.nesting_aug && c.pencil_aug);
    }

    #[test]
    fn model_rows_from_observability_indices() {
        let tol = RankTolerance::default();
        let model = DemoCase::Case2.plant::<f64>();
        let r = build_r_model(&model.a, &model.f, &tol).unwrap();
        assert_eq!(r.nrows(), 1);
        let known = dmatrix![0.75, 1.0, -2.0, 0.25, 2.25];
        assert_eq!(stacked_rank(&model.f, &r, &tol).unwrap(), 2);
        let all = vstack(&[&model.f, &r, &known]).unwrap();
        assert_eq!(rank_tol(&all, &tol).unwrap(), 2);

        let eye = DMatrix::<f64>::identity(5, 5);
        assert_eq!(build_r_model(&model.a, &eye, &tol).unwrap().nrows(), 0);

        // single observable row: R = [F A; ...; F A^{n-1}]
        let a = dmatrix![0.0, 1.0, 0.0; 0.0, 0.0, 1.0; 0.2, -0.1, 0.5];
        let f = dmatrix![1.0, 0.0, 0.0];
        let r = build_r_model(&a, &f, &tol).unwrap();
        assert_eq!(r, dmatrix![0.0, 1.0, 0.0; 0.0, 0.0, 1.0]);
    }

    #[test]
    fn no_augmentation_needed_collapses_to_plain_design() {
        let ds = data(DemoCase::Case1, 2);
        let poles = PoleSet::real(&[0.39]);
        let aug = augmented_pipeline(&ds, &poles, 5, &RankTolerance::default()).unwrap();
        assert_eq!(aug.augmentation.r.nrows(), 0);
        let plain = synthesize(&partition(&ds).unwrap(), &poles).unwrap();
        assert!((aug.controller.k.clone() - plain.k).amax() < 1e-12);
    }

    #[test]
    fn fewer_rows_do_not_suffice() {
        let ds = data(DemoCase::Case2, 5);
        let tol = RankTolerance::default();
        let res = build_r(&ds, 5, &tol).unwrap();
        let none = DMatrix::zeros(0, 5);
        assert!(!check_augmented_conditions(&ds, &none, &tol).unwrap().nesting_aug);
        assert_eq!(res.selected_rows, vec![1]);
    }
}
