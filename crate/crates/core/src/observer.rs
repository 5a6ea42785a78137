//! Data-driven state observer and observer-based target control.
//!
//! The observer has the form
//!
//! ```text
//! xhat(t+1) = S_up u(t) + S_yp y(t) + S_yf y(t+1) + S_xp xhat(t)
//! ```
//!
//! with `Xf = S_up Up + S_yp Yp + S_yf Yf + S_xp Xp` on the data. Among the
//! solutions, the one built here takes `S_yf = 0`: under the excitation
//! assumption `[B A] = Xf [Up; Xp]^-` and `C = Yp Xp^-` are determined by the
//! data, `L` places the spectrum of `A - L C`, and `S_up = B`, `S_yp = L`,
//! `S_xp = A - L C`. The estimation error then obeys `e(t+1) = (A - L C) e(t)`.
//! This reconstruction is confined to this module; the controller path never
//! identifies `A` or `B`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::numerics::{eig, max_abs, pbh_controllable, pinv, place_poles, vstack, PoleSet, RankTolerance, Region};
use crate::synthesis::{synthesize, ControllerDesign};
use crate::trajectory::{check_assumption1, DataPartition};
use crate::{serde_mat, Error, Real, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ObserverDesign<T: Real> {
    #[serde(rename = "Sigma_Up", with = "serde_mat")]
    pub sigma_up: DMatrix<T>,
    #[serde(rename = "Sigma_Yp", with = "serde_mat")]
    pub sigma_yp: DMatrix<T>,
    #[serde(rename = "Sigma_Yf", with = "serde_mat")]
    pub sigma_yf: DMatrix<T>,
    #[serde(rename = "Sigma_Xp", with = "serde_mat")]
    pub sigma_xp: DMatrix<T>,
    pub observer_poles: PoleSet<T>,
    /// `max |Xf - S_up Up - S_yp Yp - S_yf Yf - S_xp Xp|`.
    pub residual: T,
}

pub fn design_observer<T: Real>(
    dp: &DataPartition<T>,
    desired: &PoleSet<T>,
    tol: &RankTolerance<T>,
) -> Result<ObserverDesign<T>> {
    let yp = dp.yp.as_ref().ok_or(Error::MissingChannel("y"))?;
    let yf = dp.yf.as_ref().ok_or(Error::MissingChannel("y"))?;
    let excitation = check_assumption1(dp, tol)?;
    if !excitation.holds {
        return Err(Error::Excitation(format!(
            "[Up; Xp] has rank {} < {}",
            excitation.rank.rank, excitation.expected_rank
        )));
    }
    let (m, n) = (dp.m(), dp.n());
    let ba = &dp.xf * pinv(&vstack(&[&dp.up, &dp.xp])?)?;
    let b_hat = ba.columns(0, m).into_owned();
    let a_hat = ba.columns(m, n).into_owned();
    let c_hat = yp * pinv(&dp.xp)?;

    let (at, ct) = (a_hat.transpose(), c_hat.transpose());
    let dual = pbh_controllable(&at, &ct, Region::All, tol)?;
    if !dual.controllable {
        return Err(Error::NotObservable {
            modes: dual.uncontrollable_modes,
        });
    }
    let kd = place_poles(&at, &ct, desired)?;
    let l = -kd.transpose();
    let sigma_xp = &a_hat - &l * &c_hat;
    let sigma_yf = DMatrix::zeros(n, c_hat.nrows());

    let residual = max_abs(&(&dp.xf - &b_hat * &dp.up - &l * yp - &sigma_yf * yf - &sigma_xp * &dp.xp));
    let bound = T::lit(T::RESIDUAL_TOL) * max_abs(&dp.xf);
    if residual > bound {
        return Err(Error::ResidualTooLarge {
            residual: residual.as_f64(),
            bound: bound.as_f64(),
        });
    }
    Ok(ObserverDesign {
        observer_poles: eig(&sigma_xp)?,
        sigma_up: b_hat,
        sigma_yp: l,
        sigma_yf,
        sigma_xp,
        residual,
    })
}

/// One observer update. `y_next` only matters when `S_yf` is nonzero.
pub fn observer_step<T: Real>(
    od: &ObserverDesign<T>,
    xhat: &DVector<T>,
    u: &DVector<T>,
    y_now: &DVector<T>,
    y_next: &DVector<T>,
) -> Result<DVector<T>> {
    let n = od.sigma_xp.nrows();
    if xhat.len() != n
        || u.len() != od.sigma_up.ncols()
        || y_now.len() != od.sigma_yp.ncols()
        || y_next.len() != od.sigma_yf.ncols()
    {
        return Err(Error::DimensionMismatch("observer step arguments".into()));
    }
    Ok(&od.sigma_up * u + &od.sigma_yp * y_now + &od.sigma_yf * y_next + &od.sigma_xp * xhat)
}

/// Controller and observer with the closed-loop matrix acting on
/// `(F_eff x, e)`:
///
/// ```text
/// [ N   -T1 K F_eff ]
/// [ 0    S_xp       ]
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ClosedLoopSpec<T: Real> {
    pub controller: ControllerDesign<T>,
    pub observer: ObserverDesign<T>,
    #[serde(with = "serde_mat")]
    pub block_matrix: DMatrix<T>,
}

impl<T: Real> ClosedLoopSpec<T> {
    pub fn assemble(controller: ControllerDesign<T>, observer: ObserverDesign<T>) -> Result<Self> {
        let f_eff = controller
            .f_eff
            .as_ref()
            .ok_or_else(|| Error::InvalidMatrix("controller has no target map".into()))?;
        let n0 = controller.order;
        let n = observer.sigma_xp.nrows();
        if f_eff.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "target map has {} columns, observer state has {n}",
                f_eff.ncols()
            )));
        }
        let mut block = DMatrix::zeros(n0 + n, n0 + n);
        block.view_mut((0, 0), (n0, n0)).copy_from(&controller.n);
        block
            .view_mut((0, n0), (n0, n))
            .copy_from(&(-(&controller.t1 * &controller.k * f_eff)));
        block.view_mut((n0, n0), (n, n)).copy_from(&observer.sigma_xp);
        Ok(Self {
            controller,
            observer,
            block_matrix: block,
        })
    }

    /// `eig(N)` together with `eig(S_xp)`.
    pub fn expected_spectrum(&self) -> PoleSet<T> {
        self.controller.achieved.union(&self.observer.observer_poles)
    }

    /// Largest deviation of `eig(block_matrix)` from the union of the parts.
    pub fn separation_error(&self) -> Result<T> {
        crate::numerics::spectrum_error(&self.block_matrix, &self.expected_spectrum())
    }
}

/// `u(t) = K F_hat xhat(t)` with `F_hat = Zp Xp^-`.
pub fn design_observer_based_controller<T: Real>(
    dp: &DataPartition<T>,
    ctrl_poles: &PoleSet<T>,
    obs_poles: &PoleSet<T>,
    tol: &RankTolerance<T>,
) -> Result<ClosedLoopSpec<T>> {
    let controller = synthesize(dp, ctrl_poles)?;
    let observer = design_observer(dp, obs_poles, tol)?;
    ClosedLoopSpec::assemble(controller, observer)
}
