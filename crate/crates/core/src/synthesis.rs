//! Gain design for the data-derived pair `(T2, T1)`.
//!
//! With `u(t) = K z(t)` the target evolves as `z(t+1) = (T1 K + T2) z(t)`,
//! so designing `K` is ordinary pole placement on `(T2, T1)`.

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use crate::existence::{extract_t1t2, DataPair};
use crate::numerics::{
    controllable_decomposition, eig, max_abs, pbh_controllable, pinv, place_poles, spectrum_error, PoleSet,
    RankTolerance, Region,
};
use crate::scalar::modulus;
use crate::trajectory::DataPartition;
use crate::{serde_mat, Error, Real, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ControllerDesign<T: Real> {
    #[serde(rename = "K", with = "serde_mat")]
    pub k: DMatrix<T>,
    /// `T1 K + T2`.
    #[serde(rename = "N", with = "serde_mat")]
    pub n: DMatrix<T>,
    pub desired: PoleSet<T>,
    pub achieved: PoleSet<T>,
    pub order: usize,
    /// Map from state to the fed-back target: `F` or `[F; R]`.
    #[serde(
        rename = "F_eff",
        with = "serde_mat::opt",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub f_eff: Option<DMatrix<T>>,
    #[serde(rename = "T1", with = "serde_mat")]
    pub t1: DMatrix<T>,
    #[serde(rename = "T2", with = "serde_mat")]
    pub t2: DMatrix<T>,
}

impl<T: Real> ControllerDesign<T> {
    fn from_gain(pair: &DataPair<T>, k: DMatrix<T>, desired: PoleSet<T>) -> Result<Self> {
        let n = &pair.t1 * &k + &pair.t2;
        Ok(Self {
            achieved: eig(&n)?,
            n,
            k,
            desired,
            order: pair.order(),
            f_eff: None,
            t1: pair.t1.clone(),
            t2: pair.t2.clone(),
        })
    }

    /// State feedback gain `K F_eff`, if the target map is known.
    pub fn state_gain(&self) -> Option<DMatrix<T>> {
        self.f_eff.as_ref().map(|f| &self.k * f)
    }
}

/// Places `desired` as the spectrum of `T1 K + T2`.
pub fn design_controller<T: Real>(pair: &DataPair<T>, desired: &PoleSet<T>) -> Result<ControllerDesign<T>> {
    let k = place_poles(&pair.t2, &pair.t1, desired)?;
    ControllerDesign::from_gain(pair, k, desired.clone())
}

/// Extracts the pair from data, designs `K` and records `F_hat = Zp Xp^-`
/// as the target map.
pub fn synthesize<T: Real>(dp: &DataPartition<T>, desired: &PoleSet<T>) -> Result<ControllerDesign<T>> {
    let pair = extract_t1t2(dp)?;
    let mut cd = design_controller(&pair, desired)?;
    cd.f_eff = Some(dp.target_map()?);
    Ok(cd)
}

/// Stability margin required of stabilizing designs.
pub const STABILITY_MARGIN: f64 = 0.05;
/// Modulus unstable modes are moved to.
pub const REFLECTED_MODULUS: f64 = 0.5;

/// Default pole map: modes inside `1 - margin` are kept, the rest keep their
/// argument and move to modulus 0.5.
pub fn reflect_unstable<T: Real>(poles: &PoleSet<T>, margin: T) -> PoleSet<T> {
    let keep = T::one() - margin;
    let target = T::lit(REFLECTED_MODULUS);
    let moved = poles
        .iter()
        .map(|z| {
            let r = modulus(z);
            if r < keep {
                *z
            } else if r == T::zero() {
                Complex::new(target, T::zero())
            } else {
                z * (target / r)
            }
        })
        .collect();
    PoleSet::new(moved).unwrap_or_else(|_| poles.clone())
}

/// Any gain making `T1 K + T2` Schur with the given margin. Modes of the
/// uncontrollable part stay where they are and must already be inside
/// `1 - margin`.
pub fn stabilize<T: Real>(pair: &DataPair<T>, margin: T, tol: &RankTolerance<T>) -> Result<ControllerDesign<T>> {
    let (t1, t2) = (&pair.t1, &pair.t2);
    let n0 = pair.order();
    let m = t1.ncols();
    let open = eig(t2)?;
    if open.spectral_radius() < T::one() - margin {
        return ControllerDesign::from_gain(pair, DMatrix::zeros(m, n0), open);
    }
    let dec = controllable_decomposition(t2, t1, tol)?;
    let frozen = eig(&dec.a_u)?;
    if frozen.spectral_radius() >= T::one() - margin {
        return Err(Error::NotStabilizable { frozen: frozen.to_f64() });
    }
    let nc = dec.controllable_dim;
    let placed = reflect_unstable(&eig(&dec.a_c)?, margin);
    let kc = place_poles(&dec.a_c, &dec.b_c, &placed)?;
    let k = kc * dec.q.columns(0, nc).transpose();
    let desired = placed.union(&frozen);
    let cd = ControllerDesign::from_gain(pair, k, desired)?;
    if cd.achieved.spectral_radius() >= T::one() - margin {
        return Err(Error::NotStabilizable { frozen: frozen.to_f64() });
    }
    Ok(cd)
}

/// Stabilizability of the pair: PBH restricted to `|lambda| >= 1`.
pub fn is_stabilizable<T: Real>(pair: &DataPair<T>, tol: &RankTolerance<T>) -> Result<bool> {
    Ok(pbh_controllable(&pair.t2, &pair.t1, Region::UnitCircleExterior, tol)?.controllable)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCheck {
    /// `max |F_eff (A + B K F_eff) - N F_eff|`.
    pub relation_residual: f64,
    pub relation_bound: f64,
    /// Distance between `eig(F_eff A F_eff^- + F_eff B K)` and the achieved poles.
    pub pole_error: f64,
    pub pole_bound: f64,
}

/// Relative bound on the closed-loop target relation.
pub const RELATION_TOL: f64 = 1e-9;

/// Cross-checks a data-driven design against the true plant.
pub fn verify_against_model<T: Real>(
    cd: &ControllerDesign<T>,
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    f_eff: &DMatrix<T>,
) -> Result<ModelCheck> {
    if f_eff.nrows() != cd.order || f_eff.ncols() != a.nrows() || b.ncols() != cd.k.nrows() {
        return Err(Error::DimensionMismatch("design and model dimensions differ".into()));
    }
    let fa = f_eff * a;
    let fb = f_eff * b;
    let relation = &fa + &fb * &cd.k * f_eff - &cd.n * f_eff;
    let relation_residual = max_abs(&relation);
    let relation_bound = T::lit(RELATION_TOL) * T::one().max(max_abs(&fa));
    let induced = &fa * pinv(f_eff)? + &fb * &cd.k;
    let pole_error = spectrum_error(&induced, &cd.achieved)?;
    let pole_bound = T::lit(T::PLACEMENT_TOL) * T::one().max(cd.achieved.spectral_radius());
    let check = ModelCheck {
        relation_residual: relation_residual.as_f64(),
        relation_bound: relation_bound.as_f64(),
        pole_error: pole_error.as_f64(),
        pole_bound: pole_bound.as_f64(),
    };
    if relation_residual > relation_bound || pole_error > pole_bound {
        return Err(Error::OracleMismatch {
            relation_residual: check.relation_residual,
            pole_error: check.pole_error,
        });
    }
    Ok(check)
}
