//! Existence certificates computed from data blocks alone.
//!
//! * nesting: `rk [Up; Zp; Zf] = rk [Up; Zp]`
//! * pencil: `rk (lambda Zp - Zf) = rk Zp` for every `lambda` (or for
//!   `|lambda| >= 1` in the asymptotic variant)
//!
//! The pencil quantifier is discharged with a finite PBH reduction. When the
//! nesting holds, `Zf = T1 Up + T2 Zp` and the pencil rank equals the rank of
//! `[lambda I - T2, T1]`. Otherwise, with `P = Zp^- Zp`, the column space of
//! `lambda Zp - Zf` splits over `range(P)` and its complement, giving the
//! pair `(Zf Zp^-, Zf (I - P))`. Either way the rank can only drop at
//! eigenvalues of the pair's state matrix, and those are the points where
//! the pencil is evaluated.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::numerics::{
    eig, max_abs, pinv, rank_report, rank_report_scaled, singular_values, to_complex, vstack, PbhProbe, PbhReport,
    PoleSet, RankReport, RankTolerance, Region,
};
use crate::scalar::modulus;
use crate::trajectory::{check_assumption1, DataPartition, ExcitationReport};
use crate::{serde_mat, Error, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// A controller placing all target poles exists.
    Exists,
    /// Only a stabilizing controller exists.
    AsymptoticOnly,
    None,
    /// The excitation assumption fails, so the rank tests certify nothing.
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Exists => "exists",
            Verdict::AsymptoticOnly => "asymptotic_only",
            Verdict::None => "none",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NestingCheck {
    pub holds: bool,
    pub up_zp: RankReport,
    pub up_zp_zf: RankReport,
}

pub fn check_nesting<T: Real>(dp: &DataPartition<T>, tol: &RankTolerance<T>) -> Result<NestingCheck> {
    let up_zp = rank_report(&vstack(&[&dp.up, &dp.zp])?, tol)?;
    let up_zp_zf = rank_report(&vstack(&[&dp.up, &dp.zp, &dp.zf])?, tol)?;
    Ok(NestingCheck {
        holds: up_zp.rank == up_zp_zf.rank,
        up_zp,
        up_zp_zf,
    })
}

/// `Zf = T1 Up + T2 Zp`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct DataPair<T: Real> {
    #[serde(rename = "T1", with = "serde_mat")]
    pub t1: DMatrix<T>,
    #[serde(rename = "T2", with = "serde_mat")]
    pub t2: DMatrix<T>,
    /// `max |Zf - T1 Up - T2 Zp|`.
    pub residual: T,
}

impl<T: Real> DataPair<T> {
    pub fn order(&self) -> usize {
        self.t2.nrows()
    }
}

/// `(T1 T2) = Zf [Up; Zp]^-`, rejected when the fit leaves a residual above
/// `RESIDUAL_TOL * max |Zf|`.
pub fn extract_t1t2<T: Real>(dp: &DataPartition<T>) -> Result<DataPair<T>> {
    let stacked = vstack(&[&dp.up, &dp.zp])?;
    let both = &dp.zf * pinv(&stacked)?;
    let m = dp.m();
    let t1 = both.columns(0, m).into_owned();
    let t2 = both.columns(m, dp.r()).into_owned();
    let residual = max_abs(&(&dp.zf - &t1 * &dp.up - &t2 * &dp.zp));
    let bound = T::lit(T::RESIDUAL_TOL) * max_abs(&dp.zf);
    if residual > bound {
        return Err(Error::NestingViolated {
            residual: residual.as_f64(),
            bound: bound.as_f64(),
        });
    }
    Ok(DataPair { t1, t2, residual })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PencilMethod {
    /// PBH on `(T2, T1)`.
    PencilAtEigs,
    /// PBH on `(Zf Zp^-, Zf (I - Zp^- Zp))`.
    ControllabilityPair,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PencilCheck {
    pub holds: bool,
    pub method: PencilMethod,
    pub zp: RankReport,
    pub pbh: PbhReport,
}

pub fn check_pencil<T: Real>(
    dp: &DataPartition<T>,
    region: Region,
    tol: &RankTolerance<T>,
) -> Result<PencilCheck> {
    let nesting = check_nesting(dp, tol)?;
    pencil_with(dp, region, tol, nesting.holds)
}

fn pencil_with<T: Real>(
    dp: &DataPartition<T>,
    region: Region,
    tol: &RankTolerance<T>,
    nesting: bool,
) -> Result<PencilCheck> {
    let zp = rank_report(&dp.zp, tol)?;
    if zp.rank < dp.r() {
        return Err(Error::RankDeficientZp {
            rank: zp.rank,
            rows: dp.r(),
        });
    }
    let pair = if nesting { extract_t1t2(dp).ok() } else { None };
    let (method, candidates) = match pair {
        Some(pair) => (PencilMethod::PencilAtEigs, eig(&pair.t2)?),
        None => (
            PencilMethod::ControllabilityPair,
            eig(&(&dp.zf * pinv(&dp.zp)?))?,
        ),
    };
    let pbh = pencil_probes(dp, &candidates, region, tol, zp.rank)?;
    Ok(PencilCheck {
        holds: pbh.controllable,
        method,
        zp,
        pbh,
    })
}

/// Evaluates `rk (lambda Zp - Zf)` at each candidate inside `region`.
///
/// The candidates come from the PBH reduction (the rank can only drop at
/// eigenvalues of the reduced pair), but the rank itself is read from the
/// data pencil: the reduced pair's input matrix is a least-squares fit
/// whose error grows with the spread of the data, while the pencil is
/// formed from the recorded blocks directly.
fn pencil_probes<T: Real>(
    dp: &DataPartition<T>,
    candidates: &PoleSet<T>,
    region: Region,
    tol: &RankTolerance<T>,
    rank_zp: usize,
) -> Result<PbhReport> {
    let zp_scale = max_singular(&dp.zp);
    let zf_scale = max_singular(&dp.zf);
    let (zp, zf) = (to_complex(&dp.zp), to_complex(&dp.zf));
    let mut probes = Vec::new();
    let mut bad = Vec::new();
    for lambda in candidates.iter() {
        if lambda.im < T::zero() || !region.contains(lambda) {
            continue;
        }
        let scale = modulus(lambda) * zp_scale + zf_scale;
        let rep = if lambda.im == T::zero() {
            rank_report_scaled(&(&dp.zp * lambda.re - &dp.zf), tol, scale)?
        } else {
            rank_report_scaled(&(&zp * *lambda - &zf), tol, scale)?
        };
        let lam = (lambda.re.as_f64(), lambda.im.as_f64());
        if rep.rank < rank_zp {
            bad.push(lam);
        }
        probes.push(PbhProbe {
            lambda: lam,
            rank: rep.rank,
            min_singular_value: rep
                .singular_values
                .get(rank_zp.saturating_sub(1))
                .copied()
                .unwrap_or(0.0),
        });
    }
    Ok(PbhReport {
        controllable: bad.is_empty(),
        region,
        order: rank_zp,
        probes,
        uncontrollable_modes: bad,
    })
}

fn max_singular<T: Real>(m: &DMatrix<T>) -> T {
    singular_values(m).first().copied().unwrap_or_else(T::zero)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExistenceRanks {
    pub rk_up_zp: usize,
    pub rk_up_zp_zf: usize,
    pub rk_zp: usize,
    pub r: usize,
    pub m: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExistenceReport {
    pub verdict: Verdict,
    pub cond_nesting: bool,
    /// Pencil condition over the whole plane.
    pub cond_pencil: bool,
    /// Pencil condition over `|lambda| >= 1`.
    pub cond_pencil_asymptotic: bool,
    pub asymptotic_only: bool,
    pub ranks: ExistenceRanks,
    pub method: Option<PencilMethod>,
    pub excitation: ExcitationReport,
    pub nesting: NestingCheck,
    pub pencil: Option<PencilCheck>,
    pub pencil_asymptotic: Option<PencilCheck>,
    pub notes: Vec<String>,
}

/// Both the exact-placement and the asymptotic verdicts.
pub fn existence_report<T: Real>(dp: &DataPartition<T>, tol: &RankTolerance<T>) -> Result<ExistenceReport> {
    let excitation = check_assumption1(dp, tol)?;
    let nesting = check_nesting(dp, tol)?;
    let mut notes = Vec::new();
    let (pencil, pencil_asymptotic) = match (
        pencil_with(dp, Region::All, tol, nesting.holds),
        pencil_with(dp, Region::UnitCircleExterior, tol, nesting.holds),
    ) {
        (Ok(a), Ok(b)) => (Some(a), Some(b)),
        (Err(Error::RankDeficientZp { rank, rows }), _) | (_, Err(Error::RankDeficientZp { rank, rows })) => {
            notes.push(format!("Zp has rank {rank} < {rows}; pencil condition not evaluated"));
            (None, None)
        }
        (Err(e), _) | (_, Err(e)) => return Err(e),
    };
    let cond_pencil = pencil.as_ref().is_some_and(|p| p.holds);
    let cond_pencil_asymptotic = pencil_asymptotic.as_ref().is_some_and(|p| p.holds);
    if !excitation.holds {
        notes.push(format!(
            "[Up; Xp] has rank {} < {}; verdicts are not certified",
            excitation.rank.rank, excitation.expected_rank
        ));
    }
    let verdict = if !excitation.holds || pencil.is_none() {
        Verdict::Inconclusive
    } else if nesting.holds && cond_pencil {
        Verdict::Exists
    } else if nesting.holds && cond_pencil_asymptotic {
        Verdict::AsymptoticOnly
    } else {
        Verdict::None
    };
    Ok(ExistenceReport {
        verdict,
        cond_nesting: nesting.holds,
        cond_pencil,
        cond_pencil_asymptotic,
        asymptotic_only: verdict == Verdict::AsymptoticOnly,
        ranks: ExistenceRanks {
            rk_up_zp: nesting.up_zp.rank,
            rk_up_zp_zf: nesting.up_zp_zf.rank,
            rk_zp: rank_report(&dp.zp, tol)?.rank,
            r: dp.r(),
            m: dp.m(),
        },
        method: pencil.as_ref().map(|p| p.method),
        excitation,
        nesting,
        pencil,
        pencil_asymptotic,
        notes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputControllability {
    /// Certainly not target output controllable.
    Fails,
    /// Necessary condition met; sufficient only for diagonalizable `A`.
    PassesNecessary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputControllabilityCheck {
    pub result: OutputControllability,
    /// The pass is conclusive only if `A` is diagonalizable, which data
    /// alone cannot confirm.
    pub requires_diagonalizable: bool,
    pub pencil: Option<PencilCheck>,
}

pub fn check_output_controllability_necessary<T: Real>(
    dp: &DataPartition<T>,
    tol: &RankTolerance<T>,
) -> Result<OutputControllabilityCheck> {
    let pencil = match check_pencil(dp, Region::All, tol) {
        Ok(p) => Some(p),
        // a rank-deficient target cannot reach all of R^r
        Err(Error::RankDeficientZp { .. }) => None,
        Err(e) => return Err(e),
    };
    let passes = pencil.as_ref().is_some_and(|p| p.holds);
    Ok(OutputControllabilityCheck {
        result: if passes {
            OutputControllability::PassesNecessary
        } else {
            OutputControllability::Fails
        },
        requires_diagonalizable: passes,
        pencil,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{generate_experiment, DemoCase, InputLaw};
    use crate::trajectory::partition;
    use nalgebra::dmatrix;

    fn case(c: DemoCase, seed: u64) -> DataPartition<f64> {
        let ds = generate_experiment(&c.plant(), DemoCase::HORIZON, seed, &InputLaw::Uniform01).unwrap();
        partition(&ds).unwrap()
    }

    #[test]
    fn case1_exists_with_known_pair() {
        let dp = case(DemoCase::Case1, 7);
        let rep = existence_report(&dp, &RankTolerance::default()).unwrap();
        assert_eq!(rep.verdict, Verdict::Exists);
        assert_eq!(rep.ranks.rk_up_zp, 3);
        assert_eq!(rep.method, Some(PencilMethod::PencilAtEigs));
        let pair = extract_t1t2(&dp).unwrap();
        assert!((pair.t1.clone() - dmatrix![2.0, 2.0]).amax() < 1e-6);
        assert!((pair.t2[(0, 0)] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn case2_nesting_fails_pencil_holds() {
        let dp = case(DemoCase::Case2, 7);
        let tol = RankTolerance::default();
        let rep = existence_report(&dp, &tol).unwrap();
        assert!(!rep.cond_nesting);
        assert!(rep.cond_pencil);
        assert_eq!(rep.verdict, Verdict::None);
        assert_eq!(rep.method, Some(PencilMethod::ControllabilityPair));
        assert!(matches!(extract_t1t2(&dp), Err(Error::NestingViolated { .. })));
    }

    #[test]
    fn integrator_pair() {
        // x1(t+1) = x1(t) + u1(t), second state and input unrelated
        let u = dmatrix![0.3, -1.0, 0.5, 2.0, 0.1, 0.7; 1.0, 0.2, -0.4, 0.3, 0.9, -0.6];
        let mut x = DMatrix::<f64>::zeros(2, 7);
        x[(0, 0)] = 0.4;
        x[(1, 0)] = -1.2;
        for t in 0..6 {
            x[(0, t + 1)] = x[(0, t)] + u[(0, t)];
            x[(1, t + 1)] = 0.5 * x[(1, t)] + u[(1, t)];
        }
        let u = u.insert_column(6, 0.0);
        let ds = crate::trajectory::TrajectoryDataset::new(u, x.clone(), None, Some(x.rows(0, 1).into_owned()), Default::default())
            .unwrap();
        let pair = extract_t1t2(&partition(&ds).unwrap()).unwrap();
        assert!((pair.t1 - dmatrix![1.0, 0.0]).amax() < 1e-9);
        assert!((pair.t2[(0, 0)] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn zero_future_target_fails_pencil() {
        let mut dp = case(DemoCase::Case1, 2);
        dp.zf.fill(0.0);
        let tol = RankTolerance::default();
        assert!(!check_pencil(&dp, Region::All, &tol).unwrap().holds);
        let oc = check_output_controllability_necessary(&dp, &tol).unwrap();
        assert_eq!(oc.result, OutputControllability::Fails);
    }

    #[test]
    fn case1_passes_output_controllability_necessity() {
        let dp = case(DemoCase::Case1, 5);
        let oc = check_output_controllability_necessary(&dp, &RankTolerance::default()).unwrap();
        assert_eq!(oc.result, OutputControllability::PassesNecessary);
        assert!(oc.requires_diagonalizable);
    }

    #[test]
    fn insufficient_excitation_is_inconclusive() {
        let mut dp = case(DemoCase::Case1, 5);
        dp.up.fill(0.5);
        let rep = existence_report(&dp, &RankTolerance::default()).unwrap();
        assert_eq!(rep.verdict, Verdict::Inconclusive);
        assert!(!rep.notes.is_empty());
    }
}
