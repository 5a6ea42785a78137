//! Known plants: experiment generation, closed-loop rollouts and the
//! model-based oracle used to cross-check the data-driven verdicts.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::augmentation::build_r_model;
use crate::existence::Verdict;
use crate::numerics::{
    controllability_matrix, eig, ensure_finite, ensure_square, hstack, pinv, rank_report, rank_report_scaled,
    singular_values, to_complex, vstack, PoleSet, RankReport, RankTolerance, Region,
};
use crate::scalar::modulus;
use crate::observer::ClosedLoopSpec;
use crate::trajectory::{fmt17, DatasetMeta, TrajectoryDataset};
use crate::{serde_mat, Error, Real, Result};

/// `x(t+1) = A x + B u`, `y = C x`, `z = F x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct PlantModel<T: Real> {
    #[serde(rename = "A", with = "serde_mat")]
    pub a: DMatrix<T>,
    #[serde(rename = "B", with = "serde_mat")]
    pub b: DMatrix<T>,
    #[serde(rename = "C", with = "serde_mat::opt", default, skip_serializing_if = "Option::is_none")]
    pub c: Option<DMatrix<T>>,
    #[serde(rename = "F", with = "serde_mat")]
    pub f: DMatrix<T>,
}

impl<T: Real> PlantModel<T> {
    pub fn new(a: DMatrix<T>, b: DMatrix<T>, c: Option<DMatrix<T>>, f: DMatrix<T>) -> Result<Self> {
        let model = Self { a, b, c, f };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_square(&self.a, "A")?;
        let n = self.a.nrows();
        let mismatch = |what: &str, got: usize, dim: &str| {
            Error::DimensionMismatch(format!("{what} has {got} {dim}, state dimension is {n}"))
        };
        if self.b.nrows() != n {
            return Err(mismatch("B", self.b.nrows(), "rows"));
        }
        if self.f.ncols() != n {
            return Err(mismatch("F", self.f.ncols(), "columns"));
        }
        if let Some(c) = &self.c {
            if c.ncols() != n {
                return Err(mismatch("C", c.ncols(), "columns"));
            }
            ensure_finite(c)?;
        }
        ensure_finite(&self.a)?;
        ensure_finite(&self.b)?;
        ensure_finite(&self.f)
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn r(&self) -> usize {
        self.f.nrows()
    }

    pub fn with_target(&self, f: DMatrix<T>) -> Result<Self> {
        Self::new(self.a.clone(), self.b.clone(), self.c.clone(), f)
    }

    pub fn load_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let model: Self = serde_json::from_str(&text).map_err(|e| Error::Schema(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }

    fn step(&self, x: &DVector<T>, u: &DVector<T>) -> DVector<T> {
        &self.a * x + &self.b * u
    }
}

/// Distribution of the excitation input.
#[derive(Debug, Clone, PartialEq)]
pub enum InputLaw<T: Real> {
    /// Entries i.i.d. uniform on `[0, 1)`.
    Uniform01,
    /// Entries i.i.d. standard normal.
    Gaussian,
    /// Explicit `m x (T+1)` input record.
    Custom(DMatrix<T>),
}

/// Random `x(0)` (standard normal) and random input, both drawn from a
/// ChaCha8 stream seeded with `seed`: first `x(0)`, then `u` time-major.
pub fn generate_experiment<T: Real>(
    model: &PlantModel<T>,
    horizon: usize,
    seed: u64,
    law: &InputLaw<T>,
) -> Result<TrajectoryDataset<T>> {
    if horizon < 1 {
        return Err(Error::OutOfRange("horizon must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x0 = DVector::from_fn(model.n(), |_, _| T::lit(StandardNormal.sample(&mut rng)));
    let (m, len) = (model.m(), horizon + 1);
    let u = match law {
        InputLaw::Uniform01 => {
            DMatrix::from_vec(m, len, (0..m * len).map(|_| T::lit(rng.random::<f64>())).collect())
        }
        InputLaw::Gaussian => DMatrix::from_vec(
            m,
            len,
            (0..m * len).map(|_| T::lit(StandardNormal.sample(&mut rng))).collect(),
        ),
        InputLaw::Custom(u) => {
            if u.shape() != (m, len) {
                return Err(Error::DimensionMismatch(format!(
                    "custom input is {}x{}, expected {m}x{len}",
                    u.nrows(),
                    u.ncols()
                )));
            }
            u.clone()
        }
    };
    let mut ds = simulate_open_loop(model, &x0, &u)?;
    ds.meta.seed = Some(seed);
    Ok(ds)
}

/// Standard normal vector from a ChaCha8 stream seeded with `seed`.
pub fn random_state<T: Real>(n: usize, seed: u64) -> DVector<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DVector::from_fn(n, |_, _| T::lit(StandardNormal.sample(&mut rng)))
}

/// Records the response to `u` (one column per step, `T + 1` columns).
pub fn simulate_open_loop<T: Real>(
    model: &PlantModel<T>,
    x0: &DVector<T>,
    u: &DMatrix<T>,
) -> Result<TrajectoryDataset<T>> {
    model.validate()?;
    if x0.len() != model.n() || u.nrows() != model.m() || u.ncols() == 0 {
        return Err(Error::DimensionMismatch("initial state or input record".into()));
    }
    let len = u.ncols();
    let mut x = DMatrix::zeros(model.n(), len);
    x.set_column(0, x0);
    for t in 1..len {
        let next = model.step(&x.column(t - 1).into_owned(), &u.column(t - 1).into_owned());
        x.set_column(t, &next);
    }
    let y = model.c.as_ref().map(|c| c * &x);
    let z = Some(&model.f * &x);
    TrajectoryDataset::new(
        u.clone(),
        x,
        y,
        z,
        DatasetMeta {
            seed: None,
            source: "simulator".into(),
            oracle_target: false,
        },
    )
}

/// Closed-loop record. `aug` holds the rows of `F_eff x` beyond `F x`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace<T: Real> {
    pub steps: usize,
    pub x: DMatrix<T>,
    pub u: DMatrix<T>,
    pub y: Option<DMatrix<T>>,
    pub z: DMatrix<T>,
    pub aug: Option<DMatrix<T>>,
    pub xhat: Option<DMatrix<T>>,
    pub e: Option<DMatrix<T>>,
    /// `|F_eff x(t)|`.
    pub target_norm: Vec<T>,
    pub diverged: bool,
}

impl<T: Real> SimulationTrace<T> {
    /// Largest `|x(t+1) - A x(t) - B u(t)|` along the record.
    pub fn recursion_residual(&self, model: &PlantModel<T>) -> T {
        (0..self.u.ncols())
            .map(|t| {
                (self.x.column(t + 1) - &model.a * self.x.column(t) - &model.b * self.u.column(t)).amax()
            })
            .fold(T::zero(), |a, b| a.max(b))
    }

    pub fn e_norm(&self) -> Option<Vec<T>> {
        self.e
            .as_ref()
            .map(|e| e.column_iter().map(|c| c.norm()).collect())
    }

    /// Largest `|F_eff x(t)|` relative to `|F_eff x(0)|`.
    pub fn overshoot(&self) -> T {
        let first = self.target_norm.first().copied().unwrap_or_else(T::zero);
        let peak = self.target_norm.iter().fold(T::zero(), |a, &b| a.max(b));
        if first > T::zero() {
            peak / first
        } else {
            peak
        }
    }

    /// Columns `t, z*, rx*, [e_norm], x*, [xhat*]`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.z.nrows()).map(|i| format!("z{i}")));
        if let Some(a) = &self.aug {
            header.extend((1..=a.nrows()).map(|i| format!("rx{i}")));
        }
        let e_norm = self.e_norm();
        if e_norm.is_some() {
            header.push("e_norm".into());
        }
        header.extend((1..=self.x.nrows()).map(|i| format!("x{i}")));
        if let Some(xh) = &self.xhat {
            header.extend((1..=xh.nrows()).map(|i| format!("xhat{i}")));
        }
        w.write_record(&header)?;
        let cols = |m: &DMatrix<T>, t: usize| -> Vec<String> {
            m.column(t).iter().map(|v| fmt17(v.as_f64())).collect()
        };
        for t in 0..self.x.ncols() {
            let mut rec = vec![t.to_string()];
            rec.extend(cols(&self.z, t));
            if let Some(a) = &self.aug {
                rec.extend(cols(a, t));
            }
            if let Some(en) = &e_norm {
                rec.push(fmt17(en[t].as_f64()));
            }
            rec.extend(cols(&self.x, t));
            if let Some(xh) = &self.xhat {
                rec.extend(cols(xh, t));
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_feedback<T: Real>(model: &PlantModel<T>, k: &DMatrix<T>, f_eff: &DMatrix<T>) -> Result<()> {
    if f_eff.ncols() != model.n() || k.nrows() != model.m() || k.ncols() != f_eff.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "K is {}x{}, F_eff is {}x{}, plant has m = {}, n = {}",
            k.nrows(),
            k.ncols(),
            f_eff.nrows(),
            f_eff.ncols(),
            model.m(),
            model.n()
        )));
    }
    Ok(())
}

fn aug_rows<T: Real>(model: &PlantModel<T>, f_eff: &DMatrix<T>, x: &DMatrix<T>) -> Option<DMatrix<T>> {
    let r = model.r();
    (f_eff.nrows() > r).then(|| f_eff.rows(r, f_eff.nrows() - r) * x)
}

/// `u(t) = K F_eff x(t)`.
pub fn rollout_state_feedback<T: Real>(
    model: &PlantModel<T>,
    k: &DMatrix<T>,
    f_eff: &DMatrix<T>,
    x0: &DVector<T>,
    steps: usize,
) -> Result<SimulationTrace<T>> {
    check_feedback(model, k, f_eff)?;
    if x0.len() != model.n() {
        return Err(Error::DimensionMismatch("initial state".into()));
    }
    let gain = k * f_eff;
    let mut x = DMatrix::zeros(model.n(), steps + 1);
    let mut u = DMatrix::zeros(model.m(), steps);
    x.set_column(0, x0);
    for t in 0..steps {
        let xt = x.column(t).into_owned();
        let ut = &gain * &xt;
        x.set_column(t + 1, &model.step(&xt, &ut));
        u.set_column(t, &ut);
    }
    let target = f_eff * &x;
    let diverged = !x.iter().all(|v| v.is_finite());
    Ok(SimulationTrace {
        steps,
        y: model.c.as_ref().map(|c| c * &x),
        z: &model.f * &x,
        aug: aug_rows(model, f_eff, &x),
        target_norm: target.column_iter().map(|c| c.norm()).collect(),
        x,
        u,
        xhat: None,
        e: None,
        diverged,
    })
}

/// Estimation error growth beyond which a rollout is flagged as divergent.
const DIVERGENCE_FACTOR: f64 = 1e6;

/// Joint plant/observer rollout with `u(t) = K F_eff xhat(t)`.
pub fn rollout_observer_based<T: Real>(
    model: &PlantModel<T>,
    cls: &ClosedLoopSpec<T>,
    x0: &DVector<T>,
    xhat0: &DVector<T>,
    steps: usize,
) -> Result<SimulationTrace<T>> {
    let k = &cls.controller.k;
    let f_eff = cls.controller.f_eff.as_ref().unwrap_or(&model.f);
    check_feedback(model, k, f_eff)?;
    let c = model.c.as_ref().ok_or(Error::MissingChannel("y"))?;
    let obs = &cls.observer;
    let n = model.n();
    if x0.len() != n || xhat0.len() != n || obs.sigma_xp.nrows() != n || obs.sigma_yp.ncols() != c.nrows() {
        return Err(Error::DimensionMismatch("observer and plant dimensions differ".into()));
    }
    let gain = k * f_eff;
    let mut x = DMatrix::zeros(n, steps + 1);
    let mut xhat = DMatrix::zeros(n, steps + 1);
    let mut u = DMatrix::zeros(model.m(), steps);
    x.set_column(0, x0);
    xhat.set_column(0, xhat0);
    let e0 = (x0 - xhat0).norm().max(T::one());
    let mut diverged = false;
    let mut done = steps;
    for t in 0..steps {
        let xt = x.column(t).into_owned();
        let xh = xhat.column(t).into_owned();
        let ut = &gain * &xh;
        let xn = model.step(&xt, &ut);
        let yt = c * &xt;
        let yn = c * &xn;
        let xhn = &obs.sigma_up * &ut + &obs.sigma_yp * &yt + &obs.sigma_yf * &yn + &obs.sigma_xp * &xh;
        x.set_column(t + 1, &xn);
        xhat.set_column(t + 1, &xhn);
        u.set_column(t, &ut);
        let err = (&xn - &xhn).norm();
        if !err.is_finite() || err > T::lit(DIVERGENCE_FACTOR) * e0 {
            diverged = true;
            if !xn.iter().chain(xhn.iter()).all(|v| v.is_finite()) {
                done = t + 1;
                break;
            }
        }
    }
    let x = x.columns(0, done + 1).into_owned();
    let xhat = xhat.columns(0, done + 1).into_owned();
    let u = u.columns(0, done).into_owned();
    let target = f_eff * &x;
    Ok(SimulationTrace {
        steps: done,
        y: Some(c * &x),
        z: &model.f * &x,
        aug: aug_rows(model, f_eff, &x),
        target_norm: target.column_iter().map(|c| c.norm()).collect(),
        e: Some(&x - &xhat),
        xhat: Some(xhat),
        x,
        u,
        diverged,
    })
}

/// Model-based evaluation of the existence conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub r: usize,
    pub rank_f: usize,
    /// `rk [F A; F] = rk F`.
    pub nesting: bool,
    /// `rk [s F - F A, F B] = rk F` for every complex `s`.
    pub pencil: bool,
    /// Same, restricted to `|s| >= 1`.
    pub pencil_asymptotic: bool,
    pub verdict: Verdict,
    /// `rk F [B, A B, ..., A^{n-1} B]`.
    pub output_controllability_rank: usize,
    pub output_controllable: bool,
    pub controllable_dim: usize,
    /// `rk O(A, F)`.
    pub observability_rank: usize,
    pub d_min: usize,
    pub candidates: Vec<(f64, f64)>,
    /// Minimum-row augmentation from observability indices.
    pub r_model: Vec<Vec<f64>>,
    /// Smallest retained singular value, relative to its reference scale,
    /// over every rank decision above. Small values flag verdicts that sit
    /// close to the rank threshold.
    pub rank_margin: f64,
}

/// `[F; F A; ...; F A^{t-1}]`.
pub fn observability_matrix<T: Real>(a: &DMatrix<T>, f: &DMatrix<T>, t: usize) -> DMatrix<T> {
    let r = f.nrows();
    let mut out = DMatrix::zeros(r * t, a.ncols());
    let mut block = f.clone();
    for k in 0..t {
        out.rows_mut(k * r, r).copy_from(&block);
        block = block * a;
    }
    out
}

/// Smallest retained singular value relative to the reference scale.
fn retained_ratio(rep: &RankReport, scale: f64) -> f64 {
    match rep.rank {
        0 => f64::INFINITY,
        k => rep.singular_values[k - 1] / scale.max(rep.singular_values[0]),
    }
}

pub fn oracle_conditions<T: Real>(model: &PlantModel<T>, tol: &RankTolerance<T>) -> Result<OracleReport> {
    model.validate()?;
    let (a, b, f) = (&model.a, &model.b, &model.f);
    let n = model.n();
    let fa = f * a;
    let fb = f * b;
    let mut margin = f64::INFINITY;
    let mut decide = |m: &DMatrix<T>| -> Result<usize> {
        let rep = rank_report(m, tol)?;
        margin = margin.min(retained_ratio(&rep, 0.0));
        Ok(rep.rank)
    };
    let rank_f = decide(f)?;
    let nesting = decide(&vstack(&[&fa, f])?)? == rank_f;
    let ctrb = controllability_matrix(a, b)?;
    let output_controllability_rank = decide(&(f * &ctrb))?;
    let controllable_dim = decide(&ctrb)?;
    let observability_rank = decide(&observability_matrix(a, f, n))?;

    // the rank of [sF - FA, FB] can only drop at eig(F A F^-) (or eig(A))
    let candidates = eig(a)?.union(&eig(&(&fa * pinv(f)?))?);
    let f_scale = max_singular(f);
    let pair_scale = max_singular(&hstack(&[f, &fa, &fb])?);
    let (mut pencil, mut pencil_asymptotic) = (true, true);
    let mut probed = Vec::new();
    for s in candidates.iter().filter(|s| s.im >= T::zero()) {
        let mut pm = DMatrix::zeros(f.nrows(), n + b.ncols());
        pm.columns_mut(0, n)
            .copy_from(&(to_complex(f) * *s - to_complex(&fa)));
        pm.columns_mut(n, b.ncols()).copy_from(&to_complex(&fb));
        let scale = pair_scale.max(modulus(s) * f_scale);
        let rep = rank_report_scaled(&pm, tol, scale)?;
        margin = margin.min(retained_ratio(&rep, scale.as_f64()));
        probed.push((s.re.as_f64(), s.im.as_f64()));
        if rep.rank != rank_f {
            pencil = false;
            if Region::UnitCircleExterior.contains(s) {
                pencil_asymptotic = false;
            }
        }
    }
    let verdict = if nesting && pencil {
        Verdict::Exists
    } else if nesting && pencil_asymptotic {
        Verdict::AsymptoticOnly
    } else {
        Verdict::None
    };
    let r_model = build_r_model(a, f, tol)?;
    Ok(OracleReport {
        r: model.r(),
        rank_f,
        nesting,
        pencil,
        pencil_asymptotic,
        verdict,
        output_controllability_rank,
        output_controllable: output_controllability_rank == model.r(),
        controllable_dim,
        observability_rank,
        d_min: observability_rank.saturating_sub(rank_f),
        candidates: probed,
        r_model: r_model
            .row_iter()
            .map(|row| row.iter().map(|v| v.as_f64()).collect())
            .collect(),
        rank_margin: margin,
    })
}

fn max_singular<T: Real>(m: &DMatrix<T>) -> T {
    singular_values(m).first().copied().unwrap_or_else(T::zero)
}

/// The five-state, two-input benchmark plant used by the demo cases.
pub fn benchmark_plant<T: Real>(f: &[f64]) -> PlantModel<T> {
    let a = [
        [1.0, 0.5, -1.0, 0.0, 1.0],
        [0.3, 0.5, -0.6, -0.3, 0.3],
        [-0.6, 0.0, 0.2, 0.6, -0.6],
        [1.25, 0.5, -1.0, -0.25, 1.75],
        [-0.75, 0.0, 0.0, 0.75, -0.25],
    ];
    let b = [[1.0, -1.0], [1.0, 1.0], [0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
    let c = [[0.0, 0.0, 2.0, 1.0, 0.0], [0.0, 0.0, 0.0, 0.0, 1.0]];
    let lit = |v: f64| T::lit(v);
    PlantModel {
        a: DMatrix::from_fn(5, 5, |i, j| lit(a[i][j])),
        b: DMatrix::from_fn(5, 2, |i, j| lit(b[i][j])),
        c: Some(DMatrix::from_fn(2, 5, |i, j| lit(c[i][j]))),
        f: DMatrix::from_fn(f.len() / 5, 5, |i, j| lit(f[i * 5 + j])),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemoCase {
    /// Target admits a controller of its own order.
    Case1,
    /// Target needs one augmentation row.
    Case2,
}

impl DemoCase {
    pub fn target(&self) -> [f64; 5] {
        match self {
            DemoCase::Case1 => [1.0, 1.0, -2.0, 0.0, 2.0],
            DemoCase::Case2 => [0.5, 1.0, -2.0, 0.5, 2.5],
        }
    }

    pub fn plant<T: Real>(&self) -> PlantModel<T> {
        benchmark_plant(&self.target())
    }

    pub const HORIZON: usize = 19;

    /// Uniform(0, 1) experiment on the demo plant, from the first seed at or
    /// after `seed` whose data satisfies Assumption 1. Returns the seed used.
    pub fn experiment<T: Real>(&self, seed: u64, tol: &RankTolerance<T>) -> Result<(TrajectoryDataset<T>, u64)> {
        let model = self.plant::<T>();
        for s in seed..seed.saturating_add(SEED_SEARCH) {
            let ds = generate_experiment(&model, Self::HORIZON, s, &InputLaw::Uniform01)?;
            let dp = crate::trajectory::partition(&ds)?;
            if crate::trajectory::check_assumption1(&dp, tol)?.holds {
                return Ok((ds, s));
            }
        }
        Err(Error::Excitation(format!("no seed in {seed}..+{SEED_SEARCH} satisfies Assumption 1")))
    }
}

const SEED_SEARCH: u64 = 1000;

/// `k` poles strictly inside the disc of radius `max_radius`, closed under
/// conjugation, pairwise at least `min_sep` apart.
pub fn random_poles(rng: &mut ChaCha8Rng, k: usize, max_radius: f64, min_sep: f64) -> PoleSet<f64> {
    let mut v = Vec::with_capacity(k);
    loop {
        v.clear();
        while v.len() < k {
            let radius: f64 = rng.random_range(0.0..max_radius);
            if k - v.len() >= 2 && rng.random_bool(0.4) {
                let z = nalgebra::Complex::from_polar(radius, rng.random_range(0.2..3.0));
                v.push(z);
                v.push(z.conj());
            } else {
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                v.push(nalgebra::Complex::new(sign * radius, 0.0));
            }
        }
        let poles = PoleSet::new(v.clone()).expect("conjugate-closed by construction");
        if poles.min_separation() >= min_sep {
            return poles;
        }
    }
}

/// How the random generator chooses the target map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    /// Unstructured rows.
    Random,
    /// Rows spanning an `A`-invariant modal subspace, so `F A = N F`.
    Invariant,
    /// Rows inside an invariant modal subspace of larger dimension, so
    /// augmentation is needed.
    Partial,
    /// Contains the left eigenvector of an uncontrollable mode.
    UncontrollableMode,
}

/// Random plant with a structured spectrum, for differential testing.
#[derive(Debug, Clone)]
pub struct RandomPlant {
    pub model: PlantModel<f64>,
    pub kind: TargetKind,
    /// Eigenvalues of `A`.
    pub spectrum: PoleSet<f64>,
    /// Modal blocks with zero input coupling.
    pub uncontrollable_blocks: usize,
    /// Draws discarded for a small rank margin before this one.
    pub redrawn: usize,
}

#[derive(Debug, Clone)]
pub struct CorpusOptions {
    pub max_order: usize,
    /// Eigenvalue moduli are drawn from this range...
    pub modulus_range: (f64, f64),
    /// ...avoiding this band around the unit circle.
    pub excluded_band: (f64, f64),
    pub min_separation: f64,
    pub p_uncontrollable_block: f64,
    /// Draws whose model-side rank decisions have a smaller
    /// [`OracleReport::rank_margin`] are redrawn.
    pub min_rank_margin: f64,
}

impl Default for CorpusOptions {
    fn default() -> Self {
        Self {
            max_order: 6,
            modulus_range: (0.2, 1.3),
            excluded_band: (0.93, 1.07),
            min_separation: 0.05,
            p_uncontrollable_block: 0.3,
            min_rank_margin: 1e-5,
        }
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn normal_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| normal(rng))
}

fn draw_modulus(rng: &mut ChaCha8Rng, o: &CorpusOptions) -> f64 {
    loop {
        let v = rng.random_range(o.modulus_range.0..o.modulus_range.1);
        if v <= o.excluded_band.0 || v >= o.excluded_band.1 {
            return v;
        }
    }
}

/// One modal block: `(first index, size, eigenvalue)`.
type Block = (usize, usize, nalgebra::Complex<f64>);

fn draw_spectrum(rng: &mut ChaCha8Rng, n: usize, o: &CorpusOptions) -> Vec<Block> {
    'retry: loop {
        let mut blocks = Vec::new();
        let mut idx = 0;
        while idx < n {
            let modulus = draw_modulus(rng, o);
            let lambda = if n - idx >= 2 && rng.random_bool(0.35) {
                let angle = rng.random_range(0.3..(std::f64::consts::PI - 0.3));
                nalgebra::Complex::from_polar(modulus, angle)
            } else {
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                nalgebra::Complex::new(sign * modulus, 0.0)
            };
            let size = if lambda.im != 0.0 { 2 } else { 1 };
            blocks.push((idx, size, lambda));
            idx += size;
        }
        let all: Vec<_> = blocks
            .iter()
            .flat_map(|b| if b.1 == 1 { vec![b.2] } else { vec![b.2, b.2.conj()] })
            .collect();
        for (i, p) in all.iter().enumerate() {
            if all[i + 1..].iter().any(|q| (p - q).norm() < o.min_separation) {
                continue 'retry;
            }
        }
        return blocks;
    }
}

fn modal_matrix(blocks: &[Block], n: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(n, n);
    for &(i, size, l) in blocks {
        if size == 1 {
            j[(i, i)] = l.re;
        } else {
            j[(i, i)] = l.re;
            j[(i, i + 1)] = l.im;
            j[(i + 1, i)] = -l.im;
            j[(i + 1, i + 1)] = l.re;
        }
    }
    j
}

/// Draws a plant of order `2..=max_order` with `A = S J S^-1`, redrawing
/// until every model-side rank decision is clear-cut.
pub fn random_plant(rng: &mut ChaCha8Rng, opts: &CorpusOptions) -> RandomPlant {
    let tol = RankTolerance::default();
    let mut redrawn = 0;
    loop {
        let mut p = draw_plant(rng, opts);
        let margin = oracle_conditions(&p.model, &tol).map_or(0.0, |o| o.rank_margin);
        if margin >= opts.min_rank_margin {
            p.redrawn = redrawn;
            return p;
        }
        redrawn += 1;
    }
}

fn draw_plant(rng: &mut ChaCha8Rng, opts: &CorpusOptions) -> RandomPlant {
    let n = rng.random_range(2..=opts.max_order.max(2));
    let m = rng.random_range(1..=n.min(3));
    let p = rng.random_range(1..=n);
    let blocks = draw_spectrum(rng, n, opts);
    let j = modal_matrix(&blocks, n);

    let (s, s_inv) = loop {
        let s = normal_matrix(rng, n, n);
        let sv = crate::numerics::singular_values(&s);
        if sv[n - 1] > 1e-2 * sv[0] {
            let inv = s.clone().try_inverse().expect("well-conditioned");
            break (s, inv);
        }
    };

    let mut bm = normal_matrix(rng, n, m);
    let mut uncontrollable = Vec::new();
    for (bi, &(i, size, _)) in blocks.iter().enumerate() {
        if rng.random_bool(opts.p_uncontrollable_block) {
            bm.rows_mut(i, size).fill(0.0);
            uncontrollable.push(bi);
        }
    }

    let kind = match rng.random_range(0..4) {
        0 => TargetKind::Random,
        1 => TargetKind::Invariant,
        2 => TargetKind::Partial,
        _ if !uncontrollable.is_empty() => TargetKind::UncontrollableMode,
        _ => TargetKind::Partial,
    };

    // target rows in modal coordinates
    let subset = |rng: &mut ChaCha8Rng| -> Vec<usize> {
        loop {
            let pick: Vec<usize> = (0..blocks.len()).filter(|_| rng.random_bool(0.5)).collect();
            if !pick.is_empty() {
                return pick;
            }
        }
    };
    let coords = |pick: &[usize]| -> Vec<usize> {
        pick.iter()
            .flat_map(|&b| blocks[b].0..blocks[b].0 + blocks[b].1)
            .collect()
    };
    let fm = match kind {
        TargetKind::Random => {
            let r = rng.random_range(1..n);
            normal_matrix(rng, r, n)
        }
        TargetKind::Invariant => {
            let cs = coords(&subset(rng));
            let mix = normal_matrix(rng, cs.len(), cs.len());
            let mut fm = DMatrix::zeros(cs.len(), n);
            for (k, &c) in cs.iter().enumerate() {
                fm.set_column(c, &mix.column(k));
            }
            fm
        }
        TargetKind::Partial => {
            let cs = loop {
                let cs = coords(&subset(rng));
                if cs.len() >= 2 {
                    break cs;
                }
            };
            let r = rng.random_range(1..cs.len());
            let mix = normal_matrix(rng, r, cs.len());
            let mut fm = DMatrix::zeros(r, n);
            for (k, &c) in cs.iter().enumerate() {
                fm.set_column(c, &mix.column(k));
            }
            fm
        }
        TargetKind::UncontrollableMode => {
            let b = uncontrollable[rng.random_range(0..uncontrollable.len())];
            let (i, size, _) = blocks[b];
            let extra = rng.random_range(0..=(n - size).min(2));
            let mut fm = DMatrix::zeros(size + extra, n);
            for k in 0..size {
                fm[(k, i + k)] = 1.0;
            }
            let tail = normal_matrix(rng, extra, n);
            fm.rows_mut(size, extra).copy_from(&tail);
            normal_matrix(rng, size + extra, size + extra) * fm
        }
    };

    let model = PlantModel {
        a: &s * &j * &s_inv,
        b: &s * &bm,
        c: Some(normal_matrix(rng, p, n)),
        f: fm * &s_inv,
    };
    let spectrum = PoleSet::from_values_unchecked(
        blocks
            .iter()
            .flat_map(|b| {
                if b.1 == 1 {
                    vec![b.2]
                } else {
                    vec![b.2, b.2.conj()]
                }
            })
            .collect(),
    );
    RandomPlant {
        model,
        kind,
        spectrum,
        uncontrollable_blocks: uncontrollable.len(),
        redrawn: 0,
    }
}

/// Horizon that leaves ten spare columns over the depth-`n` excitation bound.
pub fn corpus_horizon(m: usize, n: usize) -> usize {
    crate::trajectory::min_horizon(m, n, n) + 10
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::partition;

    #[test]
    fn data_equations_hold_on_generated_data() {
        let model = DemoCase::Case1.plant::<f64>();
        let ds = generate_experiment(&model, 19, 3, &InputLaw::Uniform01).unwrap();
        assert_eq!(ds.horizon(), 19);
        let dp = partition(&ds).unwrap();
        let res = &dp.xf - &model.a * &dp.xp - &model.b * &dp.up;
        assert!(res.amax() < 1e-10);
        assert!((dp.yp.as_ref().unwrap() - model.c.as_ref().unwrap() * &dp.xp).amax() < 1e-10);
        assert!(ds.u.iter().all(|&v| (0.0..1.0).contains(&v)));
    }

    #[test]
    fn same_seed_same_data() {
        let model = DemoCase::Case2.plant::<f64>();
        let a = generate_experiment(&model, 19, 11, &InputLaw::Gaussian).unwrap();
        let b = generate_experiment(&model, 19, 11, &InputLaw::Gaussian).unwrap();
        let c = generate_experiment(&model, 19, 12, &InputLaw::Gaussian).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.x, c.x);
    }

    #[test]
    fn zero_input_matrix_and_state_stay_zero() {
        let mut model = DemoCase::Case1.plant::<f64>();
        model.b.fill(0.0);
        let ds = simulate_open_loop(&model, &DVector::zeros(5), &DMatrix::from_element(2, 8, 0.7)).unwrap();
        assert!(ds.x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn oracle_on_benchmark_targets() {
        let tol = RankTolerance::default();
        let c1 = oracle_conditions(&DemoCase::Case1.plant::<f64>(), &tol).unwrap();
        assert!(c1.nesting && c1.pencil);
        assert_eq!(c1.verdict, Verdict::Exists);
        assert_eq!(c1.d_min, 0);
        let c2 = oracle_conditions(&DemoCase::Case2.plant::<f64>(), &tol).unwrap();
        assert!(!c2.nesting);
        assert!(c2.pencil);
        assert_eq!(c2.d_min, 1);
        assert_eq!(c2.verdict, Verdict::None);
        let full = DemoCase::Case1
            .plant::<f64>()
            .with_target(DMatrix::identity(5, 5))
            .unwrap();
        let cf = oracle_conditions(&full, &tol).unwrap();
        assert_eq!(cf.controllable_dim, 3);
        assert!(cf.nesting && !cf.pencil);
    }

    #[test]
    fn zero_gain_rollout_is_open_loop() {
        let model = DemoCase::Case1.plant::<f64>();
        let x0 = DVector::from_vec(vec![1.0, -0.5, 0.2, 0.0, 0.3]);
        let tr = rollout_state_feedback(&model, &DMatrix::zeros(2, 1), &model.f, &x0, 10).unwrap();
        let mut x = x0.clone();
        for t in 0..10 {
            x = &model.a * x;
            assert!((tr.x.column(t + 1) - &x).amax() < 1e-12);
        }
        assert!(tr.recursion_residual(&model) < 1e-12);
        assert!(tr.aug.is_none());
    }

    #[test]
    fn model_json_round_trip() {
        let model = DemoCase::Case2.plant::<f64>();
        let text = serde_json::to_string(&model).unwrap();
        assert!(text.contains("\"A\""));
        let back: PlantModel<f64> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn random_plants_have_requested_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let opts = CorpusOptions::default();
        for _ in 0..30 {
            let p = random_plant(&mut rng, &opts);
            let got = eig(&p.model.a).unwrap();
            assert!(p.spectrum.matching_error(&got) < 1e-8);
            assert!(p.model.n() <= 6);
            assert_eq!(
                crate::numerics::rank_tol(&p.model.f, &RankTolerance::default()).unwrap(),
                p.model.r()
            );
        }
    }

    #[test]
    fn random_poles_are_separated_and_inside() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for k in 1..7 {
            let p = random_poles(&mut rng, k, 0.9, 0.05);
            assert_eq!(p.len(), k);
            assert!(p.spectral_radius() < 0.9);
            assert!(p.min_separation() >= 0.05);
            assert!(p.is_conjugate_closed());
        }
    }

    #[test]
    fn demo_experiment_passes_assumption1() {
        let tol = RankTolerance::default();
        let (ds, seed) = DemoCase::Case2.experiment::<f64>(0, &tol).unwrap();
        assert_eq!(ds.meta.seed, Some(seed));
        let dp = crate::trajectory::partition(&ds).unwrap();
        assert!(crate::trajectory::check_assumption1(&dp, &tol).unwrap().holds);
    }
}
