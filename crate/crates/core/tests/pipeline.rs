use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use targetctl::existence::{existence_report, Verdict};
use targetctl::simulator::{
    corpus_horizon, generate_experiment, random_plant, random_state, rollout_state_feedback, CorpusOptions, DemoCase,
    InputLaw,
};
use targetctl::synthesis::synthesize;
use targetctl::trajectory::{partition, Format, TrajectoryDataset};
use targetctl::{PoleSet, RankTolerance};

fn round_trip(ds: &TrajectoryDataset<f64>, format: Format) -> TrajectoryDataset<f64> {
    let mut buf = Vec::new();
    ds.save(&mut buf, format).unwrap();
    TrajectoryDataset::load(buf.as_slice(), format).unwrap()
}

#[test]
fn csv_and_json_round_trips_are_bit_exact() {
    let model = DemoCase::Case1.plant::<f64>();
    let ds = generate_experiment(&model, 25, 4, &InputLaw::Gaussian).unwrap();
    for format in [Format::Csv, Format::Json] {
        let back = round_trip(&ds, format);
        assert_eq!(back.u, ds.u);
        assert_eq!(back.x, ds.x);
        assert_eq!(back.y, ds.y);
        assert_eq!(back.z, ds.z);
    }
}

#[test]
fn seeded_generation_is_deterministic() {
    let opts = CorpusOptions::default();
    let a = random_plant(&mut ChaCha8Rng::seed_from_u64(9), &opts);
    let b = random_plant(&mut ChaCha8Rng::seed_from_u64(9), &opts);
    assert_eq!(a.model, b.model);
    let horizon = corpus_horizon(a.model.m(), a.model.n());
    let da = generate_experiment(&a.model, horizon, 3, &InputLaw::Gaussian).unwrap();
    let db = generate_experiment(&b.model, horizon, 3, &InputLaw::Gaussian).unwrap();
    assert_eq!(da.x, db.x);
    assert_eq!(random_state::<f64>(4, 1), random_state::<f64>(4, 1));
}

#[test]
fn case1_pipeline_from_csv_text() {
    let tol = RankTolerance::default();
    let (ds, _) = DemoCase::Case1.experiment::<f64>(0, &tol).unwrap();
    let ds = round_trip(&ds, Format::Csv);
    let dp = partition(&ds).unwrap();
    assert_eq!(existence_report(&dp, &tol).unwrap().verdict, Verdict::Exists);
    let cd = synthesize(&dp, &PoleSet::real(&[0.39])).unwrap();
    assert!((cd.n[(0, 0)] - 0.39).abs() < 1e-8);
}

#[test]
fn malformed_csv_is_rejected() {
    let bad = "t,u1,x1\n0,1.0\n";
    assert!(TrajectoryDataset::<f64>::load(bad.as_bytes(), Format::Csv).is_err());
    let nan = "t,u1,x1,z1\n0,NaN,1.0,1.0\n1,0.0,1.0,1.0\n";
    assert!(TrajectoryDataset::<f64>::load(nan.as_bytes(), Format::Csv).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn rollout_recursion_is_exact(seed in 0u64..1000, steps in 1usize..40) {
        let model = DemoCase::Case1.plant::<f64>();
        let k = DMatrix::from_row_slice(2, 1, &[-0.1525, -0.1525]);
        let x0 = random_state(model.n(), seed);
        let tr = rollout_state_feedback(&model, &k, &model.f, &x0, steps).unwrap();
        let scale = tr.x.amax().max(1.0);
        prop_assert!(tr.recursion_residual(&model) <= 1e-12 * scale);
        prop_assert_eq!(tr.x.ncols(), steps + 1);
    }

    #[test]
    fn csv_round_trip_any_values(values in proptest::collection::vec(-1e12f64..1e12, 12)) {
        let u = DMatrix::from_row_slice(1, 4, &values[0..4]);
        let x = DMatrix::from_row_slice(2, 4, &values[4..12]);
        let ds = TrajectoryDataset::new(u, x, None, None, Default::default()).unwrap();
        let back = round_trip(&ds, Format::Csv);
        prop_assert_eq!(back.x, ds.x);
        prop_assert_eq!(back.u, ds.u);
    }
}
