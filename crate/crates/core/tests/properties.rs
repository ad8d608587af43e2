mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use skewvar::forecast::{cumulate_growth, PredictiveDraws};
use skewvar::gwtest::{gw_conditional_default, gw_unconditional};
use skewvar::ingest::{splice, Series, SpliceMethod};
use skewvar::model::{
    advance, conditional_loglik, observation_residual, History, ModelSpec, StatePath, StepShocks, Variant,
};
use skewvar::period::Quarter;
use skewvar::pgas::{multinomial_resample, normalize_log_weights};
use skewvar::priors::{build_dummy_observations, DummyPriorConfig};
use skewvar::risk::exceedance_prob;
use skewvar::rv::RngHandle;
use skewvar::scoring::{crps, log_score, weighted_crps, WeightKind};

use common::{noise_dataset, small_spec, tame_params};

fn config() -> ProptestConfig {
    ProptestConfig::with_cases(64)
}

fn draws(min: usize, max: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-50.0f64..50.0, min..max)
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn crps_nonnegative_and_scale_equivariant(x in draws(2, 80), y in -60.0f64..60.0, a in 0.1f64..10.0, b in -20.0f64..20.0) {
        let c = crps(&x, y).unwrap();
        prop_assert!(c >= -1e-12);
        let xs: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let cs = crps(&xs, a * y + b).unwrap();
        prop_assert!((cs - a * c).abs() <= 1e-9 * (1.0 + a * c.abs()), "{} vs {}", cs, a * c);
    }

    #[test]
    fn tail_weights_decompose_uniform(x in draws(3, 60), y in -60.0f64..60.0) {
        prop_assume!(x.iter().any(|v| *v != x[0]));
        let l = weighted_crps(&x, y, WeightKind::LeftTail).unwrap();
        let r = weighted_crps(&x, y, WeightKind::RightTail).unwrap();
        let u = weighted_crps(&x, y, WeightKind::Uniform).unwrap();
        prop_assert!((l + r - u).abs() <= 1e-10 * (1.0 + u), "{} + {} vs {}", l, r, u);
    }

    #[test]
    fn weighted_crps_bounded_by_crps(x in draws(3, 60), y in -60.0f64..60.0) {
        prop_assume!(x.iter().any(|v| *v != x[0]));
        let c = crps(&x, y).unwrap();
        for k in [WeightKind::BothTails, WeightKind::LeftTail, WeightKind::RightTail] {
            let w = weighted_crps(&x, y, k).unwrap();
            prop_assert!(w >= -1e-12 && w <= c + 1e-10 * (1.0 + c), "{:?}: {} > {}", k, w, c);
        }
    }

    #[test]
    fn weights_lie_in_unit_interval(z in -40.0f64..40.0) {
        for k in [WeightKind::Uniform, WeightKind::BothTails, WeightKind::LeftTail, WeightKind::RightTail] {
            let w = k.weight(z);
            prop_assert!((0.0..=1.0).contains(&w));
        }
        prop_assert_eq!(WeightKind::Uniform.weight(z), 1.0);
    }

    /// Dyadic inputs make every shifted difference exact, so equality is bitwise.
    #[test]
    fn log_score_permutation_and_translation_invariant(
        ints in prop::collection::vec(-400i32..400, 100..160),
        yi in -500i32..500,
        shift in -64i32..64,
        seed in any::<u64>(),
    ) {
        let x: Vec<f64> = ints.iter().map(|i| *i as f64 / 8.0).collect();
        prop_assume!(x.iter().any(|v| *v != x[0]));
        let y = yi as f64 / 8.0;
        let base = log_score(&x, y).unwrap();
        let mut perm = x.clone();
        let mut rng = RngHandle::new(seed, 0);
        use rand::seq::SliceRandom;
        perm.shuffle(&mut rng);
        prop_assert_eq!(log_score(&perm, y).unwrap().to_bits(), base.to_bits());
        let c = shift as f64 / 4.0;
        let moved: Vec<f64> = x.iter().map(|v| v + c).collect();
        prop_assert_eq!(log_score(&moved, y + c).unwrap().to_bits(), base.to_bits());
    }

    #[test]
    fn exceedance_nonincreasing(x in draws(1, 100), t1 in -60.0f64..60.0, dt in 0.0f64..30.0) {
        prop_assert!(exceedance_prob(&x, t1 + dt) <= exceedance_prob(&x, t1));
    }

    #[test]
    fn dummy_prior_homogeneous_in_scale(
        s in prop::collection::vec(0.1f64..5.0, 3),
        g in prop::collection::vec(-1.0f64..1.0, 3),
        lambda in 0.1f64..10.0,
    ) {
        let mut spec = ModelSpec::new(3, Variant::Full);
        spec.p_obs_lags = 2;
        let cfg = DummyPriorConfig {
            tau_tight: 0.1,
            c_vol: 0.1,
            c_flat: 1000.0,
            gamma: DVector::from_vec(g),
            s: DVector::from_vec(s),
        };
        let scaled = DummyPriorConfig { s: &cfg.s * lambda, ..cfg.clone() };
        let (y1, x1) = build_dummy_observations(&cfg, &spec).unwrap();
        let (y2, x2) = build_dummy_observations(&scaled, &spec).unwrap();
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * (1.0 + a.abs());
        for (a, b) in y1.iter().zip(y2.iter()) {
            prop_assert!(close(a * lambda, *b));
        }
        let lag = spec.n_vars * spec.p_obs_lags;
        for r in 0..x1.nrows() {
            for c in 0..x1.ncols() {
                let f = if r < lag && c < lag { lambda } else { 1.0 };
                prop_assert!(close(x1[(r, c)] * f, x2[(r, c)]));
            }
        }
    }

    #[test]
    fn ratio_link_preserves_growth(
        early in prop::collection::vec(1.0f64..100.0, 2..20),
        late in prop::collection::vec(1.0f64..100.0, 1..10),
        overlap in 0usize..2,
    ) {
        let start: Quarter = "1950Q1".parse().unwrap();
        let e = Series::quarterly("e", start, early.clone());
        let l = Series::quarterly("l", start.offset((early.len() - overlap) as i64), late);
        let s = splice(&e, &l, SpliceMethod::RatioLink).unwrap();
        let kept = early.len() - overlap;
        for i in 1..kept {
            let want = early[i] / early[i - 1];
            let got = s.values[i] / s.values[i - 1];
            prop_assert!((want - got).abs() <= 1e-12 * want);
        }
    }

    #[test]
    fn gw_invariant_to_common_loss_shift(
        a in prop::collection::vec(0.0f64..10.0, 20..60),
        noise in prop::collection::vec(-1.0f64..1.0, 60),
        c in -100.0f64..100.0,
        h in 1usize..4,
    ) {
        let b: Vec<f64> = a.iter().zip(&noise).map(|(x, e)| x + e).collect();
        let d1: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        let d2: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (x + c) - (y + c)).collect();
        let (u1, u2) = (gw_unconditional(&d1, h).unwrap(), gw_unconditional(&d2, h).unwrap());
        prop_assert!((u1.statistic - u2.statistic).abs() <= 1e-6 * (1.0 + u1.statistic.abs()));
        if let (Ok(c1), Ok(c2)) = (gw_conditional_default(&d1, h), gw_conditional_default(&d2, h)) {
            prop_assert!((c1.statistic - c2.statistic).abs() <= 1e-6 * (1.0 + c1.statistic.abs()));
        }
    }

    #[test]
    fn normalized_weights_and_resampled_indices(logw in prop::collection::vec(-50.0f64..50.0, 1..40), seed in any::<u64>()) {
        let p = normalize_log_weights(&logw).unwrap();
        prop_assert!(p.iter().all(|v| *v >= 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        let mut rng = RngHandle::new(seed, 0);
        let idx = multinomial_resample(&p, logw.len(), &mut rng);
        prop_assert!(idx.iter().all(|i| *i < logw.len() && p[*i] > 0.0));
    }

    #[test]
    fn quarter_ordinal_roundtrip(ord in -10_000i64..20_000) {
        let q = Quarter::from_ordinal(ord);
        prop_assert_eq!(q.ordinal(), ord);
        prop_assert_eq!(q.to_string().parse::<Quarter>().unwrap(), q);
    }
}

fn random_path(spec: &ModelSpec, periods: usize, seed: u64) -> StatePath {
    let mut rng = RngHandle::new(seed, 1);
    let n = spec.n_vars;
    let mut p = StatePath::zeros(spec.l_inmean_lags, periods, n);
    for s in 0..p.rows() {
        let beta = skewvar::rv::std_normal_vector(spec.state_dim(), &mut rng) * 0.5;
        p.set_beta(s, &beta);
        p.set_theta_parent(s, &skewvar::rv::std_normal_vector(n, &mut rng));
    }
    p
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn residual_reconstructs_observation(seed in any::<u64>(), variant in 0usize..3) {
        let v = [Variant::Full, Variant::RestrictedNoFeedback, Variant::SvOnly][variant];
        let spec = small_spec(2, v);
        let data = noise_dataset(12, 2, seed);
        let params = tame_params(&spec);
        let path = random_path(&spec, data.periods(&spec), seed);
        for t in spec.presample()..data.n_obs() {
            let (e, r) = observation_residual(&spec, &params, &path, &data, t).unwrap();
            let mean = data.row(t) - &r;
            let rebuilt = mean + params.a_inverse() * e;
            for i in 0..2 {
                prop_assert!((rebuilt[i] - data.y[(t, i)]).abs() <= 1e-12 * (1.0 + data.y[(t, i)].abs()));
            }
        }
    }

    #[test]
    fn sv_only_loglik_ignores_skew_states(seed in any::<u64>(), junk in -5.0f64..5.0) {
        let spec = small_spec(2, Variant::SvOnly);
        let data = noise_dataset(10, 2, seed);
        let params = tame_params(&spec);
        let path = random_path(&spec, data.periods(&spec), seed);
        let mut other = path.clone();
        other.d = DMatrix::from_element(other.rows(), 2, junk);
        for t in spec.presample()..data.n_obs() {
            let a = conditional_loglik(&spec, &params, &path, &data, t).unwrap();
            let b = conditional_loglik(&spec, &params, &other, &data, t).unwrap();
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn history_lags_shift_exactly(seed in any::<u64>()) {
        let mut spec = small_spec(2, Variant::Full);
        spec.p_obs_lags = 3;
        spec.l_inmean_lags = 2;
        let params = {
            let mut p = tame_params(&spec);
            p.var_lags[1] = DMatrix::zeros(2, 2);
            p.var_lags[2] = DMatrix::zeros(2, 2);
            p
        };
        let q = params.state_cov.clone().cholesky().unwrap().l();
        let a_inv = params.a_inverse();
        let mut rng = RngHandle::new(seed, 0);
        let mut hist = History {
            y: (0..3).map(|_| skewvar::rv::std_normal_vector(2, &mut rng)).collect(),
            beta: (0..2).map(|_| skewvar::rv::std_normal_vector(4, &mut rng) * 0.3).collect(),
        };
        for _ in 0..5 {
            let before = hist.clone();
            let shocks = StepShocks::draw(&spec, &mut rng);
            let step = advance(&spec, &params, &q, &a_inv, &mut hist, &shocks, None);
            prop_assert_eq!(&hist.y[0], &step.y);
            prop_assert_eq!(&hist.beta[0], &step.beta);
            for j in 1..3 {
                prop_assert_eq!(&hist.y[j], &before.y[j - 1]);
            }
            prop_assert_eq!(&hist.beta[1], &before.beta[0]);
        }
    }

    #[test]
    fn cumulation_is_idempotent(vals in prop::collection::vec(-5.0f64..5.0, 12)) {
        let d = PredictiveDraws {
            origin: "2000Q1".parse().unwrap(),
            labels: vec!["a".into(), "b".into()],
            draws: (0..3).map(|h| DMatrix::from_row_slice(2, 2, &vals[4 * h..4 * h + 4])).collect(),
            cumulative: vec![false, false],
            rejected: 0,
        };
        let once = cumulate_growth(&d, &[true, false]);
        let twice = cumulate_growth(&once, &[true, false]);
        prop_assert_eq!(&once, &twice);
        // The unmasked column is untouched bitwise.
        for h in 0..3 {
            prop_assert_eq!(once.draws[h].column(1), d.draws[h].column(1));
        }
    }
}
