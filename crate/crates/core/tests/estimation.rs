use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use splitlog::logistic::{
    fit_pilot, level_gradient, level_hessian, mu, one_step_correct, penalized_loss, FitOptions,
    NewtonAccumulator, Sample, SampleSet,
};

fn unit_ball(rng: &mut ChaCha20Rng, d: usize, max_norm: f64) -> DVector<f64> {
    let v: DVector<f64> = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
    let n = v.norm().max(1e-12);
    v * (rng.random_range(0.0..max_norm) / n)
}

fn random_set(rng: &mut ChaCha20Rng, d: usize, n: usize, theta: &DVector<f64>) -> SampleSet {
    let samples: Vec<Sample> = (0..n)
        .map(|t| {
            let x = unit_ball(rng, d, 1.0);
            let r = u8::from(rng.random::<f64>() < mu(x.dot(theta)));
            Sample::new(x, r, t + 1).unwrap()
        })
        .collect();
    SampleSet::from_samples(d, &samples).unwrap()
}

/// Root of `λθ + Σ (μ(x_iθ) − r_i) x_i` on `[−B, B]`, clamped to the
/// boundary when the derivative keeps its sign.
fn bisect_1d(xs: &[f64], rs: &[f64], reg: f64, radius: f64) -> f64 {
    let deriv = |t: f64| reg * t + xs.iter().zip(rs).map(|(x, r)| (mu(x * t) - r) * x).sum::<f64>();
    let (mut lo, mut hi) = (-radius, radius);
    if deriv(lo) >= 0.0 {
        return lo;
    }
    if deriv(hi) <= 0.0 {
        return hi;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if deriv(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn one_dimensional_fit_matches_bisection() {
    let one = SampleSet::from_samples(1, &[Sample::new(DVector::from_element(1, 1.0), 1, 1).unwrap()]).unwrap();
    let opts = FitOptions::new(1.0, 1.0).with_steps(500);
    let theta = fit_pilot(&one, &opts).unwrap()[0];
    let oracle = bisect_1d(&[1.0], &[1.0], 1.0, 1.0);
    assert!((oracle - 0.401).abs() < 1e-3, "oracle {oracle}");
    assert!((theta - oracle).abs() < 1e-3, "fit {theta} vs {oracle}");

    let mut rng = ChaCha20Rng::seed_from_u64(5);
    for n in [3usize, 40, 400] {
        let set = random_set(&mut rng, 1, n, &DVector::from_element(1, 0.7));
        let xs: Vec<f64> = (0..n).map(|i| set.feature(i)[0]).collect();
        for radius in [0.2, 1.0, 3.0] {
            let oracle = bisect_1d(&xs, set.rewards(), 1.0, radius);
            let fit = fit_pilot(&set, &FitOptions::new(radius, 1.0).with_steps(4000)).unwrap()[0];
            assert!((fit - oracle).abs() < 1e-3, "n={n} B={radius}: {fit} vs {oracle}");
        }
    }
}

#[test]
fn hand_computed_correction() {
    let set = SampleSet::from_samples(3, &[Sample::new(DVector::from_vec(vec![1.0, 0.0, 0.0]), 1, 1).unwrap()]).unwrap();
    let hat = one_step_correct(&DVector::zeros(3), &set, 1.0).unwrap();
    let expect = DVector::from_vec(vec![0.4, 0.0, 0.0]);
    assert!((hat - expect).amax() < 1e-12);
}

fn relative_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

#[test]
fn gradient_and_hessian_match_finite_differences() {
    let mut rng = ChaCha20Rng::seed_from_u64(2024);
    let h = 1e-5;
    for case in 0..20 {
        let d = 1 + case % 6;
        let n = rng.random_range(0..60);
        let truth = unit_ball(&mut rng, d, 2.0);
        let set = random_set(&mut rng, d, n, &truth);
        let theta = unit_ball(&mut rng, d, 2.0);
        let reg = rng.random_range(0.1..3.0);

        let g = level_gradient(&theta, &set, reg).unwrap();
        let hess = level_hessian(&theta, &set, reg).unwrap();
        for i in 0..d {
            let mut up = theta.clone();
            let mut dn = theta.clone();
            up[i] += h;
            dn[i] -= h;
            let fd = (penalized_loss(&up, &set, reg).unwrap() - penalized_loss(&dn, &set, reg).unwrap()) / (2.0 * h);
            assert!(relative_gap(-g[i], fd) < 1e-5, "case {case} grad[{i}]: {} vs {fd}", -g[i]);

            let col = (level_gradient(&dn, &set, reg).unwrap() - level_gradient(&up, &set, reg).unwrap()) / (2.0 * h);
            for j in 0..d {
                assert!(relative_gap(hess[(j, i)], col[j]) < 1e-5, "case {case} H[{j},{i}]");
            }
        }
        assert!((&hess - hess.transpose()).amax() < 1e-12);
        let min_eig = hess.symmetric_eigenvalues().min();
        assert!(min_eig >= reg - 1e-9);
    }
}

#[test]
fn correction_contracts_toward_truth() {
    let mut wins = 0;
    for seed in 0..10 {
        let mut rng = ChaCha20Rng::seed_from_u64(100 + seed);
        let truth = DVector::from_vec(vec![0.6, -0.5]);
        // unit-norm contexts: the most informative design the norm bound allows
        let samples: Vec<Sample> = (0..500)
            .map(|t| {
                let x = unit_ball(&mut rng, 2, 1.0).normalize();
                let r = u8::from(rng.random::<f64>() < mu(x.dot(&truth)));
                Sample::new(x, r, t + 1).unwrap()
            })
            .collect();
        let set = SampleSet::from_samples(2, &samples).unwrap();
        let dir = unit_ball(&mut rng, 2, 1.0).normalize();
        let bar = &truth + dir * 0.2;
        let hat = one_step_correct(&bar, &set, 1.0).unwrap();
        if (&hat - &truth).norm() < (&bar - &truth).norm() {
            wins += 1;
        }
    }
    assert!(wins >= 9, "{wins}/10");
}

#[test]
fn empty_set_correction_is_origin() {
    let empty = SampleSet::new(4);
    for v in [0.0, 0.3, -2.0] {
        let hat = one_step_correct(&DVector::from_element(4, v), &empty, 0.7).unwrap();
        assert!(hat.amax() < 1e-15);
    }
    assert_eq!(level_hessian(&DVector::zeros(4), &empty, 2.0).unwrap(), DMatrix::identity(4, 4) * 2.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pilot_fit_stays_in_ball(seed in 0u64..1000, radius in 0.05f64..3.0, steps in 1usize..60, lr in 0.01f64..5.0) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let truth = unit_ball(&mut rng, 3, 4.0);
        let set = random_set(&mut rng, 3, 25, &truth);
        let opts = FitOptions { steps, learning_rate: lr, radius, reg: 1.0, warm_start: Some(unit_ball(&mut rng, 3, 5.0)) };
        let fit = fit_pilot(&set, &opts).unwrap();
        prop_assert!(fit.norm() <= radius);
    }

    #[test]
    fn accumulator_matches_direct_correction(seed in 0u64..1000, n in 0usize..30, extra in 0usize..10) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let truth = unit_ball(&mut rng, 3, 1.0);
        let anchor = unit_ball(&mut rng, 3, 1.0);
        let base = random_set(&mut rng, 3, n, &truth);
        let more = random_set(&mut rng, 3, extra, &truth);
        let mut acc = NewtonAccumulator::rebuild(anchor.clone(), &base, 1.0).unwrap();
        let mut all = base.clone();
        for i in 0..more.len() {
            let s = Sample::new(more.feature(i).into_owned(), more.rewards()[i] as u8, 1000 + i).unwrap();
            acc.push(&s).unwrap();
            all.push(&s).unwrap();
        }
        let direct = one_step_correct(&anchor, &all, 1.0).unwrap();
        prop_assert!((acc.corrected().unwrap() - direct).amax() < 1e-10);
    }

    #[test]
    fn fit_is_deterministic(seed in 0u64..1000) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let truth = unit_ball(&mut rng, 2, 1.0);
        let set = random_set(&mut rng, 2, 20, &truth);
        let opts = FitOptions::new(1.0, 1.0);
        prop_assert_eq!(fit_pilot(&set, &opts).unwrap(), fit_pilot(&set, &opts).unwrap());
    }
}
