use ndarray::Array3;
use proptest::prelude::*;
use rad_core::delay::delay_gradient;
use rad_core::gradcheck::{delay_sign_agreement, eq7_bruteforce, run_gradcheck, GradCheckSetup};
use rad_core::{DelayCap, SpikeRaster};

#[test]
fn smoothed_network_gradients_match_finite_differences() {
    let suite = run_gradcheck(&GradCheckSetup::default()).unwrap();
    for r in &suite.reports {
        println!("{} h={:e} max={:e} worst={}", r.label, r.h, r.max_relative_error, r.worst_index);
    }
    assert!(suite.passed);
}

#[test]
fn spike_difference_estimator_agrees_in_sign_with_smoothed_delays() {
    let s = delay_sign_agreement(&GradCheckSetup::default(), 200, 1e-4).unwrap();
    println!("{s:?} fraction={}", s.fraction());
    assert!(s.fraction() >= 0.95);
}

fn random_instance(neurons: usize, steps: usize, seed: u64) -> (SpikeRaster, Array3<f64>) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut r = SpikeRaster::zeros(neurons, steps, 1.0);
    for i in 0..neurons {
        for n in 0..steps {
            r.set(i, n, rng.gen_bool(0.15));
        }
    }
    let mut per = Array3::zeros((neurons, steps, steps));
    for i in 0..neurons {
        for n in 0..steps {
            for m in 0..=n {
                // dyadic values keep every partial sum exact in f64
                per[[i, n, m]] = f64::from(rng.gen_range(-1024i32..=1024)) / 1024.0;
            }
        }
    }
    (r, per)
}

#[test]
fn production_delay_gradient_equals_double_sum() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    for k in 0..100 {
        let neurons = rng.gen_range(1..=32);
        let steps = rng.gen_range(1..=256);
        let (r, per) = random_instance(neurons, steps, k);
        // production upstream already sums over n >= m
        let mut up = ndarray::Array2::zeros((neurons, steps));
        for i in 0..neurons {
            for m in 0..steps {
                up[[i, m]] = (m..steps).map(|n| per[[i, n, m]]).sum::<f64>();
            }
        }
        let fast = delay_gradient(&r, up.view(), 1.0).unwrap();
        let slow = eq7_bruteforce(&r, per.view(), 1.0).unwrap();
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-12, "instance {k}: {a} vs {b}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn double_sum_agrees_on_small_rasters(neurons in 1usize..6, steps in 1usize..40, seed in 0u64..10_000, ts in prop_oneof![Just(0.5), Just(1.0), Just(2.0)]) {
        let (r, per) = random_instance(neurons, steps, seed);
        let r = SpikeRaster::from_array(r.data().clone(), ts);
        let mut up = ndarray::Array2::zeros((neurons, steps));
        for i in 0..neurons {
            for m in 0..steps {
                up[[i, m]] = (m..steps).map(|n| per[[i, n, m]]).sum::<f64>();
            }
        }
        let fast = delay_gradient(&r, up.view(), ts).unwrap();
        let slow = eq7_bruteforce(&r, per.view(), ts).unwrap();
        for (a, b) in fast.iter().zip(&slow) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn sweep_without_delays_checks_weights_only() {
    let setup = GradCheckSetup { theta_d: DelayCap::new(0.0).unwrap(), layer_sizes: vec![2, 2, 2], ..GradCheckSetup::default() };
    let suite = run_gradcheck(&setup).unwrap();
    assert!(suite.reports.iter().all(|r| r.label == "weights"));
    assert!(suite.passed);
}

#[test]
fn double_sum_agrees_with_continuous_upstream() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let (r, mut per) = random_instance(16, 128, 3);
    per.mapv_inplace(|v| v + rng.gen_range(-1e-3..1e-3));
    let mut up = ndarray::Array2::zeros((16, 128));
    for i in 0..16 {
        for m in 0..128 {
            up[[i, m]] = (m..128).map(|n| per[[i, n, m]]).sum::<f64>();
        }
    }
    let fast = delay_gradient(&r, up.view(), 1.0).unwrap();
    let slow = eq7_bruteforce(&r, per.view(), 1.0).unwrap();
    for (a, b) in fast.iter().zip(&slow) {
        assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
    }
}
