use std::f64::consts::{LN_2, PI};

use num_complex::Complex64;
use proptest::prelude::*;

use schrod_inverse::grid::GridFunction;
use schrod_inverse::kernel::{kernel_via_p, restricted_kernel};
use schrod_inverse::norming::{samples_for_epsilon, truncation_schedule, SpectralData};
use schrod_inverse::pipeline::io::{read_traces, write_traces};
use schrod_inverse::sl_forward::dirichlet_eigens;
use schrod_inverse::trace_sim::{synthesize_traces, ComplexTrace};

fn spectrum(shift: f64, wiggle: &[f64], scale: &[f64]) -> SpectralData {
    let n = wiggle.len();
    let lambdas: Vec<f64> = (1..=n)
        .map(|k| PI * PI * (k * k) as f64 + shift + wiggle[k - 1])
        .collect();
    let alpha2: Vec<f64> = (1..=n)
        .map(|k| scale[k - 1] / (2.0 * PI * PI * (k * k) as f64))
        .collect();
    SpectralData {
        lambdas,
        ratios: vec![1.0; n],
        alpha2,
        n_used: n,
        epsilon_used: f64::NAN,
    }
}

fn spectra() -> impl Strategy<Value = SpectralData> {
    (1usize..12).prop_flat_map(|n| {
        (
            -20.0f64..20.0,
            prop::collection::vec(-0.5f64..0.5, n),
            prop::collection::vec(0.8f64..1.2, n),
        )
            .prop_map(|(s, w, a)| spectrum(s, &w, &a))
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn kernel_is_symmetric_and_matches_p_form(sd in spectra(), tau in 0.2f64..1.0) {
        let a = restricted_kernel(&sd, tau, 48).unwrap();
        let b = kernel_via_p(&sd, tau, 48).unwrap();
        prop_assert!(a.sup_diff(&b) <= 1e-10);
        prop_assert_eq!(&a.values, &a.values.transpose());
    }

    #[test]
    fn schedule_meets_both_inequalities(delta in 1e-4f64..1.0, n in 1usize..60) {
        let (eps, big_n) = truncation_schedule(delta, n).unwrap();
        let n2 = (n * n) as f64;
        prop_assert!(-n2 * (-eps).exp_m1() <= delta / 2.0);
        prop_assert!(n2 / big_n as f64 <= eps / (2.0 * LN_2));
        prop_assert!(big_n == n || n2 / (big_n - 1) as f64 > eps / (2.0 * LN_2));
    }

    #[test]
    fn sample_count_is_monotone_in_epsilon(eps in 1e-4f64..0.5, n in 1usize..40) {
        let a = samples_for_epsilon(eps, n).unwrap();
        let b = samples_for_epsilon(0.5 * eps, n).unwrap();
        prop_assert!(b >= a);
    }

    #[test]
    fn trace_csv_round_trip(
        values in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 65),
        t_obs in 0.01f64..10.0,
    ) {
        let s: Vec<Complex64> = values.iter().map(|(a, b)| Complex64::new(*a, *b)).collect();
        let r0 = ComplexTrace::new(t_obs, s.clone()).unwrap();
        let r1 = ComplexTrace::new(t_obs, s.iter().map(|z| z * 2.0).collect()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        write_traces(&p, &r0, &r1).unwrap();
        let (a, b) = read_traces(&p).unwrap();
        prop_assert_eq!(a.samples, r0.samples);
        prop_assert_eq!(b.samples, r1.samples);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn traces_are_linear_in_coefficients(
        a in prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 4),
        b in prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 4),
        s in -3.0f64..3.0,
    ) {
        let q = GridFunction::from_fn(512, |x| 3.0 * x).unwrap();
        let sys = dirichlet_eigens(&q, 4).unwrap();
        let ca: Vec<Complex64> = a.iter().map(|(x, y)| Complex64::new(*x, *y)).collect();
        let cb: Vec<Complex64> = b.iter().map(|(x, y)| Complex64::new(*x, *y)).collect();
        let cs: Vec<Complex64> = ca.iter().zip(&cb).map(|(x, y)| x * s + y).collect();
        let ta = synthesize_traces(&sys, &ca, 0.5, 64).unwrap();
        let tb = synthesize_traces(&sys, &cb, 0.5, 64).unwrap();
        let ts = synthesize_traces(&sys, &cs, 0.5, 64).unwrap();
        for i in 0..=64 {
            for (x, y, z) in [(&ta.r0, &tb.r0, &ts.r0), (&ta.r1, &tb.r1, &ts.r1)] {
                let expect = x.samples[i] * s + y.samples[i];
                prop_assert!((z.samples[i] - expect).norm() <= 1e-10 * (1.0 + expect.norm()));
            }
        }
    }
}
