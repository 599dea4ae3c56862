use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use scoremi::sde::*;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Composite Simpson rule with `n` (even) intervals.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut total = f(a) + f(b);
    for i in 1..n {
        total += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    total * h / 3.0
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

#[test]
fn closed_form_variance_matches_the_kernel_integral() {
    let s = VpSchedule::default();
    for i in 1..=100 {
        let t = i as f64 / 100.0;
        let k = s.kernel(t).unwrap();
        // k_t² ∫ k_s⁻² g_s² ds, with k_s⁻² = exp(−2 log k_s)
        let integral = simpson(|u| (-2.0 * s.log_k(u)).exp() * s.g2(u), 0.0, t, 2000);
        assert!((k.k * k.k * integral - k.v).abs() < 1e-8, "t={t}");
        assert!((k.v - (1.0 - k.k * k.k)).abs() < 1e-15);
    }
}

#[test]
fn k_is_strictly_decreasing_and_coefficients_agree() {
    let s = VpSchedule::default();
    let mut prev = 1.0;
    for i in 1..=200 {
        let t = i as f64 / 200.0;
        let k = s.kernel(t).unwrap().k;
        assert!(k < prev);
        prev = k;
        assert_eq!(s.drift(t), -0.5 * s.beta(t));
        assert!((s.diffusion(t).powi(2) - s.g2(t)).abs() < 1e-12);
    }
}

#[test]
fn perturbed_variance_matches_v_at_half() {
    let s = VpSchedule::default();
    let mut r = rng(1);
    let v = s.kernel(0.5).unwrap().v;
    let sq: Vec<f64> = (0..1_000_000)
        .map(|_| {
            let e: f64 = StandardNormal.sample(&mut r);
            s.perturb(&[0.0], 0.5, &[e]).unwrap()[0].powi(2)
        })
        .collect();
    let (m, se) = mean_se(&sq);
    assert!((m - v).abs() < 3.0 * se, "{m} vs {v} (se {se})");
}

#[test]
fn conditional_score_direct_formula() {
    let s = VpSchedule::default();
    // find t with v_t = 0.5 by bisection, then x0 = 0, x_t = 1 gives −2
    let (mut lo, mut hi) = (s.t_eps, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if s.kernel(mid).unwrap().v < 0.5 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let score = s.true_conditional_score(&[1.0], &[0.0], lo).unwrap()[0];
    assert!((score + 2.0).abs() < 1e-9);
}

#[test]
fn conditional_score_is_the_gradient_of_the_kernel_log_density() {
    let s = VpSchedule::default();
    let mut r = rng(2);
    for _ in 0..20 {
        let t = r.gen_range(0.01..1.0);
        let x0: Vec<f64> = (0..3).map(|_| r.gen_range(-2.0..2.0)).collect();
        let xt: Vec<f64> = (0..3).map(|_| r.gen_range(-2.0..2.0)).collect();
        let ker = s.kernel(t).unwrap();
        let logp = |x: &[f64]| -> f64 {
            x.iter().zip(&x0).map(|(a, b)| (a - ker.k * b).powi(2)).sum::<f64>() / (-2.0 * ker.v)
        };
        let score = s.true_conditional_score(&xt, &x0, t).unwrap();
        for j in 0..3 {
            let h = 1e-5;
            let (mut up, mut down) = (xt.clone(), xt.clone());
            up[j] += h;
            down[j] -= h;
            let fd = (logp(&up) - logp(&down)) / (2.0 * h);
            assert!((fd - score[j]).abs() <= 1e-6 * fd.abs().max(1.0), "{fd} vs {}", score[j]);
        }
    }
}

#[test]
fn reference_variance_endpoints() {
    let s = VpSchedule::default();
    let r = GaussianReference::new(3.0, s).unwrap();
    assert!((r.chi(0.0) - 9.0).abs() < 1e-12);
    assert!((r.chi(1.0) - 1.0).abs() < 1e-3);
    assert!(GaussianReference::new(0.0, s).is_err());
    // σ = 1, χ_T = k_T² + v_T = 1 so the correction vanishes
    assert!(s.tail_correction(1.0, 5).abs() < 1e-9);
}

fn weighted_mc(sampler: &TimeSampler, h: impl Fn(f64) -> f64, n: usize, seed: u64) -> (f64, f64) {
    let mut r = rng(seed);
    let vals: Vec<f64> = (0..n)
        .map(|_| {
            let (t, w) = sampler.sample(&mut r);
            w * h(t)
        })
        .collect();
    mean_se(&vals)
}

#[test]
fn importance_sampling_is_unbiased_for_analytic_integrands() {
    let s = VpSchedule::default();
    let sampler = TimeSampler::new(s, TimeProposal::Importance);
    let integrands: Vec<Box<dyn Fn(f64) -> f64>> = vec![
        Box::new(|_| 1.0),
        Box::new(move |t| s.g2(t) / 2.0),
        Box::new(|t| t * t),
        Box::new(|t| (3.0 * t).sin() + 1.0),
        Box::new(move |t| s.kernel(t).unwrap().v),
    ];
    for (i, h) in integrands.iter().enumerate() {
        let exact = simpson(h, s.t_eps, s.horizon, 20_000);
        let (m, se) = weighted_mc(&sampler, h, 100_000, 10 + i as u64);
        assert!((m - exact).abs() < 3.0 * se, "integrand {i}: {m} vs {exact} (se {se})");
    }
    // ∫ g²/2 has the closed form (β_min + β_max) T / 4 less the [0, t_eps] piece
    let closed = (s.beta_min + s.beta_max) / 4.0 - simpson(|t| s.g2(t) / 2.0, 0.0, s.t_eps, 10);
    let quad = simpson(|t| s.g2(t) / 2.0, s.t_eps, s.horizon, 20_000);
    assert!((closed - quad).abs() < 1e-10);
}

#[test]
fn importance_density_integrates_to_one() {
    let s = VpSchedule::default();
    for p in [TimeProposal::Importance, TimeProposal::Uniform] {
        let sampler = TimeSampler::new(s, p);
        // the density is ~1/t near t_eps, so integrate in log t
        let total = simpson(
            |u| {
                let t = u.exp().clamp(s.t_eps, s.horizon);
                sampler.density(t) * t
            },
            s.t_eps.ln(),
            s.horizon.ln(),
            20_000,
        );
        assert!((total - 1.0).abs() < 1e-8, "{p:?}: {total}");
    }
    let z = TimeSampler::new(s, TimeProposal::Importance).importance_normaliser();
    assert!((z - 23.9).abs() < 0.1, "{z}");
}

proptest! {
    #[test]
    fn perturb_then_score_recovers_the_noise(
        x0 in prop::collection::vec(-3.0f64..3.0, 1..6),
        t in 1e-4f64..1.0,
        seed in 0u64..1000,
    ) {
        let s = VpSchedule::default();
        let mut r = rng(seed);
        let noise: Vec<f64> = x0.iter().map(|_| StandardNormal.sample(&mut r)).collect();
        let xt = s.perturb(&x0, t, &noise).unwrap();
        let score = s.true_conditional_score(&xt, &x0, t).unwrap();
        let v = s.kernel(t).unwrap().v;
        for (sc, e) in score.iter().zip(&noise) {
            let expected = -e / v.sqrt();
            prop_assert!((sc - expected).abs() <= 1e-8 * expected.abs().max(1.0));
        }
    }

    #[test]
    fn sampled_times_stay_in_support(seed in 0u64..1000) {
        let s = VpSchedule::default();
        let sampler = TimeSampler::new(s, TimeProposal::Importance);
        let mut r = rng(seed);
        for _ in 0..100 {
            let (t, w) = sampler.sample(&mut r);
            prop_assert!(t >= s.t_eps && t <= s.horizon);
            prop_assert!(w.is_finite() && w > 0.0);
        }
    }
}
