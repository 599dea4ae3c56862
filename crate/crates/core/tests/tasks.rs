use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use scoremi::data::PairedSamples;
use scoremi::nn::Tensor;
use scoremi::tasks::*;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn column(t: &Tensor, j: usize) -> Vec<f64> {
    (0..t.rows()).map(|i| t.get(i, j)).collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn cov(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / a.len() as f64
}

fn corr(a: &[f64], b: &[f64]) -> f64 {
    cov(a, b) / (cov(a, a) * cov(b, b)).sqrt()
}

/// Trapezoid integral of p log(p / p_x p_y) for a zero-mean 2-D Gaussian.
fn quadrature_mi(s11: f64, s12: f64, s22: f64) -> f64 {
    let det = s11 * s22 - s12 * s12;
    let (i11, i12, i22) = (s22 / det, -s12 / det, s11 / det);
    let pdf = |x: f64, y: f64| {
        (-(i11 * x * x + 2.0 * i12 * x * y + i22 * y * y) / 2.0).exp() / (2.0 * std::f64::consts::PI * det.sqrt())
    };
    let marg = |x: f64, s: f64| (-(x * x) / (2.0 * s)).exp() / (2.0 * std::f64::consts::PI * s).sqrt();
    let (hx, hy) = (12.0 * s11.sqrt() / 1200.0, 12.0 * s22.sqrt() / 1200.0);
    let mut total = 0.0;
    for i in -1200..=1200 {
        let x = i as f64 * hx;
        let px = marg(x, s11);
        for j in -1200..=1200 {
            let y = j as f64 * hy;
            let p = pdf(x, y);
            if p > 0.0 {
                total += p * (p / (px * marg(y, s22))).ln();
            }
        }
    }
    total * hx * hy
}

#[test]
fn gaussian_mi_matches_quadrature_on_2d_cases() {
    for (s11, s12, s22) in [(1.0, 0.5, 1.0), (2.0, -0.9, 0.7), (0.3, 0.25, 4.0), (1.0, 0.0, 2.0)] {
        let c = DMatrix::from_row_slice(2, 2, &[s11, s12, s12, s22]);
        let exact = gaussian_mi(&c, 1, 1).unwrap();
        let oracle = quadrature_mi(s11, s12, s22);
        assert!((exact - oracle).abs() < 1e-4, "{exact} vs {oracle}");
    }
}

#[test]
fn gaussian_mi_closed_forms() {
    let block = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.0, 0.3, 1.0, 0.0, 0.0, 0.0, 5.0]);
    assert_eq!(gaussian_mi(&block, 2, 1).unwrap(), 0.0);
    let c = DMatrix::from_row_slice(2, 2, &[1.0, 0.8, 0.8, 1.0]);
    assert!((gaussian_mi(&c, 1, 1).unwrap() - 0.510_825_6).abs() < 1e-6);
    let singular = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
    assert!(matches!(gaussian_mi(&singular, 1, 1), Err(TaskError::NotPositiveDefinite)));
    assert!(gaussian_mi(&c, 1, 2).is_err());
}

#[test]
fn dense_2x2_rounds_to_table_value() {
    let task = find_task("mn-2x2-dense").unwrap();
    let gt = task.ground_truth().unwrap().mi;
    assert_eq!((gt * 10.0).round() / 10.0, 0.3);
}

#[test]
fn student_correction_values() {
    // closed forms of lnΓ and ψ at half-integers
    let g = 0.577_215_664_901_532_9_f64;
    let ln2 = std::f64::consts::LN_2;
    let sqrt_pi_ln = 0.5 * std::f64::consts::PI.ln();
    let f1 = sqrt_pi_ln - 0.5 * (-g - 2.0 * ln2);
    let f2 = g;
    let f3 = sqrt_pi_ln - ln2 - 1.5 * (2.0 - g - 2.0 * ln2);
    let c111 = f1 + f3 - 2.0 * f2;
    let c = student_correction(1.0, 1, 1).unwrap();
    assert!((c - c111).abs() < 1e-10, "{c} vs {c111}");
    assert!((c - 0.224).abs() < 5e-4);
    assert!(student_correction(100.0, 1, 1).unwrap().abs() < 0.01);
    assert!(student_correction(0.5, 1, 1).is_err());

    let st = find_task("st-2x2-dof2").unwrap().ground_truth().unwrap();
    assert_eq!(st.mi, student_correction(2.0, 2, 2).unwrap());
    assert_eq!((st.mi * 10.0).round() / 10.0, 0.2);
}

#[test]
fn uniform_additive_values() {
    assert!((uniform_additive_mi(0.1) - 1.709_437_9).abs() < 1e-6);
    assert!((uniform_additive_mi(0.75) - 1.0 / 3.0).abs() < 1e-12);
    assert!((0.5 - (2.0f64 * 0.5).ln() - 1.0 / (4.0 * 0.5)).abs() < 1e-15);
    assert!((uniform_additive_mi(0.5) - uniform_additive_mi(0.5 + 1e-12)).abs() < 1e-9);
}

#[test]
fn uniform_additive_sampler_is_uniform_plus_noise() {
    let task = find_task("uniform-1x1-noise0.75").unwrap();
    let s = task.sample(50_000, &mut rng(4)).unwrap();
    for i in 0..s.len() {
        let (x, y) = (s.x.get(i, 0), s.y.get(i, 0));
        assert!((0.0..1.0).contains(&x));
        assert!((y - x).abs() <= 0.75);
    }
    let x = column(&s.x, 0);
    assert!((mean(&x) - 0.5).abs() < 0.01);
}

#[test]
fn covariance_family_matches_analytic_entries() {
    let fam = CovFamily {
        alpha: 0.6,
        beta_x: 0.4,
        beta_y: 0.3,
        lambda: 0.9,
        eps_x: 1.0,
        eps_y: 0.8,
        eta_x: 0.5,
        eta_y: 0.7,
        k: 2,
    };
    let (m, n) = (3, 3);
    let sigma = fam.covariance(m, n).unwrap();
    // spot entries from the latent construction
    let a2 = 0.36;
    assert!((sigma[(0, m)] - (a2 + 0.81)).abs() < 1e-12);
    assert!((sigma[(2, m + 2)] - a2).abs() < 1e-12);
    assert!((sigma[(0, m + 1)] - a2).abs() < 1e-12);
    assert!((sigma[(0, 1)] - (a2 + 0.16)).abs() < 1e-12);
    assert!((sigma[(2, 2)] - (a2 + 0.16 + 1.0 + 0.25)).abs() < 1e-12);
    assert!((sigma[(m + 2, m + 2)] - (a2 + 0.09 + 0.64 + 0.49)).abs() < 1e-12);

    let count = 1_000_000;
    let (x, y) = fam.sample(m, n, count, &mut rng(7)).unwrap();
    let cols: Vec<Vec<f64>> = (0..m)
        .map(|j| x.iter().skip(j).step_by(m).copied().collect())
        .chain((0..n).map(|j| y.iter().skip(j).step_by(n).copied().collect()))
        .collect();
    for i in 0..m + n {
        for j in 0..m + n {
            let emp = cov(&cols[i], &cols[j]);
            let se = ((sigma[(i, i)] * sigma[(j, j)] + sigma[(i, j)].powi(2)) / count as f64).sqrt();
            assert!((emp - sigma[(i, j)]).abs() < 5.0 * se, "({i},{j}) {emp} vs {}", sigma[(i, j)]);
        }
    }
}

#[test]
fn covariance_family_rejects_bad_parameters() {
    assert!(CovFamily::sparse(3, 1.0, 1.0).covariance(2, 3).is_err());
    assert!(CovFamily::dense(1.0, 0.0).covariance(2, 2).is_err());
    assert!(CovFamily::dense(f64::NAN, 1.0).covariance(1, 1).is_err());
}

#[test]
fn dense_family_has_common_correlation() {
    let (alpha, eps) = (0.8, 1.3);
    let expected = alpha * alpha / (alpha * alpha + eps * eps);
    let fam = CovFamily::dense(alpha, eps);
    let sigma = fam.covariance(2, 3).unwrap();
    for i in 0..5 {
        for j in 0..5 {
            if i != j {
                let r = sigma[(i, j)] / (sigma[(i, i)] * sigma[(j, j)]).sqrt();
                assert!((r - expected).abs() < 1e-12);
            }
        }
    }
    let (x, y) = fam.sample(2, 3, 200_000, &mut rng(1)).unwrap();
    let x0: Vec<f64> = x.iter().step_by(2).copied().collect();
    let y2: Vec<f64> = y.iter().skip(2).step_by(3).copied().collect();
    assert!((corr(&x0, &y2) - expected).abs() < 0.01);
}

#[test]
fn dense_zero_alpha_is_uncorrelated() {
    let (x, y) = CovFamily::dense(0.0, 1.0).sample(2, 2, 100_000, &mut rng(2)).unwrap();
    for a in 0..2 {
        for b in 0..2 {
            let xa: Vec<f64> = x.iter().skip(a).step_by(2).copied().collect();
            let yb: Vec<f64> = y.iter().skip(b).step_by(2).copied().collect();
            assert!(corr(&xa, &yb).abs() < 0.02);
        }
    }
}

#[test]
fn student_covariance_is_scaled_dispersion() {
    let task = TaskSpec::new(
        "st",
        "St",
        Base::Student {
            x_dim: 1,
            y_dim: 1,
            dof: 3.0,
            dispersion: CovFamily::identity(),
        },
        vec![],
    );
    let s = task.sample(1_000_000, &mut rng(11)).unwrap();
    let (x, y) = (column(&s.x, 0), column(&s.y, 0));
    assert!((cov(&x, &x) / 3.0 - 1.0).abs() < 0.05, "{}", cov(&x, &x));
    assert!((cov(&y, &y) / 3.0 - 1.0).abs() < 0.05, "{}", cov(&y, &y));
    assert!(cov(&x, &y).abs() < 0.15);
}

#[test]
fn gaussian_bases_are_sampled_at_unit_scale() {
    // λ ≈ 2 here, so the raw latent construction has variance ≈ 4.9
    let task = find_task("mn-3x3-2pair").unwrap();
    let s = task.sample(200_000, &mut rng(12)).unwrap();
    for j in 0..3 {
        let (x, y) = (column(&s.x, j), column(&s.y, j));
        assert!((cov(&x, &x) - 1.0).abs() < 0.02, "x{j} {}", cov(&x, &x));
        assert!((cov(&y, &y) - 1.0).abs() < 0.02, "y{j} {}", cov(&y, &y));
    }
    let rho = (1.0 - (-1.0f64).exp()).sqrt();
    assert!((corr(&column(&s.x, 0), &column(&s.y, 0)) - rho).abs() < 0.01);
}

#[test]
fn transform_examples() {
    assert_eq!(half_cube(0.0), 0.0);
    assert_eq!(half_cube(4.0), 8.0);
    assert_eq!(half_cube(-4.0), -8.0);

    let mut row = [0.0, 0.0, 0.0];
    spiral_row(&mut row, 0, 1.0);
    assert_eq!(row, [0.0; 3]);
    let mut row = [0.7, -1.2, 0.4];
    let before: f64 = row.iter().map(|v| v * v).sum();
    spiral_row(&mut row, 1, 0.5);
    let after: f64 = row.iter().map(|v| v * v).sum();
    assert!((before - after).abs() < 1e-12);
    assert_eq!(row[0], 0.7);
    // inverse: rotate back by the same (norm-determined) angle
    spiral_row(&mut row, 1, -0.5);
    assert!((row[1] + 1.2).abs() < 1e-12 && (row[2] - 0.4).abs() < 1e-12);

    for u in [0.0, 0.3, 1.0] {
        let t = 1.5 * std::f64::consts::PI * (1.0 + 2.0 * u);
        let [a, b] = swiss_roll(u);
        assert!(((a * a + b * b).sqrt() - t / 21.0).abs() < 1e-12);
        assert!((b.atan2(a) - t.sin().atan2(t.cos())).abs() < 1e-12);
    }
    assert!((phi(0.0) - 0.5).abs() < 1e-15);
}

#[test]
fn wiggly_maps_are_strictly_increasing() {
    let grid: Vec<f64> = (0..10_000).map(|i| -10.0 + 20.0 * i as f64 / 9_999.0).collect();
    for w in [wiggly_x as fn(f64) -> f64, wiggly_y] {
        assert!(grid.windows(2).all(|p| w(p[1]) > w(p[0])));
    }
}

#[test]
fn transforms_check_dimensions() {
    assert!(Transform::Spiral.output_dims(2, 2).is_err());
    assert_eq!(Transform::Spiral.output_dims(2, 3).unwrap(), (2, 3));
    assert!(Transform::SwissRoll.output_dims(2, 1).is_err());
    assert_eq!(Transform::SwissRoll.output_dims(1, 1).unwrap(), (2, 1));
    let bad = TaskSpec::new("b", "b", Base::BivariateNormal { rho: 0.5 }, vec![Transform::Spiral]);
    assert!(matches!(bad.sample(3, &mut rng(0)), Err(TaskError::UnsupportedDim { .. })));
    assert!(bad.ground_truth().is_err());
}

#[test]
fn swiss_roll_task_embeds_x() {
    let task = find_task("swissroll-2x1").unwrap();
    let s = task.sample(1000, &mut rng(3)).unwrap();
    assert_eq!((s.x_dim(), s.y_dim()), (2, 1));
    for i in 0..s.len() {
        let r = (s.x.get(i, 0).powi(2) + s.x.get(i, 1).powi(2)).sqrt();
        assert!(r >= 1.5 * std::f64::consts::PI / 21.0 - 1e-9 && r <= 4.5 * std::f64::consts::PI / 21.0 + 1e-9);
        assert!((0.0..=1.0).contains(&s.y.get(i, 0)));
    }
    assert!(task.note.as_deref().unwrap().contains("0.8"));
}

#[test]
fn bimodal_quantiles_invert_the_cdf() {
    for i in 1..=998 {
        let u = 0.001 + (0.998 * i as f64) / 999.0;
        assert!((bimodal_x_cdf(bimodal_x_quantile(u)) - u).abs() < 1e-8);
        assert!((bimodal_y_cdf(bimodal_y_quantile(u)) - u).abs() < 1e-8);
    }
}

#[test]
fn bimodal_sample_has_two_modes() {
    let s = find_task("bimodal-1x1").unwrap().sample(20_000, &mut rng(5)).unwrap();
    let x = column(&s.x, 0);
    let frac = |a: f64, b: f64| x.iter().filter(|v| (a..b).contains(*v)).count() as f64 / x.len() as f64;
    let mass = |a: f64, b: f64| bimodal_x_cdf(b) - bimodal_x_cdf(a);
    for (a, b) in [(-0.5, 0.5), (2.0, 3.0), (4.5, 5.5), (-10.0, 2.5)] {
        assert!((frac(a, b) - mass(a, b)).abs() < 0.01, "[{a}, {b}]");
    }
}

#[test]
fn catalogue_is_complete_and_consistent() {
    let c = Catalogue::build().unwrap();
    assert_eq!(c.tasks.len(), 40);
    let mut ids: Vec<&str> = c.tasks.iter().map(|e| e.spec.id.as_str()).collect();
    ids.sort();
    ids.dedup();
    assert_eq!(ids.len(), 40);
    let table = [
        0.2, 0.4, 0.3, 0.4, 0.4, 0.4, 0.4, 1.0, 1.0, 1.0, 1.0, 0.3, 1.0, 1.3, 1.0, 0.4, 1.0, 0.6, 1.6, 0.4, 1.0, 1.0,
        1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.2, 0.4, 0.2, 0.3, 0.2, 0.4, 0.3, 0.4, 1.7, 0.3, 0.4,
    ];
    for (e, gt) in c.tasks.iter().zip(table) {
        assert_eq!(e.spec.table_gt, Some(gt));
        assert_eq!((e.ground_truth.mi * 10.0).round() / 10.0, gt, "{}", e.spec.id);
        assert!(e.ground_truth.mi >= 0.0);
        let is_solved = !matches!(e.spec.base, Base::Student { .. } | Base::UniformAdditive { .. });
        if is_solved {
            assert!((e.ground_truth.mi - gt).abs() < 1e-6, "{}", e.spec.id);
        }
    }
    assert_eq!(c.tasks[23].spec.name, "Sp @ Mn 25 × 25 (2-pair)");
    assert_eq!(c.tasks[26].spec.id, "sp-nmcdf-mn-25x25-2pair");
    assert_eq!(c.tasks[26].spec.transforms, vec![Transform::NormalCdf, Transform::Spiral]);
}

#[test]
fn ground_truth_is_invariant_to_every_chain() {
    for mut spec in catalogue().unwrap() {
        let with = spec.ground_truth().unwrap();
        if !spec.transforms.is_empty() {
            assert_eq!(with.derivation, Derivation::TransformInvariant);
        }
        spec.transforms.clear();
        assert_eq!(spec.ground_truth().unwrap().mi, with.mi);
    }
}

#[test]
fn every_low_dim_task_samples_finite_points() {
    for spec in catalogue().unwrap() {
        let (m, n) = spec.dims().unwrap();
        let s = spec.sample(500, &mut rng(9)).unwrap();
        assert_eq!((s.x_dim(), s.y_dim(), s.len()), (m, n, 500));
        assert!(s.x.is_finite() && s.y.is_finite(), "{}", spec.id);
    }
}

#[test]
fn sampling_is_deterministic_per_seed() {
    let spec = find_task("sp-nmcdf-mn-3x3-2pair").unwrap();
    assert_eq!(spec.sample(300, &mut rng(1)).unwrap(), spec.sample(300, &mut rng(1)).unwrap());
    assert_ne!(spec.sample(300, &mut rng(1)).unwrap(), spec.sample(300, &mut rng(2)).unwrap());
}

#[test]
fn catalogue_and_samples_roundtrip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let c = Catalogue::build().unwrap();
    let path = dir.path().join("catalogue.json");
    save_catalogue(&path, &c).unwrap();
    assert_eq!(load_catalogue(&path).unwrap(), c);

    let s = find_task("swissroll-2x1").unwrap().sample(50, &mut rng(0)).unwrap();
    let csv_path = dir.path().join("s.csv");
    write_samples_csv(&csv_path, &s).unwrap();
    let text = std::fs::read_to_string(&csv_path).unwrap();
    assert!(text.starts_with("x_1,x_2,y_1\n"));
    assert_eq!(read_samples_csv(&csv_path).unwrap(), s);
}

#[test]
fn standardize_fits_on_train_and_reuses_the_map() {
    let spec = find_task("mn-3x3-dense").unwrap();
    let s = spec.sample(20_000, &mut rng(6)).unwrap();
    let (z, map) = Standardizer::fit_apply(&s).unwrap();
    for j in 0..3 {
        let c = column(&z.x, j);
        assert!(mean(&c).abs() < 1e-12);
        assert!((cov(&c, &c) - 1.0).abs() < 1e-10);
    }
    // roughly standard already, so the map is near identity
    assert!(map.x_mean.iter().all(|m| m.abs() < 0.05));

    let scaled = PairedSamples::new(s.x.map(|v| 10.0 * v), s.y.clone()).unwrap();
    let map10 = Standardizer::fit(&scaled).unwrap();
    for (a, b) in map10.x_std.iter().zip(&map.x_std) {
        assert!((a / b - 10.0).abs() < 1e-9);
    }
    let test = spec.sample(100, &mut rng(60)).unwrap();
    let zt = map.apply(&test).unwrap();
    assert!(((zt.x.get(0, 1) * map.x_std[1] + map.x_mean[1]) - test.x.get(0, 1)).abs() < 1e-12);

    let flat = PairedSamples::new(Tensor::filled(&[10, 1], 2.0), s.y.slice_rows(0, 10).unwrap()).unwrap();
    assert!(matches!(Standardizer::fit(&flat), Err(TaskError::ZeroVariance(0))));
    let one = s.select(&[0]).unwrap();
    assert!(matches!(Standardizer::fit(&one), Err(TaskError::TooFewSamples(1))));
}

#[test]
fn consistency_constructions() {
    let base = find_task("bivariate-1x1").unwrap();
    let ind = ConsistencyTask::new(ConsistencyKind::Independence, base.clone()).unwrap();
    assert_eq!(ind.expected_mi().unwrap(), 0.0);
    let s = ind.sample(50_000, &mut rng(1)).unwrap();
    assert!(corr(&column(&s.x, 0), &column(&s.y, 0)).abs() < 0.02);

    let add = ConsistencyTask::new(ConsistencyKind::Additivity, base.clone()).unwrap();
    assert!((add.expected_mi().unwrap() - 0.8).abs() < 1e-6);
    let s = add.sample(10, &mut rng(1)).unwrap();
    assert_eq!((s.x_dim(), s.y_dim()), (2, 2));

    let dp = ConsistencyTask::new(ConsistencyKind::DataProcessing, base.clone()).unwrap();
    assert_eq!(dp.expected_mi().unwrap(), base.ground_truth().unwrap().mi);
    let s = dp.sample(10, &mut rng(1)).unwrap();
    assert_eq!(s.y.slice_cols(0, 1).unwrap(), s.y.slice_cols(1, 2).unwrap());

    let b3 = find_task("mn-3x3-2pair").unwrap();
    let q = random_orthogonal(3, &mut rng(2));
    let dp = ConsistencyTask::data_processing(b3.clone(), q.clone()).unwrap();
    let s = dp.sample(5, &mut rng(3)).unwrap();
    let y0 = nalgebra::DVector::from_row_slice(&s.y.row(0)[..3]);
    let qy0 = &q * y0;
    for j in 0..3 {
        assert!((s.y.get(0, 3 + j) - qy0[j]).abs() < 1e-12);
    }
    assert!(ConsistencyTask::data_processing(b3, DMatrix::from_element(3, 3, 1.0)).is_err());
}

#[test]
fn sparse_sweep_target_zero_gives_zero_lambda() {
    assert_eq!(sparse_lambda_for(3, 3, 2, 0.0).unwrap(), 0.0);
    let t = sparse_task(3, 3, 2, 2.0, vec![Transform::HalfCube]).unwrap();
    assert!((t.ground_truth().unwrap().mi - 2.0).abs() < 1e-6);
    assert!(sparse_lambda_for(3, 3, 2, -1.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn solver_hits_targets(target in 0.0f64..4.0, k in 1usize..=3) {
        let lambda = sparse_lambda_for(3, 4, k, target).unwrap();
        let mi = gaussian_mi(&CovFamily::sparse(k, lambda, 1.0).covariance(3, 4).unwrap(), 3, 4).unwrap();
        prop_assert!((mi - target).abs() < 1e-6);
        let rho = bivariate_rho_for(target).unwrap();
        prop_assert!((bivariate_normal_mi(rho) - target).abs() < 1e-6);
    }

    #[test]
    fn sparse_family_mi_is_sum_over_pairs(lambda in 0.0f64..3.0, k in 0usize..=3) {
        let rho = lambda * lambda / (1.0 + lambda * lambda);
        let mi = gaussian_mi(&CovFamily::sparse(k, lambda, 1.0).covariance(3, 3).unwrap(), 3, 3).unwrap();
        prop_assert!((mi - k as f64 * bivariate_normal_mi(rho)).abs() < 1e-10);
    }

    #[test]
    fn gaussian_mi_is_invariant_to_blockwise_linear_maps(
        alpha in 0.0f64..1.5,
        a in prop::collection::vec(-2.0f64..2.0, 4),
        b in 0.2f64..3.0,
    ) {
        let sigma = CovFamily::dense(alpha, 1.0).covariance(2, 1).unwrap();
        let mut m = DMatrix::zeros(3, 3);
        m[(0, 0)] = a[0] + 3.0;
        m[(0, 1)] = a[1];
        m[(1, 0)] = a[2];
        m[(1, 1)] = a[3] + 3.0;
        m[(2, 2)] = b;
        let mapped = &m * &sigma * m.transpose();
        let before = gaussian_mi(&sigma, 2, 1).unwrap();
        let after = gaussian_mi(&mapped, 2, 1).unwrap();
        prop_assert!((before - after).abs() < 1e-9);
    }
}
