//! Invariants checked over randomly generated inputs.

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use revar::diagnostics::{aggregate_tpsd, compare_tpsd, welch_psd, TpsdCurve, WelchParams};
use revar::io::{load_series, save_series};
use revar::preprocess::remove_ttp;
use revar::var::VarModel;
use revar::whitening::fit_pca;
use revar::{fit_revar, generate_noise, load_model, save_model, FitConfig, Geometry, WavefrontSeries};

fn gaussian(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

fn random_series(geometry: Geometry, n_frames: usize, seed: u64) -> WavefrontSeries {
    let frames = gaussian(n_frames * geometry.n_pixels(), seed);
    WavefrontSeries::new(geometry, n_frames, frames, format!("random {seed}")).unwrap()
}

fn geometry_strategy() -> impl Strategy<Value = Geometry> {
    (4usize..12, 4usize..12, any::<bool>(), 1e-6f64..1.0, 1e-4f64..1.0).prop_map(|(h, w, circ, dt, dx)| {
        if circ {
            Geometry::circular(h, w, dt, dx)
        } else {
            Geometry::full(h, w, dt, dx)
        }
    })
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot.abs() / (na * nb)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn series_file_round_trip(g in geometry_strategy(), n in 1usize..20, seed in any::<u64>(), note in "[a-z0-9 ]{0,16}") {
        let mut s = random_series(g, n, seed);
        s.metadata.insert("note".into(), note);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.wfs");
        save_series(&s, &path).unwrap();
        prop_assert_eq!(load_series(&path).unwrap(), s);
    }

    #[test]
    fn whiten_then_unwhiten_is_identity(p in 2usize..20, extra in 5usize..40, seed in any::<u64>()) {
        let t = p + extra;
        let x = DMatrix::from_vec(p, t, gaussian(p * t, seed)) * 3e-8;
        let model = fit_pca(&x, 1.0).unwrap();
        let back = model.unwhiten(&model.whiten(&x).unwrap()).unwrap();
        prop_assert!((&back - &x).amax() <= 1e-9 * x.amax());
    }

    #[test]
    fn ttp_removal_is_idempotent_and_orthogonal(g in geometry_strategy(), n in 1usize..6, seed in any::<u64>()) {
        let s = random_series(g, n, seed);
        let once = remove_ttp(&s).unwrap();
        let twice = remove_ttp(&once).unwrap();
        let scale = s.max_abs();
        for (a, b) in once.frames.iter().zip(&twice.frames) {
            prop_assert!((a - b).abs() <= 1e-12 * scale);
        }
        let pixels = once.geometry.valid_pixels();
        let ones = vec![1.0; pixels.len()];
        let xs: Vec<f64> = pixels.iter().map(|&(_, x)| x as f64).collect();
        let ys: Vec<f64> = pixels.iter().map(|&(y, _)| y as f64).collect();
        for t in 0..n {
            let res: Vec<f64> = pixels.iter().map(|&(y, x)| once.get(t, y, x)).collect();
            for basis in [&ones, &xs, &ys] {
                prop_assert!(cosine(&res, basis) < 1e-10);
            }
        }
    }

    #[test]
    fn compare_is_a_premetric(a in prop::collection::vec(1e-6f64..1e3, 12..40), seed in any::<u64>()) {
        let freqs: Vec<f64> = (1..=a.len()).map(|k| k as f64 * 0.5).collect();
        let b: Vec<f64> = gaussian(a.len(), seed).iter().zip(&a).map(|(g, v)| v * (0.5 * g).exp()).collect();
        let ca = TpsdCurve { freqs: freqs.clone(), power: a, df: 0.5 };
        let cb = TpsdCurve { freqs, power: b, df: 0.5 };
        let same = compare_tpsd(&ca, &ca).unwrap();
        prop_assert_eq!(same.integrated_error, 0.0);
        prop_assert_eq!(same.total_power_error, 0.0);
        prop_assert_eq!(same.max_band_log_ratio, 0.0);
        let ab = compare_tpsd(&ca, &cb).unwrap();
        let ba = compare_tpsd(&cb, &ca).unwrap();
        prop_assert!(ab.integrated_error >= 0.0 && ab.total_power_error >= 0.0);
        prop_assert!((ab.max_band_log_ratio - ba.max_band_log_ratio).abs() <= 1e-12 * ab.max_band_log_ratio.max(1.0));
    }

    #[test]
    fn aggregate_tpsd_ignores_pixel_order(h in 2usize..6, w in 2usize..6, seed in any::<u64>()) {
        let g = Geometry::full(h, w, 1e-3, 1e-3);
        let n = 128;
        let s = random_series(g.clone(), n, seed);
        let npix = h * w;
        let mut perm: Vec<usize> = (0..npix).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
        let mut frames = vec![0.0; n * npix];
        for t in 0..n {
            for (i, &j) in perm.iter().enumerate() {
                frames[t * npix + i] = s.frames[t * npix + j];
            }
        }
        let shuffled = WavefrontSeries::new(g, n, frames, "shuffled").unwrap();
        let params = WelchParams { segment_len: 32, overlap: 0.5 };
        let a = aggregate_tpsd(&s, params).unwrap();
        let b = aggregate_tpsd(&shuffled, params).unwrap();
        for (x, y) in a.power.iter().zip(&b.power) {
            prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1e-300));
        }
    }

    #[test]
    fn noise_is_deterministic_and_extends(r in 1usize..8, n in 1usize..50, more in 0usize..50, seed in any::<u64>()) {
        let short = generate_noise(r, n, seed);
        prop_assert_eq!(&short, &generate_noise(r, n, seed));
        let long = generate_noise(r, n + more, seed);
        prop_assert_eq!(long.columns(0, n).into_owned(), short);
        prop_assert_ne!(generate_noise(r, n, seed), generate_noise(r, n, seed.wrapping_add(1)));
    }

    // Single-segment Welch against a direct DFT and against the time-domain
    // energy of the windowed segment.
    #[test]
    fn welch_matches_direct_dft_and_parseval(log_n in 3u32..8, seed in any::<u64>(), dt in 1e-4f64..1.0) {
        let n = 1usize << log_n;
        let x = gaussian(n, seed);
        let psd = welch_psd(&x, dt, WelchParams { segment_len: n, overlap: 0.5 }).unwrap();

        let mean = x.iter().sum::<f64>() / n as f64;
        let w: Vec<f64> = (0..n).map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()).collect();
        let y: Vec<f64> = x.iter().zip(&w).map(|(v, wi)| (v - mean) * wi).collect();
        let w2: f64 = w.iter().map(|v| v * v).sum();
        let dft = |k: usize| -> (f64, f64) {
            y.iter().enumerate().fold((0.0, 0.0), |(re, im), (i, v)| {
                let ph = -2.0 * std::f64::consts::PI * (k * i) as f64 / n as f64;
                (re + v * ph.cos(), im + v * ph.sin())
            })
        };
        for k in 1..=n / 2 {
            let (re, im) = dft(k);
            let mut expect = 2.0 * dt * (re * re + im * im) / w2;
            if k == n / 2 {
                expect *= 0.5;
            }
            prop_assert!((psd.power[k - 1] - expect).abs() <= 1e-9 * expect.max(1e-12));
            prop_assert!((psd.freqs[k - 1] - k as f64 / (n as f64 * dt)).abs() <= 1e-12 * psd.freqs[k - 1]);
        }
        let (re0, im0) = dft(0);
        let energy: f64 = y.iter().map(|v| v * v).sum();
        let expect_total = (n as f64 * energy - (re0 * re0 + im0 * im0)) / (n as f64 * w2);
        let total: f64 = psd.power.iter().sum::<f64>() * psd.df;
        prop_assert!((total - expect_total).abs() <= 1e-9 * expect_total);
    }

    #[test]
    fn eigenvalue_scaling_scales_radius(r in 1usize..5, p in 1usize..4, seed in any::<u64>(), rho in 0.1f64..0.99) {
        let g = gaussian(r * r * p, seed);
        let coeffs = (0..p).map(|i| DMatrix::from_column_slice(r, r, &g[i * r * r..(i + 1) * r * r]) * 0.3).collect();
        let mut var = VarModel::new(coeffs).unwrap();
        let before = var.stability().spectral_radius;
        var.scale_eigenvalues(rho);
        let after = var.stability().spectral_radius;
        prop_assert!((after - rho * before).abs() <= 1e-8 * before.max(1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn fitted_model_file_round_trip(seed in any::<u64>(), circ in any::<bool>(), transpose in any::<bool>()) {
        let g = if circ { Geometry::circular(8, 8, 1e-4, 1e-3) } else { Geometry::full(6, 7, 1e-4, 1e-3) };
        let mut s = random_series(g, 600, seed);
        for v in &mut s.frames {
            *v *= 1e-7;
        }
        let cfg = FitConfig { transpose, energy_threshold: 0.95, ..FitConfig::default() };
        let (model, _) = fit_revar(&s, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.rvm");
        save_model(&model, &path).unwrap();
        prop_assert_eq!(load_model(&path).unwrap(), model);
    }
}
