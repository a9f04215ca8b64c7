use fdlp_core::dsp::{
    autocorrelation, dct, hilbert_envelope, idct, levinson_durbin, make_mel_windows, subband_coeffs, FdlpAnalyzer,
    FdlpConfig,
};
use fdlp_core::envelope::pearson;
use fdlp_core::rng::gaussian_vec;
use fdlp_core::synth::{am_tone, white_noise};
use proptest::prelude::*;

fn dense_lp(r: &[f64], p: usize) -> Vec<f64> {
    let mut m: Vec<Vec<f64>> = (0..p)
        .map(|i| {
            let mut row: Vec<f64> = (0..p).map(|j| r[i.abs_diff(j)]).collect();
            row.push(-r[i + 1]);
            row
        })
        .collect();
    for c in 0..p {
        let piv = (c..p).max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs())).unwrap();
        m.swap(c, piv);
        for i in c + 1..p {
            let f = m[i][c] / m[c][c];
            for j in c..=p {
                m[i][j] -= f * m[c][j];
            }
        }
    }
    let mut a = vec![0.0; p];
    for i in (0..p).rev() {
        let s: f64 = (i + 1..p).map(|j| m[i][j] * a[j]).sum();
        a[i] = (m[i][p] - s) / m[i][i];
    }
    a
}

fn cv(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt() / mean
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn dct_round_trip(seed in any::<u64>(), n in prop::sample::select(vec![4usize, 17, 256, 1000])) {
        let x = gaussian_vec(seed, n);
        let back = idct(&dct(&x).unwrap()).unwrap();
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let err = x.iter().zip(&back).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        prop_assert!(err <= 1e-10 * norm);
    }

    #[test]
    fn dct_is_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let x = gaussian_vec(seed, 300);
        let y = gaussian_vec(seed.wrapping_add(1), 300);
        let mix: Vec<f64> = x.iter().zip(&y).map(|(u, v)| a * u + b * v).collect();
        let (dx, dy, dm) = (dct(&x).unwrap(), dct(&y).unwrap(), dct(&mix).unwrap());
        for i in 0..300 {
            prop_assert!((dm[i] - (a * dx[i] + b * dy[i])).abs() < 1e-10);
        }
    }

    #[test]
    fn levinson_matches_dense_solve(seed in any::<u64>(), order in 1usize..=160) {
        let x = gaussian_vec(seed, 2 * order + 40);
        let r = autocorrelation(&x, order).unwrap();
        let m = levinson_durbin(&r, order).unwrap();
        let dense = dense_lp(&r, order);
        for (a, b) in m.coefficients[1..].iter().zip(&dense) {
            prop_assert!((a - b).abs() < 1e-8);
        }
        prop_assert!(m.reflection.iter().all(|k| k.abs() < 1.0));
        prop_assert!(m.error_gain >= 0.0);
    }

    #[test]
    fn autocorrelation_is_homogeneous_and_peaks_at_zero(seed in any::<u64>(), c in -5.0f64..5.0) {
        let x = gaussian_vec(seed, 200);
        let scaled: Vec<f64> = x.iter().map(|v| c * v).collect();
        let r = autocorrelation(&x, 50).unwrap();
        let rs = autocorrelation(&scaled, 50).unwrap();
        for (a, b) in r.iter().zip(&rs) {
            prop_assert!((b - c * c * a).abs() <= 1e-9 * (1.0 + b.abs()));
        }
        prop_assert!(r.iter().all(|v| v.abs() <= r[0] + 1e-12));
    }
}

#[test]
fn autocorrelation_fast_path_matches_double_loop() {
    let x = gaussian_vec(3, 1000);
    let r = autocorrelation(&x, 200).unwrap();
    for (t, v) in r.iter().enumerate() {
        let direct: f64 = (0..x.len() - t).map(|k| x[k] * x[k + t]).sum();
        assert!((v - direct).abs() < 1e-10, "lag {t}");
    }
}

#[test]
fn am_tone_envelope_tracks_hilbert_oracle() {
    let an = FdlpAnalyzer::new(FdlpConfig::default()).unwrap();
    let centers = an.bank().centers_hz();
    let band = 20;
    let tone = am_tone(centers[band], 4.0, 0.8, 0.3, 16_000, 32_000);
    let env = an.analyze(&tone).unwrap();
    let h = hilbert_envelope(&an.subband_signal(&tone, band).unwrap()).unwrap();
    let oracle: Vec<f64> = h.chunks(40).map(|c| c.iter().sum::<f64>() / 40.0).collect();
    assert!(pearson(&env.band(band), &oracle) >= 0.95);
}

#[test]
fn white_noise_envelopes_are_no_rougher_than_the_hilbert_oracle() {
    let an = FdlpAnalyzer::new(FdlpConfig::default()).unwrap();
    let x = white_noise(21, 32_000, 16_000, 0.1);
    let env = an.analyze(&x).unwrap();
    let mut across = vec![0.0; env.num_samples()];
    for q in 0..env.num_bands() {
        let band = env.band(q);
        let h = hilbert_envelope(&an.subband_signal(&x, q).unwrap()).unwrap();
        let oracle: Vec<f64> = h.chunks(40).map(|c| c.iter().sum::<f64>() / 40.0).collect();
        assert!(cv(&band) <= 1.25 * cv(&oracle), "band {q}: {} vs {}", cv(&band), cv(&oracle));
        let mean = band.iter().sum::<f64>() / band.len() as f64;
        for (a, v) in across.iter_mut().zip(&band) {
            *a += v / mean / env.num_bands() as f64;
        }
    }
    assert!(cv(&across) < 0.5, "{}", cv(&across));
}

#[test]
fn disjoint_bands_have_disjoint_outputs() {
    let bank = make_mel_windows(36, 200.0, 6500.0, 16_000.0, 32_000).unwrap();
    let ones = vec![1.0; 32_000];
    let a = subband_coeffs(&ones, &bank, 3).unwrap();
    let b = subband_coeffs(&ones, &bank, 7).unwrap();
    assert!(a.iter().zip(&b).all(|(x, y)| x * y == 0.0));
}

#[test]
fn analysis_is_deterministic_across_thread_counts() {
    let x = white_noise(5, 32_000, 16_000, 0.1);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| FdlpAnalyzer::new(FdlpConfig::default()).unwrap().analyze(&x).unwrap())
    };
    assert_eq!(run(1), run(3));
}
