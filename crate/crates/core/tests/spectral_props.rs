mod common;

use common::{circular_conv, column, dft, haar_pairs, idft_real, rng, uniform};
use proptest::prelude::*;
use wearec::spectral::{self, ComplexSpectrum, FftPlan};
use wearec::Matrix;

fn signal(n: usize, c: usize, seed: u64) -> Matrix<f64> {
    uniform(n, c, &mut rng(seed))
}

fn random_spectrum(n: usize, c: usize, seed: u64) -> ComplexSpectrum<f64> {
    let mut r = rng(seed);
    let bins = spectral::bin_count(n);
    ComplexSpectrum {
        re: uniform(bins, c, &mut r),
        im: uniform(bins, c, &mut r),
        n_origin: n,
    }
}

fn spectrum_dot(a: &ComplexSpectrum<f64>, b: &ComplexSpectrum<f64>) -> f64 {
    a.re.dot(&b.re) + a.im.dot(&b.im)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rfft_round_trip(n in 2usize..96, c in 1usize..4, seed in any::<u64>()) {
        let x = signal(n, c, seed);
        let plan = FftPlan::new(n).unwrap();
        let back = plan.irfft(&plan.rfft(&x).unwrap()).unwrap();
        prop_assert!(back.max_abs_diff(&x) <= 1e-12);
    }

    #[test]
    fn rfft_matches_direct_dft(n in 2usize..48, seed in any::<u64>()) {
        let x = signal(n, 2, seed);
        let spec = spectral::rfft(&x).unwrap();
        prop_assert_eq!(spec.bins(), n / 2 + 1);
        for ch in 0..2 {
            let full = dft(&column(&x, ch));
            for m in 0..spec.bins() {
                prop_assert!((spec.re.get(m, ch) - full[m].0).abs() <= 1e-10);
                prop_assert!((spec.im.get(m, ch) - full[m].1).abs() <= 1e-10);
            }
            prop_assert_eq!(spec.im.get(0, ch), 0.0);
            if n % 2 == 0 {
                prop_assert_eq!(spec.im.get(n / 2, ch), 0.0);
            }
        }
    }

    #[test]
    fn irfft_matches_hermitian_extension(n in 2usize..48, seed in any::<u64>()) {
        let mut spec = random_spectrum(n, 1, seed);
        spec.im.set(0, 0, 0.0);
        if n % 2 == 0 {
            spec.im.set(n / 2, 0, 0.0);
        }
        let mut full = vec![(0.0, 0.0); n];
        for (m, f) in full.iter_mut().enumerate() {
            *f = if m < spec.bins() {
                (spec.re.get(m, 0), spec.im.get(m, 0))
            } else {
                (spec.re.get(n - m, 0), -spec.im.get(n - m, 0))
            };
        }
        let oracle = idft_real(&full);
        let got = spectral::irfft(&spec, n).unwrap();
        for t in 0..n {
            prop_assert!((got.get(t, 0) - oracle[t]).abs() <= 1e-12);
        }
    }

    #[test]
    fn rfft_is_linear(n in 2usize..64, a in -3.0f64..3.0, b in -3.0f64..3.0, seed in any::<u64>()) {
        let (x, y) = (signal(n, 2, seed), signal(n, 2, seed.wrapping_add(1)));
        let combo = x.zip_map(&y, |u, v| a * u + b * v);
        let (sx, sy, sc) = (spectral::rfft(&x).unwrap(), spectral::rfft(&y).unwrap(), spectral::rfft(&combo).unwrap());
        let re = sx.re.zip_map(&sy.re, |u, v| a * u + b * v);
        let im = sx.im.zip_map(&sy.im, |u, v| a * u + b * v);
        prop_assert!(sc.re.max_abs_diff(&re) <= 1e-10);
        prop_assert!(sc.im.max_abs_diff(&im) <= 1e-10);
    }

    #[test]
    fn fourier_adjoints(n in 2usize..64, c in 1usize..3, seed in any::<u64>()) {
        let plan = FftPlan::new(n).unwrap();
        let x = signal(n, c, seed);
        let g = random_spectrum(n, c, seed.wrapping_add(7));
        let lhs = spectrum_dot(&plan.rfft(&x).unwrap(), &g);
        let rhs = x.dot(&plan.rfft_adjoint(&g).unwrap());
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));

        let s = random_spectrum(n, c, seed.wrapping_add(11));
        let y = signal(n, c, seed.wrapping_add(13));
        let lhs = plan.irfft(&s).unwrap().dot(&y);
        let rhs = spectrum_dot(&s, &plan.irfft_adjoint(&y).unwrap());
        // irfft ignores the imaginary parts of DC and Nyquist, and so does its adjoint
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
    }

    #[test]
    fn spectral_filter_is_circular_convolution(n in 2usize..40, seed in any::<u64>()) {
        let plan = FftPlan::new(n).unwrap();
        let x = signal(n, 1, seed);
        let mut r = rng(seed.wrapping_add(3));
        let gain = uniform(plan.bins(), 1, &mut r);
        let mut spec = plan.rfft(&x).unwrap();
        for m in 0..spec.bins() {
            spec.re.set(m, 0, spec.re.get(m, 0) * gain.get(m, 0));
            spec.im.set(m, 0, spec.im.get(m, 0) * gain.get(m, 0));
        }
        let filtered = plan.irfft(&spec).unwrap();
        let kernel = plan
            .irfft(&ComplexSpectrum { re: gain, im: Matrix::zeros(plan.bins(), 1), n_origin: n })
            .unwrap();
        let oracle = circular_conv(&column(&kernel, 0), &column(&x, 0));
        for t in 0..n {
            prop_assert!((filtered.get(t, 0) - oracle[t]).abs() <= 1e-10);
        }
    }

    #[test]
    fn parseval_and_convolution_theorem(n in 2usize..64, seed in any::<u64>()) {
        let (h, x) = (signal(n, 1, seed), signal(n, 1, seed.wrapping_add(1)));
        prop_assert!(spectral::parseval_residual(&x).unwrap() <= 1e-10);
        prop_assert!(spectral::convolution_theorem_residual(&h, &x).unwrap() <= 1e-10);
    }

    #[test]
    fn haar_matches_pairwise_formulas(half in 1usize..48, c in 1usize..4, seed in any::<u64>()) {
        let x = signal(2 * half, c, seed);
        let w = spectral::haar_dwt(&x).unwrap();
        for ch in 0..c {
            let (a, d) = haar_pairs(&column(&x, ch));
            for m in 0..half {
                prop_assert!((w.approx.get(m, ch) - a[m]).abs() <= 1e-14);
                prop_assert!((w.detail.get(m, ch) - d[m]).abs() <= 1e-14);
            }
        }
        let energy = w.approx.dot(&w.approx) + w.detail.dot(&w.detail);
        prop_assert!((energy - x.dot(&x)).abs() <= 1e-10);
        prop_assert!(spectral::haar_idwt(&w).unwrap().max_abs_diff(&x) <= 1e-12);
    }

    #[test]
    fn haar_adjoints(half in 1usize..32, seed in any::<u64>()) {
        let n = 2 * half;
        let x = signal(n, 2, seed);
        let mut r = rng(seed.wrapping_add(5));
        let g = spectral::WaveletPair { approx: uniform(half, 2, &mut r), detail: uniform(half, 2, &mut r), n_origin: n };
        let w = spectral::haar_dwt(&x).unwrap();
        let lhs = w.approx.dot(&g.approx) + w.detail.dot(&g.detail);
        let rhs = x.dot(&spectral::haar_dwt_adjoint(&g).unwrap());
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }
}

#[test]
fn impulse_and_constant_spectra() {
    for n in [2, 5, 8, 13] {
        let mut impulse = Matrix::<f64>::zeros(n, 1);
        impulse.set(0, 0, 1.0);
        let s = spectral::rfft(&impulse).unwrap();
        for m in 0..s.bins() {
            assert!((s.re.get(m, 0) - 1.0).abs() < 1e-15 && s.im.get(m, 0).abs() < 1e-15);
        }
        let constant = Matrix::<f64>::filled(n, 1, 2.5);
        let s = spectral::rfft(&constant).unwrap();
        assert!((s.re.get(0, 0) - 2.5 * n as f64).abs() < 1e-12);
        for m in 1..s.bins() {
            assert!(s.re.get(m, 0).abs() < 1e-12 && s.im.get(m, 0).abs() < 1e-12);
        }
    }
}

#[test]
fn short_or_odd_inputs_are_rejected() {
    assert!(spectral::rfft(&Matrix::<f64>::zeros(1, 1)).is_err());
    assert!(spectral::haar_dwt(&Matrix::<f64>::zeros(5, 1)).is_err());
    assert!(spectral::irfft(&ComplexSpectrum::<f64>::zeros(8, 1), 9).is_err());
}
