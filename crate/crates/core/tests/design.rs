use firreg::design::{
    build_regularisation_filter_matrix, design_cheby1, design_fir_windowed, regularisation_gram, BandKind, BandSpec,
};
use firreg::linalg::frobenius;
use firreg::spectrum::uniform_grid;
use firreg::Error;
use proptest::prelude::*;

fn band_strategy() -> impl Strategy<Value = BandSpec> {
    (0usize..4, 0.03f64..0.22, 0.03f64..0.22).prop_map(|(kind, a, w)| match kind {
        0 => BandSpec::low_pass(a).unwrap(),
        1 => BandSpec::high_pass(0.5 - a).unwrap(),
        2 => BandSpec::band_pass(a, a + w).unwrap(),
        _ => BandSpec::band_stop(a, a + w).unwrap(),
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn filter_matrix_structure(
        band in band_strategy(),
        half_p in 1usize..8,
        extra in 1usize..20,
        alpha in 0.5f64..1.0,
        lambda in 0.01f64..100.0,
    ) {
        let p = 2 * half_p;
        let n = p + extra;
        let fir = design_fir_windowed(p, &band).unwrap();
        prop_assert_eq!(fir.coefficients.len(), p + 1);
        let f = build_regularisation_filter_matrix(&fir, n, alpha).unwrap();
        for i in 0..n {
            let scale = alpha.powf(-((i + 1) as f64) / 2.0);
            for j in 0..n {
                let expected = if j >= i && j - i <= p { scale * fir.coefficients[j - i] } else { 0.0 };
                prop_assert!((f.matrix()[(i, j)] - expected).abs() <= 1e-12 * scale);
            }
        }
        let g = regularisation_gram(&fir, n, alpha, lambda).unwrap();
        let direct = f.gram() * lambda;
        prop_assert!(frobenius(&(g - &direct)) <= 1e-10 * frobenius(&direct));
    }

    #[test]
    fn windowed_gain_normalisation(band in band_strategy(), half_p in 2usize..16) {
        let fir = design_fir_windowed(2 * half_p, &band).unwrap();
        let reference = match band.kind {
            BandKind::LowPass | BandKind::BandStop => fir.magnitude(0.0),
            BandKind::HighPass => fir.magnitude(0.5),
            _ => {
                let (lo, hi) = band.passbands()[0];
                fir.magnitude(0.5 * (lo + hi))
            }
        };
        prop_assert!((reference - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn chebyshev_designs_are_stable(band in band_strategy(), order in 1usize..4) {
        let order = if matches!(band.kind, BandKind::BandPass | BandKind::BandStop) { 2 * order } else { order };
        let sys = design_cheby1(order, 1.0, &band).unwrap();
        prop_assert!(sys.is_stable());
        prop_assert_eq!(sys.a.len(), order + 1);
        let peak = sys.frequency_response(&uniform_grid(2001)).into_iter().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(peak <= 1e-6, "peak {peak} dB");
    }
}

#[test]
fn odd_order_cannot_pass_nyquist() {
    let band = BandSpec::high_pass(0.3).unwrap();
    assert!(matches!(design_fir_windowed(5, &band), Err(Error::Parameter(_))));
    assert!(design_fir_windowed(6, &band).is_ok());
}

#[test]
fn multi_band_stop_attenuates_both_bands() {
    let fir = design_fir_windowed(30, &BandSpec::multi_band_stop(vec![0.1, 0.2, 0.35, 0.45]).unwrap()).unwrap();
    assert!((fir.magnitude(0.0) - 1.0).abs() < 1e-12);
    assert!(fir.magnitude_db(0.15) < -20.0);
    assert!(fir.magnitude_db(0.4) < -20.0);
    assert!(fir.magnitude_db(0.275).abs() < 1.0);
}
