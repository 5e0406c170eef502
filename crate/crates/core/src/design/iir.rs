//! Chebyshev type-I IIR design: analog prototype, frequency transformation,
//! prewarped bilinear transform, all in zero-pole-gain form.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::fir::{BandKind, BandSpec};
use super::system::SystemSpec;
use crate::error::{Error, Result};

struct Zpk {
    zeros: Vec<Complex64>,
    poles: Vec<Complex64>,
    gain: f64,
}

fn prod_neg(v: &[Complex64]) -> Complex64 {
    v.iter().fold(Complex64::new(1.0, 0.0), |acc, x| acc * -x)
}

fn analog_prototype(order: usize, ripple_db: f64) -> Zpk {
    let eps = (10f64.powf(0.1 * ripple_db) - 1.0).sqrt();
    let mu = (1.0 / eps).asinh() / order as f64;
    let poles: Vec<Complex64> = (0..order)
        .map(|i| {
            let m = -(order as f64) + 1.0 + 2.0 * i as f64;
            let theta = PI * m / (2.0 * order as f64);
            -Complex64::new(mu, theta).sinh()
        })
        .collect();
    let mut gain = prod_neg(&poles).re;
    if order.is_multiple_of(2) {
        gain /= (1.0 + eps * eps).sqrt();
    }
    Zpk {
        zeros: Vec::new(),
        poles,
        gain,
    }
}

fn lp2lp(z: Zpk, wo: f64) -> Zpk {
    let degree = (z.poles.len() - z.zeros.len()) as i32;
    Zpk {
        zeros: z.zeros.iter().map(|x| x * wo).collect(),
        poles: z.poles.iter().map(|x| x * wo).collect(),
        gain: z.gain * wo.powi(degree),
    }
}

fn lp2hp(z: Zpk, wo: f64) -> Zpk {
    let degree = z.poles.len() - z.zeros.len();
    let gain = z.gain * (prod_neg(&z.zeros) / prod_neg(&z.poles)).re;
    let mut zeros: Vec<Complex64> = z.zeros.iter().map(|x| wo / x).collect();
    zeros.extend(std::iter::repeat_n(Complex64::new(0.0, 0.0), degree));
    Zpk {
        zeros,
        poles: z.poles.iter().map(|x| wo / x).collect(),
        gain,
    }
}

fn split_quadratic(roots: &[Complex64], wo: f64) -> Vec<Complex64> {
    let plus = roots.iter().map(|r| r + (r * r - wo * wo).sqrt());
    let minus = roots.iter().map(|r| r - (r * r - wo * wo).sqrt());
    plus.chain(minus).collect()
}

fn lp2bp(z: Zpk, wo: f64, bw: f64) -> Zpk {
    let degree = z.poles.len() - z.zeros.len();
    let zl: Vec<Complex64> = z.zeros.iter().map(|x| x * bw / 2.0).collect();
    let pl: Vec<Complex64> = z.poles.iter().map(|x| x * bw / 2.0).collect();
    let mut zeros = split_quadratic(&zl, wo);
    zeros.extend(std::iter::repeat_n(Complex64::new(0.0, 0.0), degree));
    Zpk {
        zeros,
        poles: split_quadratic(&pl, wo),
        gain: z.gain * bw.powi(degree as i32),
    }
}

fn lp2bs(z: Zpk, wo: f64, bw: f64) -> Zpk {
    let degree = z.poles.len() - z.zeros.len();
    let gain = z.gain * (prod_neg(&z.zeros) / prod_neg(&z.poles)).re;
    let zh: Vec<Complex64> = z.zeros.iter().map(|x| (bw / 2.0) / x).collect();
    let ph: Vec<Complex64> = z.poles.iter().map(|x| (bw / 2.0) / x).collect();
    let mut zeros = split_quadratic(&zh, wo);
    zeros.extend(std::iter::repeat_n(Complex64::new(0.0, wo), degree));
    zeros.extend(std::iter::repeat_n(Complex64::new(0.0, -wo), degree));
    Zpk {
        zeros,
        poles: split_quadratic(&ph, wo),
        gain,
    }
}

/// Bilinear transform with sampling rate 2 (so `s = 4 (z − 1)/(z + 1)`).
fn bilinear(z: Zpk) -> Zpk {
    let fs2 = Complex64::new(4.0, 0.0);
    let degree = z.poles.len() - z.zeros.len();
    let num = z.zeros.iter().fold(Complex64::new(1.0, 0.0), |acc, x| acc * (fs2 - x));
    let den = z.poles.iter().fold(Complex64::new(1.0, 0.0), |acc, x| acc * (fs2 - x));
    let mut zeros: Vec<Complex64> = z.zeros.iter().map(|x| (fs2 + x) / (fs2 - x)).collect();
    zeros.extend(std::iter::repeat_n(Complex64::new(-1.0, 0.0), degree));
    Zpk {
        zeros,
        poles: z.poles.iter().map(|x| (fs2 + x) / (fs2 - x)).collect(),
        gain: z.gain * (num / den).re,
    }
}

/// Monic polynomial with the given roots, highest power first.
fn poly(roots: &[Complex64]) -> Vec<f64> {
    let mut c = vec![Complex64::new(1.0, 0.0)];
    for r in roots {
        c.push(Complex64::new(0.0, 0.0));
        for k in (1..c.len()).rev() {
            let prev = c[k - 1];
            c[k] -= r * prev;
        }
    }
    c.iter().map(|v| v.re).collect()
}

/// Chebyshev type-I design of total order `order` with `ripple_db` of
/// passband ripple. Band-pass and band-stop designs need an even order
/// (they double the prototype order).
pub fn design_cheby1(order: usize, ripple_db: f64, band: &BandSpec) -> Result<SystemSpec> {
    if order < 1 {
        return Err(Error::param("Chebyshev order must be at least 1"));
    }
    if !(ripple_db > 0.0) || !ripple_db.is_finite() {
        return Err(Error::param(format!("ripple must be positive, got {ripple_db}")));
    }
    band.validate()?;
    let warp = |f: f64| 4.0 * (PI * f).tan();
    let zpk = match band.kind {
        BandKind::LowPass => lp2lp(analog_prototype(order, ripple_db), warp(band.edges[0])),
        BandKind::HighPass => lp2hp(analog_prototype(order, ripple_db), warp(band.edges[0])),
        BandKind::BandPass | BandKind::BandStop => {
            if order % 2 == 1 {
                return Err(Error::param(format!(
                    "band designs need an even total order, got {order}"
                )));
            }
            let (w1, w2) = (warp(band.edges[0]), warp(band.edges[1]));
            let proto = analog_prototype(order / 2, ripple_db);
            let (wo, bw) = ((w1 * w2).sqrt(), w2 - w1);
            if band.kind == BandKind::BandPass {
                lp2bp(proto, wo, bw)
            } else {
                lp2bs(proto, wo, bw)
            }
        }
        BandKind::MultiBandStop => {
            return Err(Error::param("Chebyshev designs do not support multi-band stop"));
        }
    };
    let d = bilinear(zpk);
    if d.poles.iter().any(|p| !(p.norm() < 1.0)) {
        return Err(Error::Design("designed filter has a pole on or outside the unit circle".into()));
    }
    let b: Vec<f64> = poly(&d.zeros).into_iter().map(|v| v * d.gain).collect();
    let a = poly(&d.poles);
    let name = format!("cheby1-{order}-{:?}", band.kind).to_ascii_lowercase();
    SystemSpec::new(name, b, a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::uniform_grid;

    fn assert_coeffs(got: &[f64], want: &[f64], tol: f64) {
        assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() <= tol * w.abs().max(1.0), "{g} vs {w}");
        }
    }

    // Reference outputs from tests/oracles/reference_designs.py.
    #[test]
    fn low_pass_reference() {
        let s = design_cheby1(2, 1.0, &BandSpec::low_pass(0.05).unwrap()).unwrap();
        assert_coeffs(
            &s.b,
            &[0.020515223631714947, 0.041030447263429894, 0.020515223631714947],
            1e-12,
        );
        assert_coeffs(&s.a, &[1.0, -1.6185196386155332, 0.7105934766511969], 1e-12);
    }

    #[test]
    fn band_pass_references() {
        let s = design_cheby1(4, 1.0, &BandSpec::band_pass(0.1, 0.15).unwrap()).unwrap();
        assert_coeffs(
            &s.b,
            &[0.02051522363171495, 0.0, -0.0410304472634299, 0.0, 0.02051522363171495],
            1e-10,
        );
        assert_coeffs(
            &s.a,
            &[1.0, -2.590574039559878, 3.3248326477273134, -2.1761896497304845, 0.710593476651197],
            1e-10,
        );
        let s = design_cheby1(4, 1.0, &BandSpec::band_pass(0.225, 0.275).unwrap()).unwrap();
        assert_coeffs(
            &s.b,
            &[0.020515223631714968, 0.0, -0.041030447263429935, 0.0, 0.020515223631714968],
            1e-10,
        );
        assert_coeffs(&s.a, &[1.0, 0.0, 1.618519638615533, 0.0, 0.7105934766511967], 1e-10);
        let s = design_cheby1(4, 1.0, &BandSpec::band_pass(0.35, 0.4).unwrap()).unwrap();
        assert_coeffs(
            &s.a,
            &[1.0, 2.5905740395598778, 3.3248326477273116, 2.176189649730483, 0.7105934766511965],
            1e-10,
        );
    }

    #[test]
    fn high_pass_and_resonance_references() {
        let s = design_cheby1(2, 1.0, &BandSpec::high_pass(0.45).unwrap()).unwrap();
        assert_coeffs(
            &s.b,
            &[0.020515223631714957, -0.041030447263429914, 0.020515223631714957],
            1e-12,
        );
        assert_coeffs(&s.a, &[1.0, 1.6185196386155327, 0.7105934766511965], 1e-12);
        let s = design_cheby1(2, 1.0, &BandSpec::band_pass(0.145, 0.15).unwrap()).unwrap();
        assert_coeffs(&s.b, &[0.029947695741426587, 0.0, -0.029947695741426587], 1e-10);
        assert_coeffs(&s.a, &[1.0, -1.1650217720464802, 0.9401046085171468], 1e-10);
        let s = design_cheby1(2, 1.0, &BandSpec::band_pass(0.395, 0.4).unwrap()).unwrap();
        assert_coeffs(&s.a, &[1.0, 1.5516633161438764, 0.9401046085171473], 1e-10);
    }

    #[test]
    fn band_stop_reference() {
        let s = design_cheby1(4, 0.5, &BandSpec::band_stop(0.1, 0.2).unwrap()).unwrap();
        assert_coeffs(
            &s.b,
            &[
                0.6865204735560838,
                -1.6971719465213329,
                2.4219508948151707,
                -1.6971719465213329,
                0.6865204735560838,
            ],
            1e-10,
        );
        assert_coeffs(
            &s.a,
            &[1.0, -2.0723478874122865, 2.4641910878270403, -1.523123525825939, 0.5556681577519139],
            1e-10,
        );
    }

    #[test]
    fn ripple_and_edges() {
        let cases = [
            (2, BandSpec::low_pass(0.05).unwrap()),
            (3, BandSpec::low_pass(0.2).unwrap()),
            (4, BandSpec::band_pass(0.225, 0.275).unwrap()),
            (2, BandSpec::high_pass(0.45).unwrap()),
        ];
        for (order, band) in cases {
            let s = design_cheby1(order, 1.0, &band).unwrap();
            let (lo, hi) = band.passbands()[0];
            let grid: Vec<f64> = uniform_grid(4001)
                .into_iter()
                .filter(|f| *f >= lo && *f <= hi)
                .collect();
            let db = s.frequency_response(&grid);
            let max = db.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let min = db.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(max <= 1e-9, "{band:?}: {max}");
            assert!((max - min - 1.0).abs() <= 0.05, "{band:?}: ripple {}", max - min);
            for e in &band.edges {
                let g = s.frequency_response(&[*e])[0];
                assert!((-1.1..=0.1).contains(&g), "{band:?} edge {e}: {g}");
            }
        }
    }

    #[test]
    fn parameter_errors() {
        assert!(design_cheby1(0, 1.0, &BandSpec::low_pass(0.1).unwrap()).is_err());
        assert!(design_cheby1(2, 0.0, &BandSpec::low_pass(0.1).unwrap()).is_err());
        assert!(design_cheby1(3, 1.0, &BandSpec::band_pass(0.1, 0.2).unwrap()).is_err());
    }
}
