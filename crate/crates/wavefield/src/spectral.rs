//! Frequency-domain and phase-based wave analysis: per-pixel DFT spectra,
//! per-class average spectra, Hilbert-transform instantaneous phase, and
//! normalized wavelength statistics.

use std::collections::BTreeMap;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Result, WaveError};
use crate::field::{Field, Real};
use crate::models::Rollout;

/// One-sided amplitude spectrum, DC dropped: bins 1..=T/2.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub amplitudes: Vec<Real>,
    /// Frequency resolution in Hz (1 / (T * dt)).
    pub bin_hz: Real,
}

impl Spectrum {
    pub fn bins(&self) -> usize {
        self.amplitudes.len()
    }
}

/// Instantaneous phase of one timestep plus its normalized-wavelength field.
/// `excluded` flags pixels whose time series was identically zero (phase
/// undefined); they are left out of wavelength statistics.
#[derive(Debug, Clone)]
pub struct PhaseField {
    /// 1-channel field of phases in (-pi, pi].
    pub phase: Field,
    /// Per-pixel normalized wavelength, >= 0, capped at `WAVELENGTH_CAP`.
    pub wavelength_norm: Field,
    pub excluded: Vec<bool>,
}

/// Cap on the normalized wavelength where the phase gradient vanishes.
pub const WAVELENGTH_CAP: Real = 64.0;

/// Unnormalized one-sided DFT amplitudes of an even-length series, DC
/// dropped. Bin k holds `|sum_t x_t e^{-2 pi i k t / T}|` for k = 1..=T/2.
pub fn dft_amplitudes(series: &[Real], dt: Real) -> Result<Spectrum> {
    let t = series.len();
    if t < 4 || t % 2 != 0 {
        return Err(WaveError::InvalidArgument(format!(
            "dft_amplitudes needs an even length >= 4, got {t}"
        )));
    }
    let bins = t / 2;
    let mut amplitudes = Vec::with_capacity(bins);
    for k in 1..=bins {
        let mut re = 0.0f64;
        let mut im = 0.0f64;
        for (tt, &v) in series.iter().enumerate() {
            let theta = 2.0 * std::f64::consts::PI * k as f64 * tt as f64 / t as f64;
            re += v as f64 * theta.cos();
            im += v as f64 * theta.sin();
        }
        amplitudes.push((re * re + im * im).sqrt() as Real);
    }
    Ok(Spectrum {
        amplitudes,
        bin_hz: 1.0 / (t as Real * dt),
    })
}

/// Mean per-pixel spectrum for every class present in the masks, averaged
/// over all pixels (and hidden channels) carrying that label across the set.
/// Classes with zero pixels are simply absent from the map.
pub fn class_average_spectrum(
    rollouts: &[Rollout],
    masks: &[Vec<u8>],
    dt: Real,
) -> Result<BTreeMap<u8, Spectrum>> {
    if rollouts.len() != masks.len() {
        return Err(WaveError::ShapeMismatch(format!(
            "{} rollouts vs {} masks",
            rollouts.len(),
            masks.len()
        )));
    }
    let mut sums: BTreeMap<u8, (Vec<f64>, usize)> = BTreeMap::new();
    let mut bin_hz = 0.0;
    for (roll, mask) in rollouts.iter().zip(masks) {
        let (t, c, h, w) = roll.dims();
        if mask.len() != h * w {
            return Err(WaveError::ShapeMismatch(format!(
                "mask of {} pixels vs {}x{} rollout",
                mask.len(),
                h,
                w
            )));
        }
        let mut series = vec![0.0; t];
        for p in 0..h * w {
            let label = mask[p];
            for ch in 0..c {
                for tt in 0..t {
                    series[tt] = roll.frames[tt].data()[ch * h * w + p];
                }
                let spec = dft_amplitudes(&series, dt)?;
                bin_hz = spec.bin_hz;
                let entry = sums
                    .entry(label)
                    .or_insert_with(|| (vec![0.0; spec.bins()], 0));
                if entry.0.len() != spec.bins() {
                    return Err(WaveError::ShapeMismatch(
                        "rollouts differ in timestep count".into(),
                    ));
                }
                for (s, &a) in entry.0.iter_mut().zip(&spec.amplitudes) {
                    *s += a as f64;
                }
                entry.1 += 1;
            }
        }
    }
    Ok(sums
        .into_iter()
        .map(|(label, (sum, count))| {
            let amplitudes = sum.iter().map(|&s| (s / count as f64) as Real).collect();
            (
                label,
                Spectrum {
                    amplitudes,
                    bin_hz,
                },
            )
        })
        .collect())
}

/// Analytic signal of a real series via the frequency-domain Hilbert
/// transform: doubles positive frequencies, keeps DC and Nyquist, zeroes
/// negative frequencies.
pub fn analytic_signal(series: &[Real]) -> Vec<Complex<f64>> {
    let n = series.len();
    let mut buf: Vec<Complex<f64>> = series
        .iter()
        .map(|&v| Complex::new(v as f64, 0.0))
        .collect();
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, v) in buf.iter_mut().enumerate() {
        if k == 0 || (n % 2 == 0 && k == n / 2) {
            // keep
        } else if k < n.div_ceil(2) {
            *v *= 2.0;
        } else {
            *v = Complex::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let scale = 1.0 / n as f64;
    for v in &mut buf {
        *v *= scale;
    }
    buf
}

/// Per-pixel instantaneous phase of one hidden channel across the rollout.
/// Returns one [`PhaseField`] per timestep. Pixels whose series is
/// identically zero have no defined phase; they are flagged `excluded`.
pub fn hilbert_phase(roll: &Rollout, channel: usize) -> Result<Vec<PhaseField>> {
    let (t, c, h, w) = roll.dims();
    if t < 8 || t % 2 != 0 {
        return Err(WaveError::InvalidArgument(format!(
            "hilbert_phase needs an even T >= 8, got {t}"
        )));
    }
    if channel >= c {
        return Err(WaveError::ChannelMismatch {
            expected: c,
            got: channel,
        });
    }
    let n = h * w;
    let mut phases = vec![Field::zeros(1, h, w); t];
    let mut excluded = vec![false; n];
    let mut series = vec![0.0 as Real; t];
    for p in 0..n {
        for tt in 0..t {
            series[tt] = roll.frames[tt].data()[channel * n + p];
        }
        if series.iter().all(|&v| v == 0.0) {
            excluded[p] = true;
            continue;
        }
        let analytic = analytic_signal(&series);
        for tt in 0..t {
            let mut phi = analytic[tt].im.atan2(analytic[tt].re);
            if phi <= -std::f64::consts::PI {
                phi = std::f64::consts::PI;
            }
            phases[tt].data_mut()[p] = phi as Real;
        }
    }
    Ok(phases
        .into_iter()
        .map(|phase| {
            let wavelength_norm = wavelength_field(&phase);
            PhaseField {
                phase,
                wavelength_norm,
                excluded: excluded.clone(),
            }
        })
        .collect())
}

/// Wrap a phase difference to (-pi, pi]: rem_euclid lands in [0, 2pi), then
/// (pi, 2pi) folds down to (-pi, 0) while pi itself stays.
fn wrap_diff(d: Real) -> Real {
    let two_pi = 2.0 * std::f64::consts::PI as Real;
    let mut r = d.rem_euclid(two_pi);
    if r > std::f64::consts::PI as Real {
        r -= two_pi;
    }
    r
}

/// Normalized wavelength per pixel: `w = pi / max(|grad phi|, pi/CAP)` where
/// the gradient is the central difference with each pairwise phase difference
/// wrapped to (-pi, pi], and `|.|` is the max over the two axes. A checkerboard
/// (Nyquist) phase pattern gives w = 1; a flat phase saturates at the cap.
pub fn wavelength_field(phase: &Field) -> Field {
    let (h, w) = (phase.height(), phase.width());
    let eps = std::f64::consts::PI as Real / WAVELENGTH_CAP;
    let p = phase.channel(0);
    let mut out = Field::zeros(1, h, w);
    let diff = |a: Real, b: Real| wrap_diff(a - b);
    for y in 0..h {
        for x in 0..w {
            let gx = if w == 1 {
                0.0
            } else if x == 0 {
                diff(p[y * w + 1], p[y * w])
            } else if x == w - 1 {
                diff(p[y * w + x], p[y * w + x - 1])
            } else {
                0.5 * (diff(p[y * w + x + 1], p[y * w + x]) + diff(p[y * w + x], p[y * w + x - 1]))
            };
            let gy = if h == 1 {
                0.0
            } else if y == 0 {
                diff(p[w + x], p[x])
            } else if y == h - 1 {
                diff(p[y * w + x], p[(y - 1) * w + x])
            } else {
                0.5 * (diff(p[(y + 1) * w + x], p[y * w + x])
                    + diff(p[y * w + x], p[(y - 1) * w + x]))
            };
            let g = gx.abs().max(gy.abs()).max(eps);
            out.data_mut()[y * w + x] = std::f64::consts::PI as Real / g;
        }
    }
    out
}

/// Fraction of non-excluded pixels whose normalized wavelength exceeds
/// `threshold`.
pub fn long_wavelength_fraction(
    wavelength: &Field,
    excluded: Option<&[bool]>,
    threshold: Real,
) -> Result<Real> {
    if !(threshold > 0.0) {
        return Err(WaveError::InvalidArgument(
            "threshold must be positive".into(),
        ));
    }
    let n = wavelength.pixels();
    if n == 0 {
        return Err(WaveError::InvalidArgument("empty wavelength field".into()));
    }
    if let Some(ex) = excluded {
        if ex.len() != n {
            return Err(WaveError::ShapeMismatch(format!(
                "{} exclusion flags for {} pixels",
                ex.len(),
                n
            )));
        }
    }
    let mut total = 0usize;
    let mut long = 0usize;
    for p in 0..n {
        if excluded.map(|ex| ex[p]).unwrap_or(false) {
            continue;
        }
        total += 1;
        if wavelength.data()[p] > threshold {
            long += 1;
        }
    }
    if total == 0 {
        return Err(WaveError::InvalidArgument(
            "all pixels excluded from wavelength statistics".into(),
        ));
    }
    Ok(long as Real / total as Real)
}

/// Pearson product-moment correlation.
pub fn pearson(x: &[Real], y: &[Real]) -> Result<Real> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(WaveError::InvalidArgument(format!(
            "pearson needs two equal-length series of >= 2 points, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len() as f64;
    let mx = x.iter().map(|&v| v as f64).sum::<f64>() / n;
    let my = y.iter().map(|&v| v as f64).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        let dx = a as f64 - mx;
        let dy = b as f64 - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(WaveError::UndefinedCorrelation(
            "zero variance in a series".into(),
        ));
    }
    Ok((sxy / (sxx * syy).sqrt()) as Real)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rollout_from_series(series: &[Vec<Real>], h: usize, w: usize) -> Rollout {
        // series indexed [pixel][t], single channel
        let t = series[0].len();
        let frames = (0..t)
            .map(|tt| {
                let data: Vec<Real> = (0..h * w).map(|p| series[p][tt]).collect();
                Field::from_vec(1, h, w, data).unwrap()
            })
            .collect();
        Rollout { frames }
    }

    #[test]
    fn dft_basics() {
        // constant series: all amplitudes 0 (DC dropped)
        let s = vec![3.0; 16];
        let spec = dft_amplitudes(&s, 1.0).unwrap();
        assert_eq!(spec.bins(), 8);
        assert!(spec.amplitudes.iter().all(|&a| a.abs() < 1e-9));

        // exact-bin cosine concentrates in bin k with amplitude T/2
        let t = 100;
        let k = 7;
        let s: Vec<Real> = (0..t)
            .map(|tt| {
                (2.0 * std::f64::consts::PI * k as f64 * tt as f64 / t as f64).cos() as Real
            })
            .collect();
        let spec = dft_amplitudes(&s, 1.0).unwrap();
        assert_eq!(spec.bins(), 50);
        for (i, &a) in spec.amplitudes.iter().enumerate() {
            if i + 1 == k {
                assert!((a - t as Real / 2.0).abs() < 1e-9);
            } else {
                assert!(a < 1e-9, "bin {} amplitude {}", i + 1, a);
            }
        }

        assert!(dft_amplitudes(&[1.0, 2.0, 3.0], 1.0).is_err());
        assert!(dft_amplitudes(&[1.0, 2.0], 1.0).is_err());
    }

    #[test]
    fn parseval_sanity() {
        // sum of squared one-sided amplitudes, doubled for non-Nyquist bins
        // and with the DC term re-added, equals T * series energy.
        let t = 64;
        let series: Vec<Real> = (0..t)
            .map(|i| ((i as f64 * 0.37).sin() + 0.5 * (i as f64 * 1.1).cos()) as Real)
            .collect();
        let spec = dft_amplitudes(&series, 1.0).unwrap();
        let dc: f64 = series.iter().map(|&v| v as f64).sum();
        let mut total = dc * dc;
        for (i, &a) in spec.amplitudes.iter().enumerate() {
            let sq = (a as f64) * (a as f64);
            total += if i + 1 == t / 2 { sq } else { 2.0 * sq };
        }
        let energy: f64 = series.iter().map(|&v| (v as f64) * (v as f64)).sum();
        let rel = (total / t as f64 - energy).abs() / energy;
        assert!(rel < 1e-6, "parseval relative error {rel}");
    }

    #[test]
    fn class_average_matches_brute_force() {
        let t = 16;
        let (h, w) = (2, 3);
        let mut series = Vec::new();
        for p in 0..h * w {
            series.push(
                (0..t)
                    .map(|tt| ((tt * (p + 1)) as f64 * 0.7).sin() as Real)
                    .collect::<Vec<_>>(),
            );
        }
        let roll = rollout_from_series(&series, h, w);
        let mask = vec![0u8, 1, 1, 2, 0, 1];
        let result = class_average_spectrum(&[roll], &[mask.clone()], 1.0).unwrap();
        assert_eq!(result.keys().copied().collect::<Vec<_>>(), vec![0, 1, 2]);
        // brute force for class 1
        let pixels: Vec<usize> = mask
            .iter()
            .enumerate()
            .filter(|(_, &m)| m == 1)
            .map(|(p, _)| p)
            .collect();
        let mut expect = vec![0.0; t / 2];
        for &p in &pixels {
            let spec = dft_amplitudes(&series[p], 1.0).unwrap();
            for (e, &a) in expect.iter_mut().zip(&spec.amplitudes) {
                *e += a;
            }
        }
        for e in &mut expect {
            *e /= pixels.len() as Real;
        }
        for (got, want) in result[&1].amplitudes.iter().zip(&expect) {
            assert!((got - want).abs() < 1e-6);
        }
        // single pixel of class 2: spectrum verbatim
        let direct = dft_amplitudes(&series[3], 1.0).unwrap();
        for (got, want) in result[&2].amplitudes.iter().zip(&direct.amplitudes) {
            assert!((got - want).abs() < 1e-9);
        }
    }

    #[test]
    fn hilbert_phase_of_cosine() {
        // cos(2 pi k t / T) everywhere: phase(t) = 2 pi k t / T wrapped.
        let t = 64;
        let k = 5;
        let (h, w) = (2, 2);
        let series: Vec<Vec<Real>> = (0..h * w)
            .map(|_| {
                (0..t)
                    .map(|tt| {
                        (2.0 * std::f64::consts::PI * k as f64 * tt as f64 / t as f64).cos()
                            as Real
                    })
                    .collect()
            })
            .collect();
        let roll = rollout_from_series(&series, h, w);
        let phases = hilbert_phase(&roll, 0).unwrap();
        assert_eq!(phases.len(), t);
        for (tt, pf) in phases.iter().enumerate() {
            let expect = wrap_diff(2.0 * std::f64::consts::PI as Real * k as Real * tt as Real
                / t as Real);
            for p in 0..h * w {
                let got = pf.phase.data()[p];
                let d = wrap_diff(got - expect).abs();
                assert!(d < 1e-9, "t {tt} pixel {p}: {got} vs {expect}");
            }
        }

        // amplitude scaling leaves the phase unchanged
        let scaled: Vec<Vec<Real>> = series
            .iter()
            .map(|s| s.iter().map(|&v| 3.5 * v).collect())
            .collect();
        let roll2 = rollout_from_series(&scaled, h, w);
        let phases2 = hilbert_phase(&roll2, 0).unwrap();
        for (a, b) in phases.iter().zip(&phases2) {
            for p in 0..h * w {
                assert!((a.phase.data()[p] - b.phase.data()[p]).abs() < 1e-9);
            }
        }

        // sine lags cosine by pi/2
        let sine: Vec<Vec<Real>> = (0..h * w)
            .map(|_| {
                (0..t)
                    .map(|tt| {
                        (2.0 * std::f64::consts::PI * k as f64 * tt as f64 / t as f64).sin()
                            as Real
                    })
                    .collect()
            })
            .collect();
        let roll3 = rollout_from_series(&sine, h, w);
        let phases3 = hilbert_phase(&roll3, 0).unwrap();
        for (a, b) in phases.iter().zip(&phases3) {
            for p in 0..h * w {
                let lag = wrap_diff(a.phase.data()[p] - b.phase.data()[p]);
                assert!(
                    (lag - std::f64::consts::FRAC_PI_2 as Real).abs() < 1e-9,
                    "lag {lag}"
                );
            }
        }
    }

    #[test]
    fn hilbert_flags_degenerate_pixels() {
        let t = 16;
        let mut series: Vec<Vec<Real>> = vec![vec![0.0; t]; 4];
        for tt in 0..t {
            series[1][tt] = ((tt as f64) * 0.9).sin() as Real;
        }
        let roll = rollout_from_series(&series, 2, 2);
        let phases = hilbert_phase(&roll, 0).unwrap();
        assert!(phases[0].excluded[0]);
        assert!(!phases[0].excluded[1]);
        assert!(phases[0].excluded[2]);
    }

    #[test]
    fn wavelength_examples() {
        // linear ramp pi/2 per pixel -> w = 2 everywhere
        let (h, w) = (4, 6);
        let mut phase = Field::zeros(1, h, w);
        for y in 0..h {
            for x in 0..w {
                phase.data_mut()[y * w + x] =
                    wrap_diff(x as Real * std::f64::consts::FRAC_PI_2 as Real);
            }
        }
        let wl = wavelength_field(&phase);
        for &v in wl.data() {
            assert!((v - 2.0).abs() < 1e-9, "got {v}");
        }

        // checkerboard 0/pi -> w = 1 (Nyquist limit)
        let mut phase = Field::zeros(1, 4, 4);
        for y in 0..4 {
            for x in 0..4 {
                if (x + y) % 2 == 1 {
                    phase.data_mut()[y * 4 + x] = std::f64::consts::PI as Real;
                }
            }
        }
        let wl = wavelength_field(&phase);
        for &v in wl.data() {
            assert!((v - 1.0).abs() < 1e-9, "got {v}");
        }

        // constant phase -> capped at 64
        let phase = Field::filled(1, 3, 3, 0.7);
        let wl = wavelength_field(&phase);
        for &v in wl.data() {
            assert!((v - WAVELENGTH_CAP).abs() < 1e-9);
        }

        // invariant to a global phase shift
        let mut rngish = 0u64;
        let mut phase = Field::zeros(1, 5, 5);
        for v in phase.data_mut() {
            rngish = rngish.wrapping_mul(6364136223846793005).wrapping_add(1);
            *v = wrap_diff(((rngish >> 33) as Real / 1e9) % 3.0);
        }
        let shifted = phase.map(|v| wrap_diff(v + 1.1));
        let a = wavelength_field(&phase);
        let b = wavelength_field(&shifted);
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn long_wavelength_fraction_examples() {
        let all2 = Field::filled(1, 4, 4, 2.0);
        assert_eq!(long_wavelength_fraction(&all2, None, 1.5).unwrap(), 1.0);
        let all1 = Field::filled(1, 4, 4, 1.0);
        assert_eq!(long_wavelength_fraction(&all1, None, 1.5).unwrap(), 0.0);
        let mut half = Field::filled(1, 2, 4, 1.0);
        for p in 0..4 {
            half.data_mut()[p] = 2.0;
        }
        assert_eq!(long_wavelength_fraction(&half, None, 1.5).unwrap(), 0.5);
        // monotone non-increasing in the threshold
        let mut prev = 1.0;
        for th in [0.5, 1.0, 1.5, 2.0, 3.0] {
            let f = long_wavelength_fraction(&half, None, th).unwrap();
            assert!(f <= prev);
            prev = f;
        }
    }

    #[test]
    fn pearson_examples() {
        let x: Vec<Real> = (0..10).map(|i| i as Real).collect();
        let y2: Vec<Real> = x.iter().map(|&v| 2.0 * v).collect();
        assert!((pearson(&x, &y2).unwrap() - 1.0).abs() < 1e-12);
        let yn: Vec<Real> = x.iter().map(|&v| -v).collect();
        assert!((pearson(&x, &yn).unwrap() + 1.0).abs() < 1e-12);

        // brute-force formula comparison on an arbitrary pair
        let a: Vec<Real> = (0..20).map(|i| ((i * i) % 7) as Real).collect();
        let b: Vec<Real> = (0..20).map(|i| ((i * 3) % 5) as Real + 0.25).collect();
        let got = pearson(&a, &b).unwrap();
        let n = 20.0;
        let (sa, sb): (Real, Real) = (a.iter().sum(), b.iter().sum());
        let sab: Real = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        let saa: Real = a.iter().map(|x| x * x).sum();
        let sbb: Real = b.iter().map(|x| x * x).sum();
        let want = (n * sab - sa * sb) / ((n * saa - sa * sa).sqrt() * (n * sbb - sb * sb).sqrt());
        assert!((got - want).abs() < 1e-10);

        let flat = vec![1.0; 10];
        assert!(matches!(
            pearson(&x, &flat),
            Err(WaveError::UndefinedCorrelation(_))
        ));
    }
}
