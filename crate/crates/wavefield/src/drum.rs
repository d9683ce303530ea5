//! "Hear the shape of a drum": clamped wave-equation simulation via Verlet
//! integration, and comparison against the closed-form square-drum spectrum.
//!
//! The update is the velocity-Verlet scheme
//!
//! ```text
//! v_{t+1/2} = v_t + (dt/2) c^2 (K ★ h_t)
//! h_{t+1}   = h_t + dt v_{t+1/2}
//! v_{t+1}   = v_{t+1/2} + (dt/2) c^2 (K ★ h_{t+1})
//! ```
//!
//! with the five-point Laplacian stencil K and the clamp mask applied to h
//! and v after every half/full update. This module runs in the 64-bit
//! precision grade by construction of the default build; 40,000-step
//! accumulation is why the default scalar is f64.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Result, WaveError};
use crate::field::{check_mask, masked_clamp_in_place, Field, Real};

/// Stability bound for unit lattice spacing: c*dt <= 1/sqrt(2).
pub const CFL_LIMIT: Real = std::f64::consts::FRAC_1_SQRT_2 as Real;

/// A clamped-membrane simulation setup.
#[derive(Debug, Clone)]
pub struct DrumSpec {
    /// 1 inside the free region, 0 on the clamped boundary and outside.
    pub mask: Field,
    /// Source node (row, col); must lie in the free region.
    pub source: (usize, usize),
    pub wave_speed: Real,
    pub dt: Real,
    pub steps: usize,
}

impl DrumSpec {
    pub fn validate(&self) -> Result<()> {
        let probe = Field::zeros(1, self.mask.height(), self.mask.width());
        check_mask(&probe, &self.mask)?;
        let (r, c) = self.source;
        if r >= self.mask.height() || c >= self.mask.width() || self.mask.get(0, r, c) != 1.0 {
            return Err(WaveError::InvalidArgument(format!(
                "source ({r}, {c}) is not in the free region"
            )));
        }
        let cdt = self.wave_speed * self.dt;
        if !(cdt > 0.0) {
            return Err(WaveError::InvalidArgument(
                "wave_speed * dt must be positive".into(),
            ));
        }
        if cdt > CFL_LIMIT {
            return Err(WaveError::Unstable {
                cdt: cdt as f64,
                limit: CFL_LIMIT as f64,
            });
        }
        if self.steps == 0 {
            return Err(WaveError::InvalidArgument("steps must be > 0".into()));
        }
        Ok(())
    }
}

/// Displacement at the source node, one sample per full Verlet step.
#[derive(Debug, Clone)]
pub struct DrumTrace {
    pub samples: Vec<Real>,
    pub dt: Real,
}

/// Axis-aligned square clamp mask: the square occupies (L+1) x (L+1) lattice
/// nodes centered in the grid; its perimeter and everything outside are
/// clamped (0), the inner (L-1) x (L-1) nodes are free (1).
pub fn square_mask(l: usize, height: usize, width: usize) -> Result<Field> {
    if l < 2 {
        return Err(WaveError::InvalidArgument(format!(
            "side length L = {l} leaves no free nodes"
        )));
    }
    if l + 1 >= height.min(width) {
        return Err(WaveError::InvalidArgument(format!(
            "square of side {l} does not fit a {height}x{width} grid"
        )));
    }
    let top = (height - (l + 1)) / 2;
    let left = (width - (l + 1)) / 2;
    let mut mask = Field::zeros(1, height, width);
    for y in top + 1..top + l {
        for x in left + 1..left + l {
            mask.set(0, y, x, 1.0);
        }
    }
    Ok(mask)
}

/// In-place 5-point Laplacian with circular wrap, scaled by `scale`.
///
/// The four neighbour taps are summed as `(up + down) + (left + right)` so the
/// result is bitwise invariant under 90-degree grid rotations (IEEE addition
/// commutes; only associativity is order-sensitive).
pub fn apply_laplacian(src: &Field, scale: Real, out: &mut Field) {
    let (h, w) = (src.height(), src.width());
    debug_assert_eq!(src.shape(), out.shape());
    for c in 0..src.channels() {
        let s = src.channel(c);
        let d = out.channel_mut(c);
        for y in 0..h {
            let up = if y == 0 { h - 1 } else { y - 1 };
            let down = if y == h - 1 { 0 } else { y + 1 };
            for x in 0..w {
                let left = if x == 0 { w - 1 } else { x - 1 };
                let right = if x == w - 1 { 0 } else { x + 1 };
                let vert = s[up * w + x] + s[down * w + x];
                let horiz = s[y * w + left] + s[y * w + right];
                d[y * w + x] = scale * ((vert + horiz) - 4.0 * s[y * w + x]);
            }
        }
    }
}

/// A running wave simulation; `simulate_drum` drives it, tests can step it
/// directly (e.g. the periodic energy-conservation check runs with no mask).
pub struct WaveSim {
    h: Field,
    v: Field,
    accel: Field,
    mask: Option<Field>,
    c2: Real,
    dt: Real,
    steps_done: usize,
}

impl WaveSim {
    pub fn new(h0: Field, mask: Option<Field>, wave_speed: Real, dt: Real) -> Result<Self> {
        if let Some(m) = &mask {
            check_mask(&h0, m)?;
        }
        let mut h = h0;
        if let Some(m) = &mask {
            masked_clamp_in_place(&mut h, m);
        }
        let mut accel = Field::zeros(h.channels(), h.height(), h.width());
        let c2 = wave_speed * wave_speed;
        apply_laplacian(&h, c2, &mut accel);
        Ok(WaveSim {
            v: Field::zeros(h.channels(), h.height(), h.width()),
            h,
            accel,
            mask,
            c2,
            dt,
            steps_done: 0,
        })
    }

    pub fn h(&self) -> &Field {
        &self.h
    }
    pub fn v(&self) -> &Field {
        &self.v
    }

    /// One full Verlet step. The trailing half-kick acceleration is reused as
    /// the next step's leading half-kick.
    pub fn step(&mut self) -> Result<()> {
        let half = 0.5 * self.dt;
        self.v.add_scaled(&self.accel, half);
        if let Some(m) = &self.mask {
            masked_clamp_in_place(&mut self.v, m);
        }
        self.h.add_scaled(&self.v, self.dt);
        if let Some(m) = &self.mask {
            masked_clamp_in_place(&mut self.h, m);
        }
        apply_laplacian(&self.h, self.c2, &mut self.accel);
        self.v.add_scaled(&self.accel, half);
        if let Some(m) = &self.mask {
            masked_clamp_in_place(&mut self.v, m);
        }
        self.steps_done += 1;
        let max_abs = self.h.max_abs();
        if !(max_abs <= 1e6) {
            return Err(WaveError::Diverged {
                step: self.steps_done,
                max_abs: max_abs as f64,
            });
        }
        Ok(())
    }
}

/// Run the clamped simulation from a unit displacement at the source and
/// record the source displacement per step.
pub fn simulate_drum(spec: &DrumSpec) -> Result<DrumTrace> {
    spec.validate()?;
    let (h, w) = (spec.mask.height(), spec.mask.width());
    let mut h0 = Field::zeros(1, h, w);
    h0.set(0, spec.source.0, spec.source.1, 1.0);
    let mut sim = WaveSim::new(h0, Some(spec.mask.clone()), spec.wave_speed, spec.dt)?;
    let mut samples = Vec::with_capacity(spec.steps);
    for _ in 0..spec.steps {
        sim.step()?;
        samples.push(sim.h.get(0, spec.source.0, spec.source.1));
    }
    Ok(DrumTrace {
        samples,
        dt: spec.dt,
    })
}

/// Continuum fundamental of an L x L square drum in Hz:
/// `c * sqrt(m^2 + n^2) / (2L)`.
pub fn theoretical_frequency(m: u32, n: u32, l: Real, c: Real) -> Real {
    c * ((m * m + n * n) as Real).sqrt() / (2.0 * l)
}

/// Discrete energy of a periodic (unmasked) field:
/// `E = 1/2 sum v^2 + (c^2/2) sum |forward-difference gradient of h|^2`.
pub fn discrete_energy(h: &Field, v: &Field, wave_speed: Real) -> Real {
    let (ch, hh, ww) = h.shape();
    let mut kinetic = 0.0;
    for &x in v.data() {
        kinetic += x * x;
    }
    let mut potential = 0.0;
    for c in 0..ch {
        let s = h.channel(c);
        for y in 0..hh {
            let ynext = (y + 1) % hh;
            for x in 0..ww {
                let xnext = (x + 1) % ww;
                let dy = s[ynext * ww + x] - s[y * ww + x];
                let dx = s[y * ww + xnext] - s[y * ww + x];
                potential += dy * dy + dx * dx;
            }
        }
    }
    0.5 * kinetic + 0.5 * wave_speed * wave_speed * potential
}

/// Lowest spectral peak of a trace in Hz.
///
/// Hann-windowed magnitude spectrum at sample rate 1/dt; returns the
/// lowest-frequency local maximum above 10x the median magnitude, refined by
/// 3-point parabolic interpolation.
pub fn measure_fundamental(trace: &DrumTrace) -> Result<Real> {
    let n = trace.samples.len();
    if n < 1024 {
        return Err(WaveError::InvalidArgument(format!(
            "trace too short for spectral analysis: {n} < 1024"
        )));
    }
    let mut buf: Vec<Complex<f64>> = trace
        .samples
        .iter()
        .enumerate()
        .map(|(t, &v)| {
            let w = 0.5
                * (1.0
                    - (2.0 * std::f64::consts::PI * t as f64 / (n as f64 - 1.0)).cos());
            Complex::new(v as f64 * w, 0.0)
        })
        .collect();
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(n).process(&mut buf);

    let half = n / 2;
    let mags: Vec<f64> = buf[..=half].iter().map(|c| c.norm()).collect();
    let mut sorted: Vec<f64> = mags[1..].to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let median = sorted[sorted.len() / 2];
    let floor = 10.0 * median;

    for k in 1..half {
        let m = mags[k];
        if m > floor && m >= mags[k - 1] && m >= mags[k + 1] {
            let (a, b, c) = (mags[k - 1], m, mags[k + 1]);
            let denom = a - 2.0 * b + c;
            let delta = if denom.abs() < 1e-300 {
                0.0
            } else {
                (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
            };
            return Ok(((k as f64 + delta) / (n as f64 * trace.dt as f64)) as Real);
        }
    }
    Err(WaveError::NoPeak)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_mask_counts() {
        // L=2 on a 5x5 grid: exactly the center node free.
        let m = square_mask(2, 5, 5).unwrap();
        assert_eq!(m.sum(), 1.0);
        assert_eq!(m.get(0, 2, 2), 1.0);

        // L=13: 12x12 free interior.
        let m = square_mask(13, 64, 64).unwrap();
        assert_eq!(m.sum(), 144.0);
        assert!(m.data().iter().all(|&v| v == 0.0 || v == 1.0));

        assert!(square_mask(13, 14, 14).is_err());
        assert!(square_mask(1, 8, 8).is_err());
    }

    #[test]
    fn hand_checked_first_step() {
        // One step, dt = 0.025, c = 1, delta source at the center:
        // v_{1/2}(center) = 0.5 * 0.025 * (-4) = -0.05
        // h_1(center) = 1 + 0.025 * (-0.05) = 0.99875
        let mask = square_mask(13, 64, 64).unwrap();
        let spec = DrumSpec {
            mask,
            source: (31, 31),
            wave_speed: 1.0,
            dt: 0.025,
            steps: 1,
        };
        assert_eq!(spec.mask.get(0, 31, 31), 1.0);
        let trace = simulate_drum(&spec).unwrap();
        assert!((trace.samples[0] - 0.99875).abs() < 1e-12);
    }

    #[test]
    fn zero_initial_state_stays_zero() {
        let mask = square_mask(8, 32, 32).unwrap();
        let h0 = Field::zeros(1, 32, 32);
        let mut sim = WaveSim::new(h0, Some(mask), 1.0, 0.025).unwrap();
        for _ in 0..50 {
            sim.step().unwrap();
        }
        assert!(sim.h().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_free_node_matches_scalar_recurrence() {
        // One free node surrounded by clamps behaves as a 1-DOF oscillator:
        // h_{t+1} = 2 h_t - h_{t-1} - 4 c^2 dt^2 h_t.
        let mask = square_mask(2, 7, 7).unwrap();
        let (c, dt) = (1.0, 0.05);
        let spec = DrumSpec {
            mask,
            source: (3, 3),
            wave_speed: c,
            dt,
            steps: 100,
        };
        let trace = simulate_drum(&spec).unwrap();
        let k = 4.0 * c * c * dt * dt;
        let mut prev = 1.0; // h_0
        let mut cur = 1.0 - 0.5 * k; // h_1 with v_0 = 0
        assert!((trace.samples[0] - cur).abs() < 1e-12);
        for t in 1..100 {
            let next = 2.0 * cur - prev - k * cur;
            prev = cur;
            cur = next;
            assert!(
                (trace.samples[t] - cur).abs() < 1e-12,
                "step {t}: {} vs {}",
                trace.samples[t],
                cur
            );
        }
    }

    #[test]
    fn cfl_violation_rejected() {
        let mask = square_mask(8, 32, 32).unwrap();
        let spec = DrumSpec {
            mask,
            source: (15, 15),
            wave_speed: 1.0,
            dt: 1.0,
            steps: 10,
        };
        match spec.validate() {
            Err(WaveError::Unstable { .. }) => {}
            other => panic!("expected Unstable, got {other:?}"),
        }
    }

    #[test]
    fn theoretical_frequency_values() {
        // m = n = 1, L = 20, c = 1 -> sqrt(2)/40
        let f = theoretical_frequency(1, 1, 20.0, 1.0);
        assert!((f - 0.035355).abs() < 1e-5);
        let f13 = theoretical_frequency(1, 1, 13.0, 1.0);
        assert!((f13 - 0.0543929).abs() < 1e-6);
        // doubling L halves the frequency
        let f40 = theoretical_frequency(1, 1, 40.0, 1.0);
        assert!((f40 - f / 2.0).abs() < 1e-12);
    }

    #[test]
    fn measure_fundamental_pure_cosine() {
        // cos(2*pi*0.05*t) sampled at 40 Hz for 40,000 samples -> 0.05 Hz.
        let dt = 0.025;
        let samples: Vec<Real> = (0..40_000)
            .map(|t| (2.0 * std::f64::consts::PI * 0.05 * (t as f64) * dt).cos() as Real)
            .collect();
        let f = measure_fundamental(&DrumTrace { samples, dt }).unwrap();
        assert!((f - 0.05).abs() < 0.0005, "got {f}");
    }

    #[test]
    fn measure_fundamental_picks_lowest_peak() {
        let dt = 0.025;
        let samples: Vec<Real> = (0..40_000)
            .map(|t| {
                let tt = t as f64 * dt;
                ((2.0 * std::f64::consts::PI * 0.04 * tt).cos()
                    + (2.0 * std::f64::consts::PI * 0.09 * tt).cos()) as Real
            })
            .collect();
        let f = measure_fundamental(&DrumTrace { samples, dt }).unwrap();
        assert!((f - 0.04).abs() < 0.0005, "got {f}");
    }

    #[test]
    fn measure_fundamental_errors() {
        let short = DrumTrace {
            samples: vec![0.0; 100],
            dt: 0.025,
        };
        assert!(measure_fundamental(&short).is_err());
        let flat = DrumTrace {
            samples: vec![0.0; 2048],
            dt: 0.025,
        };
        match measure_fundamental(&flat) {
            Err(WaveError::NoPeak) => {}
            other => panic!("expected NoPeak, got {other:?}"),
        }
    }

    fn rot90(f: &Field) -> Field {
        // (y, x) -> (x, H-1-y)
        let (c, h, w) = f.shape();
        let mut out = Field::zeros(c, w, h);
        for ch in 0..c {
            for y in 0..h {
                for x in 0..w {
                    out.set(ch, x, h - 1 - y, f.get(ch, y, x));
                }
            }
        }
        out
    }

    #[test]
    fn centered_square_fields_rotation_invariant_bitwise() {
        // Odd grid + even L so the square and its center node sit exactly on
        // the grid center; the evolving field must then be bitwise invariant
        // under 90-degree rotations thanks to the pairwise-commutative stencil
        // summation.
        let grid = 33;
        let l = 12;
        let mask = square_mask(l, grid, grid).unwrap();
        let center = grid / 2;
        assert_eq!(mask.get(0, center, center), 1.0);
        let mut h0 = Field::zeros(1, grid, grid);
        h0.set(0, center, center, 1.0);
        let mut sim = WaveSim::new(h0, Some(mask), 1.0, 0.025).unwrap();
        for step in 0..200 {
            sim.step().unwrap();
            if step % 50 == 0 {
                let h = sim.h();
                let r = rot90(h);
                assert_eq!(h, &r, "field not rotation-invariant at step {step}");
            }
        }
    }

    #[test]
    fn energy_conserved_on_periodic_grid() {
        // No mask, random smooth initial state: Verlet keeps the discrete
        // energy within 0.1% over 10,000 steps at dt = 0.025.
        let n = 32;
        let mut h0 = Field::zeros(1, n, n);
        for y in 0..n {
            for x in 0..n {
                let v = (2.0 * std::f64::consts::PI * y as f64 / n as f64).sin()
                    + 0.5 * (2.0 * std::f64::consts::PI * 3.0 * x as f64 / n as f64).cos()
                    + 0.25
                        * (2.0 * std::f64::consts::PI * 5.0 * (x + y) as f64 / n as f64).sin();
                h0.set(0, y, x, v as Real);
            }
        }
        let mut sim = WaveSim::new(h0, None, 1.0, 0.025).unwrap();
        let e0 = discrete_energy(sim.h(), sim.v(), 1.0);
        let mut max_drift: f64 = 0.0;
        for _ in 0..10_000 {
            sim.step().unwrap();
            let e = discrete_energy(sim.h(), sim.v(), 1.0);
            max_drift = max_drift.max(((e - e0) / e0).abs() as f64);
        }
        assert!(max_drift < 1e-3, "energy drift {max_drift}");
    }

    #[test]
    fn stencil_eigenmodes_match_closed_form() {
        // Dirichlet sine modes are exact eigenvectors of the masked stencil:
        // K phi = -lambda phi with lambda = 4 sin^2(m pi / 2L) + 4 sin^2(n pi / 2L).
        let l = 13usize;
        let grid = 40;
        let mask = square_mask(l, grid, grid).unwrap();
        let top = (grid - (l + 1)) / 2;
        let left = top;
        for (m, n) in [(1u32, 1u32), (1, 2), (2, 2), (3, 1)] {
            let mut phi = Field::zeros(1, grid, grid);
            for y in 1..l {
                for x in 1..l {
                    let v = (m as f64 * std::f64::consts::PI * y as f64 / l as f64).sin()
                        * (n as f64 * std::f64::consts::PI * x as f64 / l as f64).sin();
                    phi.set(0, top + y, left + x, v as Real);
                }
            }
            let mut out = Field::zeros(1, grid, grid);
            apply_laplacian(&phi, 1.0, &mut out);
            masked_clamp_in_place(&mut out, &mask);
            let lam = 4.0 * (m as f64 * std::f64::consts::PI / (2.0 * l as f64)).sin().powi(2)
                + 4.0 * (n as f64 * std::f64::consts::PI / (2.0 * l as f64)).sin().powi(2);
            for y in 0..grid {
                for x in 0..grid {
                    if mask.get(0, y, x) == 1.0 {
                        let expect = -(lam as Real) * phi.get(0, y, x);
                        assert!(
                            (out.get(0, y, x) - expect).abs() < 1e-12,
                            "mode ({m},{n}) at ({y},{x})"
                        );
                    }
                }
            }
        }
    }
}
