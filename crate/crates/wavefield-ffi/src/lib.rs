//! C ABI for the wavefield engine.
//!
//! Conventions:
//! - Handles (`WvField`, `WvKernel`, `WvTrace`) are opaque; create/free pairs
//!   own them. Passing NULL where a handle is expected yields
//!   `WV_STATUS_NULL_POINTER`.
//! - Every fallible call returns a `WvStatus`; `wv_last_error()` returns a
//!   thread-local message for the most recent failure.
//! - All scalars cross the boundary as C `double` regardless of the engine's
//!   internal precision grade.
//!
//! The header `include/wavefield.h` is generated by cbindgen at build time.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use wavefield::data::{gen_polygons, save_dataset, DatasetManifest, PolygonsSpec};
use wavefield::drum::{
    measure_fundamental, simulate_drum, square_mask, theoretical_frequency, DrumSpec, DrumTrace,
};
use wavefield::error::WaveError;
use wavefield::field::{conv2d, masked_clamp, Field, Kernel3x3, PadMode, Real};
use wavefield::spectral::{analytic_signal, dft_amplitudes, pearson};
use wavefield::wft::{read_wft1_file, write_wft1_file};

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WvStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ShapeMismatch = 3,
    Diverged = 4,
    NoPeak = 5,
    Unstable = 6,
    Io = 7,
    Format = 8,
    Internal = 9,
}

/// Border handling for convolutions.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WvPadMode {
    Circular = 0,
    Zero = 1,
}

impl From<WvPadMode> for PadMode {
    fn from(p: WvPadMode) -> Self {
        match p {
            WvPadMode::Circular => PadMode::Circular,
            WvPadMode::Zero => PadMode::Zero,
        }
    }
}

/// Dense channels x height x width scalar field (opaque).
pub struct WvField(Field);

/// 3x3 convolution kernel with bias (opaque).
pub struct WvKernel(Kernel3x3);

/// Drum simulation trace (opaque).
pub struct WvTrace(DrumTrace);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &WaveError) -> WvStatus {
    match err {
        WaveError::ChannelMismatch { .. } | WaveError::ShapeMismatch(_) => WvStatus::ShapeMismatch,
        WaveError::InvalidArgument(_) | WaveError::Config(_) => WvStatus::InvalidArgument,
        WaveError::Diverged { .. } | WaveError::NonFinite(_) => WvStatus::Diverged,
        WaveError::Unstable { .. } => WvStatus::Unstable,
        WaveError::NoPeak => WvStatus::NoPeak,
        WaveError::Io(_) => WvStatus::Io,
        WaveError::Format(_) | WaveError::Json(_) => WvStatus::Format,
        WaveError::Generation(_) | WaveError::UndefinedCorrelation(_) => WvStatus::InvalidArgument,
    }
}

fn fail(err: WaveError) -> WvStatus {
    let status = status_of(&err);
    set_error(&err.to_string());
    status
}

/// Run `f`, mapping panics to `WV_STATUS_INTERNAL`.
fn guarded(f: impl FnOnce() -> WvStatus) -> WvStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => {
            set_error("internal panic");
            WvStatus::Internal
        }
    }
}

unsafe fn cstr_path<'a>(ptr: *const c_char) -> Result<&'a Path, WvStatus> {
    if ptr.is_null() {
        set_error("null path");
        return Err(WvStatus::NullPointer);
    }
    match CStr::from_ptr(ptr).to_str() {
        Ok(s) => Ok(Path::new(s)),
        Err(_) => {
            set_error("path is not valid UTF-8");
            Err(WvStatus::InvalidArgument)
        }
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn wv_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message for the most recent failure on this thread. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn wv_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

// ---- fields ----

/// Create a field; `data` may be NULL for zeros, otherwise it must hold
/// `channels * height * width` doubles (channel-outermost, row-major).
#[no_mangle]
pub unsafe extern "C" fn wv_field_new(
    channels: usize,
    height: usize,
    width: usize,
    data: *const f64,
) -> *mut WvField {
    let len = channels * height * width;
    if len == 0 {
        set_error("empty field");
        return std::ptr::null_mut();
    }
    let field = if data.is_null() {
        Field::zeros(channels, height, width)
    } else {
        let slice = std::slice::from_raw_parts(data, len);
        let vec: Vec<Real> = slice.iter().map(|&v| v as Real).collect();
        match Field::from_vec(channels, height, width, vec) {
            Ok(f) => f,
            Err(e) => {
                set_error(&e.to_string());
                return std::ptr::null_mut();
            }
        }
    };
    Box::into_raw(Box::new(WvField(field)))
}

#[no_mangle]
pub unsafe extern "C" fn wv_field_free(field: *mut WvField) {
    if !field.is_null() {
        drop(Box::from_raw(field));
    }
}

#[no_mangle]
pub unsafe extern "C" fn wv_field_channels(field: *const WvField) -> usize {
    field.as_ref().map_or(0, |f| f.0.channels())
}

#[no_mangle]
pub unsafe extern "C" fn wv_field_height(field: *const WvField) -> usize {
    field.as_ref().map_or(0, |f| f.0.height())
}

#[no_mangle]
pub unsafe extern "C" fn wv_field_width(field: *const WvField) -> usize {
    field.as_ref().map_or(0, |f| f.0.width())
}

/// Copy the field payload into `out` (length `len` doubles, which must equal
/// channels * height * width).
#[no_mangle]
pub unsafe extern "C" fn wv_field_copy_data(
    field: *const WvField,
    out: *mut f64,
    len: usize,
) -> WvStatus {
    let Some(f) = field.as_ref() else {
        set_error("null field");
        return WvStatus::NullPointer;
    };
    if out.is_null() {
        set_error("null output buffer");
        return WvStatus::NullPointer;
    }
    if len != f.0.len() {
        set_error("output buffer length mismatch");
        return WvStatus::ShapeMismatch;
    }
    let dst = std::slice::from_raw_parts_mut(out, len);
    for (d, &s) in dst.iter_mut().zip(f.0.data()) {
        *d = s as f64;
    }
    WvStatus::Ok
}

/// Write the field as a WFT1 dump (rank 3).
#[no_mangle]
pub unsafe extern "C" fn wv_field_write_wft1(
    field: *const WvField,
    path: *const c_char,
) -> WvStatus {
    let Some(f) = field.as_ref() else {
        set_error("null field");
        return WvStatus::NullPointer;
    };
    let path = match cstr_path(path) {
        Ok(p) => p,
        Err(s) => return s,
    };
    let (c, h, w) = f.0.shape();
    guarded(|| {
        match write_wft1_file(path, &[c as u32, h as u32, w as u32], f.0.data()) {
            Ok(()) => WvStatus::Ok,
            Err(e) => fail(e),
        }
    })
}

/// Read a rank-2 or rank-3 WFT1 dump as a field (rank 2 becomes 1 channel).
#[no_mangle]
pub unsafe extern "C" fn wv_field_read_wft1(
    path: *const c_char,
    out: *mut *mut WvField,
) -> WvStatus {
    if out.is_null() {
        set_error("null output handle");
        return WvStatus::NullPointer;
    }
    let path = match cstr_path(path) {
        Ok(p) => p,
        Err(s) => return s,
    };
    guarded(|| match read_wft1_file(path) {
        Ok((dims, data)) => {
            let (c, h, w) = match dims.as_slice() {
                [h, w] => (1usize, *h as usize, *w as usize),
                [c, h, w] => (*c as usize, *h as usize, *w as usize),
                _ => {
                    set_error("WFT1 rank is not 2 or 3");
                    return WvStatus::Format;
                }
            };
            match Field::from_vec(c, h, w, data) {
                Ok(f) => {
                    *out = Box::into_raw(Box::new(WvField(f)));
                    WvStatus::Ok
                }
                Err(e) => fail(e),
            }
        }
        Err(e) => fail(e),
    })
}

// ---- kernels and stencils ----

/// Five-point Laplacian stencil kernel over `channels` channels.
#[no_mangle]
pub unsafe extern "C" fn wv_kernel_laplacian(channels: usize) -> *mut WvKernel {
    if channels == 0 {
        set_error("kernel needs at least one channel");
        return std::ptr::null_mut();
    }
    Box::into_raw(Box::new(WvKernel(Kernel3x3::laplacian(channels))))
}

/// Kernel from raw taps: `weights` is out*in*9 doubles ([out][in][ky][kx]);
/// `bias` may be NULL for zero bias, otherwise `out` doubles.
#[no_mangle]
pub unsafe extern "C" fn wv_kernel_new(
    out_ch: usize,
    in_ch: usize,
    weights: *const f64,
    bias: *const f64,
) -> *mut WvKernel {
    if weights.is_null() {
        set_error("null weights");
        return std::ptr::null_mut();
    }
    let w = std::slice::from_raw_parts(weights, out_ch * in_ch * 9)
        .iter()
        .map(|&v| v as Real)
        .collect();
    let b = if bias.is_null() {
        vec![0.0; out_ch]
    } else {
        std::slice::from_raw_parts(bias, out_ch)
            .iter()
            .map(|&v| v as Real)
            .collect()
    };
    match Kernel3x3::from_parts(out_ch, in_ch, w, b) {
        Ok(k) => Box::into_raw(Box::new(WvKernel(k))),
        Err(e) => {
            set_error(&e.to_string());
            std::ptr::null_mut()
        }
    }
}

#[no_mangle]
pub unsafe extern "C" fn wv_kernel_free(kernel: *mut WvKernel) {
    if !kernel.is_null() {
        drop(Box::from_raw(kernel));
    }
}

/// 3x3 cross-correlation; writes a new field handle to `out`.
#[no_mangle]
pub unsafe extern "C" fn wv_conv2d(
    field: *const WvField,
    kernel: *const WvKernel,
    pad: WvPadMode,
    out: *mut *mut WvField,
) -> WvStatus {
    let (Some(f), Some(k)) = (field.as_ref(), kernel.as_ref()) else {
        set_error("null field or kernel");
        return WvStatus::NullPointer;
    };
    if out.is_null() {
        set_error("null output handle");
        return WvStatus::NullPointer;
    }
    guarded(|| match conv2d(&f.0, &k.0, pad.into()) {
        Ok(result) => {
            *out = Box::into_raw(Box::new(WvField(result)));
            WvStatus::Ok
        }
        Err(e) => fail(e),
    })
}

/// Multiply every channel by a binary 1-channel mask.
#[no_mangle]
pub unsafe extern "C" fn wv_masked_clamp(
    field: *const WvField,
    mask: *const WvField,
    out: *mut *mut WvField,
) -> WvStatus {
    let (Some(f), Some(m)) = (field.as_ref(), mask.as_ref()) else {
        set_error("null field or mask");
        return WvStatus::NullPointer;
    };
    if out.is_null() {
        set_error("null output handle");
        return WvStatus::NullPointer;
    }
    guarded(|| match masked_clamp(&f.0, &m.0) {
        Ok(result) => {
            *out = Box::into_raw(Box::new(WvField(result)));
            WvStatus::Ok
        }
        Err(e) => fail(e),
    })
}

// ---- drum lab ----

/// Centered square clamp mask with side length `l` on an h x w grid.
#[no_mangle]
pub unsafe extern "C" fn wv_drum_square_mask(
    l: usize,
    height: usize,
    width: usize,
    out: *mut *mut WvField,
) -> WvStatus {
    if out.is_null() {
        set_error("null output handle");
        return WvStatus::NullPointer;
    }
    match square_mask(l, height, width) {
        Ok(m) => {
            *out = Box::into_raw(Box::new(WvField(m)));
            WvStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Clamped Verlet simulation from a unit displacement at (src_row, src_col);
/// records the source displacement per step.
#[no_mangle]
pub unsafe extern "C" fn wv_drum_simulate(
    mask: *const WvField,
    src_row: usize,
    src_col: usize,
    wave_speed: f64,
    dt: f64,
    steps: usize,
    out: *mut *mut WvTrace,
) -> WvStatus {
    let Some(m) = mask.as_ref() else {
        set_error("null mask");
        return WvStatus::NullPointer;
    };
    if out.is_null() {
        set_error("null output handle");
        return WvStatus::NullPointer;
    }
    let spec = DrumSpec {
        mask: m.0.clone(),
        source: (src_row, src_col),
        wave_speed: wave_speed as Real,
        dt: dt as Real,
        steps,
    };
    guarded(|| match simulate_drum(&spec) {
        Ok(trace) => {
            *out = Box::into_raw(Box::new(WvTrace(trace)));
            WvStatus::Ok
        }
        Err(e) => fail(e),
    })
}

#[no_mangle]
pub unsafe extern "C" fn wv_trace_len(trace: *const WvTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.0.samples.len())
}

#[no_mangle]
pub unsafe extern "C" fn wv_trace_copy(
    trace: *const WvTrace,
    out: *mut f64,
    len: usize,
) -> WvStatus {
    let Some(t) = trace.as_ref() else {
        set_error("null trace");
        return WvStatus::NullPointer;
    };
    if out.is_null() {
        set_error("null output buffer");
        return WvStatus::NullPointer;
    }
    if len != t.0.samples.len() {
        set_error("output buffer length mismatch");
        return WvStatus::ShapeMismatch;
    }
    let dst = std::slice::from_raw_parts_mut(out, len);
    for (d, &s) in dst.iter_mut().zip(&t.0.samples) {
        *d = s as f64;
    }
    WvStatus::Ok
}

#[no_mangle]
pub unsafe extern "C" fn wv_trace_free(trace: *mut WvTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// Continuum square-drum mode frequency in Hz: c * sqrt(m^2 + n^2) / (2L).
#[no_mangle]
pub extern "C" fn wv_drum_theoretical_frequency(m: u32, n: u32, l: f64, c: f64) -> f64 {
    theoretical_frequency(m, n, l as Real, c as Real) as f64
}

/// Lowest spectral peak of a trace (Hann window, parabolic refinement).
#[no_mangle]
pub unsafe extern "C" fn wv_drum_measure_fundamental(
    trace: *const WvTrace,
    out_hz: *mut f64,
) -> WvStatus {
    let Some(t) = trace.as_ref() else {
        set_error("null trace");
        return WvStatus::NullPointer;
    };
    if out_hz.is_null() {
        set_error("null output");
        return WvStatus::NullPointer;
    }
    guarded(|| match measure_fundamental(&t.0) {
        Ok(f) => {
            *out_hz = f as f64;
            WvStatus::Ok
        }
        Err(e) => fail(e),
    })
}

// ---- spectral ----

/// One-sided DFT amplitudes (DC dropped) of an even-length series; `out`
/// must hold len/2 doubles.
#[no_mangle]
pub unsafe extern "C" fn wv_dft_amplitudes(
    series: *const f64,
    len: usize,
    dt: f64,
    out: *mut f64,
) -> WvStatus {
    if series.is_null() || out.is_null() {
        set_error("null buffer");
        return WvStatus::NullPointer;
    }
    let s: Vec<Real> = std::slice::from_raw_parts(series, len)
        .iter()
        .map(|&v| v as Real)
        .collect();
    guarded(|| match dft_amplitudes(&s, dt as Real) {
        Ok(spec) => {
            let dst = std::slice::from_raw_parts_mut(out, len / 2);
            for (d, &a) in dst.iter_mut().zip(&spec.amplitudes) {
                *d = a as f64;
            }
            WvStatus::Ok
        }
        Err(e) => fail(e),
    })
}

/// Instantaneous phase (radians) of a real series via the analytic signal;
/// `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn wv_hilbert_phase(
    series: *const f64,
    len: usize,
    out: *mut f64,
) -> WvStatus {
    if series.is_null() || out.is_null() {
        set_error("null buffer");
        return WvStatus::NullPointer;
    }
    if len < 2 {
        set_error("series too short");
        return WvStatus::InvalidArgument;
    }
    let s: Vec<Real> = std::slice::from_raw_parts(series, len)
        .iter()
        .map(|&v| v as Real)
        .collect();
    guarded(|| {
        let analytic = analytic_signal(&s);
        let dst = std::slice::from_raw_parts_mut(out, len);
        for (d, a) in dst.iter_mut().zip(&analytic) {
            let mut phi = a.im.atan2(a.re);
            if phi <= -std::f64::consts::PI {
                phi = std::f64::consts::PI;
            }
            *d = phi;
        }
        WvStatus::Ok
    })
}

/// Pearson product-moment correlation of two equal-length series.
#[no_mangle]
pub unsafe extern "C" fn wv_pearson(
    x: *const f64,
    y: *const f64,
    len: usize,
    out: *mut f64,
) -> WvStatus {
    if x.is_null() || y.is_null() || out.is_null() {
        set_error("null buffer");
        return WvStatus::NullPointer;
    }
    let xs: Vec<Real> = std::slice::from_raw_parts(x, len)
        .iter()
        .map(|&v| v as Real)
        .collect();
    let ys: Vec<Real> = std::slice::from_raw_parts(y, len)
        .iter()
        .map(|&v| v as Real)
        .collect();
    match pearson(&xs, &ys) {
        Ok(r) => {
            *out = r as f64;
            WvStatus::Ok
        }
        Err(e) => fail(e),
    }
}

// ---- datasets ----

/// Generate a polygons dataset directory (images + masks as WFT1 dumps plus
/// a JSON manifest). `shape_classes` starts at triangles.
#[no_mangle]
pub unsafe extern "C" fn wv_gen_polygons(
    count: usize,
    canvas: usize,
    shape_classes: usize,
    radius_min: f64,
    radius_max: f64,
    seed: u64,
    out_dir: *const c_char,
) -> WvStatus {
    let path = match cstr_path(out_dir) {
        Ok(p) => p.to_path_buf(),
        Err(s) => return s,
    };
    if shape_classes == 0 {
        set_error("need at least one shape class");
        return WvStatus::InvalidArgument;
    }
    let spec = PolygonsSpec {
        count,
        canvas,
        shapes_min: 1,
        shapes_max: 2,
        edges_min: 3,
        edges_max: 3 + shape_classes - 1,
        radius_min,
        radius_max,
        seed,
    };
    guarded(|| {
        let samples = match gen_polygons(&spec) {
            Ok(s) => s,
            Err(e) => return fail(e),
        };
        let manifest = DatasetManifest {
            name: "polygons".into(),
            sample_count: samples.len(),
            class_count: spec.class_count(),
            seed,
            params: serde_params(&spec),
        };
        match save_dataset(&path, &samples, &manifest) {
            Ok(()) => WvStatus::Ok,
            Err(e) => fail(e),
        }
    })
}

fn serde_params(spec: &PolygonsSpec) -> serde_json::Value {
    serde_json::json!({
        "canvas": spec.canvas,
        "shapes": [spec.shapes_min, spec.shapes_max],
        "edges": [spec.edges_min, spec.edges_max],
        "radius": [spec.radius_min, spec.radius_max],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn version_and_error_strings() {
        let v = wv_version();
        let s = unsafe { CStr::from_ptr(v) }.to_str().unwrap();
        assert!(!s.is_empty());
        set_error("boom");
        let e = unsafe { CStr::from_ptr(wv_last_error()) }.to_str().unwrap();
        assert_eq!(e, "boom");
    }

    #[test]
    fn field_lifecycle_and_conv() {
        unsafe {
            let data: Vec<f64> = vec![1.0; 16];
            let f = wv_field_new(1, 4, 4, data.as_ptr());
            assert!(!f.is_null());
            assert_eq!(wv_field_channels(f), 1);
            assert_eq!(wv_field_height(f), 4);

            let k = wv_kernel_laplacian(1);
            let mut out: *mut WvField = std::ptr::null_mut();
            let st = wv_conv2d(f, k, WvPadMode::Circular, &mut out);
            assert_eq!(st, WvStatus::Ok);
            let mut buf = vec![9.0f64; 16];
            assert_eq!(wv_field_copy_data(out, buf.as_mut_ptr(), 16), WvStatus::Ok);
            assert!(buf.iter().all(|&v| v == 0.0));

            // channel mismatch surfaces as a status
            let k2 = wv_kernel_laplacian(2);
            let mut out2: *mut WvField = std::ptr::null_mut();
            let st = wv_conv2d(f, k2, WvPadMode::Zero, &mut out2);
            assert_eq!(st, WvStatus::ShapeMismatch);

            wv_field_free(out);
            wv_field_free(f);
            wv_kernel_free(k);
            wv_kernel_free(k2);
        }
    }

    #[test]
    fn null_handling() {
        unsafe {
            assert_eq!(wv_field_channels(std::ptr::null()), 0);
            let mut out: *mut WvField = std::ptr::null_mut();
            assert_eq!(
                wv_conv2d(std::ptr::null(), std::ptr::null(), WvPadMode::Zero, &mut out),
                WvStatus::NullPointer
            );
            assert_eq!(
                wv_trace_copy(std::ptr::null(), std::ptr::null_mut(), 0),
                WvStatus::NullPointer
            );
        }
    }

    #[test]
    fn drum_through_the_c_abi() {
        unsafe {
            let mut mask: *mut WvField = std::ptr::null_mut();
            assert_eq!(wv_drum_square_mask(12, 33, 33, &mut mask), WvStatus::Ok);
            let mut trace: *mut WvTrace = std::ptr::null_mut();
            let st = wv_drum_simulate(mask, 16, 16, 1.0, 0.025, 4096, &mut trace);
            assert_eq!(st, WvStatus::Ok);
            assert_eq!(wv_trace_len(trace), 4096);
            let mut hz = 0.0f64;
            assert_eq!(wv_drum_measure_fundamental(trace, &mut hz), WvStatus::Ok);
            let theory = wv_drum_theoretical_frequency(1, 1, 12.0, 1.0);
            assert!((hz - theory).abs() / theory < 0.05, "{hz} vs {theory}");

            // CFL violation surfaces as Unstable
            let mut t2: *mut WvTrace = std::ptr::null_mut();
            assert_eq!(
                wv_drum_simulate(mask, 16, 16, 1.0, 1.0, 10, &mut t2),
                WvStatus::Unstable
            );
            wv_trace_free(trace);
            wv_field_free(mask);
        }
    }

    #[test]
    fn spectral_helpers() {
        unsafe {
            let series: Vec<f64> = (0..64)
                .map(|t| (2.0 * std::f64::consts::PI * 4.0 * t as f64 / 64.0).cos())
                .collect();
            let mut amps = vec![0.0f64; 32];
            assert_eq!(
                wv_dft_amplitudes(series.as_ptr(), 64, 1.0, amps.as_mut_ptr()),
                WvStatus::Ok
            );
            // bin 4 dominates
            let max_bin = amps
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0
                + 1;
            assert_eq!(max_bin, 4);

            let mut phase = vec![0.0f64; 64];
            assert_eq!(
                wv_hilbert_phase(series.as_ptr(), 64, phase.as_mut_ptr()),
                WvStatus::Ok
            );
            // phase advances by 2 pi * 4 / 64 per step away from the edges
            let d = phase[17] - phase[16];
            assert!((d - 2.0 * std::f64::consts::PI * 4.0 / 64.0).abs() < 1e-6);

            let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
            let ys: Vec<f64> = xs.iter().map(|v| 3.0 * v + 1.0).collect();
            let mut r = 0.0;
            assert_eq!(wv_pearson(xs.as_ptr(), ys.as_ptr(), 10, &mut r), WvStatus::Ok);
            assert!((r - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dataset_generation_writes_directory() {
        unsafe {
            let dir = std::env::temp_dir().join("wavefield-ffi-ds");
            let _ = std::fs::remove_dir_all(&dir);
            let cpath = CString::new(dir.to_str().unwrap()).unwrap();
            let st = wv_gen_polygons(3, 32, 2, 5.0, 8.0, 7, cpath.as_ptr());
            assert_eq!(st, WvStatus::Ok);
            assert!(dir.join("manifest.json").exists());
            assert!(dir.join("sample_00000.image.wft1").exists());
            std::fs::remove_dir_all(&dir).unwrap();
        }
    }

    #[test]
    fn generated_header_exists_and_declares_the_api() {
        let header = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("include")
            .join("wavefield.h");
        let text = std::fs::read_to_string(header).expect("header generated by build.rs");
        for symbol in [
            "wv_version",
            "wv_last_error",
            "wv_field_new",
            "wv_conv2d",
            "wv_drum_simulate",
            "wv_drum_measure_fundamental",
            "wv_dft_amplitudes",
            "wv_pearson",
            "wv_gen_polygons",
            "WvStatus",
            "WvPadMode",
        ] {
            assert!(text.contains(symbol), "header is missing {symbol}");
        }
    }
}
