//! C ABI over the nowcasting core.
//!
//! Every function returns an [`AsiStatus`]; on failure a description is
//! available from [`asi_last_error`] on the same thread. Handles are opaque
//! and must be released with their matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use asi_nowcast::error::{Error, ErrorClass};
use asi_nowcast::forecasters::smart_persistence;
use asi_nowcast::imaging::{FrameMeta, SkyGrid, SkyImage};
use asi_nowcast::motion::{sky_flow, FlowField, FlowParams};
use asi_nowcast::segmentation::{segment, SegmentationConfig, SegmentationMap};
use asi_nowcast::solar::{clear_sky_ghi, solar_position, ClearSkyModel, GeoLocation, SolarGeometry};
use chrono::{DateTime, Utc};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AsiStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Config = 3,
    Data = 4,
    Numeric = 5,
    Panic = 6,
}

/// Reprojected sky image.
pub struct AsiSkyImage(SkyImage);

/// Cloud segmentation of one image.
pub struct AsiSegmentation(SegmentationMap);

/// Dense optical flow between two images, px/frame.
pub struct AsiFlow(FlowField);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> AsiStatus {
    match e {
        Error::InvalidInput(_) | Error::ShapeMismatch { .. } => AsiStatus::InvalidInput,
        _ => match e.class() {
            ErrorClass::Config => AsiStatus::Config,
            ErrorClass::Data => AsiStatus::Data,
            ErrorClass::Numeric => AsiStatus::Numeric,
        },
    }
}

enum Failure {
    Null(&'static str),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> AsiStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AsiStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            AsiStatus::NullPointer
        }
        Ok(Err(Failure::Core(e))) => {
            let s = status_of(&e);
            set_error(e.to_string());
            s
        }
        Err(_) => {
            set_error("internal panic".into());
            AsiStatus::Panic
        }
    }
}

fn non_null<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    // SAFETY: the caller passes either null or a valid pointer per the C contract.
    unsafe { p.as_ref() }.ok_or(Failure::Null(what))
}

fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    // SAFETY: as above, for writable outputs.
    unsafe { p.as_mut() }.ok_or(Failure::Null(what))
}

fn slice<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    non_null(p, what)?;
    // SAFETY: non-null and the caller guarantees `len` readable elements.
    Ok(unsafe { std::slice::from_raw_parts(p, len) })
}

fn slice_mut<'a, T>(p: *mut T, len: usize, what: &'static str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    out(p, what)?;
    // SAFETY: non-null and the caller guarantees `len` writable elements.
    Ok(unsafe { std::slice::from_raw_parts_mut(p, len) })
}

fn timestamp(unix_s: i64) -> Result<DateTime<Utc>, Failure> {
    DateTime::from_timestamp(unix_s, 0)
        .ok_or_else(|| Failure::Core(Error::InvalidInput(format!("timestamp {unix_s} out of range"))))
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length without the NUL,
/// or 0 when no error was recorded.
#[no_mangle]
pub extern "C" fn asi_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else {
            return 0;
        };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            // SAFETY: the caller provides `len` writable bytes at `buf`.
            unsafe {
                std::ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
                *buf.add(n) = 0;
            }
        }
        bytes.len()
    })
}

/// Solar zenith and azimuth (degrees, azimuth clockwise from north).
#[no_mangle]
pub extern "C" fn asi_solar_position(
    unix_seconds: i64,
    latitude_deg: f64,
    longitude_deg: f64,
    zenith_deg: *mut f64,
    azimuth_deg: *mut f64,
) -> AsiStatus {
    guard(|| {
        let loc = GeoLocation::new(latitude_deg, longitude_deg)?;
        let g = solar_position(timestamp(unix_seconds)?, &loc);
        *out(zenith_deg, "zenith_deg")? = g.zenith_deg;
        *out(azimuth_deg, "azimuth_deg")? = g.azimuth_deg;
        Ok(())
    })
}

/// Clear-sky GHI in W/m² for a solar zenith angle; 0 below the horizon.
#[no_mangle]
pub extern "C" fn asi_clear_sky_ghi(zenith_deg: f64, solar_constant: f64, ghi: *mut f64) -> AsiStatus {
    guard(|| {
        let model = ClearSkyModel::new(solar_constant)?;
        if !zenith_deg.is_finite() {
            return Err(Error::InvalidInput("zenith must be finite".into()).into());
        }
        let geom = SolarGeometry {
            zenith_deg,
            azimuth_deg: 0.0,
        };
        *out(ghi, "ghi")? = clear_sky_ghi(&geom, &model);
        Ok(())
    })
}

/// `1 - rmse / rmse_reference`. Fails with `ASI_STATUS_NUMERIC` when the
/// reference RMSE is zero.
#[no_mangle]
pub extern "C" fn asi_skill_score(rmse: f64, rmse_reference: f64, ss: *mut f64) -> AsiStatus {
    guard(|| {
        let v = asi_nowcast::evaluation::skill_score(rmse, rmse_reference)
            .ok_or_else(|| Error::Numeric("skill score undefined for a zero reference RMSE".into()))?;
        *out(ss, "ss")? = v;
        Ok(())
    })
}

/// Smart persistence over the 90 horizons: `forecast[h] = ghi_now / ghi_clear_now * ghi_clear_future[h]`.
#[no_mangle]
pub extern "C" fn asi_smart_persistence(
    ghi_now: f64,
    ghi_clear_now: f64,
    ghi_clear_future: *const f64,
    len: usize,
    forecast: *mut f64,
) -> AsiStatus {
    guard(|| {
        let future = slice(ghi_clear_future, len, "ghi_clear_future")?;
        let rec = smart_persistence(DateTime::UNIX_EPOCH, ghi_now, ghi_clear_now, future)?;
        slice_mut(forecast, len, "forecast")?.copy_from_slice(&rec.values);
        Ok(())
    })
}

/// Number of horizons every forecast covers.
#[no_mangle]
pub extern "C" fn asi_horizon_count() -> usize {
    asi_nowcast::features::HORIZONS
}

/// Builds a square sky image from `size * size` interleaved RGB floats in
/// [0, 1], row-major, on an equidistant grid of the given field of view.
#[no_mangle]
pub extern "C" fn asi_sky_image_new(
    rgb: *const f32,
    size: usize,
    fov_deg: f64,
    unix_seconds: i64,
    image: *mut *mut AsiSkyImage,
) -> AsiStatus {
    guard(|| {
        let dst = out(image, "image")?;
        *dst = std::ptr::null_mut();
        if size < 2 || !(fov_deg > 0.0 && fov_deg <= 90.0) {
            return Err(Error::InvalidInput(format!("bad image size {size} or FOV {fov_deg}")).into());
        }
        let data = slice(rgb, size * size * 3, "rgb")?;
        let pixels = data.chunks_exact(3).map(|p| [p[0], p[1], p[2]]).collect();
        let meta = FrameMeta::new(timestamp(unix_seconds)?, "ffi");
        let img = SkyImage::from_pixels(SkyGrid::new(size, fov_deg), pixels, meta)?;
        *dst = Box::into_raw(Box::new(AsiSkyImage(img)));
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn asi_sky_image_free(image: *mut AsiSkyImage) {
    if !image.is_null() {
        // SAFETY: produced by `asi_sky_image_new` and not freed before.
        drop(unsafe { Box::from_raw(image) });
    }
}

/// Segments an image with the default thresholds.
#[no_mangle]
pub extern "C" fn asi_segment(image: *const AsiSkyImage, segmentation: *mut *mut AsiSegmentation) -> AsiStatus {
    guard(|| {
        let dst = out(segmentation, "segmentation")?;
        *dst = std::ptr::null_mut();
        let img = non_null(image, "image")?;
        let map = segment(&img.0, &SegmentationConfig::default())?;
        *dst = Box::into_raw(Box::new(AsiSegmentation(map)));
        Ok(())
    })
}

/// Cloud share of the valid pixels.
#[no_mangle]
pub extern "C" fn asi_segmentation_cloud_fraction(segmentation: *const AsiSegmentation, fraction: *mut f64) -> AsiStatus {
    guard(|| {
        *out(fraction, "fraction")? = non_null(segmentation, "segmentation")?.0.cloud_fraction();
        Ok(())
    })
}

/// Per-pixel classes as gray codes (0 outside the disk, 128 sky, 255 cloud);
/// `len` must equal `size * size`.
#[no_mangle]
pub extern "C" fn asi_segmentation_classes(segmentation: *const AsiSegmentation, classes: *mut u8, len: usize) -> AsiStatus {
    guard(|| {
        let seg = &non_null(segmentation, "segmentation")?.0;
        if len != seg.classes.len() {
            return Err(Error::shape("segmentation classes", seg.classes.len(), len).into());
        }
        for (d, c) in slice_mut(classes, len, "classes")?.iter_mut().zip(&seg.classes) {
            *d = c.to_gray();
        }
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn asi_segmentation_free(segmentation: *mut AsiSegmentation) {
    if !segmentation.is_null() {
        // SAFETY: produced by `asi_segment` and not freed before.
        drop(unsafe { Box::from_raw(segmentation) });
    }
}

/// Dense flow from `prev` to `next` with the default parameters.
#[no_mangle]
pub extern "C" fn asi_flow(prev: *const AsiSkyImage, next: *const AsiSkyImage, flow: *mut *mut AsiFlow) -> AsiStatus {
    guard(|| {
        let dst = out(flow, "flow")?;
        *dst = std::ptr::null_mut();
        let (a, b) = (non_null(prev, "prev")?, non_null(next, "next")?);
        let f = sky_flow(&a.0, &b.0, &FlowParams::default())?;
        *dst = Box::into_raw(Box::new(AsiFlow(f)));
        Ok(())
    })
}

/// Copies the u and v components (`len` = width * height each).
#[no_mangle]
pub extern "C" fn asi_flow_components(flow: *const AsiFlow, u: *mut f64, v: *mut f64, len: usize) -> AsiStatus {
    guard(|| {
        let f = &non_null(flow, "flow")?.0;
        if len != f.u.len() {
            return Err(Error::shape("flow components", f.u.len(), len).into());
        }
        slice_mut(u, len, "u")?.copy_from_slice(&f.u);
        slice_mut(v, len, "v")?.copy_from_slice(&f.v);
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn asi_flow_free(flow: *mut AsiFlow) {
    if !flow.is_null() {
        // SAFETY: produced by `asi_flow` and not freed before.
        drop(unsafe { Box::from_raw(flow) });
    }
}
