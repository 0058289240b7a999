use std::ffi::c_char;
use std::path::Path;
use std::process::Command;

use asi_nowcast::solar::{solar_position, GeoLocation};
use asi_nowcast::synth::{Camera, Scene, SceneSpec};
use asi_nowcast_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 256];
    let n = asi_last_error(buf.as_mut_ptr(), buf.len());
    let bytes: Vec<u8> = buf[..n.min(255)].iter().map(|c| *c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

#[test]
fn solar_position_matches_core() {
    let t = 1_685_620_800; // 2023-06-01T12:00:00Z
    let (mut z, mut a) = (0.0, 0.0);
    assert_eq!(asi_solar_position(t, 59.97, 11.05, &mut z, &mut a), AsiStatus::Ok);
    let g = solar_position(chrono::DateTime::from_timestamp(t, 0).unwrap(), &GeoLocation::new(59.97, 11.05).unwrap());
    assert_eq!((z, a), (g.zenith_deg, g.azimuth_deg));
    assert_eq!(asi_solar_position(t, 95.0, 0.0, &mut z, &mut a), AsiStatus::InvalidInput);
    assert!(last_error().contains("95"));
    assert_eq!(asi_solar_position(t, 10.0, 0.0, std::ptr::null_mut(), &mut a), AsiStatus::NullPointer);
}

#[test]
fn clear_sky_and_skill_score() {
    let mut g = -1.0;
    assert_eq!(asi_clear_sky_ghi(95.0, 1361.0, &mut g), AsiStatus::Ok);
    assert_eq!(g, 0.0);
    assert_eq!(asi_clear_sky_ghi(30.0, -1.0, &mut g), AsiStatus::InvalidInput);
    let mut ss = 0.0;
    assert_eq!(asi_skill_score(80.0, 100.0, &mut ss), AsiStatus::Ok);
    assert!((ss - 0.2).abs() < 1e-12);
    assert_eq!(asi_skill_score(80.0, 0.0, &mut ss), AsiStatus::Numeric);
}

#[test]
fn smart_persistence_scales_clear_sky() {
    let n = asi_horizon_count();
    let future = vec![800.0; n];
    let mut out = vec![0.0; n];
    assert_eq!(asi_smart_persistence(300.0, 600.0, future.as_ptr(), n, out.as_mut_ptr()), AsiStatus::Ok);
    assert!(out.iter().all(|v| (v - 400.0).abs() < 1e-9));
    assert_eq!(asi_smart_persistence(300.0, 600.0, future.as_ptr(), 3, out.as_mut_ptr()), AsiStatus::InvalidInput);
}

fn image(scene: &Scene, frame: usize) -> *mut AsiSkyImage {
    let img = scene.render_sky(Camera::Cam1, frame, 64);
    let rgb: Vec<f32> = img.pixels.iter().flatten().copied().collect();
    let mut h = std::ptr::null_mut();
    assert_eq!(asi_sky_image_new(rgb.as_ptr(), 64, scene.spec.fov_deg, 0, &mut h), AsiStatus::Ok);
    h
}

#[test]
fn segmentation_and_flow_handles() {
    let mut spec = SceneSpec::new("ffi", 0.5, 2000.0, 9);
    spec.frame_count = 2;
    spec.image_size = 64;
    spec.wind_px_per_frame = (2.0, 0.0);
    let scene = Scene::new(spec).unwrap();
    let (a, b) = (image(&scene, 0), image(&scene, 1));

    let mut seg = std::ptr::null_mut();
    assert_eq!(asi_segment(a, &mut seg), AsiStatus::Ok);
    let mut cf = 0.0;
    assert_eq!(asi_segmentation_cloud_fraction(seg, &mut cf), AsiStatus::Ok);
    assert!((cf - 0.5).abs() < 0.1, "{cf}");
    let mut classes = vec![0u8; 64 * 64];
    assert_eq!(asi_segmentation_classes(seg, classes.as_mut_ptr(), classes.len()), AsiStatus::Ok);
    assert_eq!(classes[0], 0);
    assert!(classes.contains(&255) && classes.contains(&128));
    assert_eq!(asi_segmentation_classes(seg, classes.as_mut_ptr(), 10), AsiStatus::InvalidInput);

    let mut flow = std::ptr::null_mut();
    assert_eq!(asi_flow(a, b, &mut flow), AsiStatus::Ok);
    let (mut u, mut v) = (vec![0.0; 64 * 64], vec![0.0; 64 * 64]);
    assert_eq!(asi_flow_components(flow, u.as_mut_ptr(), v.as_mut_ptr(), u.len()), AsiStatus::Ok);
    let centre = 32 * 64 + 32;
    assert!(u[centre] > 1.0 && u[centre] < 3.0, "{}", u[centre]);

    asi_flow_free(flow);
    asi_segmentation_free(seg);
    asi_sky_image_free(a);
    asi_sky_image_free(b);
    asi_sky_image_free(std::ptr::null_mut());
}

#[test]
fn bad_image_rejected() {
    let mut h = std::ptr::null_mut();
    let rgb = [0.0f32; 12];
    assert_eq!(asi_sky_image_new(rgb.as_ptr(), 2, 120.0, 0, &mut h), AsiStatus::InvalidInput);
    assert!(h.is_null());
    assert_eq!(asi_sky_image_new(std::ptr::null(), 4, 80.0, 0, &mut h), AsiStatus::NullPointer);
}

#[test]
fn header_declares_every_export_and_compiles_as_c() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = std::fs::read_to_string(dir.join("include/asi_nowcast.h")).unwrap();
    let src = std::fs::read_to_string(dir.join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.strip_prefix("pub extern \"C\" fn "))
        .map(|l| l.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 12);
    for f in exports {
        assert!(header.contains(&format!("{f}(")), "{f} missing from header");
    }
    let Ok(out) = Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c"])
        .arg(dir.join("include/asi_nowcast.h"))
        .output()
    else {
        eprintln!("no C compiler; syntax check skipped");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
