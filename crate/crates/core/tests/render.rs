use std::f64::consts::PI;

use cylsfm::datasets::synthetic::{render_cylindrical, Scene};
use cylsfm::render::{anaglyph, build_mesh, render_ods, render_view, Mesh, ViewCamera};
use cylsfm::{CylCamera, Error, PinholeCamera, Point3, Pose6, Tensor};
use proptest::prelude::*;

fn bump_pano(w: usize, h: usize, center: f64) -> Tensor {
    Tensor::from_fn(h, w, 1, |_, c, _| {
        let d = c as f64 - center;
        (-d * d / 8.0).exp()
    })
}

fn centroid(img: &Tensor, row: usize) -> f64 {
    let (mut s, mut m) = (0.0, 0.0);
    for c in 0..img.cols() {
        let v = img.get(row, c, 0);
        s += v;
        m += v * c as f64;
    }
    m / s
}

#[test]
fn ods_disparity_matches_circle_geometry() {
    let cam = CylCamera::new(256, 16).unwrap();
    let (d, r) = (5.0, 0.5);
    let mesh = build_mesh(&bump_pano(256, 16, 100.0), &Tensor::filled(16, 256, 1, d), &cam).unwrap();
    let pair = render_ods(&mesh, r, &cam).unwrap();
    let expect = 2.0 * (r / d).asin() * 256.0 / (2.0 * PI);
    for row in [4, 8, 12] {
        let shift = centroid(&pair.left.image, row) - centroid(&pair.right.image, row);
        assert!((shift - expect).abs() <= 1.0, "row {row}: {shift} vs {expect}");
    }
}

#[test]
fn tiny_radius_is_the_monoscopic_view() {
    let cam = CylCamera::new(64, 16).unwrap();
    let (pano, depth) = render_cylindrical(&Scene::room(4.0, 2), &Pose6::identity(), &cam, 1).unwrap();
    let mesh = build_mesh(&pano, &depth, &cam).unwrap();
    let mono = render_view(&mesh, &Pose6::identity(), &ViewCamera::Cylindrical(cam));
    let pair = render_ods(&mesh, 1e-7, &cam).unwrap();
    for eye in [&pair.left, &pair.right] {
        assert_eq!(eye.valid, mono.valid);
        let worst = eye
            .image
            .data()
            .iter()
            .zip(mono.image.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1.0 / 255.0, "{worst}");
    }
}

#[test]
fn eye_circle_must_fit_inside_the_scene() {
    let cam = CylCamera::new(16, 4).unwrap();
    let mesh = build_mesh(&Tensor::zeros(4, 16, 1), &Tensor::filled(4, 16, 1, 0.5), &cam).unwrap();
    assert!(matches!(
        render_ods(&mesh, 1.0, &cam),
        Err(Error::EyeInsideGeometry { .. })
    ));
    assert!(matches!(render_ods(&mesh, 0.0, &cam), Err(Error::InvalidArgument(_))));
}

#[test]
fn ods_seam_is_as_smooth_as_the_interior() {
    let cam = CylCamera::new(128, 16).unwrap();
    let pano = Tensor::from_fn(16, 128, 3, |r, c, k| {
        let t = 2.0 * PI * c as f64 / 128.0;
        0.5 + 0.3 * (t * (k + 1) as f64 + 0.1 * r as f64).sin()
    });
    let depth = Tensor::from_fn(16, 128, 1, |_, c, _| 4.0 + (2.0 * PI * c as f64 / 128.0).cos());
    let mesh = build_mesh(&pano, &depth, &cam).unwrap();
    let pair = render_ods(&mesh, 0.3, &cam).unwrap();
    for eye in [&pair.left.image, &pair.right.image] {
        let col_diff = |a: usize, b: usize| -> f64 {
            (0..16)
                .flat_map(|r| (0..3).map(move |k| (r, k)))
                .map(|(r, k)| (eye.get(r, a, k) - eye.get(r, b, k)).abs())
                .sum::<f64>()
                / 48.0
        };
        let mut interior: Vec<f64> = (0..127).map(|c| col_diff(c, c + 1)).collect();
        interior.sort_by(f64::total_cmp);
        let median = interior[interior.len() / 2];
        let seam = col_diff(127, 0);
        assert!(seam <= 2.0 * median, "seam {seam} median {median}");
    }
}

#[test]
fn constant_cylinder_gives_constant_depth_buffer() {
    let src = CylCamera::new(48, 12).unwrap();
    let mesh = build_mesh(&Tensor::filled(12, 48, 1, 0.5), &Tensor::filled(12, 48, 1, 3.0), &src).unwrap();
    // a different resolution forces interpolation inside the triangles
    let view = CylCamera::new(100, 20).unwrap().with_h_max(0.8 * src.h_max).unwrap();
    let out = render_view(&mesh, &Pose6::identity(), &ViewCamera::Cylindrical(view));
    assert_eq!(out.coverage(), 100 * 20);
    for &d in out.depth.data() {
        assert!((d - 3.0).abs() < 0.03, "{d}");
    }
}

fn quad(z: f64, half: f64, color: f64) -> Mesh {
    Mesh {
        positions: vec![
            Point3::new(-half, -half, z),
            Point3::new(half, -half, z),
            Point3::new(-half, half, z),
            Point3::new(half, half, z),
        ],
        colors: vec![color; 4],
        chans: 1,
        triangles: vec![[0, 1, 3], [0, 3, 2]],
    }
}

fn merge(a: &Mesh, b: &Mesh) -> Mesh {
    let n = a.positions.len() as u32;
    let mut m = a.clone();
    m.positions.extend(&b.positions);
    m.colors.extend(&b.colors);
    m.triangles.extend(b.triangles.iter().map(|t| t.map(|v| v + n)));
    m
}

#[test]
fn approaching_a_plane_grows_its_image() {
    let cam = ViewCamera::Pinhole(PinholeCamera::from_fov(64, 64, 60.0).unwrap());
    let plane = quad(6.0, 1.0, 1.0);
    let areas: Vec<usize> = [0.0, 1.5, 3.0]
        .iter()
        .map(|&z| render_view(&plane, &Pose6::translation(0.0, 0.0, z), &cam).coverage())
        .collect();
    assert!(areas[0] > 0 && areas[0] < areas[1] && areas[1] < areas[2], "{areas:?}");
}

#[test]
fn nearer_surface_wins_in_either_draw_order() {
    let cam = ViewCamera::Pinhole(PinholeCamera::from_fov(32, 32, 60.0).unwrap());
    let near = quad(3.0, 0.5, 1.0);
    let far = quad(6.0, 2.0, 0.25);
    for m in [merge(&near, &far), merge(&far, &near)] {
        let out = render_view(&m, &Pose6::identity(), &cam);
        let only_near = render_view(&near, &Pose6::identity(), &cam);
        let mut overlap = 0;
        for r in 0..32 {
            for c in 0..32 {
                if only_near.is_valid(r, c) {
                    overlap += 1;
                    assert!((out.depth.get(r, c, 0) - 3.0).abs() < 1e-9);
                    assert!((out.image.get(r, c, 0) - 1.0).abs() < 1e-12);
                } else if out.is_valid(r, c) {
                    assert!((out.depth.get(r, c, 0) - 6.0).abs() < 1e-9);
                }
            }
        }
        assert!(overlap > 0);
    }
}

#[test]
fn uniform_gray_pair_gives_gray_anaglyph() {
    let g = Tensor::filled(3, 5, 1, 0.4);
    let a = anaglyph(&g, &g).unwrap();
    assert!(a.data().iter().all(|v| (v - 0.4).abs() < 1e-15));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn mesh_counts_and_indices(w in 2usize..20, h in 1usize..8, d in 0.1f64..50.0) {
        let cam = CylCamera::new(w, h).unwrap();
        let m = build_mesh(&Tensor::zeros(h, w, 3), &Tensor::filled(h, w, 1, d), &cam).unwrap();
        prop_assert_eq!(m.positions.len(), w * h);
        prop_assert_eq!(m.triangles.len(), 2 * w * (h - 1));
        prop_assert!(m.triangles.iter().flatten().all(|&v| (v as usize) < w * h));
        for p in &m.positions {
            prop_assert!((p.x.hypot(p.z) - d).abs() < 1e-12 * d.max(1.0));
        }
    }

    #[test]
    fn self_reprojection_identity(seed in 0u64..1000, amp in 0.0f64..2.0) {
        let cam = CylCamera::new(40, 10).unwrap();
        let pano = Tensor::from_fn(10, 40, 3, |r, c, k| {
            0.5 + 0.45 * ((seed as f64 * 0.37 + c as f64 * 0.5 + k as f64) .sin() * (r as f64 * 0.3).cos())
        });
        let depth = Tensor::from_fn(10, 40, 1, |r, c, _| 3.0 + amp * ((c as f64 * 0.3 + seed as f64).sin() + 0.05 * r as f64));
        let m = build_mesh(&pano, &depth, &cam).unwrap();
        let out = render_view(&m, &Pose6::identity(), &ViewCamera::Cylindrical(cam));
        let mut err = 0.0;
        let mut n = 0usize;
        for r in 0..10 {
            for c in 0..40 {
                if out.is_valid(r, c) {
                    for k in 0..3 {
                        err += (out.image.get(r, c, k) - pano.get(r, c, k)).abs();
                        n += 1;
                    }
                }
            }
        }
        prop_assert!(n > 0);
        prop_assert!(err / (n as f64) < 2.0 / 255.0);
    }
}
