mod common;

use common::*;
use rand::Rng;
use shape_eval_core::datagen::{
    crop_and_resize, crop_and_resize_with_box, generate_dataset, look_at, mask_bbox, normalize_mesh, raycast_depth,
    render_sample, sample_camera, CameraSampleConfig, CropConfig, DatagenConfig,
};
use shape_eval_core::harness::load_benchmark;
use shape_eval_core::io::write_mesh;
use shape_eval_core::metrics::chamfer;
use shape_eval_core::shapes::{cuboid, icosphere, quad, torus, unit_cube};
use shape_eval_core::{CameraIntrinsics, CropBox, PointCloud, RigidTransform, TriangleMesh, Vec3};

fn camera_center(pose: &RigidTransform) -> Vec3 {
    -(pose.rotation().transpose() * pose.translation())
}

#[test]
fn normalize_mesh_examples() {
    let cube = unit_cube();
    let same = normalize_mesh(&cube).unwrap();
    for (a, b) in same.vertices().iter().zip(cube.vertices()) {
        assert!((a - b).norm() < 1e-12);
    }
    let big = cuboid(Vec3::new(4.0, -3.0, 7.0), Vec3::repeat(10.0));
    let n = normalize_mesh(&big).unwrap();
    for (a, b) in n.vertices().iter().zip(cube.vertices()) {
        assert!((a - b).norm() < 1e-12);
    }
    let flat = TriangleMesh::new(vec![Vec3::zeros(); 3], vec![[0, 1, 2]]);
    assert!(flat.is_err() || normalize_mesh(&flat.unwrap()).is_err());
    assert!(normalize_mesh(&TriangleMesh::empty()).is_err());
}

#[test]
fn normalize_mesh_bbox_oracle() {
    let mut r = rng(61);
    for _ in 0..30 {
        let n = r.gen_range(3..60);
        let scale = Vec3::new(r.gen_range(0.1..9.0), r.gen_range(0.1..9.0), r.gen_range(0.1..9.0));
        let off = random_point(&mut r, 20.0);
        let verts: Vec<Vec3> = (0..n).map(|_| random_point(&mut r, 1.0).component_mul(&scale) + off).collect();
        let faces: Vec<[usize; 3]> = (0..n - 2).map(|i| [i, i + 1, i + 2]).collect();
        let m = normalize_mesh(&TriangleMesh::new(verts, faces).unwrap()).unwrap();
        let (mut lo, mut hi) = (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY));
        for v in m.vertices() {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        assert!(((hi - lo).max() - 1.0).abs() < 1e-9);
        assert!(((hi + lo) / 2.0).norm() < 1e-9);
    }
}

#[test]
fn camera_sampling_examples() {
    let cfg = CameraSampleConfig {
        focal_mm: [36.0, 36.0],
        jitter_radii: 0.0,
        ..Default::default()
    };
    let (k, pose) = sample_camera(&cfg, &mut rng(62)).unwrap();
    assert_eq!(k.fx, 600.0);
    assert_eq!(k.fy, 600.0);
    assert_eq!((k.cx, k.cy), (299.5, 299.5));
    let axis = pose.rotation().row(2).transpose();
    let to_target = -camera_center(&pose);
    assert!((axis - to_target.normalize()).norm() < 1e-9);

    let pose = look_at(&Vec3::new(3.0, -1.0, 2.0), &Vec3::new(0.1, 0.2, -0.3)).unwrap();
    assert!(pose.apply(&Vec3::new(0.1, 0.2, -0.3)).xy().norm() < 1e-12);
    assert!(look_at(&Vec3::z(), &Vec3::zeros()).is_err());
}

#[test]
fn camera_sampling_respects_ranges() {
    let cfg = CameraSampleConfig {
        jitter_radii: 0.0,
        ..Default::default()
    };
    let mut r = rng(63);
    let (mut fmin, mut fmax, mut emin, mut emax) = (f64::INFINITY, 0.0f64, 90.0f64, -90.0f64);
    for _ in 0..10_000 {
        let (k, pose) = sample_camera(&cfg, &mut r).unwrap();
        let f_mm = k.fx / 600.0 * 36.0;
        let c = camera_center(&pose);
        let elev = (c.z / c.norm()).asin().to_degrees();
        let dist = c.norm() / cfg.object_radius;
        assert!((30.0 - 1e-9..=70.0 + 1e-9).contains(&f_mm));
        assert!((5.0 - 1e-9..=65.0 + 1e-9).contains(&elev));
        assert!((1.5 - 1e-9..=3.5 + 1e-9).contains(&dist));
        let rot = pose.rotation();
        assert!((rot * rot.transpose() - shape_eval_core::Mat3::identity()).amax() < 1e-12);
        assert!((rot.determinant() - 1.0).abs() < 1e-12);
        fmin = fmin.min(f_mm);
        fmax = fmax.max(f_mm);
        emin = emin.min(elev);
        emax = emax.max(elev);
    }
    assert!(fmin < 31.0 && fmax > 69.0 && emin < 6.0 && emax > 64.0);

    let jittered = CameraSampleConfig::default();
    let lim = jittered.jitter_radii * jittered.object_radius;
    for _ in 0..1000 {
        let (_, pose) = sample_camera(&jittered, &mut r).unwrap();
        // The optical axis passes through the jittered target.
        let c = camera_center(&pose);
        let axis = pose.rotation().row(2).transpose();
        let closest = c - axis * c.dot(&axis);
        assert!(closest.norm() <= lim + 1e-9);
    }
}

#[test]
fn fronto_parallel_square_renders_constant_depth() {
    let k = CameraIntrinsics::new(100.0, 100.0, 49.5, 49.5, 100, 100).unwrap();
    let d = raycast_depth(&quad(Vec3::new(0.0, 0.0, 2.0), 1.0), &k, &RigidTransform::identity()).unwrap();
    assert!(d.masked_count() > 2000);
    for j in 0..100 {
        for i in 0..100 {
            if let Some(z) = d.get(i, j) {
                assert!((z - 2.0).abs() < 1e-12);
            }
        }
    }
    // Half-width 0.5 at depth 2 covers |i - 49.5| <= 25.
    assert_eq!(d.get(49, 49), Some(2.0));
    assert_eq!(d.get(10, 49), None);
}

#[test]
fn sphere_depth_matches_analytic_nearest_point() {
    let k = CameraIntrinsics::new(300.0, 300.0, 100.0, 100.0, 201, 201).unwrap();
    let sphere = icosphere(1.0, 2);
    for dist in [3.0, 4.5] {
        let pose = RigidTransform::from_translation(Vec3::new(0.0, 0.0, dist));
        let d = raycast_depth(&sphere, &k, &pose).unwrap();
        let min = d.values().iter().zip(d.mask()).filter(|x| *x.1).map(|x| *x.0).fold(f64::INFINITY, f64::min);
        // Chord sag of a 2-subdivision icosphere: the inscribed-face distance.
        let sag = 1.0 - sphere
            .triangles()
            .iter()
            .map(|t| ((t[0] + t[1] + t[2]) / 3.0).norm())
            .fold(f64::INFINITY, f64::min);
        assert!(min >= dist - 1.0 - 1e-12 && min <= dist - 1.0 + sag, "{min}");
    }
}

#[test]
fn rendered_points_lie_on_the_mesh_and_are_unoccluded() {
    let mesh = torus(0.35, 0.12, 24, 12);
    let cfg = CameraSampleConfig {
        image_size: [96, 80],
        ..Default::default()
    };
    let mut r = rng(64);
    for _ in 0..4 {
        let (k, pose) = sample_camera(&cfg, &mut r).unwrap();
        let s = render_sample(&mesh, &k, &pose, None).unwrap();
        let cam_tris = mesh.transformed(&pose).unwrap().triangles();
        for j in (0..80).step_by(3) {
            for i in (0..96).step_by(3) {
                let Some(p) = s.projection.get(i, j) else { continue };
                assert!(brute_mesh_distance(&p, &cam_tris) < 1e-6);
                let dir = k.ray(i as f64, j as f64);
                let first = cam_tris.iter().filter_map(|t| ray_triangle(&Vec3::zeros(), &dir, t)).fold(f64::INFINITY, f64::min);
                assert!((first - p.z).abs() < 1e-9, "occluded or wrong hit at ({i},{j})");
            }
        }
    }
}

#[test]
fn rendering_is_deterministic() {
    let mesh = icosphere(0.5, 2);
    let cfg = CameraSampleConfig {
        image_size: [64, 64],
        seed: 5,
        ..Default::default()
    };
    let (k1, p1) = sample_camera(&cfg, &mut rng(65)).unwrap();
    let (k2, p2) = sample_camera(&cfg, &mut rng(65)).unwrap();
    assert_eq!((k1, p1), (k2, p2));
    assert_eq!(render_sample(&mesh, &k1, &p1, None).unwrap(), render_sample(&mesh, &k2, &p2, None).unwrap());
}

fn sphere_sample() -> shape_eval_core::datagen::RenderSample {
    let k = CameraIntrinsics::new(600.0, 600.0, 299.5, 299.5, 600, 600).unwrap();
    let pose = RigidTransform::from_translation(Vec3::new(0.2, -0.1, 3.0));
    render_sample(&icosphere(0.5, 4), &k, &pose, None).unwrap()
}

#[test]
fn full_frame_crop_is_identity() {
    let s = sphere_sample();
    let same = crop_and_resize_with_box(&s, &CropBox::full(600, 600), (600, 600)).unwrap();
    assert_eq!(same.depth, s.depth);
    assert_eq!(same.intrinsics, s.intrinsics);
    assert_eq!(same.projection, s.projection);
}

#[test]
fn crop_preserves_the_surface_and_centers_the_mask() {
    let s = sphere_sample();
    let c = crop_and_resize(&s, (224, 224), 0.1).unwrap();
    assert_eq!((c.intrinsics.width, c.intrinsics.height), (224, 224));
    let before = PointCloud::new(s.projection.masked_points()).unwrap();
    let after = PointCloud::new(c.projection.masked_points()).unwrap();
    let footprint = 2.6 / 600.0;
    let cd = chamfer(&before, &after).unwrap();
    assert!(cd < 2.0 * footprint, "{cd} vs {footprint}");
    let (i0, j0, i1, j1) = mask_bbox(&c.depth).unwrap();
    assert!(((i0 + i1) as f64 / 2.0 - 111.5).abs() <= 1.0);
    assert!(((j0 + j1) as f64 / 2.0 - 111.5).abs() <= 1.0);

    let none = crop_and_resize_with_box(&s, &CropBox::full(600, 600), (600, 600)).unwrap();
    let empty = shape_eval_core::datagen::RenderSample {
        depth: shape_eval_core::DepthMap::from_fn(600, 600, |_, _| None).unwrap(),
        ..none
    };
    assert!(crop_and_resize(&empty, (224, 224), 0.1).is_err());
}

#[test]
fn dataset_generation_writes_a_loadable_benchmark() {
    let dir = tempfile::tempdir().unwrap();
    let meshes = dir.path().join("meshes");
    std::fs::create_dir_all(meshes.join("rings")).unwrap();
    write_mesh(&meshes.join("rings/torus.obj"), &torus(0.4, 0.15, 24, 12)).unwrap();
    write_mesh(&meshes.join("ball.ply"), &icosphere(0.5, 2)).unwrap();
    let cfg = DatagenConfig {
        camera: CameraSampleConfig {
            image_size: [120, 120],
            seed: 3,
            ..Default::default()
        },
        views_per_object: 2,
        crop: Some(CropConfig { size: 64, margin: 0.1 }),
        ..Default::default()
    };
    let out = dir.path().join("out");
    let summary = generate_dataset(&meshes, &out, &cfg).unwrap();
    assert_eq!(summary.samples.len(), 4);
    assert!(summary.skipped.is_empty());
    let (instances, failures) = load_benchmark(&out).unwrap();
    assert!(failures.is_empty());
    assert_eq!(instances.len(), 4);
    assert!(instances.iter().any(|i| i.category == "rings"));
    for inst in &instances {
        let d = inst.depth.as_ref().unwrap();
        assert_eq!((d.width(), d.height()), (64, 64));
        let mesh = inst.load_mesh().unwrap();
        let tris = mesh.triangles();
        let pts = inst.visible_points().unwrap().unwrap();
        // Cropped rays drift at most one source pixel; source fx >= 100.
        for p in pts.iter().step_by(7) {
            assert!(brute_mesh_distance(p, &tris) <= p.z / 100.0 + 1e-9);
        }
    }
    let again = dir.path().join("again");
    generate_dataset(&meshes, &again, &cfg).unwrap();
    for s in &summary.samples {
        let a = std::fs::read(out.join(s).join("depth.raw")).unwrap();
        let b = std::fs::read(again.join(s).join("depth.raw")).unwrap();
        assert_eq!(a, b);
    }
}
