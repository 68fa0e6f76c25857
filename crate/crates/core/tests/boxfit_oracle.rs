use nalgebra::{Point2, Rotation2, Vector2};
use objdisc::boxfit::{convex_hull_2d, edge_rectangles, fit_cluster_box, fit_oriented_box, min_area_rectangle, BoxFitParams};
use objdisc::{OrientedBox, Point3};
use objdisc_testkit::{hull_oracle, in_box, random_cluster, sweep_min_area};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn lift(xy: &[Point2<f64>]) -> Vec<Point3> {
    xy.iter().map(|p| Point3::new(p.x, p.y, 1.0)).collect()
}

fn contains_all(b: &OrientedBox, xy: &[Point2<f64>]) -> bool {
    let grown = OrientedBox { length: b.length + 1e-7, width: b.width + 1e-7, ..*b };
    xy.iter().all(|p| in_box(&grown, p.x, p.y))
}

fn sorted(mut v: Vec<Point2<f64>>) -> Vec<Point2<f64>> {
    v.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    v
}

#[test]
fn hull_matches_cubic_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for n in [3usize, 4, 10, 50, 200, 1000] {
        let pts: Vec<Point2<f64>> = (0..n).map(|_| Point2::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0))).collect();
        let hull = convex_hull_2d(&pts);
        assert!(hull.is_ccw_convex());
        assert_eq!(sorted(hull.vertices.clone()), hull_oracle(&pts), "n = {n}");
    }
    for _ in 0..50 {
        let pts = random_cluster(&mut rng);
        assert_eq!(sorted(convex_hull_2d(&pts).vertices), hull_oracle(&pts));
    }
}

#[test]
fn calipers_beat_the_angle_sweep_and_contain_the_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let params = BoxFitParams::default();
    for _ in 0..100 {
        let xy = random_cluster(&mut rng);
        let b = fit_oriented_box(&lift(&xy), &params).unwrap();
        let sweep = sweep_min_area(&xy, 3600);
        assert!(b.length * b.width <= sweep + 1e-9, "{} > {sweep}", b.length * b.width);
        assert!(b.length * b.width >= convex_hull_2d(&xy).area() - 1e-9);
        assert!(contains_all(&b, &xy));
        assert!(b.length >= b.width);
    }
}

#[test]
fn fit_is_se2_equivariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let params = BoxFitParams::default();
    for _ in 0..100 {
        let xy = random_cluster(&mut rng);
        let rot = Rotation2::new(rng.random_range(-3.2..3.2));
        let t = Vector2::new(rng.random_range(-30.0..30.0), rng.random_range(-30.0..30.0));
        let moved: Vec<Point2<f64>> = xy.iter().map(|p| rot * p + t).collect();
        for (k, fit) in [fit_oriented_box, fit_cluster_box].into_iter().enumerate() {
            let a = fit(&lift(&xy), &params).unwrap();
            let b = fit(&lift(&moved), &params).unwrap();
            let expected = sorted(a.corners().iter().map(|c| rot * c + t).collect());
            let got = sorted(b.corners().to_vec());
            for (e, g) in expected.iter().zip(&got) {
                assert!((e - g).norm() < 1e-6, "fit {k}: {e} vs {g}; areas {} {}", a.length * a.width, b.length * b.width);
            }
        }
    }
}

#[test]
fn cluster_fit_stays_within_the_near_tie_band() {
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    let params = BoxFitParams::default();
    for _ in 0..100 {
        let xy = random_cluster(&mut rng);
        let hull = convex_hull_2d(&xy);
        if hull.len() < 3 || hull.area() < 1e-6 {
            continue;
        }
        let best = min_area_rectangle(&hull).area();
        let b = fit_cluster_box(&lift(&xy), &params).unwrap();
        assert!(b.length * b.width <= best * (1.0 + params.near_tie_ratio) + 1e-9);
        assert!(contains_all(&b, &xy));
        assert_eq!(edge_rectangles(&hull).len(), hull.len());
    }
}

#[test]
fn l_shaped_return_recovers_the_true_heading() {
    // Two faces of a 4.5 × 1.8 box at yaw 0.3: the hull is a right triangle
    // whose hypotenuse rectangle is the strict area minimum.
    let (l, w, yaw) = (4.5, 1.8, 0.3f64);
    let rot = Rotation2::new(yaw);
    let mut xy = Vec::new();
    for i in 0..=45 {
        xy.push(rot * Point2::new(-l / 2.0 + i as f64 * 0.1, -w / 2.0));
    }
    for i in 1..=18 {
        xy.push(rot * Point2::new(-l / 2.0, -w / 2.0 + i as f64 * 0.1));
    }
    let b = fit_cluster_box(&lift(&xy), &BoxFitParams::default()).unwrap();
    assert!((b.yaw - yaw).abs() < 1e-6, "yaw {}", b.yaw);
    assert!((b.length - l).abs() < 1e-6 && (b.width - w).abs() < 1e-6);
}
