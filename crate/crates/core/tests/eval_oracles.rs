use nalgebra::Vector3;
use objdisc::dataio::{FramePose, LabelSet};
use objdisc::eval::{
    average_precision, distance_to_collision, dtc_bucketed_report, match_detections, EgoTrajectory, DEFAULT_BUCKET_EDGES_M,
    DTC_STEP_M,
};
use objdisc::geometry::{bev_iou, OrientedBox, Pose};
use objdisc_testkit::{brute_assignment, dtc_oracle, random_box, walk};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Poses one meter apart whose heading drifts with a constant curvature plus a slow wiggle.
fn curved_frames(n: usize, x0: f64, y0: f64, yaw0: f64, curvature: f64, wiggle: f64) -> Vec<FramePose> {
    let (mut x, mut y) = (x0, y0);
    (0..n)
        .map(|i| {
            let yaw = yaw0 + curvature * i as f64 + wiggle * (i as f64 / 10.0).sin();
            let fp = FramePose { frame_id: i as u64, timestamp: i as f64 * 0.1, pose: Pose::from_yaw(yaw, Vector3::new(x, y, 0.0)) };
            x += yaw.cos();
            y += yaw.sin();
            fp
        })
        .collect()
}

fn straight(n: usize) -> Vec<FramePose> {
    curved_frames(n, 0.0, 0.0, 0.0, 0.0, 0.0)
}

fn oracle(traj: &EgoTrajectory, start: usize, obj: &OrientedBox, cap: f64) -> f64 {
    dtc_oracle(&traj.positions, &traj.yaws, start, obj, traj.ego_length_m, traj.ego_width_m, cap, 1e-3)
}

#[test]
fn straight_path_example_matches_millimeter_oracle() {
    let traj = EgoTrajectory::from_frames(&straight(61)).unwrap();
    let obj = OrientedBox::bev(20.0, 0.0, 4.0, 2.0, 0.0);
    let expected = oracle(&traj, 0, &obj, 100.0);
    // Touching is not overlapping, so the first overlapping millimeter step is 16.001.
    assert!((expected - 16.0).abs() <= 1.5e-3, "oracle {expected}");
    let got = distance_to_collision(&traj, 0, &obj, 100.0);
    assert!((got - expected).abs() <= DTC_STEP_M, "{got} vs {expected}");
}

#[test]
fn random_curved_scenes_agree_with_oracle_within_one_step() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut hits, mut caps) = (0, 0);
    for _ in 0..100 {
        let frames = curved_frames(
            120,
            rng.random_range(-50.0..50.0),
            rng.random_range(-50.0..50.0),
            rng.random_range(-3.1..3.1),
            rng.random_range(-0.03..0.03),
            rng.random_range(0.0..0.4),
        );
        let traj = EgoTrajectory::from_frames(&frames).unwrap();
        let start = rng.random_range(0..5);
        let s0 = rng.random_range(0.0..95.0);
        let (p, yaw) = walk(&traj.positions, &traj.yaws, start, s0).unwrap();
        let lateral = rng.random_range(-4.0..4.0);
        let obj = OrientedBox::bev(
            p.x - lateral * yaw.sin(),
            p.y + lateral * yaw.cos(),
            rng.random_range(1.0..6.0),
            rng.random_range(0.5..2.5),
            rng.random_range(-3.2..3.2),
        );
        let cap = 100.0;
        let want = oracle(&traj, start, &obj, cap);
        let got = distance_to_collision(&traj, start, &obj, cap);
        assert_eq!(got == cap, want == cap, "cap disagreement: got {got}, oracle {want}");
        assert!((got - want).abs() <= DTC_STEP_M, "got {got}, oracle {want}");
        if want < cap {
            hits += 1;
        } else {
            caps += 1;
        }
    }
    assert!(hits >= 30 && caps >= 10, "uninformative sample: {hits} hits, {caps} caps");
}

#[test]
fn approaching_object_never_increases_dtc() {
    let traj = EgoTrajectory::from_frames(&curved_frames(100, 0.0, 0.0, 0.2, 0.02, 0.2)).unwrap();
    let mut prev = f64::INFINITY;
    for k in 0..=160 {
        let s = 80.0 - 0.5 * k as f64;
        let (p, yaw) = traj.pose_at_arc(0, s).unwrap();
        let d = distance_to_collision(&traj, 0, &OrientedBox::bev(p.x, p.y, 4.5, 1.9, yaw), 100.0);
        assert!(d <= prev + 1e-9, "at s={s}: {d} > {prev}");
        prev = d;
    }
    assert_eq!(prev, 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn dtc_is_invariant_under_rigid_motion(
        tx in -200.0..200.0f64, ty in -200.0..200.0f64, rot in -3.2..3.2f64,
        s0 in 5.0..70.0f64, lateral in -3.0..3.0f64, oyaw in -3.2..3.2f64, curvature in -0.03..0.03f64,
    ) {
        let frames = curved_frames(90, 0.0, 0.0, 0.0, curvature, 0.0);
        let traj = EgoTrajectory::from_frames(&frames).unwrap();
        let (p, yaw) = traj.pose_at_arc(0, s0).unwrap();
        let obj = OrientedBox::bev(p.x - lateral * yaw.sin(), p.y + lateral * yaw.cos(), 4.0, 2.0, oyaw);
        let m = Pose::from_yaw(rot, Vector3::new(tx, ty, 0.0));
        let moved: Vec<FramePose> = frames.iter().map(|f| FramePose { pose: m.compose(&f.pose), ..*f }).collect();
        let traj2 = EgoTrajectory::from_frames(&moved).unwrap();
        let a = distance_to_collision(&traj, 0, &obj, 100.0);
        let b = distance_to_collision(&traj2, 0, &m.transform_box(&obj), 100.0);
        prop_assert!((a - b).abs() <= DTC_STEP_M, "{} vs {}", a, b);
    }

    #[test]
    fn ap_is_bounded_and_non_increasing_in_iou(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut gts = LabelSet::new();
        let mut dets = LabelSet::new();
        for f in 0..3u64 {
            let g: Vec<OrientedBox> = (0..rng.random_range(0..5)).map(|_| random_box(&mut rng, 30.0)).collect();
            let mut d = Vec::new();
            for b in &g {
                if !rng.random_bool(0.8) {
                    continue;
                }
                d.push(OrientedBox {
                    cx: b.cx + rng.random_range(-0.6..0.6),
                    cy: b.cy + rng.random_range(-0.6..0.6),
                    yaw: b.yaw + rng.random_range(-0.3..0.3),
                    ..*b
                });
            }
            d.extend((0..rng.random_range(0..3)).map(|_| random_box(&mut rng, 30.0)));
            let d = d.into_iter().map(|b: OrientedBox| b.with_score(rng.random_range(0.0..1.0))).collect();
            gts.insert(f, g);
            dets.insert(f, d);
        }
        let mut prev = f64::INFINITY;
        for t in [0.1, 0.3, 0.5, 0.7, 0.9] {
            let r = average_precision(&dets, &gts, t);
            prop_assert!((0.0..=1.0).contains(&r.ap));
            for p in &r.curve {
                prop_assert!((0.0..=1.0).contains(&p.recall) && (0.0..=1.0).contains(&p.precision));
            }
            prop_assert!(r.ap <= prev + 1e-12, "AP rose from {} to {} at {}", prev, r.ap, t);
            prev = r.ap;
        }
    }
}

#[test]
fn crafted_overlap_case_matches_exhaustive_oracle() {
    let gts = [OrientedBox::bev(0.0, 0.0, 4.0, 2.0, 0.0), OrientedBox::bev(3.0, 0.0, 4.0, 2.0, 0.0)];
    let dets = [
        OrientedBox::bev(0.2, 0.1, 4.0, 2.0, 0.05).with_score(0.9),
        OrientedBox::bev(3.3, 0.0, 4.0, 2.0, 0.0).with_score(0.8),
        OrientedBox::bev(1.5, 0.0, 4.0, 2.0, 0.0).with_score(0.7),
    ];
    let thresh = 0.3;
    // The middle detection clears the threshold against both ground truths.
    assert!(gts.iter().all(|g| bev_iou(&dets[2], g) >= thresh));
    let m = match_detections(&dets, &gts, thresh);
    let costs: Vec<Vec<Option<f64>>> = dets
        .iter()
        .map(|d| gts.iter().map(|g| Some(bev_iou(d, g)).filter(|&i| i >= thresh).map(|i| 1.0 - i)).collect())
        .collect();
    let (count, cost) = brute_assignment(&costs, dets.len(), gts.len());
    let total_iou: f64 = m.matches.iter().map(|&(_, _, iou)| iou).sum();
    assert_eq!(m.matches.len(), count);
    assert!((total_iou - (count as f64 - cost)).abs() < 1e-12, "{total_iou} vs {}", count as f64 - cost);
    assert_eq!(m.unmatched_dets, vec![2]);
}

#[test]
fn five_detection_hand_computed_ap() {
    let g = |x: f64| OrientedBox::bev(x, 0.0, 4.0, 2.0, 0.0);
    let mut gts = LabelSet::new();
    gts.insert(0, vec![g(0.0), g(10.0), g(20.0)]);
    let mut dets = LabelSet::new();
    dets.insert(
        0,
        vec![
            g(0.0).with_score(0.9),
            g(40.0).with_score(0.8),
            g(10.0).with_score(0.7),
            g(50.0).with_score(0.6),
            g(20.0).with_score(0.5),
        ],
    );
    // score  tp  recall  precision  envelope
    // 0.9    1   1/3     1          1
    // 0.8    0   1/3     1/2        2/3
    // 0.7    1   2/3     2/3        2/3
    // 0.6    0   2/3     1/2        3/5
    // 0.5    1   1       3/5        3/5
    // AP = 1/3 * 1 + 1/3 * 2/3 + 1/3 * 3/5 = 34/45
    let r = average_precision(&dets, &gts, 0.5);
    assert!((r.ap - 34.0 / 45.0).abs() < 1e-12, "{}", r.ap);
    let precisions: Vec<f64> = r.curve.iter().map(|p| p.precision).collect();
    assert_eq!(precisions, vec![1.0, 0.5, 2.0 / 3.0, 0.5, 0.6]);
}

#[test]
fn on_path_and_lateral_objects_at_equal_range_land_in_different_buckets() {
    let frames = straight(121);
    let traj = EgoTrajectory::from_frames(&frames).unwrap();
    let ahead = OrientedBox::bev(15.0, 0.0, 4.0, 2.0, 0.0);
    let lateral = OrientedBox::bev(0.0, 15.0, 4.0, 2.0, 0.0);
    assert_eq!(ahead.range(), lateral.range());
    let ahead_dtc = oracle(&traj, 0, &ahead, 100.0);
    assert!(ahead_dtc < 20.0, "{ahead_dtc}");
    assert_eq!(oracle(&traj, 0, &lateral, 100.0), 100.0);

    let mut gts = LabelSet::new();
    gts.insert(0, vec![ahead, lateral]);
    let edges = DEFAULT_BUCKET_EDGES_M;
    let r = dtc_bucketed_report(&LabelSet::new(), &gts, &frames, &traj, &edges, 0.5, 100.0).unwrap();
    let counts: Vec<usize> = r.buckets.iter().map(|b| b.gt_count).collect();
    let first = edges.iter().position(|&e| e > ahead_dtc).unwrap() - 1;
    let mut expected = vec![0; edges.len() - 1];
    expected[first] += 1;
    expected[edges.len() - 2] += 1;
    assert_eq!(counts, expected);
    assert!(edges[first + 1] <= 20.0);
}

#[test]
fn off_path_mass_sits_in_cap_bucket_and_full_recall_is_one() {
    let frames = straight(121);
    let traj = EgoTrajectory::from_frames(&frames).unwrap();
    let edges = DEFAULT_BUCKET_EDGES_M;

    let mut off = LabelSet::new();
    off.insert(0, (0..5).map(|i| OrientedBox::bev(10.0 * i as f64, 30.0, 4.0, 2.0, 0.0)).collect());
    let r = dtc_bucketed_report(&off, &off, &frames, &traj, &edges, 0.5, 100.0).unwrap();
    let counts: Vec<usize> = r.buckets.iter().map(|b| b.gt_count).collect();
    assert_eq!(counts, vec![0, 0, 0, 5]);

    let mut gts = LabelSet::new();
    for f in 0..4u64 {
        // Ego frame of pose f: objects ahead at varied distances plus one off to the side.
        gts.insert(f, [6.0, 14.0, 30.0, 70.0].iter().map(|&x| OrientedBox::bev(x, 0.0, 4.0, 2.0, 0.0)).chain([OrientedBox::bev(5.0, 20.0, 4.0, 2.0, 1.0)]).collect());
    }
    let r = dtc_bucketed_report(&gts, &gts, &frames, &traj, &edges, 0.5, 100.0).unwrap();
    for b in &r.buckets {
        assert!(b.gt_count > 0, "bucket [{}, {}) empty", b.lo_m, b.hi_m);
        assert_eq!(b.recall, Some(1.0));
        assert_eq!(b.precision, Some(1.0));
    }
    assert_eq!(r.buckets.iter().map(|b| b.gt_count).sum::<usize>(), gts.box_count());
    assert_eq!(r.buckets.iter().map(|b| b.det_count).sum::<usize>(), gts.box_count());
    assert_eq!(r.mean_missed_dtc_m, None);
}
