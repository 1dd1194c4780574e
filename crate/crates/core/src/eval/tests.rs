use super::*;
use crate::dataset::{generate_scene, DatasetConfig};
use crate::scenegen::GenConfig;

fn set(scenes: usize, frames: usize, size: usize) -> EvalSet {
    let cfg = DatasetConfig {
        scenes,
        cameras: 4,
        width: size,
        height: size,
        scene: GenConfig {
            frames,
            ..GenConfig::default()
        },
        ..DatasetConfig::default()
    };
    EvalSet {
        records: (0..scenes).map(|i| generate_scene(&cfg, i).unwrap()).collect(),
        cameras_per_start: 2,
    }
}

#[test]
fn pairs_follow_start_groups() {
    assert_eq!(eval_pairs(4, 2, Mode::I2v, 3), vec![(0, 1)]);
    assert_eq!(eval_pairs(4, 2, Mode::V2v, 3), vec![(0, 2)]);
    assert_eq!(eval_pairs(6, 2, Mode::T2v, 2), vec![(0, 2), (0, 4)]);
    assert_eq!(eval_pairs(2, 2, Mode::V2v, 1), vec![(0, 1)]);
    assert_eq!(eval_pairs(3, 1, Mode::I2v, 1), vec![(0, 1)]);
}

#[test]
fn segmentation_finds_patch_centroid() {
    let mut v = Video::zeros(1, 3, 6, 6);
    for y in 1..3 {
        for x in 2..5 {
            for (c, val) in [1.0, 0.1, 0.0].into_iter().enumerate() {
                v.data_mut()[(c * 6 + y) * 6 + x] = val;
            }
        }
    }
    let d = detect_centroids(&v, &[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], 0.25);
    assert_eq!(d[0][0], Some([3.5, 2.0]));
    assert_eq!(d[0][1], None);
}

#[test]
fn triangulation_recovers_intersection() {
    let x = Vec3::new(0.3, -1.0, 2.0);
    let (o1, o2) = (Vec3::new(0.0, 0.0, 0.0), Vec3::new(2.0, 1.0, 0.5));
    let p = triangulate(&o1, &(x - o1), &o2, &(x - o2), &Vec3::zeros());
    assert!((p - x).norm() < 1e-5);
    // parallel rays from one origin resolve to the prior along the ray
    let d = Vec3::new(0.0, 0.0, 1.0);
    let p = triangulate(&o1, &d, &o1, &d, &Vec3::new(0.0, 0.0, 4.0));
    assert!((p - Vec3::new(0.0, 0.0, 4.0)).norm() < 1e-9);
}

#[test]
fn ground_truth_scores_perfectly() {
    let s = set(2, 4, 24);
    let r = eval_ground_truth(&s, &EvalConfig::default(), Mode::V2v).unwrap();
    assert!(r.rows.iter().all(|x| x.psnr == crate::video::PSNR_CAP_DB));
    assert!(r.aggregate.reproj_mean.unwrap() <= 1.0);
    assert!(r.aggregate.sync_mean.unwrap() <= 1.0);
    assert!(r.is_consistent());
}

#[test]
fn shuffled_time_raises_sync_error() {
    let s = set(3, 6, 24);
    let cfg = EvalConfig::default();
    for rec in &s.records {
        let gt = &rec.videos[2];
        let shuffled = gt.permute_frames(&[3, 4, 5, 0, 1, 2]);
        let a = score_video(rec, 0, 2, gt, 1, cfg.color_tol).unwrap();
        let b = score_video(rec, 0, 2, &shuffled, 1, cfg.color_tol).unwrap();
        let moving = rec.centroids[2].first().zip(rec.centroids[2].last()).is_some_and(|(f, l)| {
            f.iter().zip(l).any(|(p, q)| (p.u - q.u).hypot(p.v - q.v) > 2.0)
        });
        if moving {
            if let (Some(sa), Some(sb)) = (a.sync_px(), b.sync_px()) {
                assert!(sb > sa, "scene {}: {sa} vs {sb}", rec.spec.id);
            }
        }
    }
}

#[test]
fn noise_degrades_monotonically() {
    let s = set(1, 4, 24);
    let rec = &s.records[0];
    let gt = &rec.videos[2];
    let mut r = rng_for(5, &[]);
    let base = gaussian(gt.shape(), &mut r);
    let mut last = (f64::INFINITY, 0usize);
    for sigma in [0.0, 0.02, 0.05, 0.1, 0.2, 0.4] {
        let noisy = Video::from_vec(
            gt.shape(),
            gt.data().iter().zip(base.data()).map(|(a, n)| a + sigma * n).collect(),
        )
        .unwrap()
        .clamped01();
        let sc = score_video(rec, 0, 2, &noisy, 1, COLOR_TOLERANCE).unwrap();
        assert!(sc.psnr <= last.0, "psnr rose at sigma {sigma}");
        assert!(sc.undetected >= last.1, "fewer failures at sigma {sigma}");
        last = (sc.psnr, sc.undetected);
    }
}

#[test]
fn i2v_condition_keeps_first_frame() {
    let mut r = rng_for(1, &[]);
    let z = gaussian((3, 3, 4, 4), &mut r);
    let c = condition_for_mode(&z, Mode::I2v, 7, None).unwrap();
    assert_eq!(c.frame(0), z.frame(0));
    assert_ne!(c.frame(1), z.frame(1));
    assert_eq!(condition_for_mode(&z, Mode::V2v, 7, None).unwrap(), z);
    assert_eq!(c, condition_for_mode(&z, Mode::I2v, 7, None).unwrap());
}

#[test]
fn report_round_trips_and_flattens() {
    let s = set(2, 4, 16);
    let r = eval_copy_source(&s, &EvalConfig::default(), Mode::V2v).unwrap();
    let back: EvalReport = serde_json::from_str(&r.to_json().unwrap()).unwrap();
    assert_eq!(back, r);
    assert!(back.is_consistent());
    let csv = r.to_csv();
    assert_eq!(csv.lines().count(), r.rows.len() + 1);
    assert_eq!(csv.lines().next().unwrap().split(',').count(), 12);
}

#[test]
fn split_leakage_is_rejected() {
    let manifest = Manifest {
        format: 1,
        frames: 1,
        channels: 3,
        height: 1,
        width: 1,
        cameras: 2,
        cameras_per_start: 2,
        scenes: (0..20)
            .map(|id| crate::dataset::ManifestEntry {
                id,
                split: crate::dataset::split_for(id),
            })
            .collect(),
        config: DatasetConfig::default(),
    };
    let test = manifest.ids(Split::Test);
    let train = manifest.ids(Split::Train);
    check_split(&manifest, &test, Split::Test).unwrap();
    assert!(check_split(&manifest, &train[..1], Split::Test).is_err());
    assert!(check_split(&manifest, &[999], Split::Test).is_err());
}
