use super::*;
use crate::camera::{CameraPose, Vec3};
use crate::flow::gaussian;
use crate::rng::rng_for;

fn latent(cfg: &ModelConfig, seed: u64) -> Video {
    gaussian(cfg.latent_shape(), &mut rng_for(seed, &[42]))
}

fn cams(cfg: &ModelConfig, shift: f64) -> FlatPoseSeq {
    let poses: Vec<_> = (0..cfg.frames)
        .map(|i| {
            CameraPose::look_at(Vec3::new(4.0 + shift, i as f64 * 0.3, 1.0), Vec3::zeros())
                .unwrap()
        })
        .collect();
    FlatPoseSeq::from_poses(&poses)
}

fn descriptor(cfg: &ModelConfig) -> Vec<u32> {
    (0..cfg.descriptor_len as u32).map(|i| i % cfg.vocab as u32).collect()
}

#[test]
fn patchify_shapes_and_zero_tokens() {
    let cfg = ModelConfig::default();
    let p = Params::init(&cfg, 0).unwrap();
    let z = Video::zeros(16, 3, 48, 48);
    let tok = embed_patches(&p, &z).unwrap();
    assert_eq!(tok.shape(), (16 * 36, cfg.dim));
    assert!(tok.data().iter().all(|v| *v == 0.0));
    assert!(patchify(&Video::zeros(1, 3, 10, 8), 4).is_err());
}

#[test]
fn patchify_round_trip_with_orthonormal_projector() {
    let cfg = ModelConfig::tiny("none");
    let z = latent(&cfg, 1);
    let raw = patchify(&z, cfg.patch).unwrap();
    // columns of a signed permutation are orthonormal
    let (n, d) = (cfg.patch_len(), 64);
    let mut w = Tensor::zeros(n, d);
    for i in 0..n {
        w.set(i, (i * 7) % d, if i % 2 == 0 { 1.0 } else { -1.0 });
    }
    let tokens = raw.matmul(&w).unwrap();
    let back = tokens.matmul(&w.transpose()).unwrap();
    let v = unpatchify(&back, z.shape(), cfg.patch).unwrap();
    for (a, b) in v.data().iter().zip(z.data()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn frame_concat_layout() {
    let mut r = rng_for(0, &[]);
    let x_s = autograd::Tensor::from_vec(6, 4, (0..24).map(|i| i as f64).collect()).unwrap();
    let x_t = x_s.clone();
    let zero = Tensor::zeros(2, 4);
    let out = condition_frame_dim(&x_s, &x_t, &zero).unwrap();
    assert_eq!(out.shape(), (12, 4));
    assert_eq!(&out.data()[..24], &out.data()[24..]);
    let role = Tensor::from_vec(2, 4, gaussian((1, 1, 2, 4), &mut r).into_vec()).unwrap();
    let out = condition_frame_dim(&x_s, &x_t, &role).unwrap();
    for i in 0..6 {
        for c in 0..4 {
            assert_eq!(out.get(i, c), x_s.get(i, c) + role.get(0, c));
            assert_eq!(out.get(6 + i, c), x_t.get(i, c) + role.get(1, c));
        }
    }
    assert!(condition_frame_dim(&x_s, &Tensor::zeros(5, 4), &zero).is_err());
}

#[test]
fn channel_concat_with_zero_source() {
    let cfg = ModelConfig::tiny("channel_dim");
    let p = Params::init(&cfg, 2).unwrap();
    let z_t = latent(&cfg, 3);
    let z_s = Video::zeros(cfg.frames, cfg.channels, cfg.height, cfg.width);
    let a = condition_channel_dim(&p, &z_s, &z_t).unwrap();
    assert_eq!(a, embed_patches(&p, &z_t).unwrap());
    assert_eq!(a.rows(), cfg.frames * cfg.spatial_tokens());
    // the source half starts at zero, so any source is ignored at init
    let b = condition_channel_dim(&p, &latent(&cfg, 4), &z_t).unwrap();
    assert_eq!(a, b);
}

#[test]
fn view_attention_properties() {
    let cfg = ModelConfig::tiny("view_dim");
    let fresh = Params::init(&cfg, 5).unwrap();
    let n = cfg.frames * cfg.spatial_tokens();
    let mut r = rng_for(6, &[]);
    let mut tok = || Tensor::from_vec(n, cfg.dim, gaussian((1, 1, n, cfg.dim), &mut r).into_vec()).unwrap();
    let (fs, ft) = (tok(), tok());
    let (ys, yt) = attn_view(&fresh, 0, &fs, &ft, 0.3).unwrap();
    assert_eq!((ys, yt), (fs.clone(), ft.clone()));

    let p = fresh.randomized(0.3, 7);
    let (a, b) = attn_view(&p, 0, &fs, &fs, 0.3).unwrap();
    assert_eq!(a, b);

    let (base_s, _) = attn_view(&p, 0, &fs, &ft, 0.3).unwrap();
    let mut ft2 = ft.clone();
    let s = cfg.spatial_tokens();
    for v in ft2.row_mut(s) {
        *v += 1.0;
    }
    let (pert_s, _) = attn_view(&p, 0, &fs, &ft2, 0.3).unwrap();
    // frame 1 of the target changed; frame 0 of the source must not move
    assert_eq!(&base_s.data()[..s * cfg.dim], &pert_s.data()[..s * cfg.dim]);
    assert_ne!(&base_s.data()[s * cfg.dim..], &pert_s.data()[s * cfg.dim..]);

    let other = Params::init(&ModelConfig::tiny("frame_dim"), 0).unwrap();
    assert!(matches!(attn_view(&other, 0, &fs, &ft, 0.3), Err(Error::Config(_))));
}

#[test]
fn camera_encoder_and_injection() {
    let cfg = ModelConfig::tiny("frame_dim");
    let p = Params::init(&cfg, 1).unwrap();
    let e = camera_encode(&p, 0, &cams(&cfg, 0.0)).unwrap();
    assert_eq!(e.shape(), (cfg.frames, cfg.dim));
    assert!(e.data().iter().all(|v| *v == 0.0));
    let p = p.randomized(0.5, 2);
    let id = camera_encode(&p, 0, &FlatPoseSeq::identity(cfg.frames)).unwrap();
    assert_eq!(id.row(0), id.row(1));

    let layout = cfg.layout().unwrap();
    let f_o = Tensor::filled(layout.rows(), cfg.dim, 0.25);
    let zero = Tensor::zeros(cfg.frames, cfg.dim);
    assert_eq!(inject_camera(&f_o, &zero, &layout).unwrap(), f_o);
    let shifted = inject_camera(&f_o, &Tensor::filled(cfg.frames, cfg.dim, 2.0), &layout).unwrap();
    let half = layout.rows() / 2;
    assert!(shifted.data()[..half * cfg.dim].iter().all(|v| *v == 0.25));
    assert!(shifted.data()[half * cfg.dim..].iter().all(|v| *v == 2.25));
    assert!(inject_camera(&f_o, &Tensor::zeros(3, cfg.dim), &layout).is_err());
}

fn run(p: &Params, noised: &Video, source: &Video, c: &FlatPoseSeq, t: f64) -> Result<Video> {
    let d = descriptor(p.config());
    forward(
        p,
        &ModelInput {
            noised,
            source: Some(source),
            cams: Some(c),
            descriptor: &d,
            t,
        },
    )
}

#[test]
fn forward_contract_all_modes() {
    for mode in ["none", "frame_dim", "channel_dim", "view_dim"] {
        let cfg = ModelConfig::tiny(mode);
        let p = Params::init(&cfg, 3).unwrap().randomized(0.2, 4);
        let (z, s) = (latent(&cfg, 1), latent(&cfg, 2));
        let a = run(&p, &z, &s, &cams(&cfg, 0.0), 0.4).unwrap();
        assert_eq!(a.shape(), cfg.latent_shape(), "{mode}");
        assert_eq!(a, run(&p, &z, &s, &cams(&cfg, 0.0), 0.4).unwrap());
    }
}

#[test]
fn zero_init_camera_is_bitwise_noop() {
    for mode in CONDITIONED {
        let cfg = ModelConfig::tiny(mode);
        let base = Params::init(&ModelConfig::tiny("none"), 0).unwrap().randomized(0.3, 1);
        let p = Params::from_base(&base, &cfg, 2).unwrap();
        let (z, s) = (latent(&cfg, 1), latent(&cfg, 2));
        let a = run(&p, &z, &s, &cams(&cfg, 0.0), 0.7).unwrap();
        let b = run(&p, &z, &s, &cams(&cfg, 3.0), 0.7).unwrap();
        assert_eq!(a.data(), b.data(), "{mode}");
    }
}

#[test]
fn frame_dim_source_reaches_target() {
    let cfg = ModelConfig::tiny("frame_dim");
    let p = Params::init(&cfg, 0).unwrap().randomized(0.3, 9);
    let (z, s) = (latent(&cfg, 1), latent(&cfg, 2));
    let a = run(&p, &z, &s, &cams(&cfg, 0.0), 0.5).unwrap();
    let mut s2 = s.clone();
    for v in s2.frame_mut(1) {
        *v += 0.5;
    }
    let b = run(&p, &z, &s2, &cams(&cfg, 0.0), 0.5).unwrap();
    assert_ne!(a, b);
}

#[test]
fn input_validation() {
    let cfg = ModelConfig::tiny("frame_dim");
    let p = Params::init(&cfg, 0).unwrap();
    let (z, s) = (latent(&cfg, 1), latent(&cfg, 2));
    let bad = z.map(|_| f64::NAN);
    assert!(matches!(run(&p, &bad, &s, &cams(&cfg, 0.0), 0.5), Err(Error::Numeric(_))));
    let short = FlatPoseSeq::identity(1);
    assert!(matches!(run(&p, &z, &s, &short, 0.5), Err(Error::Shape(_))));
    let wrong = Video::zeros(2, 3, 4, 4);
    assert!(matches!(run(&p, &wrong, &s, &cams(&cfg, 0.0), 0.5), Err(Error::Shape(_))));
}

#[test]
fn trunk_is_equivariant_to_patch_permutation() {
    let cfg = ModelConfig::tiny("frame_dim");
    let p = Params::init(&cfg, 0).unwrap().randomized(0.3, 3);
    let layout = cfg.layout().unwrap();
    let mut r = rng_for(8, &[]);
    let tokens = Tensor::from_vec(
        layout.rows(),
        cfg.dim,
        gaussian((1, 1, layout.rows(), cfg.dim), &mut r).into_vec(),
    )
    .unwrap();
    let s = layout.spatial;
    // reverse the patch order inside every frame slot
    let perm: Vec<usize> = (0..layout.rows()).map(|i| (i / s) * s + (s - 1 - i % s)).collect();
    let permuted = Tensor::from_vec(
        layout.rows(),
        cfg.dim,
        perm.iter().flat_map(|&i| tokens.row(i).to_vec()).collect(),
    )
    .unwrap();
    let c = cams(&cfg, 0.0);
    let d = descriptor(&cfg);
    let a = run_trunk(&p, &tokens, Some(&c), &d, 0.3).unwrap();
    let b = run_trunk(&p, &permuted, Some(&c), &d, 0.3).unwrap();
    for (i, &src) in perm.iter().enumerate() {
        for (x, y) in b.row(i).iter().zip(a.row(src)) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let cfg = ModelConfig::tiny("view_dim");
    let p = Params::init(&cfg, 0).unwrap().randomized(0.1, 1);
    let mut adam = autograd::Adam::new(Default::default(), p.len());
    let mut vals = p.values();
    let grads: Vec<_> = vals
        .iter()
        .enumerate()
        .map(|(i, v)| (i % 3 == 0).then(|| Tensor::filled(v.rows(), v.cols(), 0.01)))
        .collect();
    adam.update(&mut vals, &grads);
    let ck = Checkpoint {
        params: p,
        meta: CheckpointMeta {
            step: 1,
            stage: "recam_finetune".into(),
            trained_modes: vec!["v2v".into()],
            train_config: serde_json::json!({"lr": 1e-4}),
        },
        optimizer: Some(adam),
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.ckpt");
    save_checkpoint(&path, &ck).unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert_eq!(back.params, ck.params);
    assert_eq!(back.meta, ck.meta);
    let (a, b) = (back.optimizer.unwrap(), ck.optimizer.unwrap());
    assert_eq!(a.step_count(), b.step_count());
    assert_eq!(a.slots(), b.slots());
    assert_eq!(checkpoint::to_bytes(&Checkpoint { params: back.params, meta: back.meta, optimizer: Some(a) }).unwrap(),
        std::fs::read(&path).unwrap());

    let mut bytes = std::fs::read(&path).unwrap();
    bytes.truncate(bytes.len() - 3);
    assert!(checkpoint::from_bytes(&bytes, &path).is_err());
}
