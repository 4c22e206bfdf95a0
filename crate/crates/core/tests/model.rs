use fisheye_multinet::labels::SegClass;
use fisheye_multinet::model::{
    decode_detections, decode_segmentation, decode_soiling, Network, NetworkConfig, ParamGroup,
    TaskSet,
};
use fmn_autodiff::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn image(config: &NetworkConfig, seed: u64) -> Tensor<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 3 * config.input_height * config.input_width;
    let values = (0..n).map(|_| rng.random::<f32>()).collect();
    Tensor::new(vec![3, config.input_height, config.input_width], values).unwrap()
}

#[test]
fn same_seed_gives_identical_parameters() {
    let a = Network::<f32>::build(NetworkConfig::desk(), 5).unwrap();
    let b = Network::<f32>::build(NetworkConfig::desk(), 5).unwrap();
    let c = Network::<f32>::build(NetworkConfig::desk(), 6).unwrap();
    assert_eq!(a.params(), b.params());
    assert_ne!(a.params(), c.params());
}

#[test]
fn output_shapes_follow_config() {
    let config = NetworkConfig::desk();
    let net = Network::<f32>::build(config.clone(), 1).unwrap();
    let out = net.forward(&image(&config, 2)).unwrap();
    assert_eq!(out.seg_logits.as_ref().unwrap().shape(), &[4, 96, 320]);
    assert_eq!(out.det_grid.as_ref().unwrap().shape(), &[8, 3, 10]);
    assert_eq!(out.soiling_grid.as_ref().unwrap().shape(), &[3, 3, 10]);
    assert_eq!(out.soiling_indicators.as_ref().unwrap().shape(), &[2]);
    assert!(out.seg_logits.unwrap().is_finite());

    for skips in 0..=2 {
        let cfg = NetworkConfig {
            skip_connections: skips,
            ..NetworkConfig::desk()
        };
        let net = Network::<f32>::build(cfg.clone(), 1).unwrap();
        let out = net.forward(&image(&cfg, 2)).unwrap();
        assert_eq!(out.seg_logits.unwrap().shape(), &[4, 96, 320]);
    }
}

#[test]
fn full_scale_grid_is_12_by_40() {
    let config = NetworkConfig::full_scale();
    let net = Network::<f32>::build(config.clone(), 1).unwrap();
    let out = net.forward(&image(&config, 3)).unwrap();
    assert_eq!(out.det_grid.unwrap().shape(), &[8, 12, 40]);
}

#[test]
fn forward_is_deterministic_and_rejects_bad_input() {
    let config = NetworkConfig::desk();
    let net = Network::<f32>::build(config.clone(), 1).unwrap();
    let img = image(&config, 4);
    assert_eq!(net.forward(&img).unwrap(), net.forward(&img).unwrap());
    let wrong = Tensor::<f32>::zeros(vec![3, 64, 320]);
    assert!(net.forward(&wrong).is_err());
}

#[test]
fn decoders_are_independent_given_encoder() {
    let config = NetworkConfig::desk();
    let net = Network::<f32>::build(config.clone(), 9).unwrap();
    let mut zeroed = net.clone();
    let seg_params: Vec<usize> = zeroed
        .param_infos()
        .iter()
        .enumerate()
        .filter(|(_, p)| p.group == ParamGroup::Segmentation)
        .map(|(i, _)| i)
        .collect();
    for i in seg_params {
        zeroed.params_mut()[i].values_mut().fill(0.0);
    }
    let img = image(&config, 5);
    let a = net.forward(&img).unwrap();
    let b = zeroed.forward(&img).unwrap();
    assert_ne!(a.seg_logits, b.seg_logits);
    assert_eq!(a.det_grid, b.det_grid);
    assert_eq!(a.soiling_grid, b.soiling_grid);
    assert_eq!(a.soiling_indicators, b.soiling_indicators);
}

#[test]
fn stl_encoders_match_mtl_encoder() {
    let mtl = Network::<f32>::build(NetworkConfig::desk(), 42).unwrap();
    for tasks in [TaskSet::SEG, TaskSet::DET, TaskSet::SOIL] {
        let stl = Network::<f32>::build(NetworkConfig::desk().with_tasks(tasks), 42).unwrap();
        let enc = |n: &Network<f32>| {
            n.params()
                .iter()
                .zip(n.param_infos())
                .filter(|(_, i)| i.group == ParamGroup::Encoder)
                .map(|(p, _)| p.clone())
                .collect::<Vec<_>>()
        };
        assert_eq!(enc(&mtl), enc(&stl));
    }
}

#[test]
fn shared_encoder_is_cheaper_than_three_single_task_networks() {
    let mtl = Network::<f32>::build(NetworkConfig::desk(), 1).unwrap();
    let stl: Vec<_> = [TaskSet::SEG, TaskSet::DET, TaskSet::SOIL]
        .iter()
        .map(|&t| Network::<f32>::build(NetworkConfig::desk().with_tasks(t), 1).unwrap())
        .collect();
    let stl_params: usize = stl.iter().map(Network::parameter_count).sum();
    let stl_macs: u64 = stl.iter().map(Network::forward_macs).sum();
    assert!(mtl.parameter_count() < stl_params);
    assert!(mtl.forward_macs() < stl_macs);
}

#[test]
fn model_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.fmnw");
    let mut net = Network::<f32>::build(NetworkConfig::desk().with_tasks(TaskSet::DET), 3).unwrap();
    net.params_mut()[0].values_mut()[0] = 1.25;
    net.save(&path, 3).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..5], b"FMNW1");
    let back = Network::<f32>::load(&path).unwrap();
    assert_eq!(back.params(), net.params());
    assert_eq!(back.config(), net.config());
    std::fs::write(&path, b"FMNW0junk").unwrap();
    assert!(Network::<f32>::load(&path).is_err());
}

#[test]
fn decodes_match_brute_force_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..20 {
        let (h, w) = (6, 7);
        let logits: Vec<f32> = (0..4 * h * w).map(|_| rng.random_range(-1.0..1.0)).collect();
        let horizon = rng.random_range(0..=h);
        let t = Tensor::new(vec![4, h, w], logits.clone()).unwrap();
        let mask = decode_segmentation(&t, horizon);
        for r in 0..h {
            for c in 0..w {
                let expect = if r < horizon {
                    0
                } else {
                    let mut best = 0;
                    for k in 1..4 {
                        if logits[k * h * w + r * w + c] > logits[best * h * w + r * w + c] {
                            best = k;
                        }
                    }
                    best
                };
                assert_eq!(mask.get(c, r) as usize, expect);
            }
        }
        assert!(mask.data[..horizon * w].iter().all(|&v| v == SegClass::Void as u8));

        let grid: Vec<f32> = (0..3 * 2 * 5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let scores = Tensor::new(vec![2], vec![rng.random_range(-1.0..1.0), 0.3]).unwrap();
        let report = decode_soiling(&Tensor::new(vec![3, 2, 5], grid.clone()).unwrap(), &scores);
        for t in 0..10 {
            let vals = [grid[t], grid[10 + t], grid[20 + t]];
            let best = (0..3).fold(0, |b, k| if vals[k] > vals[b] { k } else { b });
            assert_eq!(report.tiles[t] as usize, best);
        }
        assert!(report.transparent);
    }
}

#[test]
fn decoded_boxes_respect_invariants() {
    let config = NetworkConfig::desk();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..50 {
        let n = config.det_channels() * 30;
        let values: Vec<f32> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let grid = Tensor::new(vec![config.det_channels(), 3, 10], values).unwrap();
        let pre = decode_detections(&grid, &config, 0.3, 1.01);
        let post = decode_detections(&grid, &config, 0.3, 0.5);
        for w in post.windows(2) {
            assert!(w[0].confidence >= w[1].confidence);
        }
        for b in &post {
            assert!(pre.contains(b));
            assert!(b.rect.x_min < b.rect.x_max && b.rect.y_min < b.rect.y_max);
            assert!(b.rect.x_min >= 0.0 && b.rect.x_max <= 320.0);
            assert!(b.rect.y_min >= 0.0 && b.rect.y_max <= 96.0);
            assert_eq!(b.foot_point(), ((b.rect.x_min + b.rect.x_max) / 2.0, b.rect.y_max));
        }
    }
}
