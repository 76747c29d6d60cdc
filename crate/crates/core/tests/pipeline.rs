mod fixtures;

use fixtures::{scene, tiny_config, tiny_data};
use softdecode_core::net::{encode_checkpoint, load_checkpoint, Branch, Model};
use softdecode_core::pipeline::{
    evaluate_corpus, init_seed, train_branch, training_patches, EvalImage, Method, OutputPaths,
    QfMode, TrainConfig,
};
use softdecode_core::{Error, MetricsReport};

#[test]
fn zero_iterations_keeps_initialization() {
    let mode = QfMode::Dedicated(10);
    let data = tiny_data(&mode);
    let cfg = TrainConfig {
        max_iterations: 0,
        ..tiny_config(mode.clone())
    };
    let dir = tempfile::tempdir().unwrap();
    let out = OutputPaths::new(dir.path(), "p");
    let outcome = train_branch::<f32>(&data, Branch::Pixel, &cfg, Some(&out)).unwrap();
    let init = Model::<f32>::init(
        cfg.network,
        Branch::Pixel,
        mode.tag(),
        init_seed(cfg.seed, Branch::Pixel),
    )
    .unwrap();
    assert_eq!(outcome.model, init);
    assert_eq!(
        std::fs::read(&out.checkpoint).unwrap(),
        encode_checkpoint(&init)
    );
    assert!(outcome.log.records.is_empty());
}

#[test]
fn divergence_aborts_and_keeps_last_good_checkpoint() {
    let mode = QfMode::Dedicated(10);
    let data = tiny_data(&mode);
    let cfg = TrainConfig {
        initial_lr: 1e3,
        max_iterations: 200,
        ..tiny_config(mode)
    };
    let dir = tempfile::tempdir().unwrap();
    let out = OutputPaths::new(dir.path(), "p");
    let err = train_branch::<f64>(&data, Branch::Pixel, &cfg, Some(&out))
        .err()
        .expect("training should diverge");
    let Error::NonFiniteLoss { iteration } = err else {
        panic!("unexpected error {err}");
    };
    let kept: Model<f64> = load_checkpoint(&out.checkpoint).unwrap();
    assert_eq!(kept.iteration, iteration);
    for b in &kept.blocks {
        assert!(b.conv.weights().all_finite());
        if let Some(bn) = &b.bn {
            assert!(bn
                .running_mean
                .iter()
                .chain(&bn.running_var)
                .all(|v| v.is_finite()));
        }
    }
    assert!(out.log.exists());
}

#[test]
fn tiny_runs_are_reproducible() {
    let mode = QfMode::Blind(vec![10, 30]);
    let data = tiny_data(&mode);
    let cfg = tiny_config(mode);
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let out = OutputPaths::new(dir.path(), "w");
        train_branch::<f32>(&data, Branch::Wavelet, &cfg, Some(&out)).unwrap();
        [&out.checkpoint, &out.best, &out.log].map(|p| std::fs::read(p).unwrap())
    };
    assert_eq!(run(), run());
}

#[test]
fn log_format() {
    let mode = QfMode::Dedicated(20);
    let data = tiny_data(&mode);
    let cfg = tiny_config(mode);
    let log = train_branch::<f32>(&data, Branch::Pixel, &cfg, None)
        .unwrap()
        .log;
    let tsv = log.to_tsv();
    let mut lines = tsv.lines().filter(|l| !l.starts_with('#'));
    assert_eq!(lines.next(), Some("iter\tloss\tlr\tval_psnr"));
    let iters: Vec<u64> = lines
        .map(|l| l.split('\t').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(iters, [5, 10, 12]);
    assert_eq!(log.losses.len(), 12);
}

#[test]
fn learning_rate_drops_tenfold_past_one_interval() {
    let cfg = TrainConfig {
        initial_lr: 0.1,
        ..TrainConfig::desk(QfMode::Dedicated(10))
    };
    let pairs = 2048;
    let k = cfg.decay_interval(pairs);
    assert_eq!(k, 128 * 10);
    assert_eq!(cfg.learning_rate(0, pairs), 0.1);
    assert_eq!(cfg.learning_rate(k - 1, pairs), 0.1);
    assert!((cfg.learning_rate(k + 1, pairs) - 0.01).abs() < 1e-15);
    assert!((cfg.learning_rate(2 * k + 1, pairs) - 0.001).abs() < 1e-15);
}

#[test]
fn patches_are_co_located() {
    let mode = QfMode::Dedicated(10);
    let data = tiny_data(&mode);
    let cfg = tiny_config(mode);
    for branch in [Branch::Pixel, Branch::Wavelet] {
        let patches = training_patches(&data, branch, &cfg).unwrap();
        assert_eq!(patches.len(), cfg.patches);
        for p in patches.iter().filter(|p| p.branch == Branch::Pixel) {
            let pair = data
                .train
                .iter()
                .find(|d| {
                    let (oy, ox) = p.origin;
                    let window = d.clean.crop(2 * oy, 2 * ox, 62, 62).ok();
                    let packed =
                        window.map(|w| softdecode_core::Packing::Polyphase.pack(&w).unwrap());
                    packed.is_some_and(|q| q.tensor() == &p.x)
                })
                .expect("clean patch comes from some training image");
            let (oy, ox) = p.origin;
            let y = pair.degraded.crop(2 * oy, 2 * ox, 62, 62).unwrap();
            assert_eq!(
                softdecode_core::Packing::Polyphase
                    .pack(&y)
                    .unwrap()
                    .tensor(),
                &p.y
            );
        }
    }
}

#[test]
fn eval_report_shape() {
    let images: Vec<EvalImage> = (0..2)
        .map(|k| EvalImage {
            name: format!("s{k}"),
            clean: scene(k, 64, 80),
        })
        .collect();
    let cfg = tiny_config(QfMode::Dedicated(10));
    let p = Model::<f32>::init(cfg.network, Branch::Pixel, cfg.qf_mode.tag(), 1).unwrap();
    let w = Model::<f32>::init(cfg.network, Branch::Wavelet, cfg.qf_mode.tag(), 2).unwrap();
    let report = evaluate_corpus(Some((&p, &w)), &images, &[10, 40]).unwrap();
    assert_eq!(report.rows.len(), 2 * 2 * 4);
    let table = report.table_tsv();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "method\tqf10\tqf40");
    assert_eq!(lines.len(), 5);
    for (line, m) in lines[1..]
        .iter()
        .zip(["JPEG", "P-branch", "W-branch", "fused"])
    {
        let cells: Vec<&str> = line.split('\t').collect();
        assert_eq!(cells[0], m);
        assert_eq!(cells.len(), 3);
        assert_eq!(cells[1].split('/').count(), 3);
    }
    assert_eq!(report.per_image_tsv().lines().count(), 1 + 16);
    let jpeg10 = report.mean(Method::Jpeg, 10).unwrap().psnr;
    let jpeg40 = report.mean(Method::Jpeg, 40).unwrap().psnr;
    assert!(jpeg40 > jpeg10);

    let jpeg_only = evaluate_corpus::<f32>(None, &images, &[10]).unwrap();
    assert_eq!(jpeg_only.table_tsv().lines().count(), 2);
}

#[test]
fn originals_against_themselves() {
    let img = scene(3, 64, 64);
    let r = MetricsReport::compute(&img, &img).unwrap();
    assert_eq!(r.ssim, 1.0);
    assert_eq!(r.psnr, softdecode_core::metrics::PSNR_CAP);
    assert_eq!(r.psnr_b, softdecode_core::metrics::PSNR_CAP);
}
