//! End-to-end acceptance run: every criterion prints one PASS/FAIL line and
//! the process exits non-zero if any fails.

use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use gaze_attention::checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint,
};
use gaze_attention::data::preprocess::prepare_labels;
use gaze_attention::data::preprocess::RawGazeRecord;
use gaze_attention::data::{
    decode_dataset, encode_dataset, fill_missing, load_dataset, quantize, save_dataset, split,
    synth_generate, vote, LabelSource, LabeledSequence, SynthConfig,
};
use gaze_attention::eval::{evaluate, predict_sequence, EvalOptions};
use gaze_attention::model::{FeatureCube, ModelConfig, ModelParams};
use gaze_attention::tensor::Matrix;
use gaze_attention::train::{
    check_gradients, moving_average, train, AdamConfig, TrainConfig, TrainCurve,
};
use gaze_attention::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(start: Instant, limit: Duration) -> Result<f64, String> {
    let t = start.elapsed();
    ensure(t < limit, || format!("took {t:?}, limit {limit:?}"))?;
    Ok(t.as_secs_f64())
}

fn gradient_fidelity() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (k, d, h, t) = (4, 6, 8, 5);
    let model = ModelParams::init(ModelConfig::new(k, d, h, 2).with_dropout(0.0), &mut rng)
        .map_err(|e| e.to_string())?;
    let frames: Vec<FeatureCube> = (0..t)
        .map(|_| FeatureCube::new(k, Matrix::uniform(k * k, d, 1.0, &mut rng)).unwrap())
        .collect();
    let labels: Vec<usize> = (0..t).map(|_| rng.random_range(0..k * k)).collect();
    let report = check_gradients(&model, &frames, &labels, 0.01, 400, 1e-5, &mut rng)
        .map_err(|e| e.to_string())?;
    ensure(report.checks.len() >= 200, || {
        format!("only {} coordinates", report.checks.len())
    })?;
    ensure(report.passes(1e-4), || {
        format!("max relative error {:e}", report.max_relative_error)
    })?;
    let secs = within(start, Duration::from_secs(60))?;
    Ok(format!(
        "{} of {} coordinates, max relative error {:.2e}, {secs:.1}s",
        report.checks.len(),
        model.num_parameters(),
        report.max_relative_error
    ))
}

/// Settings shared by the learning experiments.
fn experiment_config(max_iterations: usize) -> TrainConfig {
    TrainConfig {
        max_iterations,
        epochs: 1000,
        adam: AdamConfig {
            lr: 1e-2,
            ..AdamConfig::default()
        },
        ..TrainConfig::default()
    }
}

fn overfit_capacity() -> Outcome {
    let start = Instant::now();
    let data = synth_generate(&SynthConfig {
        grid_side: 4,
        depth: 8,
        num_sequences: 5,
        frames_per_sequence: 40,
        noise_sigma: 0.0,
        seed: 21,
        ..SynthConfig::default()
    })
    .map_err(|e| e.to_string())?;
    let model = ModelParams::init(
        ModelConfig::new(4, 8, 16, 1),
        &mut ChaCha8Rng::seed_from_u64(21),
    )
    .unwrap();
    // capacity check: regularization off
    let cfg = TrainConfig {
        dropout_rate: 0.0,
        gamma: 0.0,
        ..experiment_config(500)
    };
    let (model, curve) = train(&data, model, &cfg).map_err(|e| e.to_string())?;
    ensure(curve.len() <= 500, || format!("{} iterations", curve.len()))?;

    let opts = EvalOptions {
        window: Some(cfg.bptt_window),
        ..EvalOptions::default()
    };
    let report = evaluate(&model, &data, &opts).map_err(|e| e.to_string())?;
    let (mut ce, mut frames) = (0.0, 0usize);
    for seq in &data {
        let maps = predict_sequence(&model, seq, opts.window).map_err(|e| e.to_string())?;
        for (m, &y) in maps.iter().zip(seq.labels()) {
            ce -= m.probs()[y].max(1e-12).ln();
            frames += 1;
        }
    }
    let ce = ce / frames as f64;
    ensure(report.top1_accuracy == 1.0, || {
        format!("training top-1 {}", report.top1_accuracy)
    })?;
    ensure(ce < 0.1, || format!("mean CE {ce:.4} nats/frame"))?;
    let secs = within(start, Duration::from_secs(120))?;
    Ok(format!(
        "{} iterations, top-1 {:.3}, mean CE {ce:.4} nats/frame, {secs:.1}s",
        curve.len(),
        report.top1_accuracy
    ))
}

fn held_out_experiment(labels: LabelSource, seed: u64) -> Result<(f64, f64, f64), String> {
    let gen = |n, seed| {
        synth_generate(&SynthConfig {
            num_sequences: n,
            noise_sigma: 0.3,
            labels,
            seed,
            ..SynthConfig::default()
        })
    };
    let train_set = gen(20, seed).map_err(|e| e.to_string())?;
    let test_set = gen(10, seed + 1).map_err(|e| e.to_string())?;
    let model = ModelParams::init(
        ModelConfig::new(7, 16, 64, 1),
        &mut ChaCha8Rng::seed_from_u64(seed),
    )
    .unwrap();
    let cfg = experiment_config(1000);
    let (model, _) = train(&train_set, model, &cfg).map_err(|e| e.to_string())?;
    let opts = EvalOptions {
        window: Some(cfg.bptt_window),
        ..EvalOptions::default()
    };
    let r = evaluate(&model, &test_set, &opts).map_err(|e| e.to_string())?;
    Ok((r.mean_kl, r.uniform_baseline_kl, r.top1_accuracy))
}

fn generalization() -> Outcome {
    let start = Instant::now();
    let (kl, base, top1) = held_out_experiment(LabelSource::Target, 31)?;
    ensure((base - 3.80).abs() < 0.01, || format!("baseline KL {base}"))?;
    ensure(kl < 0.25 * base, || {
        format!("mean KL {kl:.4} vs 0.25 x baseline {:.4}", 0.25 * base)
    })?;
    let secs = within(start, Duration::from_secs(300))?;
    Ok(format!(
        "held-out KL {kl:.4} = {:.3} x baseline {base:.4}, top-1 {top1:.3}, {secs:.1}s",
        kl / base
    ))
}

fn independent_labels() -> Outcome {
    let (kl, base, _) = held_out_experiment(LabelSource::Independent, 41)?;
    let ratio = kl / base;
    ensure((ratio - 1.0).abs() <= 0.1, || {
        format!("KL ratio {ratio:.4}")
    })?;
    Ok(format!(
        "held-out KL {kl:.4} = {ratio:.3} x baseline {base:.4}"
    ))
}

fn cli(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_gazeattn"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    ensure(out.status.success(), || {
        format!(
            "gazeattn {} failed: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr)
        )
    })?;
    Ok(stdout)
}

/// Largest rise of the moving average above its running minimum from `from` on.
fn worst_rise(curve: &TrainCurve, from: usize) -> f64 {
    let ma = moving_average(&curve.losses(), 50);
    let mut best = f64::INFINITY;
    let mut worst = 0.0f64;
    for &v in &ma[from - 1..] {
        best = best.min(v);
        worst = worst.max(v / best);
    }
    worst
}

fn profile_run(
    dir: &Path,
    data: &Path,
    profile: &str,
    epochs: &str,
) -> Result<(TrainCurve, ModelParams, String), String> {
    let ckpt = dir.join(format!("{profile}.gzat"));
    let curve_path = dir.join(format!("{profile}.csv"));
    let echo = cli(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--out",
        ckpt.to_str().unwrap(),
        "--curve",
        curve_path.to_str().unwrap(),
        "--profile",
        profile,
        "--lr",
        "0.01",
        "--epochs",
        epochs,
        "--seed",
        "5",
    ])?;
    let curve = TrainCurve::read_csv(
        fs::File::open(&curve_path).map_err(|e| e.to_string())?,
        "curve",
    )
    .map_err(|e| e.to_string())?;
    let model = load_checkpoint(&ckpt).map_err(|e| e.to_string())?;
    Ok((curve, model, echo))
}

fn profile_stability() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = dir.path().join("synth.gzds");
    cli(&[
        "synth",
        "--out",
        data.to_str().unwrap(),
        "--sequences",
        "40",
        "--frames",
        "300",
        "--seed",
        "4",
    ])?;

    let mut parts = Vec::new();
    for (profile, iterations, layers, epochs) in [("uno", 1000, 2, "3"), ("car", 200, 1, "1")] {
        let (curve, model, echo) = profile_run(dir.path(), &data, profile, epochs)?;
        let iters: Vec<usize> = curve.records.iter().map(|r| r.iteration).collect();
        ensure(iters == (1..=iterations).collect::<Vec<_>>(), || {
            format!("{profile}: {} iterations recorded", iters.len())
        })?;
        let c = model.config;
        ensure(
            (c.num_layers, c.hidden, c.grid_side) == (layers, 64, 7),
            || format!("{profile}: config {c:?}"),
        )?;
        ensure(echo.contains("gamma: 0.01\n"), || {
            format!("{profile}: echo lacks gamma 0.01")
        })?;
        let rise = worst_rise(&curve, 100);
        ensure(rise <= 1.05, || {
            format!(
                "{profile}: moving average rose {:.2}% after iteration 100",
                100.0 * (rise - 1.0)
            )
        })?;
        let ma = moving_average(&curve.losses(), 50);
        parts.push(format!(
            "{profile}: {iterations} iterations, MA50 {:.1} -> {:.1}, max rise {:.2}%",
            ma[99],
            ma[iterations - 1],
            100.0 * (rise - 1.0)
        ));
    }
    Ok(parts.join("; "))
}

fn determinism() -> Outcome {
    let mut runs = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let p = |n: &str| dir.path().join(n).to_str().unwrap().to_string();
        cli(&[
            "synth",
            "--out",
            &p("d.gzds"),
            "--grid",
            "4",
            "--depth",
            "6",
            "--sequences",
            "3",
            "--frames",
            "45",
            "--seed",
            "8",
        ])?;
        cli(&[
            "train",
            "--data",
            &p("d.gzds"),
            "--out",
            &p("m.gzat"),
            "--curve",
            &p("c.csv"),
            "--hidden",
            "12",
            "--layers",
            "2",
            "--max-iters",
            "40",
            "--epochs",
            "20",
            "--val",
            &p("d.gzds"),
            "--val-every",
            "10",
            "--seed",
            "8",
        ])?;
        cli(&[
            "eval",
            "--model",
            &p("m.gzat"),
            "--data",
            &p("d.gzds"),
            "--report",
            &p("r.txt"),
            "--csv",
            &p("r.csv"),
        ])?;
        cli(&[
            "predict",
            "--model",
            &p("m.gzat"),
            "--data",
            &p("d.gzds"),
            "--out",
            &p("p.csv"),
        ])?;
        let files: Vec<Vec<u8>> = ["d.gzds", "m.gzat", "c.csv", "r.txt", "r.csv", "p.csv"]
            .iter()
            .map(|n| fs::read(dir.path().join(n)).unwrap())
            .collect();
        runs.push(files);
    }
    for (i, name) in [
        "dataset",
        "checkpoint",
        "curve",
        "report",
        "per-frame csv",
        "predictions",
    ]
    .iter()
    .enumerate()
    {
        ensure(runs[0][i] == runs[1][i], || {
            format!("{name} differs between runs")
        })?;
    }
    Ok(format!(
        "dataset, checkpoint, curve, report and predictions bit-identical ({} checkpoint bytes)",
        runs[0][1].len()
    ))
}

fn preprocessing() -> Outcome {
    let mut checked = 0;
    let mut check = |cond: bool, what: &str| -> Result<(), String> {
        checked += 1;
        ensure(cond, || what.to_string())
    };

    let full = vec![Some(3), Some(1), Some(4)];
    check(
        fill_missing(&full).unwrap() == vec![3, 1, 4],
        "fill: fully labeled input changed",
    )?;
    let mut sparse = vec![None; 11];
    sparse[0] = Some(5);
    sparse[10] = Some(9);
    check(
        fill_missing(&sparse).unwrap()[3] == 5,
        "fill: frame 3 not nearest to frame 0",
    )?;
    let mut tie = vec![None; 5];
    tie[0] = Some(5);
    tie[4] = Some(9);
    check(
        fill_missing(&tie).unwrap()[2] == 5,
        "fill: tie not resolved to the earlier frame",
    )?;
    check(
        fill_missing::<usize>(&[None, None]).is_err(),
        "fill: unlabeled input accepted",
    )?;

    for (w, h) in [(640.0, 480.0), (7.0, 7.0), (1920.0, 1080.0)] {
        check(
            quantize(0.0, 0.0, w, h, 7).unwrap() == 0,
            "quantize: origin",
        )?;
        check(
            quantize(w - 1.0, h - 1.0, w, h, 7).unwrap() == 48,
            "quantize: last pixel",
        )?;
        check(
            quantize(w / 2.0, h / 2.0, w, h, 7).unwrap() == 24,
            "quantize: center",
        )?;
        check(
            quantize(w, 0.0, w, h, 7).is_err(),
            "quantize: out-of-frame accepted",
        )?;
    }

    check(vote(&[17; 25]).unwrap() == 17, "vote: unanimity")?;
    let plurality: Vec<usize> = [vec![3; 5], vec![7; 4], vec![1; 2], vec![9]].concat();
    check(vote(&plurality).unwrap() == 3, "vote: plurality")?;
    let tied: Vec<usize> = [vec![6; 10], vec![2; 10], vec![1; 5]].concat();
    check(
        vote(&tied).unwrap() == 2,
        "vote: tie not resolved to smallest index",
    )?;
    check(vote(&[]).is_err(), "vote: empty accepted")?;

    let seq = |t: usize| {
        let frames = (0..t)
            .map(|_| FeatureCube::new(1, Matrix::zeros(1, 1)).unwrap())
            .collect();
        LabeledSequence::new("s", frames, vec![0; t]).unwrap()
    };
    let (tr, te) = split(&seq(3025), 0.8).unwrap();
    check((tr.len(), te.len()) == (2420, 605), "split: 3025 frames")?;
    let (tr, te) = split(&seq(10), 0.8).unwrap();
    check((tr.len(), te.len()) == (8, 2), "split: 10 frames")?;
    check(split(&seq(1), 0.8).is_err(), "split: single frame accepted")?;
    check(
        split(&seq(10), 1.0).is_err() && split(&seq(10), 0.0).is_err(),
        "split: bad fraction accepted",
    )?;

    // two participants, 4 frames of 70×70: frame 1 has no sample, frame 2 is a 1-1 tie
    let rec = |frame, participant, point| RawGazeRecord {
        frame_index: frame,
        participant_id: participant,
        point,
        frame_width: 70.0,
        frame_height: 70.0,
    };
    let records = vec![
        rec(0, 0, Some((5.0, 5.0))),
        rec(0, 1, Some((6.0, 6.0))),
        rec(1, 0, None),
        rec(2, 0, Some((65.0, 5.0))),
        rec(2, 1, Some((15.0, 5.0))),
        rec(3, 0, Some((35.0, 35.0))),
    ];
    let labels = prepare_labels(&records, 7, &[(3, 40)], Some(5)).unwrap();
    check(
        labels == vec![0, 0, 1, 40, 24],
        "pipeline: quantize, vote, fill, override",
    )?;
    Ok(format!("{checked} preprocessing checks"))
}

fn formats() -> Outcome {
    let data = synth_generate(&SynthConfig {
        grid_side: 5,
        depth: 3,
        num_sequences: 3,
        frames_per_sequence: 7,
        seed: 12,
        ..SynthConfig::default()
    })
    .unwrap();
    let model = ModelParams::init(
        ModelConfig::new(5, 3, 6, 2),
        &mut ChaCha8Rng::seed_from_u64(12),
    )
    .unwrap();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (dpath, mpath) = (dir.path().join("d.gzds"), dir.path().join("m.gzat"));
    save_dataset(&data, &dpath).map_err(|e| e.to_string())?;
    save_checkpoint(&model, &mpath).map_err(|e| e.to_string())?;
    let data_back = load_dataset(&dpath).map_err(|e| e.to_string())?;
    let model_back = load_checkpoint(&mpath).map_err(|e| e.to_string())?;
    ensure(
        encode_dataset(&data_back) == fs::read(&dpath).unwrap(),
        || "dataset round-trip not bit-exact".into(),
    )?;
    ensure(
        encode_checkpoint(&model_back) == fs::read(&mpath).unwrap(),
        || "checkpoint round-trip not bit-exact".into(),
    )?;
    let bits = |m: &ModelParams| -> Vec<u64> {
        m.buffers()
            .iter()
            .flat_map(|b| b.2.iter().map(|v| v.to_bits()))
            .collect()
    };
    ensure(bits(&model) == bits(&model_back), || {
        "checkpoint values differ".into()
    })?;
    ensure(data == data_back, || "dataset values differ".into())?;

    let dbytes = encode_dataset(&data);
    let mbytes = encode_checkpoint(&model);
    let positioned = |r: Result<(), Error>| matches!(r, Err(Error::Format { .. }));
    let mut rejected = 0;
    let mut expect = |ok: bool, what: &str| -> Result<(), String> {
        rejected += 1;
        ensure(ok, || format!("accepted {what}"))
    };
    for cut in [0, 5, 13, dbytes.len() / 3, dbytes.len() - 1] {
        expect(
            positioned(decode_dataset(&dbytes[..cut]).map(|_| ())),
            "truncated dataset",
        )?;
    }
    for cut in [0, 7, 36, mbytes.len() / 2, mbytes.len() - 1] {
        expect(
            positioned(decode_checkpoint(&mbytes[..cut]).map(|_| ())),
            "truncated checkpoint",
        )?;
    }
    let mut bad = dbytes.clone();
    bad[2] ^= 0xff;
    expect(
        matches!(decode_dataset(&bad), Err(Error::Format { offset: 0, .. })),
        "dataset bad magic",
    )?;
    let mut bad = mbytes.clone();
    bad[4..8].copy_from_slice(&9u32.to_le_bytes());
    expect(
        matches!(
            decode_checkpoint(&bad),
            Err(Error::Format { offset: 4, .. })
        ),
        "checkpoint bad version",
    )?;

    // label of frame 4 in the first sequence set to K²
    let label_at = 12 + 4 + "synth-000".len() + 16 + 4 * 4;
    let mut bad = dbytes.clone();
    bad[label_at..label_at + 4].copy_from_slice(&25u32.to_le_bytes());
    let named = match decode_dataset(&bad) {
        Err(Error::Format { offset, reason, .. }) => {
            offset as usize == label_at && reason.contains("frame 4")
        }
        _ => false,
    };
    expect(named, "dataset label out of range")?;

    let mut bad = mbytes.clone();
    let n = bad.len();
    bad[n - 8..].copy_from_slice(&f64::NAN.to_le_bytes());
    expect(
        matches!(decode_checkpoint(&bad), Err(Error::Format { offset, .. }) if offset as usize == n - 8),
        "checkpoint NaN",
    )?;
    Ok(format!(
        "bit-exact round-trips, {rejected} corrupted inputs rejected with byte offsets"
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("1 gradient fidelity", gradient_fidelity),
        ("2 overfit capacity", overfit_capacity),
        ("3 generalization", generalization),
        ("4 independent labels", independent_labels),
        ("5 profile stability", profile_stability),
        ("6 determinism", determinism),
        ("7 preprocessing", preprocessing),
        ("8 format round-trips", formats),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        match f() {
            Ok(detail) => println!("PASS criterion {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {name}: {why}");
            }
        }
    }
    println!("acceptance: {} of 8 criteria passed", 8 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
