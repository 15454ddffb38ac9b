//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any criterion fails.

use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use subband_core::codestream::{encode_block, HeaderFeatures};
use subband_core::model::{joint_loss, shape_chain, ApproxTarget, HeadConfig, ModelConfig, Scenario};
use subband_core::nn::gradcheck::{check_layer, gradient_check, projection};
use subband_core::nn::layers::{BatchNorm2d, Conv2d, ConvTranspose2d, Dropout, Flatten, Linear, MaxPool2d, Relu};
use subband_core::nn::loss::{approximation_loss, cross_entropy, one_hot};
use subband_core::nn::{conv2d, conv_transpose2d, Layer, Mode, SparseConvMatrix};
use subband_core::pipeline::{
    evaluate, run_experiment, write_fixture, write_natural_fixture, EvalOptions, ExperimentConfig, MetricsReport,
    SplitName, SynthConfig,
};
use subband_core::wavelet::max_levels;
use subband_core::{build_model, decode_stream, decompose, encode, CodeblockGrid, Codestream, Image, SubbandKind, Tensor};
use tempfile::TempDir;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize, bands: usize, depth: u8) -> Image {
    let max = if depth == 8 { 255u16 } else { u16::MAX };
    let smooth = rng.random_bool(0.5);
    let samples = (0..w * h * bands)
        .map(|i| {
            if smooth {
                let (x, y) = ((i / bands) % w, (i / bands) / w);
                let base = (x * 3 + y * 5) as u32 * max as u32 / (3 * w + 5 * h) as u32;
                (base as u16).saturating_add(rng.random_range(0..=max / 32)).min(max)
            } else {
                rng.random_range(0..=max)
            }
        })
        .collect();
    Image::new(w, h, bands, depth, samples).unwrap()
}

fn lossless() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 200;
    for i in 0..n {
        let (w, h) = match i {
            0 => (1, 1),
            1 => (257, 257),
            2 => (1, 257),
            3 => (257, 2),
            _ => (rng.random_range(1..=257), rng.random_range(1..=257)),
        };
        let bands = rng.random_range(1..=4);
        let depth = if rng.random_bool(0.5) { 8 } else { 16 };
        let levels = rng.random_range(0..=max_levels(w, h).min(6));
        let block = if rng.random_bool(0.5) { 32 } else { 64 };
        let img = random_image(&mut rng, w, h, bands, depth);
        let pyr = decompose(&img, levels).map_err(|e| format!("image {i}: {e}"))?;
        let cs = encode(&pyr, CodeblockGrid::square(block).unwrap()).map_err(|e| format!("image {i}: {e}"))?;
        let parsed = Codestream::from_bytes(&cs.to_bytes()).map_err(|e| format!("image {i}: {e}"))?;
        let out = parsed.decode_partial(0).map_err(|e| format!("image {i}: {e}"))?;
        ensure(out.image.as_ref() == Some(&img), || {
            format!("image {i} ({w}x{h}x{bands}, {depth}-bit, L={levels}) differs after roundtrip")
        })?;
    }
    Ok(format!("{n} fuzzed images bit-exact"))
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn conv_matrix() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let configs = 60;
    let (mut worst_apply, mut worst_adjoint, mut worst_tconv, mut tconv_checked) = (0.0f64, 0.0f64, 0.0f64, 0);
    for _ in 0..configs {
        let k = rng.random_range(1..=5);
        let s = rng.random_range(1..=3);
        let p = rng.random_range(0..k);
        let (ic, oc) = (rng.random_range(1..=3), rng.random_range(1..=3));
        let (h, w) = (rng.random_range(k..=12), rng.random_range(k..=12));
        let x = random_tensor(&mut rng, &[1, ic, h, w]);
        let kernel = random_tensor(&mut rng, &[oc, ic, k, k]);
        let c = SparseConvMatrix::build(&kernel, (ic, h, w), s, p).map_err(|e| e.to_string())?;
        let dense = conv2d(&x, &kernel, None, s, p).map_err(|e| e.to_string())?;
        let sparse = c.apply(x.data()).map_err(|e| e.to_string())?;
        ensure(dense.len() == sparse.len(), || "conv2d and matrix sizes differ".into())?;
        for (a, b) in dense.data().iter().zip(&sparse) {
            worst_apply = worst_apply.max((a - b).abs());
        }
        let y: Vec<f64> = (0..c.rows()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let cty = c.apply_transpose(&y).map_err(|e| e.to_string())?;
        let lhs: f64 = sparse.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(&cty).map(|(a, b)| a * b).sum();
        worst_adjoint = worst_adjoint.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1.0));

        let (oh, ow) = (dense.shape()[2], dense.shape()[3]);
        if s * (oh - 1) + k == h + 2 * p && s * (ow - 1) + k == w + 2 * p {
            let yt = Tensor::from_vec(&[1, oc, oh, ow], y.clone()).unwrap();
            let t = conv_transpose2d(&yt, &kernel, None, s, p).map_err(|e| e.to_string())?;
            for (a, b) in t.data().iter().zip(&cty) {
                worst_tconv = worst_tconv.max((a - b).abs());
            }
            tconv_checked += 1;
        }
    }
    ensure(worst_apply <= 1e-12, || format!("conv2d vs matrix {worst_apply:e}"))?;
    ensure(worst_adjoint <= 1e-10, || format!("adjoint identity {worst_adjoint:e}"))?;
    ensure(worst_tconv <= 1e-12, || format!("tconv vs transpose {worst_tconv:e}"))?;
    Ok(format!(
        "{configs} configs: conv {worst_apply:.1e}, adjoint {worst_adjoint:.1e}, tconv {worst_tconv:.1e} ({tconv_checked} tconv)"
    ))
}

fn shape_law() -> Outcome {
    let sizes = |cfg: &ModelConfig| -> Result<Vec<usize>, String> {
        Ok(shape_chain(cfg).map_err(|e| e.to_string())?.iter().map(|s| s[1]).collect())
    };
    let image = |side| ModelConfig {
        levels: 3,
        approx_layers: 3,
        target: ApproxTarget::Image,
        image_width: side,
        image_height: side,
        ..ModelConfig::default()
    };
    let a = sizes(&image(256))?;
    let b = sizes(&image(600))?;
    ensure(a == [32, 64, 128, 256], || format!("256x256 chain {a:?}"))?;
    ensure(b == [75, 150, 300, 600], || format!("600x600 chain {b:?}"))?;
    let sub = shape_chain(&ModelConfig::default()).map_err(|e| e.to_string())?;
    ensure(sub == [[12, 32, 32], [12, 64, 64], [12, 128, 128]], || format!("sub-band chain {sub:?}"))?;
    Ok("32->64->128->256 and 75->150->300->600 reproduced".into())
}

fn gradients() -> Outcome {
    const EPS: f64 = 1e-5;
    const TOL: f64 = 1e-4;
    let x = projection(&[2, 3, 6, 6]).map(|v| v + 0.013);
    let rng = || ChaCha8Rng::seed_from_u64(7);
    type Make = Box<dyn Fn() -> Box<dyn Layer>>;
    let cases: Vec<(&str, Make, Tensor, Mode)> = vec![
        ("conv", Box::new(move || Box::new(Conv2d::new("c", 3, 4, 3, 2, 1, &mut rng()))), x.clone(), Mode::Train),
        (
            "tconv",
            Box::new(move || Box::new(ConvTranspose2d::new("t", 3, 2, 2, 2, 0, &mut rng()))),
            x.clone(),
            Mode::Train,
        ),
        ("relu", Box::new(|| Box::new(Relu::new("r"))), x.clone(), Mode::Train),
        ("maxpool", Box::new(|| Box::new(MaxPool2d::new("p", 2, 2))), x.clone(), Mode::Train),
        ("batchnorm/train", Box::new(|| Box::new(BatchNorm2d::new("b", 3, 1e-5, 0.9))), x.clone(), Mode::Train),
        ("batchnorm/eval", Box::new(|| Box::new(BatchNorm2d::new("b", 3, 1e-5, 0.9))), x.clone(), Mode::Eval),
        ("dropout", Box::new(|| Box::new(Dropout::new("d", 0.3, 5).unwrap())), x.clone(), Mode::Train),
        ("flatten", Box::new(|| Box::new(Flatten::new("f"))), x.clone(), Mode::Train),
        (
            "linear",
            Box::new(move || Box::new(Linear::new("l", 12, 5, &mut rng()))),
            projection(&[3, 12]),
            Mode::Train,
        ),
    ];
    let mut worst: f64 = 0.0;
    for (name, make, input, mode) in &cases {
        let err = check_layer(make.as_ref(), input, *mode, EPS).map_err(|e| e.to_string())?;
        ensure(err < TOL, || format!("{name}: {err:e}"))?;
        worst = worst.max(err);
    }

    let logits = projection(&[3, 5]).map(|v| v * 3.0);
    let targets = one_hot(&[0, 4, 2], 5).unwrap();
    let (_, g) = cross_entropy(&logits, &targets).unwrap();
    let err = gradient_check(
        |v| cross_entropy(&Tensor::from_vec(&[3, 5], v.to_vec()).unwrap(), &targets).unwrap().0,
        logits.data(),
        g.data(),
        EPS,
    );
    ensure(err < TOL, || format!("cross-entropy: {err:e}"))?;
    worst = worst.max(err);
    for normalize in [false, true] {
        let a = projection(&[2, 4, 3, 3]);
        let d = vec![projection(&[2, 4, 3, 3]).map(|v| v * 0.5 + 0.1)];
        let (_, g) = approximation_loss(std::slice::from_ref(&a), &d, normalize).unwrap();
        let err = gradient_check(
            |v| approximation_loss(&[Tensor::from_vec(a.shape(), v.to_vec()).unwrap()], &d, normalize).unwrap().0,
            a.data(),
            g[0].data(),
            EPS,
        );
        ensure(err < TOL, || format!("approximation loss: {err:e}"))?;
        worst = worst.max(err);
    }

    let cfg = ModelConfig {
        scenario: Scenario::Minimal,
        levels: 2,
        approx_layers: 1,
        target: ApproxTarget::Subbands,
        bands: 1,
        image_width: 8,
        image_height: 8,
        classes: 3,
        normalize_approx_loss: true,
        head: HeadConfig {
            conv_channels: vec![3, 2],
            pool_after: vec![1],
            fc_hidden: 4,
            dropout: 0.0,
            ..HeadConfig::default()
        },
        seed: 3,
        ..ModelConfig::default()
    };
    let input = projection(&[2, 4, 2, 2]).map(|v| v + 0.013);
    let targets = vec![projection(&[2, 4, 4, 4])];
    let labels = [0, 2];
    let mut model = build_model(&cfg).map_err(|e| e.to_string())?;
    model.zero_grad();
    let out = model.forward(&input, Mode::Train).map_err(|e| e.to_string())?;
    let (_, dapprox, dlogits) = model.loss(&out, &targets, &labels).map_err(|e| e.to_string())?;
    let dx = model.backward(&dapprox, &dlogits).map_err(|e| e.to_string())?;
    let base: Vec<f64> = model.params().iter().flat_map(|p| p.value.data().to_vec()).collect();
    let analytic: Vec<f64> = model.params().iter().flat_map(|p| p.grad.data().to_vec()).collect();
    let eval = |flat: &[f64], x: &Tensor| {
        let mut m = build_model(&cfg).unwrap();
        let mut off = 0;
        for p in m.params_mut() {
            let n = p.value.len();
            p.value.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        let out = m.forward(x, Mode::Train).unwrap();
        m.loss(&out, &targets, &labels).unwrap().0.total
    };
    let err_p = gradient_check(|v| eval(v, &input), &base, &analytic, EPS);
    let err_x = gradient_check(
        |v| eval(&base, &Tensor::from_vec(input.shape(), v.to_vec()).unwrap()),
        input.data(),
        dx.data(),
        EPS,
    );
    ensure(err_p < TOL && err_x < TOL, || format!("joint model: params {err_p:e}, input {err_x:e}"))?;
    worst = worst.max(err_p).max(err_x);
    Ok(format!(
        "{} layers, 2 losses and the joint model; worst relative error {worst:.1e}",
        cases.len()
    ))
}

fn loss_formulas() -> Outcome {
    let a = projection(&[2, 4, 3, 5]);
    let (zero, _) = approximation_loss(std::slice::from_ref(&a), std::slice::from_ref(&a), false).unwrap();
    ensure(zero == 0.0, || format!("identical tensors give {zero}"))?;
    let shifted = vec![a.map(|v| v + 1.0)];
    let (unit, _) = approximation_loss(std::slice::from_ref(&a), &shifted, false).unwrap();
    let (unit_norm, _) = approximation_loss(std::slice::from_ref(&a), &shifted, true).unwrap();
    ensure((unit - 60.0).abs() < 1e-12, || format!("unit offset gives {unit}, expected 60"))?;
    ensure((unit_norm - 4.0).abs() < 1e-12, || format!("normalized unit offset gives {unit_norm}, expected 4"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let approx = vec![random_tensor(&mut rng, &[3, 2, 4, 4]), random_tensor(&mut rng, &[3, 2, 8, 8])];
    let targets = vec![random_tensor(&mut rng, &[3, 2, 4, 4]), random_tensor(&mut rng, &[3, 2, 8, 8])];
    for normalize in [false, true] {
        let mut brute = 0.0;
        for (x, d) in approx.iter().zip(&targets) {
            let spatial = if normalize { (x.shape()[2] * x.shape()[3]) as f64 } else { 1.0 };
            for n in 0..3 {
                let mut s = 0.0;
                for (p, q) in x.item(n).iter().zip(d.item(n)) {
                    s += (p - q) * (p - q);
                }
                brute += s / spatial / 3.0;
            }
        }
        let (got, _) = approximation_loss(&approx, &targets, normalize).unwrap();
        ensure((got - brute).abs() <= 1e-12 * brute.max(1.0), || format!("brute force {brute} vs {got}"))?;
    }

    let mut worst: f64 = 0.0;
    for q in [2usize, 4, 10, 45] {
        let logits = Tensor::zeros(&[3, q]);
        let (ce, _) = cross_entropy(&logits, &one_hot(&[0, q - 1, q / 2], q).unwrap()).unwrap();
        worst = worst.max((ce - (q as f64).ln()).abs());
        let (joint, _, _) =
            joint_loss(std::slice::from_ref(&a), std::slice::from_ref(&a), &logits, &[0, 1, 0], false).unwrap();
        worst = worst.max((joint.total - (q as f64).ln()).abs());
    }
    ensure(worst <= 1e-9, || format!("uniform prediction deviates from ln Q by {worst:e}"))?;
    Ok(format!("zero/unit/brute-force cases exact; |CE - ln Q| <= {worst:.1e}"))
}

fn cli(args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_subband")).args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("subband {args:?}: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(out.stdout)
}

fn header_features(dir: &Path) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut fixtures: Vec<(String, Image, usize, usize)> = vec![
        ("zero".into(), Image::filled(40, 24, 3, 8, 0).unwrap(), 2, 32),
        ("noise16".into(), random_image(&mut rng, 70, 45, 2, 16), 3, 32),
    ];
    let synth = SynthConfig {
        classes: 4,
        count: 4,
        size: 96,
        seed: 6,
        ..SynthConfig::default()
    };
    for (i, (_, img)) in subband_core::pipeline::generate(&synth).map_err(|e| e.to_string())?.into_iter().enumerate() {
        fixtures.push((format!("synth{i}"), img, 3, 64));
    }
    let nat = subband_core::pipeline::natural_image(129, 100, 3, &mut rng);
    fixtures.push(("natural".into(), nat, 4, 32));

    let mut blocks = 0;
    for (name, img, levels, block) in &fixtures {
        let src = dir.join(format!("{name}.png"));
        let wcs = dir.join(format!("{name}.wcs"));
        subband_core::io::write_image(&src, img).map_err(|e| e.to_string())?;
        let (l, b) = (levels.to_string(), block.to_string());
        let (src_s, wcs_s) = (src.to_str().unwrap(), wcs.to_str().unwrap());
        cli(&["encode", "--levels", &l, "--block", &b, src_s, wcs_s])?;
        let features: HeaderFeatures = serde_json::from_slice(&cli(&["inspect", "--format", "json", wcs_s])?)
            .map_err(|e| e.to_string())?;
        let decoded = decode_stream(fs::File::open(&wcs).map_err(|e| e.to_string())?, 0).map_err(|e| e.to_string())?;
        let pyr = decoded.pyramid;
        for f in &features.blocks {
            let plane = if f.kind == SubbandKind::LL {
                &pyr.bands[f.band as usize].ll
            } else {
                pyr.detail(f.band as usize, f.level as usize, f.kind).ok_or("missing detail plane")?
            };
            let mut coeffs = Vec::new();
            for y in f.y0..f.y0 + f.height {
                for x in f.x0..f.x0 + f.width {
                    coeffs.push(plane.get(x as usize, y as usize));
                }
            }
            let max = coeffs.iter().map(|c| c.unsigned_abs()).max().unwrap_or(0);
            let mb = (u32::BITS - max.leading_zeros()) as u8;
            let (_, payload) = encode_block(&coeffs, f.width as usize, f.height as usize);
            ensure(mb == f.bitplanes && payload.len() == f.bytes as usize, || {
                format!(
                    "{name}: block {:?} at ({}, {}) reports MB={} B={}, recomputed MB={mb} B={}",
                    f.kind,
                    f.x0,
                    f.y0,
                    f.bitplanes,
                    f.bytes,
                    payload.len()
                )
            })?;
            blocks += 1;
        }
        if name == "zero" {
            ensure(features.blocks.iter().all(|f| f.bitplanes == 0), || "zero image has MB > 0".into())?;
        }
    }
    Ok(format!("{blocks} codeblocks over {} fixtures match", fixtures.len()))
}

fn bench_config(dataset: &Path, scenario: Scenario, m: usize) -> ExperimentConfig {
    ExperimentConfig {
        dataset: dataset.to_path_buf(),
        fractions: [0.0, 0.0, 1.0],
        epochs: 0,
        batch_size: 16,
        model: ModelConfig {
            scenario,
            levels: 3,
            approx_layers: m,
            target: ApproxTarget::Subbands,
            normalize_approx_loss: true,
            head: HeadConfig::compact(),
            ..ModelConfig::default()
        },
        ..ExperimentConfig::default()
    }
}

fn partial_decode(dir: &Path) -> Outcome {
    let natural = dir.join("natural");
    write_natural_fixture(&natural, 24, 256, 3, 8, "png").map_err(|e| e.to_string())?;
    let (mut prefix, mut total) = (0u64, 0u64);
    let mut worst: f64 = 0.0;
    for entry in fs::read_dir(natural.join("natural")).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        let img = subband_core::io::read_image(&path).map_err(|e| e.to_string())?;
        let cs = encode(&decompose(&img, 3).unwrap(), CodeblockGrid::square(64).unwrap()).unwrap();
        let bytes = cs.to_bytes();
        let out = decode_stream(bytes.as_slice(), 3).map_err(|e| e.to_string())?;
        let n = out.bytes_read as usize;
        ensure(n < bytes.len(), || format!("{}: level-3 decode read the whole stream", path.display()))?;
        let again = decode_stream(&bytes[..n], 3).map_err(|e| format!("prefix does not decode: {e}"))?;
        ensure(again.pyramid == out.pyramid, || "prefix decode differs".into())?;
        prefix += n as u64;
        total += bytes.len() as u64;
        worst = worst.max(n as f64 / bytes.len() as f64);
    }
    let ratio = prefix as f64 / total as f64;
    ensure(ratio < 0.30 && worst < 0.30, || format!("prefix is {:.1}% of the stream", 100.0 * worst))?;

    let bench = dir.join("bench");
    write_fixture(
        &bench,
        &SynthConfig {
            classes: 4,
            count: 48,
            size: 128,
            seed: 9,
            ..SynthConfig::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let scenarios = [(Scenario::Minimal, 2), (Scenario::Partial, 1), (Scenario::Full, 0)];
    let mut times = [f64::INFINITY; 3];
    for _ in 0..3 {
        for (i, (s, m)) in scenarios.iter().enumerate() {
            let out = run_experiment(&bench_config(&bench, *s, *m), &EvalOptions { batch_size: 16, rmse: false }, |_| {})
                .map_err(|e| e.to_string())?;
            times[i] = times[i].min(out.report.timing.test_s);
        }
    }
    ensure(times[0] < times[1] && times[1] < times[2], || {
        format!("test times S1 {:.4}s, S2 {:.4}s, full {:.4}s", times[0], times[1], times[2])
    })?;
    Ok(format!(
        "prefix {:.1}% of bytes (worst {:.1}%); S1 {:.3}s < S2 {:.3}s < full {:.3}s",
        100.0 * ratio,
        100.0 * worst,
        times[0],
        times[1],
        times[2]
    ))
}

fn toy_config(dataset: &Path, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        dataset: dataset.to_path_buf(),
        epochs: 30,
        batch_size: 16,
        seed,
        model: ModelConfig {
            scenario: Scenario::Minimal,
            levels: 2,
            approx_layers: 1,
            target: ApproxTarget::Subbands,
            normalize_approx_loss: true,
            head: HeadConfig::compact(),
            ..ModelConfig::default()
        },
        ..ExperimentConfig::default()
    }
}

struct ToyRun {
    seed: u64,
    train_accuracy: f64,
    report: MetricsReport,
    loss_ratio: f64,
}

fn toy_runs(dataset: &Path) -> Result<Vec<ToyRun>, String> {
    let mut runs = Vec::new();
    for seed in [1, 2, 3] {
        let cfg = toy_config(dataset, seed);
        let mut out = run_experiment(&cfg, &EvalOptions::default(), |_| {}).map_err(|e| e.to_string())?;
        let (dataset, model) = (&out.dataset, &mut out.model);
        let train = evaluate(model, dataset, SplitName::Train, &EvalOptions { batch_size: 32, rmse: false })
            .map_err(|e| e.to_string())?;
        let loss_ratio = out.log[19].loss / out.log[0].loss;
        runs.push(ToyRun {
            seed,
            train_accuracy: train.accuracy,
            report: out.report,
            loss_ratio,
        });
    }
    Ok(runs)
}

fn toy_learning(runs: &[ToyRun]) -> Outcome {
    let mut lines = Vec::new();
    let mut passed = 0;
    for r in runs {
        let ok = r.train_accuracy >= 90.0 && r.report.accuracy >= 70.0 && r.loss_ratio <= 0.5;
        passed += ok as usize;
        lines.push(format!(
            "seed {}: train {:.1}%, test {:.1}%, loss20/loss1 {:.3}",
            r.seed, r.train_accuracy, r.report.accuracy, r.loss_ratio
        ));
    }
    let summary = format!("{passed}/3 seeds ok; {}", lines.join("; "));
    if passed >= 2 {
        Ok(summary)
    } else {
        Err(summary)
    }
}

fn rmse_trend(runs: &[ToyRun]) -> Outcome {
    let mut lines = Vec::new();
    let mut passed = 0;
    for r in runs {
        let detail = r.report.mean_rmse(true).ok_or("no detail RMSE")?;
        let ll = r.report.mean_rmse(false).ok_or("no LL RMSE")?;
        passed += (detail < ll) as usize;
        lines.push(format!("seed {}: detail {detail:.2} vs LL {ll:.2}", r.seed));
    }
    let summary = format!("{passed}/3 seeds ok; {}", lines.join("; "));
    if passed >= 2 {
        Ok(summary)
    } else {
        Err(summary)
    }
}

fn determinism(dir: &Path) -> Outcome {
    let data = dir.join("det");
    write_fixture(
        &data,
        &SynthConfig {
            classes: 3,
            count: 60,
            size: 32,
            seed: 4,
            ..SynthConfig::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let mut cfg = toy_config(&data, 11);
    cfg.epochs = 3;
    cfg.block_size = 32;
    cfg.model.head.dropout = 0.3;
    let run = || -> Result<(MetricsReport, Vec<u8>), String> {
        let out = run_experiment(&cfg, &EvalOptions::default(), |_| {}).map_err(|e| e.to_string())?;
        let mut ckpt = Vec::new();
        out.model.save_checkpoint(&mut ckpt).map_err(|e| e.to_string())?;
        Ok((out.report.without_timing(), ckpt))
    };
    let (a, ca) = run()?;
    let (b, cb) = run()?;
    ensure(a == b, || "reports differ between runs".into())?;
    ensure(ca == cb, || "trained parameters differ between runs".into())?;
    Ok(format!("reports identical (accuracy {:.2}%, {} RMSE entries)", a.accuracy, a.rmse.len()))
}

fn main() -> ExitCode {
    let tmp = TempDir::new().expect("temp dir");
    let toy = tmp.path().join("toy");
    let toy_fixture = write_fixture(&toy, &SynthConfig { seed: 2024, ..SynthConfig::default() }).map_err(|e| e.to_string());
    let mut runs: Option<Result<Vec<ToyRun>, String>> = None;
    let mut toy = |f: fn(&[ToyRun]) -> Outcome| -> Outcome {
        let r = runs.get_or_insert_with(|| toy_fixture.clone().and_then(|_| toy_runs(&toy)));
        r.as_ref().map_err(|e| e.clone()).and_then(|r| f(r))
    };

    let mut failed = 0;
    let mut report = |n: usize, name: &str, start: Instant, outcome: Outcome| {
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("criterion {n:>2} PASS  {name} ({secs:.1}s): {msg}"),
            Err(msg) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name} ({secs:.1}s): {msg}");
            }
        }
    };
    let t = Instant::now();
    report(1, "lossless roundtrip", t, lossless());
    let t = Instant::now();
    report(2, "conv matrix and adjoint", t, conv_matrix());
    let t = Instant::now();
    report(3, "transposed-conv size chains", t, shape_law());
    let t = Instant::now();
    report(4, "gradient checks", t, gradients());
    let t = Instant::now();
    report(5, "loss formulas", t, loss_formulas());
    let t = Instant::now();
    let dir = tmp.path().join("features");
    fs::create_dir_all(&dir).unwrap();
    report(6, "header features", t, header_features(&dir));
    let t = Instant::now();
    report(7, "partial-decode cost", t, partial_decode(tmp.path()));
    let t = Instant::now();
    report(8, "toy end-to-end learning", t, toy(toy_learning));
    let t = Instant::now();
    report(9, "detail vs LL RMSE trend", t, toy(rmse_trend));
    let t = Instant::now();
    report(10, "determinism", t, determinism(tmp.path()));

    if failed == 0 {
        println!("acceptance: all 10 criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} of 10 criteria fail");
        ExitCode::FAILURE
    }
}
