//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criterion 9 trains the desk-scale model end to end (about 40 minutes on
//! one core). `CONDIFF_SKIP_DESK=1` skips it. Failures are reported but the
//! process exits 0 unless `CONDIFF_ACCEPTANCE_STRICT=1` is set.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use condiff::commands::{self, Context};
use condiff::config::{self, Override, RunConfig};
use condiff_core::data::{generate_phantom, PhantomParams, Split};
use condiff_core::diffusion::estimate_y0;
use condiff_core::ensemble::{entropy_uncertainty, sample_ensemble, std_uncertainty};
use condiff_core::image::{denormalize, normalize};
use condiff_core::metrics::{
    decorrelation_resolution, mae, moods_median_test, ms_ssim, nrmse, pearson, psnr, ssim, DecorrelationParams, SsimParams, PEAK,
};
use condiff_core::nn::{mp_concat, mp_conv2d, mp_fourier_embed, mp_silu, mp_sum, ParamKind};
use condiff_core::rng::{derive_seed, mix64, normal_image, normal_vec, seeded};
use condiff_core::{Denoiser, DenoiserConfig, Image, Image8, NoiseSchedule, Tensor};
use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

type Outcome = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Uniform draw in `[0, 1)` from a counter.
fn unit(seed: u64, i: u64) -> f64 {
    (derive_seed(seed, i) >> 11) as f64 / (1u64 << 53) as f64
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn c1_oracle_inversion() -> Outcome {
    let sched = NoiseSchedule::cosine(200, 8e-3).unwrap();
    let y0 = Image::from_fn(32, 32, |x, y| 2.0 * unit(1, (y * 32 + x) as u64) - 1.0);
    let mut rng = seeded(2);
    let mut worst: f64 = 0.0;
    for t in 1..=200 {
        let eps = normal_image(&mut rng, 32, 32);
        let yt = sched.forward_diffuse(&y0, t, &eps).unwrap();
        let back = estimate_y0(&yt, &eps, sched.alpha_bar(t)).unwrap();
        worst = worst.max(max_abs_diff(back.data(), y0.data()));
    }
    ensure(worst < 1e-6, format!("max error {worst:.2e} over t=1..200 (tol 1e-6)"))
}

fn c2_schedule() -> Outcome {
    let sched = NoiseSchedule::cosine(200, 8e-3).unwrap();
    let s: f64 = 8e-3;
    let f = |t: f64| ((t / 200.0 + s) / (1.0 + s) * PI / 2.0).cos().powi(2);
    let closed = f(100.0) / f(0.0);
    let (a1, a100, at) = (sched.alpha_bar(1), sched.alpha_bar(100), sched.alpha_bar(200));
    ensure(
        (a100 - 0.4939).abs() <= 1e-3 && (a100 - closed).abs() < 1e-12 && a1 < 1.0 && at < 1e-3,
        format!("abar_100 {a100:.6} (closed form {closed:.6}, target 0.4939 +- 1e-3), abar_1 {a1:.6}, abar_T {at:.2e}"),
    )
}

fn c3_gradients() -> Outcome {
    const STEP: f64 = 1e-4;
    const REL_TOL: f64 = 1e-3;
    let start = Instant::now();
    let cfg = DenoiserConfig {
        levels: 3,
        base_channels: 4,
        channel_mult: vec![1, 2, 2],
        blocks_per_level: 2,
        attention_levels: vec![2, 3],
        attention_heads: 2,
        embed_dim: 8,
        input_channels: 2,
    };
    let mut model = Denoiser::new(cfg, 31).unwrap();
    let mut k = 0;
    for g in model.params_mut().iter_mut().filter(|g| g.kind == ParamKind::Gain) {
        g.data[0] = 0.5 + unit(32, k);
        k += 1;
    }
    let (n, h, w) = (2, 8, 8);
    let mut rng = seeded(33);
    let cond = Tensor::from_vec(n, 1, h, w, normal_vec(&mut rng, n * h * w)).unwrap();
    let noisy = Tensor::from_vec(n, 1, h, w, normal_vec(&mut rng, n * h * w)).unwrap();
    let proj = normal_vec(&mut rng, n * h * w);
    let a_bars = [0.3, 0.85];
    let loss = |m: &Denoiser| -> f64 {
        let out = m.predict_batch(&cond, &noisy, &a_bars).unwrap();
        out.data.iter().zip(&proj).map(|(a, b)| a * b).sum()
    };
    let (_, grads) = model
        .predict_and_backprop(&cond, &noisy, &a_bars, |out| Tensor::from_vec(out.n, out.c, out.h, out.w, proj.clone()).unwrap())
        .unwrap();
    let (mut checked, mut failed) = (0, Vec::new());
    let mut kinds = std::collections::BTreeSet::new();
    for (gi, group) in model.params().iter().enumerate() {
        let idx = (mix64(gi as u64 + 77) % group.data.len() as u64) as usize;
        let mut plus = model.clone();
        plus.params_mut()[gi].data[idx] += STEP;
        let mut minus = model.clone();
        minus.params_mut()[gi].data[idx] -= STEP;
        let numeric = (loss(&plus) - loss(&minus)) / (2.0 * STEP);
        let analytic = grads.group(gi)[idx];
        let err = (numeric - analytic).abs();
        if err > REL_TOL * numeric.abs().max(analytic.abs()) && err > 1e-8 {
            failed.push(group.name.clone());
        }
        kinds.insert(format!("{:?}", group.kind));
        checked += 1;
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(
        checked >= 20 && failed.is_empty() && secs < 120.0,
        format!(
            "{checked} parameters in {} groups of kinds {kinds:?}, {} outside rel tol 1e-3 {failed:?}, {secs:.1} s (limit 120 s)",
            model.params().len(),
            failed.len()
        ),
    )
}

fn c4_magnitude() -> Outcome {
    let tensor = |seed: u64, n: usize, c: usize, side: usize| {
        Tensor::from_vec(n, c, side, side, normal_vec(&mut seeded(seed), n * c * side * side)).unwrap()
    };
    let (a, b) = (tensor(41, 32, 1, 64), tensor(42, 32, 1, 64));
    let c6 = tensor(43, 32, 3, 64);
    let x4 = tensor(44, 8, 4, 64);
    let w3: Vec<f64> = (0..4 * 4 * 9).map(|i| 4.0 * unit(45, i) - 2.0).collect();
    let mut rows = vec![
        ("silu", mp_silu(&a)),
        ("sum", mp_sum(&a, &b, 0.3).unwrap()),
        ("concat", mp_concat(&a, &c6, 0.5).unwrap()),
        ("conv3x3", mp_conv2d(&x4, &w3, 4, 3).unwrap()),
    ];
    rows.push(("conv1x1", mp_conv2d(&x4, &w3[..16], 4, 1).unwrap()));
    let mut detail = Vec::new();
    let mut ok = true;
    for (name, t) in &rows {
        let r = t.rms();
        ok &= t.len() >= 100_000 && (r - 1.0).abs() < 0.02;
        detail.push(format!("{name} {r:.4} ({} el)", t.len()));
    }
    let mut rng = seeded(46);
    let (mut ss, mut count) = (0.0, 0);
    for _ in 0..1000 {
        let freqs = normal_vec(&mut rng, 16);
        let phases: Vec<f64> = (0..16).map(|i| unit(47 + count as u64, i)).collect();
        let level = unit(48, count as u64);
        ss += mp_fourier_embed(level, &freqs, &phases).iter().map(|v| v * v).sum::<f64>();
        count += 1;
    }
    let fourier = (ss / (count * 16) as f64).sqrt();
    ok &= (fourier - 1.0).abs() < 0.05;
    detail.push(format!("fourier {fourier:.4} over 1000 draws"));
    ensure(ok, format!("rms {} (tol 2%, fourier 5%)", detail.join(", ")))
}

fn lcg_bytes(seed: u64, n: usize) -> Vec<i64> {
    let mut s = seed;
    (0..n)
        .map(|_| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 33) & 0xff) as i64
        })
        .collect()
}

fn reference_pair(k: u64) -> (Image, Image) {
    let mut a = lcg_bytes(1000 + k, 4096);
    for _ in 0..3 {
        let mut out = vec![0; 4096];
        for y in 0..64 {
            for x in 0..64 {
                let mut acc = 0;
                for dy in [63, 0, 1] {
                    for dx in [63, 0, 1] {
                        acc += a[((y + dy) % 64) * 64 + (x + dx) % 64];
                    }
                }
                out[y * 64 + x] = acc / 9;
            }
        }
        a = out;
    }
    let a: Vec<i64> = a.iter().map(|v| ((v - 128) * 4 + 128).clamp(0, 255)).collect();
    let amp = 10 + 6 * k as i64;
    let noise = lcg_bytes(5000 + k, 4096);
    let b: Vec<i64> = a.iter().zip(noise).map(|(v, n)| (v + n % (2 * amp + 1) - amp).clamp(0, 255)).collect();
    let img = |v: &[i64]| Image::from_fn(64, 64, |x, y| v[y * 64 + x] as f64);
    (img(&a), img(&b))
}

/// Multi-scale SSIM of [`reference_pair`] from an independent implementation
/// (three scales, first three standard weights renormalized).
const MS_SSIM_REFERENCE: [f64; 10] = [
    0.9977945685386658,
    0.9942278265953064,
    0.9895009994506836,
    0.9808598756790161,
    0.9786011576652527,
    0.9689098000526428,
    0.960096001625061,
    0.9468986392021179,
    0.933271586894989,
    0.9162329435348511,
];

fn c5_metrics() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..10u64 {
        let y = Image::from_fn(32, 32, |x, r| 1.0 + 254.0 * unit(seed, (r * 32 + x) as u64));
        let yh = Image::from_fn(32, 32, |x, r| 255.0 * unit(seed + 100, (r * 32 + x) as u64));
        let n = 1024.0;
        let (mut sa, mut sq, mut sy, mut sh, mut syy, mut shh, mut syh) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        for (&p, &q) in y.data().iter().zip(yh.data()) {
            sa += (p - q).abs();
            sq += (p - q) * (p - q);
            sy += p;
            sh += q;
            syy += p * p;
            shh += q * q;
            syh += p * q;
        }
        let r = (n * syh - sy * sh) / ((n * syy - sy * sy).sqrt() * (n * shh - sh * sh).sqrt());
        let want = [sa / n, (sq / n).sqrt() / (sy / n), 10.0 * (PEAK * PEAK / (sq / n)).log10(), r];
        let got = [
            mae(&y, &yh).unwrap(),
            nrmse(&y, &yh).unwrap(),
            psnr(&y, &yh, PEAK).unwrap(),
            pearson(&y, &yh).unwrap(),
        ];
        worst = worst.max(max_abs_diff(&got, &want));
    }
    let p = SsimParams::default();
    let hand = ssim(&Image::filled(32, 32, 100.0), &Image::filled(32, 32, 120.0), &p).unwrap();
    let mut ms_worst: f64 = 0.0;
    for (k, want) in MS_SSIM_REFERENCE.iter().enumerate() {
        let (a, b) = reference_pair(k as u64);
        ms_worst = ms_worst.max((ms_ssim(&a, &b, &p).unwrap().0 - want).abs());
    }
    ensure(
        worst < 1e-6 && (hand - 0.9836).abs() <= 1e-3 && ms_worst < 1e-3,
        format!(
            "brute-force max diff {worst:.1e} (tol 1e-6), uniform ssim {hand:.5} (0.9836 +- 1e-3), ms-ssim max diff {ms_worst:.1e} on 10 pairs (tol 1e-3)"
        ),
    )
}

fn c6_resolution() -> Outcome {
    let p = DecorrelationParams::default();
    let sinus = Image::from_fn(64, 64, |x, y| {
        128.0 + 50.0 * (2.0 * PI * x as f64 / 8.0).cos() + 50.0 * (2.0 * PI * y as f64 / 8.0).cos()
    });
    let r = decorrelation_resolution(&sinus, 20.0, &p).map_err(|e| e.to_string())?;
    let phantom = |seed: u64, blur: f64| {
        let clean = generate_phantom(seed, &PhantomParams::default()).unwrap();
        let base = if blur > 0.0 { clean.gaussian_blur(blur) } else { clean };
        let noise = normal_image(&mut seeded(seed + 100), 64, 64);
        base.zip_map(&noise, |v, n| v + 3.0 * n).unwrap()
    };
    let img = phantom(1, 0.0);
    let r20 = decorrelation_resolution(&img, 20.0, &p).map_err(|e| e.to_string())?;
    let r40 = decorrelation_resolution(&img, 40.0, &p).map_err(|e| e.to_string())?;
    let mut pairs = Vec::new();
    for seed in 0..3 {
        let sharp = decorrelation_resolution(&phantom(seed, 0.0), 20.0, &p).map_err(|e| e.to_string())?;
        let soft = decorrelation_resolution(&phantom(seed, 2.0), 20.0, &p).map_err(|e| e.to_string())?;
        pairs.push((sharp, soft));
    }
    let monotone = pairs.iter().all(|(a, b)| b > a);
    ensure(
        (r / 160.0 - 1.0).abs() < 0.1 && r40 == 2.0 * r20 && monotone,
        format!(
            "sinusoid R {r:.1} nm (160 +- 10%), R(40 nm px) / R(20 nm px) = {}, sharp->blurred {:?}",
            r40 / r20,
            pairs.iter().map(|(a, b)| format!("{a:.0}->{b:.0}")).collect::<Vec<_>>()
        ),
    )
}

fn c7_uncertainty() -> Outcome {
    let column = |v: &[u8]| -> Vec<Image8> { v.iter().map(|&x| Image8::new(1, 1, vec![x]).unwrap()).collect() };
    let s_ext = std_uncertainty(&column(&[0, 255])).unwrap().get(0, 0);
    let s_four = std_uncertainty(&column(&[100, 100, 120, 120])).unwrap().get(0, 0);
    let e0 = entropy_uncertainty(&column(&[9; 15])).unwrap().get(0, 0);
    let e2 = entropy_uncertainty(&column(&[5, 5, 9, 9])).unwrap().get(0, 0);
    let distinct: Vec<u8> = (0..15).map(|i| 17 * i).collect();
    let e15 = entropy_uncertainty(&column(&distinct)).unwrap().get(0, 0);
    let std_ok = (s_ext - 0.5).abs() < 1e-6 && (s_four - 10.0 / 255.0).abs() < 1e-6;
    let ent_ok = e0.abs() < 1e-9 && (e2 - 2f64.ln()).abs() < 1e-9 && (e15 - 15f64.ln()).abs() < 1e-9;
    ensure(
        std_ok && ent_ok,
        format!("std {s_ext:.6} / {s_four:.6} (0.5 / 0.0392), entropy {e0:.3e} / {e2:.9} / {e15:.9} (0 / ln 2 / ln 15)"),
    )
}

fn c8_mood() -> Outcome {
    let m = moods_median_test(&[1.0, 2.0, 3.0, 4.0], &[10.0, 11.0, 12.0, 13.0]).map_err(|e| e.to_string())?;
    let oracle = 1.0 - ChiSquared::new(1.0).unwrap().cdf(m.chi_square);
    ensure(
        (m.chi_square - 8.0).abs() < 1e-12 && (m.p_value - 0.0047).abs() <= 1e-3 && (m.p_value - oracle).abs() < 1e-9,
        format!("chi2 {:.6}, p {:.6} (0.0047 +- 1e-3), chi-square CDF oracle p {oracle:.6}", m.chi_square, m.p_value),
    )
}

fn desk_config() -> RunConfig {
    let ov = |k: &str, v: &str| Override {
        key: k.into(),
        value: v.into(),
    };
    config::resolve(
        "",
        &[
            ov("model.base_channels", "8"),
            ov("train.lr_init", "5e-3"),
            ov("train.epochs", "40"),
            ov("train.val_every", "10"),
        ],
    )
    .unwrap()
}

fn median(v: &[f64]) -> f64 {
    condiff_core::metrics::median(v).expect("nonempty")
}

fn c9_desk() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let ctx = Context::new(desk_config(), Some(dir.path()));
    commands::synth(&ctx).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let out = commands::train(&ctx, None, None, |r| {
        let val = r.val_mae.map(|v| format!(", val MAE {v:.2}")).unwrap_or_default();
        eprintln!("    desk epoch {:>2}: loss {:.4}{val} ({:.0} s)", r.epoch, r.train_loss, start.elapsed().as_secs_f64());
    })
    .map_err(|e| e.to_string())?;
    let train_min = start.elapsed().as_secs_f64() / 60.0;
    let losses: Vec<f64> = out.history.epochs.iter().map(|e| e.train_loss).collect();
    let (first_loss, last_loss) = (losses[0], *losses.last().unwrap());

    let ds = condiff::dataset::load_dataset(&ctx.dataset_dir()).map_err(|e| e.to_string())?;
    let test: Vec<(&Image8, &Image8)> = ds.split(Split::Test).map(|p| (&p.low, &p.high)).collect();
    let schedule = ctx.config.schedule.build().unwrap();
    let seeds = ctx.config.ensemble.seeds(15);
    let ks = [1usize, 2, 4, 8, 15];
    let eval_start = Instant::now();
    struct Row {
        raw_psnr: f64,
        single_psnr: f64,
        single_mae: f64,
        avg_mae: f64,
        k_psnr: Vec<f64>,
        structure: (f64, usize),
        background: (f64, usize),
    }
    let rows: Vec<Row> = test
        .par_iter()
        .map(|(low, high)| {
            let gt = high.to_f64();
            let set = sample_ensemble(&out.model, &normalize(low), &schedule, ctx.config.ensemble.sampler, &seeds).unwrap();
            let single = set.quantized()[0].to_f64();
            let k_psnr = ks
                .iter()
                .map(|&k| psnr(&gt, &denormalize(&set.average_first(k).unwrap()).to_f64(), PEAK).unwrap())
                .collect();
            let avg = denormalize(&set.average()).to_f64();
            let ent = set.entropy_uncertainty().unwrap();
            let background = ctx.config.data.phantom.background;
            let (mut on, mut off) = ((0.0, 0), (0.0, 0));
            for (&g, &e) in gt.data().iter().zip(ent.data()) {
                let acc = if g > background + 30.0 { &mut on } else { &mut off };
                acc.0 += e;
                acc.1 += 1;
            }
            Row {
                raw_psnr: psnr(&gt, &low.to_f64(), PEAK).unwrap(),
                single_psnr: psnr(&gt, &single, PEAK).unwrap(),
                single_mae: mae(&gt, &single).unwrap(),
                avg_mae: mae(&gt, &avg).unwrap(),
                k_psnr,
                structure: on,
                background: off,
            }
        })
        .collect();
    let col = |f: &dyn Fn(&Row) -> f64| median(&rows.iter().map(f).collect::<Vec<_>>());
    let (raw, single) = (col(&|r| r.raw_psnr), col(&|r| r.single_psnr));
    let (single_mae, avg_mae) = (col(&|r| r.single_mae), col(&|r| r.avg_mae));
    let curve: Vec<f64> = (0..ks.len()).map(|i| col(&|r| r.k_psnr[i])).collect();
    let mut running = f64::NEG_INFINITY;
    let mut monotone = true;
    for &v in &curve {
        monotone &= v >= running - 0.2;
        running = running.max(v);
    }
    let sum = |f: &dyn Fn(&Row) -> (f64, usize)| rows.iter().map(f).fold((0.0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    let (on, off) = (sum(&|r| r.structure), sum(&|r| r.background));
    let (ent_on, ent_off) = (on.0 / on.1 as f64, off.0 / off.1 as f64);

    let ok_a = single >= raw + 3.0;
    let ok_b = avg_mae <= single_mae && monotone;
    let ok_c = ent_on > ent_off;
    let ok_time = train_min <= 60.0;
    let curve_text: Vec<String> = ks.iter().zip(&curve).map(|(k, v)| format!("k={k}: {v:.2}")).collect();
    let detail = format!(
        "{} test pairs; training {train_min:.1} min (limit 60) over {} epochs, loss {first_loss:.4} -> {last_loss:.4} ({:.0}% lower), \
         best epoch {}, ensemble evaluation {:.1} min\n    \
         (a) {} median PSNR raw {raw:.2} dB, single sample {single:.2} dB (gain {:.2} dB, need >= 3)\n    \
         (b) {} median MAE single {single_mae:.3}, 15-average {avg_mae:.3}; median PSNR by k [{}] (0.2 dB band)\n    \
         (c) {} mean entropy on structure {ent_on:.4} vs background {ent_off:.4}",
        rows.len(),
        losses.len(),
        100.0 * (1.0 - last_loss / first_loss),
        out.history.best_epoch,
        eval_start.elapsed().as_secs_f64() / 60.0,
        if ok_a { "pass" } else { "FAIL" },
        single - raw,
        if ok_b { "pass" } else { "FAIL" },
        curve_text.join(", "),
        if ok_c { "pass" } else { "FAIL" },
    );
    ensure(ok_a && ok_b && ok_c && ok_time, detail)
}

fn files_under(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn c10_reproducibility() -> Outcome {
    const TINY: &[&str] = &[
        "--data.phantom.size=32",
        "--data.patch=16",
        "--data.train_pairs=8",
        "--data.val_pairs=2",
        "--data.test_pairs=3",
        "--model.levels=2",
        "--model.base_channels=4",
        "--model.channel_mult=[1, 2]",
        "--model.blocks_per_level=1",
        "--model.attention_levels=[2]",
        "--model.attention_heads=1",
        "--model.embed_dim=8",
        "--schedule.steps=12",
        "--train.epochs=2",
        "--train.batch_size=4",
        "--ensemble.samples=3",
    ];
    let run = |root: &Path| -> Result<(), String> {
        let root_s = root.to_string_lossy().into_owned();
        let call = |cmd: &[&str]| {
            let out = std::process::Command::new(env!("CARGO_BIN_EXE_condiff"))
                .args(cmd)
                .args(["--out", root_s.as_str()])
                .args(TINY)
                .output()
                .map_err(|e| e.to_string())?;
            if out.status.success() {
                Ok(())
            } else {
                Err(format!("`{}` exited {:?}: {}", cmd.join(" "), out.status.code(), String::from_utf8_lossy(&out.stderr)))
            }
        };
        let test_low = root.join("dataset/test/low");
        let test_high = root.join("dataset/test/high");
        let average_dir = root.join("averages");
        call(&["synth"])?;
        call(&["train"])?;
        call(&["denoise", &test_low.to_string_lossy()])?;
        std::fs::create_dir_all(&average_dir).unwrap();
        for f in std::fs::read_dir(&test_low).unwrap() {
            let name = f.unwrap().file_name();
            let stem = Path::new(&name).file_stem().unwrap().to_owned();
            std::fs::copy(root.join("denoise").join(stem).join("average.png"), average_dir.join(&name)).unwrap();
        }
        call(&["evaluate", "--gt", &test_high.to_string_lossy(), "--pred", &average_dir.to_string_lossy()])
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run(a.path())?;
    run(b.path())?;
    let (fa, fb) = (files_under(a.path()), files_under(b.path()));
    let differing: Vec<String> = fa
        .keys()
        .chain(fb.keys())
        .filter(|k| fa.get(*k) != fb.get(*k))
        .map(|k| k.display().to_string())
        .collect();
    let has = |suffix: &str| fa.keys().any(|k| k.to_string_lossy().ends_with(suffix));
    let complete = has("checkpoint.bin") && has("sample_1000.png") && has("metrics.csv") && has("summary.csv");
    ensure(
        differing.is_empty() && complete,
        format!(
            "{} files (checkpoint, samples, uncertainty maps, reports) compared across two runs, {} differ {:?}",
            fa.len(),
            differing.len(),
            differing
        ),
    )
}

fn main() {
    let skip_desk = std::env::var("CONDIFF_SKIP_DESK").is_ok_and(|v| v == "1");
    let strict = std::env::var("CONDIFF_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let criteria: Vec<(u32, &str, fn() -> Outcome)> = vec![
        (1, "oracle inversion", c1_oracle_inversion),
        (2, "schedule correctness", c2_schedule),
        (3, "gradient suite", c3_gradients),
        (4, "magnitude preservation", c4_magnitude),
        (5, "metric oracle equivalence", c5_metrics),
        (6, "resolution metric", c6_resolution),
        (7, "uncertainty formulas", c7_uncertainty),
        (8, "Mood's median test", c8_mood),
        (9, "desk experiment", c9_desk),
        (10, "reproducibility", c10_reproducibility),
    ];
    let mut failed = 0;
    for (id, name, check) in criteria {
        if id == 9 && skip_desk {
            println!("SKIP [{id}] {name}: CONDIFF_SKIP_DESK=1");
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("PASS [{id}] {name}: {d} [{secs:.1} s]"),
            Err(d) => {
                failed += 1;
                println!("FAIL [{id}] {name}: {d} [{secs:.1} s]");
            }
        }
    }
    println!("acceptance: {failed} criteria failing");
    if strict && failed > 0 {
        std::process::exit(1);
    }
}
