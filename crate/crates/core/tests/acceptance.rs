//! Acceptance criteria, one line each. Runs as a plain binary so the
//! verdicts are always printed; exits non-zero if any criterion fails.
//! `ACCEPTANCE_ONLY=3,7` restricts the run to the listed criteria.

mod common;

use std::time::{Duration, Instant};

use common::{add_noise, brute_errors, optimizer_p_mpjpe, random_pose, random_rotation, transform};
use hstformer::data::{read_pose, synthetic_dataset, write_pose, MotionKind, SynthOptions};
use hstformer::metrics::{auc_from_errors, default_auc_thresholds, frame_delta_mpjpe, mpjpe, p_mpjpe, pck_from_errors};
use hstformer::model::checkpoint::{read_checkpoint, write_checkpoint};
use hstformer::model::complexity::{param_count, REFERENCE_PARAMS_APPENDIX_M, REFERENCE_PARAMS_MAIN_M};
use hstformer::model::forward::{btte_forward, jtte_forward, ptte_forward, ste_forward};
use hstformer::model::{EncoderConfig, EncoderKind, HstFormer, Lifter, ModelParams};
use hstformer::skeleton::{BodyPartPartition, NUM_JOINTS};
use hstformer::training::{lr_at_epoch, prepare, sample_window, train, LiftingSequence, TrainConfig};
use hstformer::verify::{model_check, model_check_config, primitive_suite, MODEL_TOLERANCE, PRIMITIVE_TOLERANCE};
use hstformer::{Tape, Tensor, Var};
use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

type Criterion = (&'static str, fn() -> Verdict);

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn randn(shape: &[usize], seed: u64) -> Tensor {
    Tensor::randn(shape, 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn permute_axis(x: &Tensor, axis: usize, perm: &[usize]) -> Tensor {
    let shape = x.shape().to_vec();
    let mut out = x.clone();
    let mut idx = vec![0; shape.len()];
    for flat in 0..x.numel() {
        let mut r = flat;
        for a in (0..shape.len()).rev() {
            idx[a] = r % shape[a];
            r /= shape[a];
        }
        let src = idx.clone();
        idx[axis] = perm[src[axis]];
        out.set(&idx, x.at(&src));
    }
    out
}

fn shuffled(n: usize, seed: u64) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    p
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn gradient_suite() -> Verdict {
    let start = Instant::now();
    let primitives = primitive_suite(100, 0).unwrap();
    let model = model_check(&model_check_config(), 0, 8).unwrap();
    let elapsed = start.elapsed();
    let worst = primitives.iter().map(|o| o.max_error).fold(0.0, f64::max);
    let enough = primitives.iter().all(|o| o.cases >= 100);
    let pass = primitives.iter().all(|o| o.passed())
        && worst < PRIMITIVE_TOLERANCE
        && enough
        && model.max_error < MODEL_TOLERANCE
        && elapsed < Duration::from_secs(60);
    verdict(
        pass,
        format!(
            "{} primitives x100 cases, worst rel err {worst:.2e} (< {PRIMITIVE_TOLERANCE:.0e}); model T=4 D=8 N_en=1 rel err {:.2e} (< {MODEL_TOLERANCE:.0e}); {:.1}s (< 60s)",
            primitives.len(),
            model.max_error,
            elapsed.as_secs_f64()
        ),
    )
}

fn shapes_and_slicing() -> Verdict {
    let mut shapes_ok = true;
    for t in [1, 9, 27, 81] {
        let model = HstFormer::new(EncoderConfig::small(t, 32, 1), t as u64).unwrap();
        let y = model.predict(&randn(&[t, NUM_JOINTS, 2], 1)).unwrap();
        shapes_ok &= y.shape() == [t, NUM_JOINTS, 3] && y.is_finite();
    }
    let params = ModelParams::zeros(&EncoderConfig::small(9, 32, 1), &BodyPartPartition::default()).unwrap();
    let btte: Vec<usize> = params.btte.iter().map(|e| e.pos.shape()[1]).collect();
    let ptte = params.ptte.as_ref().unwrap().pos.shape()[1];
    let pass = shapes_ok && btte == [64, 96, 96, 96, 96, 96] && ptte == 544;
    verdict(pass, format!("T in {{1,9,27,81}} -> Tx17x3: {shapes_ok}; BTTE widths {btte:?}; PTTE width {ptte}"))
}

type EncoderFn = fn(&mut Tape<'_>, Var, &ModelParams<Var>, &EncoderConfig) -> hstformer::Result<Var>;

fn run_encoder(model: &HstFormer, f: EncoderFn, z: &Tensor) -> Tensor {
    let mut tape = Tape::new();
    let bound = model.params.bind(&mut tape);
    let zv = tape.constant(z.clone());
    let out = f(&mut tape, zv, &bound, &model.config).unwrap();
    tape.value(out).clone()
}

fn equivariance() -> Verdict {
    let mut model = HstFormer::new(EncoderConfig::small(7, 8, 2), 17).unwrap();
    model.params.zero_positional_encodings();
    let z = randn(&[7, NUM_JOINTS, 8], 2);
    let joint_perm = shuffled(NUM_JOINTS, 3);
    let frame_perm = shuffled(7, 4);

    let ste = permute_axis(&run_encoder(&model, ste_forward, &z), 1, &joint_perm).max_abs_diff(&run_encoder(
        &model,
        ste_forward,
        &permute_axis(&z, 1, &joint_perm),
    ));
    let temporal = |f: EncoderFn| {
        permute_axis(&run_encoder(&model, f, &z), 0, &frame_perm).max_abs_diff(&run_encoder(
            &model,
            f,
            &permute_axis(&z, 0, &frame_perm),
        ))
    };
    let (jtte, ptte) = (temporal(jtte_forward), temporal(ptte_forward));
    let x = randn(&[7, NUM_JOINTS, 2], 5);
    let full = permute_axis(&model.predict(&x).unwrap(), 0, &frame_perm)
        .max_abs_diff(&model.predict(&permute_axis(&x, 0, &frame_perm)).unwrap());

    let partition = BodyPartPartition::default();
    let btte = |z: &Tensor| {
        let mut tape = Tape::new();
        let bound = model.params.bind(&mut tape);
        let zv = tape.constant(z.clone());
        let out = btte_forward(&mut tape, zv, &partition, &bound, &model.config).unwrap();
        tape.value(out).clone()
    };
    let base = btte(&z);
    let mut independent = true;
    for members in partition.group_indices() {
        let mut poked = z.clone();
        for v in poked.data_mut().chunks_exact_mut(8).enumerate().filter(|(i, _)| members.contains(&(i % NUM_JOINTS))) {
            v.1.iter_mut().for_each(|a| *a += 1.5);
        }
        let out = btte(&poked);
        for (i, (a, b)) in out.data().chunks_exact(8).zip(base.data().chunks_exact(8)).enumerate() {
            let untouched = a.iter().zip(b).all(|(p, q)| p.to_bits() == q.to_bits());
            independent &= untouched != members.contains(&(i % NUM_JOINTS));
        }
    }
    let worst = ste.max(jtte).max(ptte).max(full);
    verdict(
        worst < 1e-9 && independent,
        format!(
            "STE {ste:.1e}, JTTE {jtte:.1e}, PTTE {ptte:.1e}, full model {full:.1e} (< 1e-9); BTTE cross-part independence bitwise: {independent}"
        ),
    )
}

fn fusion_identity() -> Verdict {
    let mut model = HstFormer::new(EncoderConfig::small(5, 16, 1), 8).unwrap();
    let d = model.config.dim;
    let mut selector = Tensor::zeros(&[4 * d, d]);
    for i in 0..d {
        selector.set(&[i, i], 1.0);
    }
    model.params.fusion = Some(selector);
    let mut tape = Tape::new();
    let x = tape.constant(randn(&[5, NUM_JOINTS, 2], 9));
    let (trace, _) = model.trace(&mut tape, x).unwrap();
    let ste = trace.encoder_outputs.iter().find(|(k, _)| *k == EncoderKind::Ste).unwrap().1;
    let exact = tape.value(trace.features) == tape.value(ste);
    verdict(exact, format!("selector [I;0;0;0] output equals STE output exactly: {exact}"))
}

fn complexity() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let partition = BodyPartPartition::default();
    let trials = 24;
    let mut agree = 0;
    for _ in 0..trials {
        let mut encoders = EncoderKind::CANONICAL.to_vec();
        encoders.shuffle(&mut rng);
        encoders.truncate(rng.random_range(1..=4));
        let config = EncoderConfig {
            frames: rng.random_range(1..=30),
            dim: rng.random_range(1..=16),
            layers: rng.random_range(1..=3),
            max_heads: rng.random_range(1..=8),
            mlp_ratio: rng.random_range(1..=4),
            group_mlp_ratio: rng.random_range(1..=4),
            ..EncoderConfig::default()
        }
        .with_encoders(&encoders, rng.random_bool(0.5));
        let enumerated = ModelParams::zeros(&config, &partition).unwrap().num_scalars() as u64;
        agree += usize::from(param_count(&config, &partition) == enumerated);
    }
    let total = param_count(&EncoderConfig::default(), &partition) as f64;
    let rel = total / (REFERENCE_PARAMS_MAIN_M * 1e6) - 1.0;
    let rel_alt = total / (REFERENCE_PARAMS_APPENDIX_M * 1e6) - 1.0;
    verdict(
        agree == trials && rel.abs() <= 0.25,
        format!(
            "analytic = enumerated on {agree}/{trials} random configs; default total {total} ({:+.1}% vs {REFERENCE_PARAMS_MAIN_M}M, {:+.1}% vs {REFERENCE_PARAMS_APPENDIX_M}M)",
            100.0 * rel,
            100.0 * rel_alt
        ),
    )
}

fn schedule_and_sampling() -> Verdict {
    let lrs = [lr_at_epoch(0), lr_at_epoch(20), lr_at_epoch(45)];
    let lr_ok = lrs.iter().zip([0.001, 0.0008, 0.00064]).all(|(a, b)| (a - b).abs() < 1e-15);
    let mut windows_ok = true;
    for (len, start, t, n) in
        [(100, 0, 9, 1), (100, 10, 9, 7), (30, 20, 5, 3), (10, 0, 4, 4), (5, 4, 3, 2), (1, 0, 3, 5)]
    {
        let w = sample_window(len, start, t, n).unwrap();
        let want: Vec<usize> = (0..t).map(|i| (start + i * n).min(len - 1)).collect();
        windows_ok &= w == want;
        for pair in w.windows(2) {
            if pair[1] < len - 1 {
                windows_ok &= pair[1] == pair[0] + n;
            }
        }
    }
    windows_ok &= sample_window(10, 0, 4, 4).unwrap() == [0, 4, 8, 9];
    verdict(
        lr_ok && windows_ok,
        format!("lr at epochs 0/20/45 = {lrs:?}; f_(i+1) = f_i + N with clamping: {windows_ok}"),
    )
}

fn metric_oracles() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut copy_worst: f64 = 0.0;
    for _ in 0..100 {
        let gt = random_pose(&mut rng, 2, 250.0);
        let r = random_rotation(&mut rng, std::f64::consts::PI);
        let s = rng.random_range(0.2..5.0);
        let t = Vector3::new(rng.random_range(-2e3..2e3), rng.random_range(-2e3..2e3), rng.random_range(-2e3..2e3));
        copy_worst = copy_worst.max(p_mpjpe(&transform(&gt, s, &r, t), &gt).unwrap());
    }

    let mut ordered = 0;
    for _ in 0..1000 {
        let spread = rng.random_range(100.0..500.0);
        let gt = random_pose(&mut rng, 1, spread);
        let r = random_rotation(&mut rng, std::f64::consts::PI);
        let s = rng.random_range(0.7..1.3);
        let t = Vector3::new(
            rng.random_range(-500.0..500.0),
            rng.random_range(-500.0..500.0),
            rng.random_range(-500.0..500.0),
        );
        let noise = rng.random_range(0.0..1.0) * spread;
        let pred = add_noise(&transform(&gt, s, &r, t), noise, &mut rng);
        ordered += usize::from(p_mpjpe(&pred, &gt).unwrap() <= mpjpe(&pred, &gt).unwrap());
    }

    let mut recount_ok = true;
    let thresholds = default_auc_thresholds();
    for _ in 0..200 {
        let gt = random_pose(&mut rng, 3, 200.0);
        let sd = rng.random_range(5.0..120.0);
        let pred = add_noise(&gt, sd, &mut rng);
        let errors = brute_errors(&pred, &gt);
        let th = rng.random_range(10.0..200.0);
        let hits = |th: f64| errors.iter().filter(|&&e| e < th).count() as f64;
        let count = |th: f64| hits(th) / errors.len() as f64;
        recount_ok &= pck_from_errors(&errors, th).unwrap() == 100.0 * hits(th) / errors.len() as f64;
        let want = thresholds.iter().map(|&t| count(t)).sum::<f64>() / thresholds.len() as f64;
        recount_ok &= (auc_from_errors(&errors, &thresholds).unwrap() - want).abs() < 1e-12;
    }

    let mut optimizer_gap: f64 = 0.0;
    for _ in 0..10 {
        let gt = random_pose(&mut rng, 1, 300.0);
        let r = random_rotation(&mut rng, std::f64::consts::PI);
        let s = rng.random_range(0.5..2.0);
        let t =
            Vector3::new(rng.random_range(-500.0..500.0), rng.random_range(-500.0..500.0), rng.random_range(3e3..5e3));
        let pred = add_noise(&transform(&gt, s, &r, t), 40.0, &mut rng);
        optimizer_gap =
            optimizer_gap.max((p_mpjpe(&pred, &gt).unwrap() - optimizer_p_mpjpe(&pred, &gt, &mut rng)).abs());
    }

    verdict(
        copy_worst < 1e-6 && ordered == 1000 && recount_ok && optimizer_gap < 1e-3,
        format!(
            "similarity copies {copy_worst:.1e} mm (< 1e-6); p_mpjpe <= mpjpe on {ordered}/1000; PCK/AUC recounts exact: {recount_ok}; optimizer gap {optimizer_gap:.1e} mm (< 1e-3)"
        ),
    )
}

fn walk_cycle_split() -> (Vec<LiftingSequence>, Vec<LiftingSequence>) {
    let opts = SynthOptions { frames: 2000, motion: MotionKind::WalkCycle, ..SynthOptions::default() };
    let (train_set, val_set) = synthetic_dataset(&opts).unwrap().split_temporal(0.2).unwrap();
    (prepare(&train_set).unwrap(), prepare(&val_set).unwrap())
}

fn end_to_end() -> Verdict {
    let start = Instant::now();
    let (train_set, val_set) = walk_cycle_split();
    let full = EncoderConfig::small(9, 16, 2);
    let ste = full.clone().with_encoders(&[EncoderKind::Ste], false);
    let (mut init, mut full_final, mut ste_final) = (Vec::new(), Vec::new(), Vec::new());
    for seed in 0..3 {
        let cfg = TrainConfig { epochs: 20, seed, ..TrainConfig::default() };
        for (config, out) in [(&full, &mut full_final), (&ste, &mut ste_final)] {
            let mut model = HstFormer::new(config.clone(), seed).unwrap();
            let report = train(&mut model, &train_set, &val_set, &cfg, |_, _| Ok(())).unwrap();
            out.push(report.history.last().unwrap().val_mpjpe);
            if config == &full {
                init.push(report.initial_val_mpjpe);
            }
        }
    }
    let (init_m, full_m, ste_m) = (median(init), median(full_final.clone()), median(ste_final.clone()));
    let improvement = 1.0 - full_m / init_m;
    let elapsed = start.elapsed();
    verdict(
        improvement >= 0.5 && full_m <= ste_m && elapsed < Duration::from_secs(30 * 60),
        format!(
            "median final held-out MPJPE: full {full_m:.1} mm (init {init_m:.1}, {:.0}% better), STE-only {ste_m:.1} mm; per seed full {full_final:.1?}, STE {ste_final:.1?}; {:.0}s",
            100.0 * improvement,
            elapsed.as_secs_f64()
        ),
    )
}

fn interval_diversity() -> Verdict {
    let data = synthetic_dataset(&SynthOptions { frames: 2000, ..SynthOptions::default() }).unwrap();
    let poses: Vec<&Tensor> = data.sequences.iter().map(|s| &s.pose2d).collect();
    let means: Vec<f64> = [1, 3, 5, 7].iter().map(|&n| frame_delta_mpjpe(&poses, n).unwrap().mean).collect();
    let increasing = means.windows(2).all(|w| w[0] < w[1]);
    verdict(increasing, format!("mean 2D frame delta at N=1,3,5,7: {:.2?} px", means))
}

fn determinism_and_round_trips() -> Verdict {
    let (train_set, val_set) = walk_cycle_split();
    let config = EncoderConfig::small(3, 8, 1);
    let run = || {
        let mut model = HstFormer::new(config.clone(), 5).unwrap();
        let cfg = TrainConfig { epochs: 2, seed: 5, ..TrainConfig::default() };
        let report = train(&mut model, &train_set[..1], &val_set[..1], &cfg, |_, _| Ok(())).unwrap();
        let bits: Vec<[u64; 3]> =
            report.history.iter().map(|r| [r.lr.to_bits(), r.train_loss.to_bits(), r.val_mpjpe.to_bits()]).collect();
        (bits, model)
    };
    let (a, model) = run();
    let (b, _) = run();
    let history_ok = a == b;

    let mut ckpt = Vec::new();
    write_checkpoint(&mut ckpt, &model).unwrap();
    let back = read_checkpoint(ckpt.as_slice(), Some(&config)).unwrap();
    let mut again = Vec::new();
    write_checkpoint(&mut again, &back).unwrap();
    let ckpt_ok = back == model && again == ckpt;

    let mut pose = Vec::new();
    write_pose(&mut pose, &train_set[0].input).unwrap();
    let (_, decoded) = read_pose(pose.as_slice()).unwrap();
    let mut pose_again = Vec::new();
    write_pose(&mut pose_again, &decoded).unwrap();
    let pose_ok = pose == pose_again;

    verdict(
        history_ok && ckpt_ok && pose_ok,
        format!("loss history bitwise: {history_ok}; checkpoint bitwise: {ckpt_ok}; pose file bitwise: {pose_ok}"),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("gradient suite", gradient_suite),
        ("shapes and slicing", shapes_and_slicing),
        ("equivariance", equivariance),
        ("fusion identity", fusion_identity),
        ("complexity accounting", complexity),
        ("schedule and sampling", schedule_and_sampling),
        ("metric oracles", metric_oracles),
        ("end-to-end learning", end_to_end),
        ("interval diversity", interval_diversity),
        ("determinism and round-trips", determinism_and_round_trips),
    ];
    let only: Option<Vec<usize>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let n = i + 1;
        if only.as_ref().is_some_and(|o| !o.contains(&n)) {
            continue;
        }
        let v = check();
        println!("criterion {n:>2} {}: {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        if !v.pass {
            failed.push(n);
        }
    }
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
