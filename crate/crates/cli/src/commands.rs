use std::io::Write;
use std::path::Path;
use std::time::Instant;

use hstformer::ablation::{component_cells, grid_cells, ordering_cells, AblationCell};
use hstformer::data::{generate_dataset, load_dataset, save_predictions, Dataset, MotionKind, SynthOptions};
use hstformer::metrics::{frame_delta_mpjpe, histogram_csv};
use hstformer::model::checkpoint::{load_checkpoint, save_checkpoint};
use hstformer::model::complexity::{
    flops_breakdown, param_breakdown, REFERENCE_GFLOPS_APPENDIX, REFERENCE_GFLOPS_MAIN, REFERENCE_PARAMS_APPENDIX_M,
    REFERENCE_PARAMS_MAIN_M,
};
use hstformer::model::{EncoderConfig, EncoderKind, HstFormer};
use hstformer::skeleton::BodyPartPartition;
use hstformer::training::{self, evaluate, history_csv, prepare, LiftingSequence, TrainConfig, TrainReport};
use hstformer::verify::{model_check, primitive_suite};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::CliError;

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}

fn out_dir(cfg: &RunConfig) -> Result<std::path::PathBuf, CliError> {
    let dir = cfg.path("out");
    std::fs::create_dir_all(&dir).map_err(|e| CliError::data(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

/// Worker cap from `HSTF_THREADS`; 0 lets the pool pick.
fn threads() -> Result<usize, CliError> {
    match std::env::var("HSTF_THREADS") {
        Ok(v) => v.trim().parse().map_err(|_| CliError::config(format!("HSTF_THREADS={v}: expected an integer"))),
        Err(_) => Ok(0),
    }
}

fn encoder_config(cfg: &RunConfig) -> Result<EncoderConfig, CliError> {
    let encoders: Vec<EncoderKind> = cfg.list("encoders")?;
    let config = EncoderConfig {
        frames: cfg.get("frames")?,
        dim: cfg.get("dim")?,
        layers: cfg.get("layers")?,
        max_heads: cfg.get("max_heads")?,
        mlp_ratio: cfg.get("mlp_ratio")?,
        group_mlp_ratio: cfg.get("group_mlp_ratio")?,
        ..EncoderConfig::default()
    }
    .with_encoders(&encoders, cfg.flag("fusion")?);
    config.validate()?;
    Ok(config)
}

fn train_config(cfg: &RunConfig) -> Result<TrainConfig, CliError> {
    let t = TrainConfig {
        epochs: cfg.get("epochs")?,
        base_lr: cfg.get("lr")?,
        lr_decay: cfg.get("lr_decay")?,
        lr_decay_every: cfg.get("lr_decay_every")?,
        batch_size: cfg.get("batch_size")?,
        seed: cfg.get("seed")?,
        interval: cfg.get("interval")?,
        flip_augment: cfg.flag("flip_augment")?,
        test_time_flip: cfg.flag("test_time_flip")?,
        threads: threads()?,
    };
    t.validate()?;
    Ok(t)
}

fn split_dataset(cfg: &RunConfig) -> Result<(Vec<LiftingSequence>, Vec<LiftingSequence>), CliError> {
    let dataset = load_dataset(&cfg.path("data"))?;
    let (train, val) = dataset.split_temporal(cfg.get("val_fraction")?)?;
    Ok((prepare(&train)?, prepare(&val)?))
}

pub fn gen_data(cfg: &RunConfig) -> Result<(), CliError> {
    let opts = SynthOptions {
        seed: cfg.get("seed")?,
        frames: cfg.get("frames")?,
        sequences: cfg.get("sequences")?,
        motion: cfg.get::<MotionKind>("motion")?,
        noise_px: cfg.get("noise_px")?,
    };
    let dir = out_dir(cfg)?;
    let manifest = generate_dataset(&opts, &dir)?;
    cfg.write_resolved(&dir)?;
    println!("wrote {} ({} frames, {} sequences)", manifest.display(), opts.frames, opts.sequences);
    Ok(())
}

fn run_training(
    config: EncoderConfig,
    tcfg: &TrainConfig,
    train_set: &[LiftingSequence],
    val_set: &[LiftingSequence],
    dir: &Path,
    verbose: bool,
) -> Result<(HstFormer, TrainReport), CliError> {
    let mut model = HstFormer::new(config, tcfg.seed)?;
    let checkpoint = dir.join("checkpoint.hstw");
    let start = Instant::now();
    let report = training::train(&mut model, train_set, val_set, tcfg, |m, rec| {
        if verbose {
            println!(
                "epoch {:>3}  lr {:.6}  train_loss {:.4}  val_mpjpe {:.2} mm  [{:.0}s]  checkpoint",
                rec.epoch,
                rec.lr,
                rec.train_loss,
                rec.val_mpjpe,
                start.elapsed().as_secs_f64()
            );
        }
        save_checkpoint(&checkpoint, m)
    })?;
    write_file(&dir.join("history.csv"), history_csv(&report.history))?;
    Ok((model, report))
}

pub fn train(cfg: &RunConfig) -> Result<(), CliError> {
    let config = encoder_config(cfg)?;
    let tcfg = train_config(cfg)?;
    let (train_set, val_set) = split_dataset(cfg)?;
    let dir = out_dir(cfg)?;
    cfg.write_resolved(&dir)?;
    println!("model {} with {} parameters", config.tag(), HstFormer::new(config.clone(), tcfg.seed)?.num_parameters());
    let (_, report) = run_training(config, &tcfg, &train_set, &val_set, &dir, true)?;
    println!(
        "initial val_mpjpe {:.2} mm, best {:.2} mm at epoch {}",
        report.initial_val_mpjpe,
        report.best_val_mpjpe,
        report.best_epoch.map_or("-".into(), |e| e.to_string())
    );
    Ok(())
}

pub fn eval(cfg: &RunConfig) -> Result<(), CliError> {
    let model = load_checkpoint(&cfg.path("checkpoint"), None)?;
    let dataset = load_dataset(&cfg.path("data"))?;
    let scored: Dataset = match cfg.raw("split") {
        "val" => dataset.split_temporal(cfg.get("val_fraction")?)?.1,
        "all" => dataset,
        other => return Err(CliError::config(format!("split={other}: expected val or all"))),
    };
    let sequences = prepare(&scored)?;
    let (report, preds) =
        evaluate(&model, &sequences, cfg.get("interval")?, cfg.flag("test_time_flip")?, cfg.get("pck_threshold")?)?;
    let dir = out_dir(cfg)?;
    cfg.write_resolved(&dir)?;
    write_file(&dir.join("metrics.json"), report.to_json()?)?;
    write_file(&dir.join("metrics.csv"), report.to_csv())?;
    save_predictions(&scored, &preds, &dir.join("predictions"))?;
    let a = &report.aggregate;
    println!(
        "MPJPE {:.2} mm  P-MPJPE {:.2} mm  PCK@{} {:.2}%  AUC {:.4}  ({} frames)",
        a.mpjpe, a.p_mpjpe, report.pck_threshold, a.pck, a.auc, a.frames
    );
    Ok(())
}

pub fn stats(cfg: &RunConfig) -> Result<(), CliError> {
    let dataset = load_dataset(&cfg.path("data"))?;
    let intervals: Vec<usize> = cfg.list("intervals")?;
    let bins: usize = cfg.get("bins")?;
    let dir = out_dir(cfg)?;
    cfg.write_resolved(&dir)?;
    let poses: Vec<_> = dataset.sequences.iter().map(|s| &s.pose2d).collect();
    let mut summary = String::from("interval,mean_px,count\n");
    for n in intervals {
        let d = frame_delta_mpjpe(&poses, n)?;
        write_file(&dir.join(format!("frame_delta_N{n}.csv")), histogram_csv(&d.histogram(bins)))?;
        summary.push_str(&format!("{n},{},{}\n", d.mean, d.deltas.len()));
        println!("N={n}: mean 2D frame delta {:.3} px over {} pairs", d.mean, d.deltas.len());
    }
    write_file(&dir.join("frame_delta_summary.csv"), summary)
}

pub fn gradcheck(cfg: &RunConfig) -> Result<(), CliError> {
    let seed: u64 = cfg.get("seed")?;
    let start = Instant::now();
    let mut outcomes = primitive_suite(cfg.get("cases")?, seed)?;
    let model_cfg = EncoderConfig::small(cfg.get("frames")?, cfg.get("dim")?, cfg.get("layers")?);
    model_cfg.validate()?;
    outcomes.push(model_check(&model_cfg, seed, cfg.get("coords")?)?);
    let mut failed = 0;
    for o in &outcomes {
        let status = if o.passed() { "PASS" } else { "FAIL" };
        failed += usize::from(!o.passed());
        println!(
            "{status}  {:<28} cases {:>5}  max_rel_err {:.3e}  tol {:.0e}",
            o.name, o.cases, o.max_error, o.tolerance
        );
    }
    println!("{} checks, {failed} failed, {:.1}s", outcomes.len(), start.elapsed().as_secs_f64());
    if failed > 0 {
        return Err(CliError::verify(format!("{failed} gradient checks exceeded tolerance")));
    }
    Ok(())
}

pub fn count_params(cfg: &RunConfig) -> Result<(), CliError> {
    let config = encoder_config(cfg)?;
    let partition = BodyPartPartition::default();
    let params = param_breakdown(&config, &partition);
    let macs = flops_breakdown(&config, &partition);
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "config {}", config.tag());
    let _ = writeln!(out, "{:<10} {:>14} {:>16}", "component", "params", "MACs");
    let rows = [
        ("embed", params.embed, macs.embed),
        ("STE", params.ste, macs.ste),
        ("JTTE", params.jtte, macs.jtte),
        ("BTTE", params.btte, macs.btte),
        ("PTTE", params.ptte, macs.ptte),
        ("fusion", params.fusion, macs.fusion),
        ("head", params.head, macs.head),
        ("total", params.total, macs.total),
    ];
    for (name, p, m) in rows {
        let _ = writeln!(out, "{name:<10} {p:>14} {m:>16}");
    }
    let _ = writeln!(
        out,
        "total {:.2}M params, {:.2}G MACs\nreference at T=81, D=32, N_en=6: {REFERENCE_PARAMS_MAIN_M}M params / {REFERENCE_GFLOPS_MAIN}G FLOPs, alternate count {REFERENCE_PARAMS_APPENDIX_M}M / {REFERENCE_GFLOPS_APPENDIX}G",
        params.total as f64 / 1e6,
        macs.total as f64 / 1e9
    );
    Ok(())
}

fn cells(cfg: &RunConfig) -> Result<Vec<AblationCell>, CliError> {
    let grid = || -> Result<Vec<AblationCell>, CliError> {
        Ok(grid_cells(&cfg.list("grid_frames")?, &cfg.list("grid_intervals")?))
    };
    Ok(match cfg.raw("matrix") {
        "components" => component_cells(),
        "ordering" => ordering_cells(),
        "grid" => grid()?,
        "all" => component_cells().into_iter().chain(ordering_cells()).chain(grid()?).collect(),
        other => return Err(CliError::config(format!("matrix={other}: expected components, ordering, grid or all"))),
    })
}

fn hash_config(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn ablate(cfg: &RunConfig) -> Result<(), CliError> {
    let base = encoder_config(cfg)?;
    let base_train = train_config(cfg)?;
    let cells = cells(cfg)?;
    let dataset = load_dataset(&cfg.path("data"))?;
    let (train_raw, val_raw) = dataset.split_temporal(cfg.get("val_fraction")?)?;
    let (train_set, val_set) = (prepare(&train_raw)?, prepare(&val_raw)?);
    let dir = out_dir(cfg)?;
    cfg.write_resolved(&dir)?;

    let mut csv = String::from("matrix,cell,config_hash,encoders,fusion,frames,interval,params,val_mpjpe,status\n");
    for cell in &cells {
        let mut cell_cfg = cfg.clone();
        let encoders: Vec<&str> = cell.encoders.iter().map(|k| k.name()).collect();
        cell_cfg.set("encoders", &encoders.join(","))?;
        cell_cfg.set("fusion", &cell.fusion.to_string())?;
        if let Some(t) = cell.frames {
            cell_cfg.set("frames", &t.to_string())?;
        }
        if let Some(n) = cell.interval {
            cell_cfg.set("interval", &n.to_string())?;
        }
        cell_cfg.set("matrix", cell.matrix)?;
        let cell_dir = dir.join(format!("{}_{}", cell.matrix, cell.label.replace("=>", "-")));
        cell_cfg.set("out", &cell_dir.display().to_string())?;
        let hash = hash_config(&cell_cfg.render());
        let config = EncoderConfig { frames: cell.frames.unwrap_or(base.frames), ..base.clone() }
            .with_encoders(&cell.encoders, cell.fusion);
        let tcfg = TrainConfig { interval: cell.interval.unwrap_or(base_train.interval), ..base_train.clone() };

        let result = (|| -> Result<(usize, f64), CliError> {
            std::fs::create_dir_all(&cell_dir).map_err(CliError::data_io)?;
            cell_cfg.write_resolved(&cell_dir)?;
            let (model, report) = run_training(config.clone(), &tcfg, &train_set, &val_set, &cell_dir, false)?;
            Ok((model.num_parameters(), report.best_val_mpjpe))
        })();
        let (params, mpjpe, status) = match &result {
            Ok((p, v)) => (p.to_string(), format!("{v:.4}"), "ok".to_string()),
            Err(e) => (String::new(), String::new(), format!("error: {}", e.message)),
        };
        println!("{:<10} {:<32} params {:>10} val_mpjpe {:>10} {}", cell.matrix, cell.label, params, mpjpe, status);
        csv.push_str(&format!(
            "{},{},{hash},{},{},{},{},{params},{mpjpe},{}\n",
            cell.matrix,
            csv_field(&cell.label),
            encoders.join("+"),
            cell.fusion,
            config.frames,
            tcfg.interval,
            csv_field(&status)
        ));
        write_file(&dir.join("ablation.csv"), &csv)?;
    }
    Ok(())
}
