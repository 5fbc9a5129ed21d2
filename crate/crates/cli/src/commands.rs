use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use gaitclone::config::ExperimentConfig;
use gaitclone::control::{run_closed_loop, Controller, PdController, RunLog};
use gaitclone::dataset::{self, Dataset, Split};
use gaitclone::engine::{
    cost_report, engine_reset, engine_step, quantize_model, CostReport, QuantModel, RnnController,
};
use gaitclone::plant::SlopePreset;
use gaitclone::rnn::{deltagru_forward, evaluate, train_with, DeltaState, Mode, NetworkParams};
use serde::Serialize;

use crate::stamp::{ensure_parent, require, write_sidecar, write_toml, Stamp};

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ControllerArg {
    Pd,
    Rnn,
    Both,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SlopeArg {
    Flat,
    Uphill,
    Downhill,
    All,
}

#[derive(Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = ControllerArg::Pd)]
    controller: ControllerArg,
    /// Fixed-point model for the rnn controller; defaults to the quantize output.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Defaults to the config's slope.
    #[arg(long, value_enum)]
    slope: Option<SlopeArg>,
    /// Seconds of walking.
    #[arg(long, default_value_t = 60.0)]
    duration: f64,
    /// Output directory; defaults to `<workdir>/simulate`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
pub struct ThresholdArgs {
    /// Raw Q8.8 input threshold; overrides the config.
    #[arg(long)]
    theta_x: Option<i16>,
    /// Raw Q8.8 hidden threshold; overrides the config.
    #[arg(long)]
    theta_h: Option<i16>,
}

#[derive(Args)]
pub struct BenchArgs {
    #[command(flatten)]
    thresholds: ThresholdArgs,
    /// Model to benchmark; defaults to the quantize output.
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Serialize)]
struct RunMetrics {
    controller: String,
    slope: String,
    duration: f64,
    ticks: usize,
    rmse_knee: f64,
    rmse_ankle: f64,
}

#[derive(Serialize)]
struct RmseRow {
    slope: String,
    controller: String,
    rmse_knee: f64,
    rmse_ankle: f64,
}

pub fn simulate(cfg: &ExperimentConfig, args: &SimulateArgs) -> Result<()> {
    let stamp = Stamp::new("simulate", cfg);
    let slopes: Vec<SlopePreset> = match args.slope {
        None => vec![cfg.slope],
        Some(SlopeArg::Flat) => vec![SlopePreset::Flat],
        Some(SlopeArg::Uphill) => vec![SlopePreset::Uphill],
        Some(SlopeArg::Downhill) => vec![SlopePreset::Downhill],
        Some(SlopeArg::All) => SlopePreset::ALL.to_vec(),
    };
    let mut controllers: Vec<Box<dyn Controller>> = Vec::new();
    if args.controller != ControllerArg::Rnn {
        controllers.push(Box::new(PdController::new(cfg.sim.gait.clone())));
    }
    if args.controller != ControllerArg::Pd {
        let path = args.model.clone().unwrap_or_else(|| cfg.path(&cfg.paths.quant_model));
        require(&path, "quantize")?;
        controllers.push(Box::new(RnnController::new(QuantModel::load(&path)?)?));
    }
    let out = args.out.clone().unwrap_or_else(|| cfg.paths.workdir.join("simulate"));
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;

    let mut table = Vec::new();
    for slope in &slopes {
        for c in controllers.iter_mut() {
            let id = c.id();
            let log = run_closed_loop(c.as_mut(), &cfg.sim, *slope, args.duration, cfg.seed)
                .with_context(|| format!("{id} controller on {slope}"))?;
            let base = format!("{id}_{slope}");
            log.save(&out.join(format!("{base}.csv")))?;
            let m = RunMetrics {
                controller: id.clone(),
                slope: slope.to_string(),
                duration: args.duration,
                ticks: log.len(),
                rmse_knee: log.rmse_knee(),
                rmse_ankle: log.rmse_ankle(),
            };
            write_toml(&out.join(format!("{base}.metrics.toml")), &stamp, &m)?;
            table.push(RmseRow {
                slope: slope.to_string(),
                controller: id,
                rmse_knee: m.rmse_knee,
                rmse_ankle: m.rmse_ankle,
            });
        }
    }
    let table_path = out.join("rmse_table.csv");
    let mut w = csv::Writer::from_path(&table_path)?;
    for r in &table {
        w.serialize(r)?;
    }
    w.flush()?;
    write_sidecar(&table_path, &stamp)?;

    println!("{:<10} {:<6} {:>10} {:>10}", "slope", "ctrl", "knee", "ankle");
    for r in &table {
        println!(
            "{:<10} {:<6} {:>10.5} {:>10.5}",
            r.slope, r.controller, r.rmse_knee, r.rmse_ankle
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}

pub fn collect(cfg: &ExperimentConfig) -> Result<()> {
    let manifest = cfg.path(&cfg.paths.dataset);
    let dir = manifest.parent().map(Path::to_path_buf).unwrap_or_default();
    let ds = dataset::collect(&cfg.sim, &cfg.collect, cfg.seed)?;
    let written = ds.save(&dir)?;
    write_sidecar(&written, &Stamp::new("collect", cfg))?;
    for f in &ds.files {
        println!("{:<10} {:?} {} ticks", f.name, f.split, f.log.len());
    }
    println!(
        "{} train / {} val windows, wrote {}",
        ds.windows(Split::Train)?.len(),
        ds.windows(Split::Val)?.len(),
        written.display()
    );
    Ok(())
}

fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    let manifest = cfg.path(&cfg.paths.dataset);
    require(&manifest, "collect")?;
    Ok(Dataset::load(&manifest)?)
}

pub fn train(cfg: &ExperimentConfig) -> Result<()> {
    let ds = load_dataset(cfg)?;
    let stamp = Stamp::new("train", cfg);
    let t0 = Instant::now();
    let out = train_with(
        &ds,
        cfg.arch(),
        &cfg.train_schedule(),
        cfg.engine.thresholds(),
        &mut |r| {
            println!(
                "epoch {:3} {:<8} train {:.5} val {:.5} ({:.0} s)",
                r.epoch,
                r.stage.as_str(),
                r.train_loss,
                r.val_loss,
                t0.elapsed().as_secs_f64()
            );
        },
    )?;
    let paths = [
        cfg.path(&cfg.paths.pretrained),
        cfg.path(&cfg.paths.model),
        cfg.path(&cfg.paths.loss_curve),
    ];
    for p in &paths {
        ensure_parent(p)?;
    }
    out.pretrained.save(&paths[0])?;
    out.params.save(&paths[1])?;
    out.save_curve(&paths[2])?;
    for p in &paths {
        write_sidecar(p, &stamp)?;
    }
    println!(
        "best pretrain epoch {} val {:.5}; best retrain epoch {} val {:.5}",
        out.best_pretrain.epoch, out.best_pretrain.val_loss, out.best_retrain.epoch, out.best_retrain.val_loss
    );
    println!("wrote {}", paths.map(|p| p.display().to_string()).join(", "));
    Ok(())
}

fn thresholds_raw(cfg: &ExperimentConfig, a: &ThresholdArgs) -> (i16, i16) {
    (
        a.theta_x.unwrap_or(cfg.engine.theta_x_raw),
        a.theta_h.unwrap_or(cfg.engine.theta_h_raw),
    )
}

pub fn quantize(cfg: &ExperimentConfig, args: &ThresholdArgs) -> Result<()> {
    let src = cfg.path(&cfg.paths.model);
    require(&src, "train")?;
    let params = NetworkParams::load(&src)?;
    let (tx, th) = thresholds_raw(cfg, args);
    let q = quantize_model(&params, cfg.engine.thresholds())?.with_raw_thresholds(tx, th)?;
    let dst = cfg.path(&cfg.paths.quant_model);
    ensure_parent(&dst)?;
    q.save(&dst)?;
    write_sidecar(&dst, &Stamp::new("quantize", cfg))?;
    for (l, layer) in q.layers.iter().enumerate() {
        let fi: Vec<u8> = layer.w_i.iter().map(|t| t.frac_bits).collect();
        let fh: Vec<u8> = layer.w_h.iter().map(|t| t.frac_bits).collect();
        println!("layer {l}: input frac bits {fi:?}, hidden frac bits {fh:?}");
    }
    println!("fc frac bits {}; thresholds raw ({tx}, {th})", q.fc_w.frac_bits);
    println!("accumulator bounds {:?}", q.accumulator_bounds());
    println!("wrote {}", dst.display());
    Ok(())
}

fn test_log(ds: &Dataset) -> Result<&RunLog> {
    ds.split(Split::Test)
        .next()
        .map(|f| &f.log)
        .context("dataset has no test walk")
}

fn load_quant(cfg: &ExperimentConfig, explicit: Option<&PathBuf>) -> Result<QuantModel> {
    let path = explicit.cloned().unwrap_or_else(|| cfg.path(&cfg.paths.quant_model));
    require(&path, "quantize")?;
    Ok(QuantModel::load(&path)?)
}

#[derive(Serialize)]
struct OfflineMetrics {
    theta_x_raw: i16,
    theta_h_raw: i16,
    test_ticks: usize,
    /// Mean absolute torque error against the PD labels, streaming over the walk.
    test_l1_engine: f64,
    test_l1_float: f64,
    /// The training metric: mean L1 over fixed-length windows.
    test_l1_float_windows: f64,
    max_abs_engine_vs_float: f64,
}

const TRACE_SECONDS: f64 = 20.0;

pub fn eval_offline(cfg: &ExperimentConfig) -> Result<()> {
    let ds = load_dataset(cfg)?;
    let float_path = cfg.path(&cfg.paths.model);
    require(&float_path, "train")?;
    let params = NetworkParams::load(&float_path)?;
    let q = load_quant(cfg, None)?;
    let log = test_log(&ds)?;
    let stamp = Stamp::new("eval-offline", cfg);

    let xs: Vec<f64> = log.records.iter().flat_map(|r| r.input().to_array()).collect();
    let th = q.thresholds();
    let (float, _) = deltagru_forward(&params, th, &xs, &DeltaState::new(&params))?;
    let mut st = engine_reset(&q);
    let mut out = [0.0; 2];
    let mut engine = Vec::with_capacity(float.y.len());
    for x in xs.chunks(5) {
        engine_step(&q, &mut st, x, &mut out)?;
        engine.extend_from_slice(&out);
    }
    let labels: Vec<f64> = log.records.iter().flat_map(|r| [r.tau_pk, r.tau_pa]).collect();
    let l1 = |y: &[f64]| y.iter().zip(&labels).map(|(a, b)| (a - b).abs()).sum::<f64>() / labels.len() as f64;
    let metrics = OfflineMetrics {
        theta_x_raw: q.theta_x_raw,
        theta_h_raw: q.theta_h_raw,
        test_ticks: log.len(),
        test_l1_engine: l1(&engine),
        test_l1_float: l1(&float.y),
        test_l1_float_windows: evaluate(&params, Mode::Delta(th), &ds.windows(Split::Test)?, 64)?,
        max_abs_engine_vs_float: engine
            .iter()
            .zip(&float.y)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max),
    };

    let dir = cfg.paths.workdir.join("eval");
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let trace_path = dir.join("torque_traces.csv");
    let mut w = csv::Writer::from_path(&trace_path)?;
    w.write_record([
        "t",
        "tau_pk_pd",
        "tau_pa_pd",
        "tau_pk_float",
        "tau_pa_float",
        "tau_pk_engine",
        "tau_pa_engine",
    ])?;
    for (i, r) in log.records.iter().enumerate().take_while(|(_, r)| r.t < TRACE_SECONDS) {
        let row = [
            r.t,
            r.tau_pk,
            r.tau_pa,
            float.y[2 * i],
            float.y[2 * i + 1],
            engine[2 * i],
            engine[2 * i + 1],
        ];
        w.write_record(row.map(|v| v.to_string()))?;
    }
    w.flush()?;
    write_sidecar(&trace_path, &stamp)?;
    let metrics_path = dir.join("offline_metrics.toml");
    write_toml(&metrics_path, &stamp, &metrics)?;

    println!(
        "test L1: engine {:.5}, float {:.5} (windowed {:.5}); max |engine - float| {:.4}",
        metrics.test_l1_engine, metrics.test_l1_float, metrics.test_l1_float_windows, metrics.max_abs_engine_vs_float
    );
    println!("wrote {}, {}", trace_path.display(), metrics_path.display());
    Ok(())
}

#[derive(Serialize)]
struct BenchReport {
    theta_x_raw: i16,
    theta_h_raw: i16,
    hidden: usize,
    #[serde(flatten)]
    cost: CostReport,
}

#[derive(Serialize)]
struct WallClock {
    steps: u64,
    mean_step_us: f64,
    /// Control tick over mean step time.
    real_time_factor: f64,
}

pub fn bench(cfg: &ExperimentConfig, args: &BenchArgs) -> Result<()> {
    let ds = load_dataset(cfg)?;
    let q = load_quant(cfg, args.model.as_ref())?;
    let tx = args.thresholds.theta_x.unwrap_or(q.theta_x_raw);
    let th = args.thresholds.theta_h.unwrap_or(q.theta_h_raw);
    let q = q.with_raw_thresholds(tx, th)?;
    let log = test_log(&ds)?;
    let stamp = Stamp::new("bench", cfg);

    let mut st = engine_reset(&q);
    let mut out = [0.0; 2];
    let t0 = Instant::now();
    for r in &log.records {
        engine_step(&q, &mut st, &r.input().to_array(), &mut out)?;
    }
    let elapsed = t0.elapsed().as_secs_f64();
    let cost = cost_report(&st, &q, &cfg.engine.cost);
    let mean = elapsed / log.len().max(1) as f64;
    let wall = WallClock {
        steps: st.counters.steps,
        mean_step_us: mean * 1e6,
        real_time_factor: gaitclone::CONTROL_DT / mean,
    };

    let dir = cfg.paths.workdir.join("bench");
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let report = BenchReport {
        theta_x_raw: tx,
        theta_h_raw: th,
        hidden: q.arch.hidden,
        cost,
    };
    write_toml(&dir.join("cost_report.toml"), &stamp, &report)?;
    write_toml(&dir.join("wallclock.toml"), &stamp, &wall)?;

    println!("thresholds raw ({tx}, {th}), {} steps", cost.steps);
    println!("dense ops/step      {}", cost.dense_ops_per_step);
    println!("effective ops/step  {:.1}", cost.effective_ops_per_step);
    println!("op reduction        {:.2}x", cost.speedup);
    println!("sparsity x / h      {:.3} / {:.3}", cost.sparsity_x, cost.sparsity_h);
    println!(
        "cycles/step         {:.1} ({:.2} us at {:.0} MHz)",
        cost.cycles_per_step,
        cost.latency_us,
        cfg.engine.cost.clock_hz / 1e6
    );
    println!(
        "wall-clock/step     {:.2} us ({:.0}x real time)",
        wall.mean_step_us, wall.real_time_factor
    );
    println!("wrote {}", dir.display());
    Ok(())
}
