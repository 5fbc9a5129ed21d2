//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::path::{Path, PathBuf};
use std::time::Instant;

use gaitclone::config::{ExperimentConfig, Preset};
use gaitclone::control::{run_closed_loop, PdController, RunLog, SimConfig};
use gaitclone::dataset::{collect, CollectConfig, Dataset, Split};
use gaitclone::engine::{
    cost_report, dense_ops_per_step, dequantize_act, engine_reset, engine_step, quantize_act, quantize_model,
    CostConfig, QuantModel, RnnController,
};
use gaitclone::plant::SlopePreset;
use gaitclone::rnn::{
    backward, deltagru_forward, evaluate, forward_batch, gru_forward, read_curve, train, write_curve, DeltaState,
    DeltaThresholds, Mode, NetArch, NetworkParams, StageSchedule, TrainOutcome, TrainSchedule,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Suite {
    failed: usize,
}

impl Suite {
    fn report(&mut self, id: usize, name: &str, pass: bool, detail: String) {
        if !pass {
            self.failed += 1;
        }
        println!("{} [{id}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    }
}

fn main() {
    let mut s = Suite { failed: 0 };
    let t0 = Instant::now();

    let cfg = ExperimentConfig::preset(Preset::Desk);
    let ds = collect(&cfg.sim, &cfg.collect, cfg.seed).expect("collect desk dataset");
    let outcome = train(&ds, cfg.arch(), &cfg.train_schedule(), cfg.engine.thresholds()).expect("train desk model");
    let test_log = ds.split(Split::Test).next().expect("test walk").log.clone();

    op_accounting(&mut s);
    delta_equivalence(&mut s, &outcome, &test_log);
    gradients(&mut s);
    cloning_quality(&mut s, &ds, &outcome, &test_log);
    let quant = quantize_model(&outcome.params, cfg.engine.thresholds()).expect("quantize");
    closed_loop(&mut s, &cfg.sim, &quant);
    sparsity(&mut s, &outcome, &test_log);
    real_time(&mut s, &test_log);
    determinism(&mut s);

    println!("acceptance: {} failed, {:.0} s", s.failed, t0.elapsed().as_secs_f64());
    if s.failed > 0 {
        std::process::exit(1);
    }
}

fn inputs_of(log: &RunLog) -> Vec<f64> {
    log.records.iter().flat_map(|r| r.input().to_array()).collect()
}

fn run_engine(q: &QuantModel, xs: &[f64]) -> (Vec<f64>, gaitclone::engine::DeltaStateFx) {
    let mut st = engine_reset(q);
    let mut out = [0.0; 2];
    let mut ys = Vec::with_capacity(xs.len() / 5 * 2);
    for x in xs.chunks(5) {
        engine_step(q, &mut st, x, &mut out).expect("engine step");
        ys.extend_from_slice(&out);
    }
    (ys, st)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn op_accounting(s: &mut Suite) {
    let arch = NetArch::controller(128);
    let ops = dense_ops_per_step(&arch);
    let rel = (ops as f64 - 3.0e5).abs() / 3.0e5;
    s.report(
        1,
        "op accounting",
        rel <= 0.10,
        format!(
            "dense_ops_per_step(2L-128H) = {ops} ({:.2}% from 3.0e5), {} parameters",
            rel * 100.0,
            arch.param_count()
        ),
    );
}

fn delta_equivalence(s: &mut Suite, outcome: &TrainOutcome, test_log: &RunLog) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for draw in 0..100 {
        let m = rng.gen_range(2..=12);
        let mut p = NetworkParams::init(NetArch::controller(m), draw);
        let scale = rng.gen_range(0.5..2.0);
        p.data.iter_mut().for_each(|v| *v *= scale);
        let x: Vec<f64> = (0..50 * 5).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let dense = gru_forward(&p, &x, None).expect("gru");
        let (delta, _) = deltagru_forward(&p, DeltaThresholds::ZERO, &x, &DeltaState::new(&p)).expect("deltagru");
        worst = worst.max(max_abs_diff(&dense.y, &delta.y));
    }

    let p = &outcome.params;
    let xs = inputs_of(test_log);
    let q0 = quantize_model(p, DeltaThresholds::ZERO).expect("quantize");
    let (ys, _) = run_engine(&q0, &xs);
    let (float, _) = deltagru_forward(p, DeltaThresholds::ZERO, &xs, &DeltaState::new(p)).expect("float");
    let engine_err = max_abs_diff(&ys, &float.y);
    let xq: Vec<f64> = xs.iter().map(|&v| dequantize_act(quantize_act(v))).collect();
    let (float_q, _) = deltagru_forward(p, DeltaThresholds::ZERO, &xq, &DeltaState::new(p)).expect("float");
    let engine_err_q = max_abs_diff(&ys, &float_q.y);
    let mean_err = ys.iter().zip(&float.y).map(|(a, b)| (a - b).abs()).sum::<f64>() / ys.len() as f64;
    s.report(
        2,
        "delta equivalence",
        worst <= 1e-12 && engine_err <= 0.05,
        format!(
            "float theta=0 vs GRU max {worst:.1e} (<= 1e-12); engine raw 0 vs float max {engine_err:.4} (<= 0.05), mean {mean_err:.4}, vs float on Q8.8 inputs max {engine_err_q:.4}"
        ),
    );
}

fn gradients(s: &mut Suite) {
    let objective = |p: &NetworkParams, mode: Mode, x: &[f64], b: usize, gy: &[f64]| {
        let tr = forward_batch(p, mode, x, b).expect("forward");
        let f: f64 = tr.y.iter().zip(gy).map(|(y, g)| y * g).sum();
        (f, tr)
    };
    let masks = |tr: &gaitclone::rnn::Trace| -> Vec<bool> {
        tr.layers
            .iter()
            .flat_map(|l| l.u_mask.iter().chain(&l.h_mask).copied())
            .collect()
    };
    let thresholds = DeltaThresholds {
        theta_x: 0.15,
        theta_h: 0.1,
    };
    let (mut dense_worst, mut masked_worst, mut masked_checked) = (0.0f64, 0.0f64, 0usize);
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let (m, t, b) = (rng.gen_range(2..=8), rng.gen_range(3..=10), rng.gen_range(1..=2));
        let arch = NetArch {
            n_layers: 2,
            input_dim: 3,
            hidden: m,
            output_dim: 2,
        };
        let mut p = NetworkParams::init(arch, seed);
        p.data.iter_mut().for_each(|v| *v *= 1.5);
        let x: Vec<f64> = (0..t * b * 3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let gy: Vec<f64> = (0..t * b * 2).map(|_| rng.gen_range(-1.0..1.0)).collect();

        let (_, tr) = objective(&p, Mode::Dense, &x, b, &gy);
        let g = backward(&p, &tr, &gy).expect("backward");
        let eps = 1e-6;
        for i in 0..p.data.len() {
            let mut pp = p.clone();
            pp.data[i] += eps;
            let (fp, _) = objective(&pp, Mode::Dense, &x, b, &gy);
            pp.data[i] -= 2.0 * eps;
            let (fm, _) = objective(&pp, Mode::Dense, &x, b, &gy);
            let fd = (fp - fm) / (2.0 * eps);
            let an = g.params.data[i];
            dense_worst = dense_worst.max((fd - an).abs() / fd.abs().max(an.abs()).max(1e-3));
        }

        let mode = Mode::Delta(thresholds);
        let (_, tr) = objective(&p, mode, &x, b, &gy);
        let base = masks(&tr);
        let g = backward(&p, &tr, &gy).expect("backward");
        let eps = 1e-7;
        for i in 0..p.data.len() {
            let mut pp = p.clone();
            pp.data[i] += eps;
            let (fp, tp) = objective(&pp, mode, &x, b, &gy);
            pp.data[i] -= 2.0 * eps;
            let (fm, tm) = objective(&pp, mode, &x, b, &gy);
            if masks(&tp) != base || masks(&tm) != base {
                continue;
            }
            let fd = (fp - fm) / (2.0 * eps);
            let an = g.params.data[i];
            masked_worst = masked_worst.max((fd - an).abs() / fd.abs().max(an.abs()).max(1e-3));
            masked_checked += 1;
        }
    }
    s.report(
        3,
        "gradient correctness",
        dense_worst < 1e-5 && masked_worst < 1e-4 && masked_checked > 0,
        format!("20 nets (M <= 8, T <= 10): dense rel err {dense_worst:.1e} (< 1e-5), masked {masked_worst:.1e} (< 1e-4) over {masked_checked} params"),
    );
}

fn cloning_quality(s: &mut Suite, ds: &Dataset, outcome: &TrainOutcome, test_log: &RunLog) {
    let test_w = ds.windows(Split::Test).expect("test windows");
    let th = DeltaThresholds::default();
    let test_l1 = evaluate(&outcome.params, Mode::Delta(th), &test_w, 64).expect("evaluate");
    let sq: f64 = test_log
        .records
        .iter()
        .map(|r| r.tau_pk * r.tau_pk + r.tau_pa * r.tau_pa)
        .sum();
    let rms = (sq / (2 * test_log.len()) as f64).sqrt();
    let (pre, re) = (outcome.best_pretrain.val_loss, outcome.best_retrain.val_loss);
    let quality = test_l1 <= 0.10 * rms;
    let retrain_gap = re <= 1.25 * pre;
    s.report(
        4,
        "cloning quality",
        quality && retrain_gap,
        format!(
            "test L1 {test_l1:.4} = {:.1}% of torque RMS {rms:.4} (<= 10%: {}); retrained val {re:.4} vs pretrained {pre:.4} = {:.2}x (<= 1.25x: {})",
            100.0 * test_l1 / rms,
            ok(quality),
            re / pre,
            ok(retrain_gap)
        ),
    );
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "miss"
    }
}

fn closed_loop(s: &mut Suite, sim: &SimConfig, quant: &QuantModel) {
    let mut pass = true;
    let mut parts = Vec::new();
    for slope in SlopePreset::ALL {
        let limit = if slope == SlopePreset::Flat { 1.5 } else { 2.0 };
        let pd = run_closed_loop(&mut PdController::new(sim.gait.clone()), sim, slope, 60.0, 7).expect("pd run");
        let mut rc = RnnController::new(quant.clone()).expect("controller");
        match run_closed_loop(&mut rc, sim, slope, 60.0, 7) {
            Ok(r) => {
                let ratio = r.rmse_knee() / pd.rmse_knee();
                pass &= ratio <= limit;
                parts.push(format!(
                    "{slope} knee {:.4}/{:.4} = {ratio:.2}x (<= {limit})",
                    r.rmse_knee(),
                    pd.rmse_knee()
                ));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("{slope} diverged: {e}"));
            }
        }
    }
    s.report(5, "closed-loop cloning", pass, parts.join("; "));
}

fn sparsity(s: &mut Suite, outcome: &TrainOutcome, test_log: &RunLog) {
    let xs = inputs_of(test_log);
    let cost = CostConfig::default();
    let q = quantize_model(&outcome.params, DeltaThresholds::default()).expect("quantize");
    let (_, st) = run_engine(&q, &xs);
    let r = cost_report(&st, &q, &cost);
    let mut sweep = Vec::new();
    for th in [0, 32, 64, 128, 256] {
        let qt = q.clone().with_raw_thresholds(4, th).expect("thresholds");
        let (_, st) = run_engine(&qt, &xs);
        sweep.push(cost_report(&st, &qt, &cost).sparsity_h);
    }
    let monotone = sweep.windows(2).all(|w| w[1] >= w[0]);
    s.report(
        6,
        "temporal sparsity",
        r.speedup >= 2.0 && monotone,
        format!(
            "raw (4, 128): {:.2}x op reduction (>= 2x; about 10x reported for the reference hardware), sparsity x {:.3} h {:.3}; theta_h sweep 0/32/64/128/256 -> {}",
            r.speedup,
            r.sparsity_x,
            r.sparsity_h,
            sweep.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>().join("/")
        ),
    );
}

fn real_time(s: &mut Suite, test_log: &RunLog) {
    let q = quantize_model(
        &NetworkParams::init(NetArch::controller(128), 3),
        DeltaThresholds::default(),
    )
    .expect("quantize");
    let xs = inputs_of(test_log);
    let steps = (xs.len() / 5).min(4000);
    let mut st = engine_reset(&q);
    let mut out = [0.0; 2];
    let t = Instant::now();
    for x in xs.chunks(5).take(steps) {
        engine_step(&q, &mut st, x, &mut out).expect("engine step");
    }
    let mean = t.elapsed().as_secs_f64() / steps as f64;
    let budget = gaitclone::CONTROL_DT / 10.0;
    s.report(
        7,
        "real-time margin",
        mean < budget,
        format!(
            "M=128 mean engine_step {:.2} us over {steps} steps ({:.0}x under the 5 ms tick, need >= 10x)",
            mean * 1e6,
            gaitclone::CONTROL_DT / mean
        ),
    );
}

fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data")
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = walk(dir)
        .into_iter()
        .map(|p| {
            (
                p.strip_prefix(dir).unwrap().display().to_string(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn walk(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

fn determinism(s: &mut Suite) {
    let tmp = tempfile::tempdir().expect("tempdir");
    let sim = SimConfig::default();
    let cc = CollectConfig {
        n_walks: 3,
        walk_duration: 2.0,
        speed_jitter: 0.1,
        seq_len: 20,
        stride: 10,
    };
    let schedule = TrainSchedule {
        pretrain: StageSchedule {
            epochs: 2,
            lr: 5e-3,
            batch: 8,
        },
        retrain: StageSchedule {
            epochs: 1,
            lr: 1e-3,
            batch: 8,
        },
        seed: 5,
        ..TrainSchedule::default()
    };
    let mut checks: Vec<(&str, bool)> = Vec::new();
    let mut artifacts = Vec::new();
    for run in 0..2 {
        let dir = tmp.path().join(format!("run{run}"));
        let ds = collect(&sim, &cc, 9).expect("collect");
        let manifest = ds.save(&dir.join("data")).expect("save dataset");
        let out = train(&ds, NetArch::controller(6), &schedule, DeltaThresholds::default()).expect("train");
        out.params.save(&dir.join("model.dgru")).expect("save params");
        out.save_curve(&dir.join("loss.csv")).expect("save curve");
        let q = quantize_model(&out.params, DeltaThresholds::default()).expect("quantize");
        q.save(&dir.join("model.edrn")).expect("save quant");
        artifacts.push(dir_bytes(&dir));

        if run == 0 {
            let reloaded = Dataset::load(&manifest).expect("load dataset");
            checks.push((
                "dataset round-trip",
                reloaded
                    .files
                    .iter()
                    .zip(&ds.files)
                    .all(|(a, b)| a.log.records == b.log.records),
            ));
            let p = NetworkParams::load(&dir.join("model.dgru")).expect("load params");
            checks.push((
                "float model round-trip",
                p.arch == out.params.arch && p.data == out.params.data,
            ));
            let ql = QuantModel::load(&dir.join("model.edrn")).expect("load quant");
            checks.push(("quantized model round-trip", ql.to_bytes() == q.to_bytes()));
            checks.push((
                "loss curve round-trip",
                read_curve(&dir.join("loss.csv")).expect("read curve") == out.curve,
            ));
            let path = dir.join("again.csv");
            write_curve(&path, &out.curve).expect("write curve");
            checks.push((
                "loss curve rewrite",
                std::fs::read(&path).unwrap() == std::fs::read(dir.join("loss.csv")).unwrap(),
            ));
        }
    }
    checks.push(("byte-identical re-run", artifacts[0] == artifacts[1]));
    checks.push(("golden vectors", golden_vectors_match()));
    let failed: Vec<&str> = checks.iter().filter(|(_, p)| !p).map(|(n, _)| *n).collect();
    s.report(
        8,
        "determinism and formats",
        failed.is_empty(),
        if failed.is_empty() {
            format!(
                "{} checks: {}",
                checks.len(),
                checks.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(", ")
            )
        } else {
            format!("failed: {}", failed.join(", "))
        },
    );
}

fn golden_vectors_match() -> bool {
    let dir = golden_dir();
    let Ok(model) = QuantModel::load(&dir.join("golden_model.edrn")) else {
        return false;
    };
    let read = |name: &str| -> Option<Vec<csv::StringRecord>> {
        let mut r = csv::Reader::from_path(dir.join(name)).ok()?;
        r.records().collect::<Result<_, _>>().ok()
    };
    let (Some(inputs), Some(outputs)) = (read("golden_input.csv"), read("golden_output.csv")) else {
        return false;
    };
    let mut st = engine_reset(&model);
    let mut out = [0.0; 2];
    for (inp, exp) in inputs.iter().zip(&outputs) {
        let x: Vec<f64> = inp.iter().map(|v| v.parse().unwrap()).collect();
        if engine_step(&model, &mut st, &x, &mut out).is_err() {
            return false;
        }
        let c = st.counters;
        let got = [
            st.y[0] as i64,
            st.y[1] as i64,
            c.transmitted_x as i64,
            c.transmitted_h as i64,
            c.mac_ops as i64,
        ];
        let want: Vec<i64> = exp.iter().skip(1).map(|v| v.parse().unwrap()).collect();
        if got[..] != want[..] {
            return false;
        }
    }
    inputs.len() == 100 && outputs.len() == 100
}
