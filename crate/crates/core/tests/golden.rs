//! Locks the fixed-point engine's outputs on a recorded 100-step stream.
//! Set `GAITCLONE_BLESS=1` to regenerate the files after an intended change.

use std::path::PathBuf;

use gaitclone::control::{run_closed_loop, PdController, SimConfig};
use gaitclone::engine::{engine_reset, engine_step, quantize_model, QuantModel};
use gaitclone::plant::SlopePreset;
use gaitclone::rnn::{DeltaThresholds, NetArch, NetworkParams};
use serde::{Deserialize, Serialize};

#[derive(Debug, PartialEq, Serialize, Deserialize)]
struct InputRow {
    e_pk: f64,
    e_pa: f64,
    de_pk: f64,
    de_pa: f64,
    s: f64,
}

#[derive(Debug, PartialEq, Serialize, Deserialize)]
struct OutputRow {
    step: usize,
    tau_pk_raw: i16,
    tau_pa_raw: i16,
    transmitted_x: u64,
    transmitted_h: u64,
    mac_ops: u64,
}

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data")
}

fn reference_model() -> QuantModel {
    let mut p = NetworkParams::init(NetArch::controller(16), 2024);
    p.data.iter_mut().for_each(|v| *v *= 2.0);
    quantize_model(&p, DeltaThresholds::default()).unwrap()
}

fn reference_inputs() -> Vec<InputRow> {
    let sim = SimConfig::default();
    let log = run_closed_loop(
        &mut PdController::new(sim.gait.clone()),
        &sim,
        SlopePreset::Flat,
        0.5,
        42,
    )
    .unwrap();
    log.records
        .iter()
        .map(|r| {
            let i = r.input();
            InputRow {
                e_pk: i.e_pk,
                e_pa: i.e_pa,
                de_pk: i.de_pk,
                de_pa: i.de_pa,
                s: i.s,
            }
        })
        .collect()
}

fn run(model: &QuantModel, inputs: &[InputRow]) -> Vec<OutputRow> {
    let mut s = engine_reset(model);
    let mut out = [0.0; 2];
    inputs
        .iter()
        .enumerate()
        .map(|(step, r)| {
            engine_step(model, &mut s, &[r.e_pk, r.e_pa, r.de_pk, r.de_pa, r.s], &mut out).unwrap();
            OutputRow {
                step,
                tau_pk_raw: s.y[0],
                tau_pa_raw: s.y[1],
                transmitted_x: s.counters.transmitted_x,
                transmitted_h: s.counters.transmitted_h,
                mac_ops: s.counters.mac_ops,
            }
        })
        .collect()
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &PathBuf) -> Vec<T> {
    let mut r = csv::Reader::from_path(path)
        .unwrap_or_else(|e| panic!("{}: {e} (run with GAITCLONE_BLESS=1 to create)", path.display()));
    r.deserialize().map(|row| row.unwrap()).collect()
}

fn write_csv<T: Serialize>(path: &PathBuf, rows: &[T]) {
    let mut w = csv::Writer::from_path(path).unwrap();
    for r in rows {
        w.serialize(r).unwrap();
    }
    w.flush().unwrap();
}

#[test]
fn engine_matches_golden_vectors() {
    let dir = data_dir();
    let (model_path, in_path, out_path) = (
        dir.join("golden_model.edrn"),
        dir.join("golden_input.csv"),
        dir.join("golden_output.csv"),
    );
    if std::env::var_os("GAITCLONE_BLESS").is_some() {
        std::fs::create_dir_all(&dir).unwrap();
        let model = reference_model();
        let inputs = reference_inputs();
        model.save(&model_path).unwrap();
        write_csv(&in_path, &inputs);
        write_csv(&out_path, &run(&model, &inputs));
    }
    let model = QuantModel::load(&model_path).unwrap();
    let inputs: Vec<InputRow> = read_csv(&in_path);
    let expected: Vec<OutputRow> = read_csv(&out_path);
    assert_eq!(inputs.len(), 100);
    assert_eq!(run(&model, &inputs), expected);
}

#[test]
fn golden_model_file_is_reproducible() {
    let stored = std::fs::read(data_dir().join("golden_model.edrn")).unwrap();
    assert_eq!(reference_model().to_bytes(), stored);
}

#[test]
fn golden_inputs_are_reproducible() {
    let stored: Vec<InputRow> = read_csv(&data_dir().join("golden_input.csv"));
    assert_eq!(reference_inputs(), stored);
}
