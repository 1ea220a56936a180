//! One function per CLI verb. Each reads its inputs from disk, writes its
//! outputs plus a manifest into the output directory and returns the written
//! paths.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::compare::compare_mod;
use super::config::ExperimentConfig;
use super::io::{num, read_json, read_scenario, write_json, write_scenario, Csv, Manifest, CHECKPOINT, MANIFEST};
use super::scenario::{eval_nmse, generate, observations, Estimator, Sample};
use crate::calibration::{align_gauge, param_mae, train, Checkpoint, SystemModel, ThetaParams};
use crate::error::{Error, Result};
use crate::localization::{localization_error, localize, Pose};
use crate::recovery::{angle_delay_map, sparse_recover};

fn finish(verb: &str, cfg: &ExperimentConfig, out: &Path, mut written: Vec<PathBuf>) -> Result<Vec<PathBuf>> {
    let manifest = Manifest::new(verb, cfg, &written)?;
    let p = out.join(format!("{verb}.{MANIFEST}"));
    write_json(&p, &manifest)?;
    written.push(p);
    Ok(written)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// `generate`: writes the dataset files and sidecar.
pub fn run_generate(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let scenario = generate(cfg)?;
    let written = write_scenario(out, cfg, &scenario)?;
    finish("generate", cfg, out, written)
}

/// `train`: fits the parameters on the training observations of `data` and
/// writes a checkpoint.
pub fn run_train(cfg: &ExperimentConfig, data: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    let (scenario, _) = read_scenario(data, cfg)?;
    ensure_dir(out)?;
    let obs = observations(&scenario.train);
    let theta0 = scenario.model.nominal_theta();
    let outcome = train(&obs, &theta0, &scenario.model, &cfg.train)?;
    let checkpoint = Checkpoint {
        packed_theta: outcome.theta.pack(&outcome.packing)?,
        packing: outcome.packing,
        theta: outcome.theta,
        epoch: cfg.train.epochs,
        loss_history: outcome.loss_history,
        config_hash: cfg.hash(),
    };
    let p = out.join(CHECKPOINT);
    write_json(&p, &checkpoint)?;
    finish("train", cfg, out, vec![p])
}

/// Loads a checkpoint and checks it against the model.
pub fn load_checkpoint(path: &Path, model: &SystemModel) -> Result<ThetaParams> {
    let ck: Checkpoint = read_json(path)?;
    if ck.theta.n_b() != model.nominal_bs.len() || ck.theta.users() != model.users() {
        return Err(Error::Format {
            path: path.to_path_buf(),
            msg: "checkpoint does not match the configured dimensions".into(),
        });
    }
    Ok(ck.theta)
}

/// Mean NMSE of every estimator at every configured SNR.
pub fn nmse_table(
    cfg: &ExperimentConfig,
    test: &[Sample],
    model: &SystemModel,
    trained: &ThetaParams,
    ideal: &ThetaParams,
) -> Result<Vec<(Estimator, Vec<f64>)>> {
    let nominal = model.nominal_theta();
    Estimator::ALL
        .iter()
        .map(|&e| {
            let theta = match e {
                Estimator::Ls => None,
                Estimator::NominalMomp => Some(&nominal),
                Estimator::TrainedMomp => Some(trained),
                Estimator::IdealMomp => Some(ideal),
            };
            Ok((e, eval_nmse(test, model, theta, &cfg.snr_db_list, cfg.seed)?))
        })
        .collect()
}

/// `eval`: held-out NMSE per SNR and estimator, and parameter errors.
pub fn run_eval(cfg: &ExperimentConfig, data: &Path, checkpoint: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    let (scenario, sidecar) = read_scenario(data, cfg)?;
    ensure_dir(out)?;
    let trained = load_checkpoint(checkpoint, &scenario.model)?;
    let table = nmse_table(cfg, &scenario.test, &scenario.model, &trained, &sidecar.true_theta)?;

    let mut csv = Csv::new(&["snr_db", "estimator", "nmse", "nmse_db"]);
    for (slot, snr) in cfg.snr_db_list.iter().enumerate() {
        for (e, values) in &table {
            let v = values[slot];
            csv.row(&[num(*snr), e.name().to_string(), num(v), num(10.0 * v.log10())]);
        }
    }
    let p_nmse = out.join("nmse_vs_snr.csv");
    csv.write(&p_nmse)?;

    let truth = &sidecar.true_theta;
    let mut mae = Csv::new(&["estimate", "gauge", "gain_amplitude", "gain_phase", "position_m", "coupling_abs"]);
    for (name, theta) in [("nominal", scenario.model.nominal_theta()), ("trained", trained)] {
        for (gauge, t) in [("raw", theta.clone()), ("aligned", align_gauge(&theta, truth)?)] {
            let m = param_mae(&t, truth)?;
            mae.row(&[
                name.to_string(),
                gauge.to_string(),
                num(m.gain_amplitude),
                num(m.gain_phase),
                num(m.position_m),
                num(m.coupling_abs),
            ]);
        }
    }
    let p_mae = out.join("params_mae.csv");
    mae.write(&p_mae)?;
    finish("eval", cfg, out, vec![p_nmse, p_mae])
}

/// Localization result of one held-out observation.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationRow {
    pub ms_index: usize,
    pub truth: [f64; 3],
    pub estimate: [f64; 3],
    pub error_m: f64,
}

/// Localizes every held-out observation with the dictionaries of `theta`.
pub fn localize_split(test: &[Sample], model: &SystemModel, theta: &ThetaParams) -> Result<Vec<LocalizationRow>> {
    let dicts: Vec<_> = (0..model.users()).map(|m| model.dictionaries(theta, m)).collect::<Result<_>>()?;
    test.par_iter()
        .map(|s| {
            let d = &dicts[s.ms_index];
            let res = sparse_recover(&s.y.view(), d, &model.recovery)?;
            let estimate = localize(&res, d, &Pose::reference())?;
            Ok(LocalizationRow {
                ms_index: s.ms_index,
                truth: s.position,
                estimate,
                error_m: localization_error(&estimate, &s.position),
            })
        })
        .collect()
}

/// `localize`: per-position errors before and after calibration.
pub fn run_localize(cfg: &ExperimentConfig, data: &Path, checkpoint: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    let (scenario, _) = read_scenario(data, cfg)?;
    ensure_dir(out)?;
    let trained = load_checkpoint(checkpoint, &scenario.model)?;
    let mut csv = Csv::new(&["ms_id", "true_x", "true_y", "est_x", "est_y", "error_m", "phase"]);
    for (phase, theta) in [("before", scenario.model.nominal_theta()), ("after", trained)] {
        for r in localize_split(&scenario.test, &scenario.model, &theta)? {
            csv.row(&[
                r.ms_index.to_string(),
                num(r.truth[0]),
                num(r.truth[1]),
                num(r.estimate[0]),
                num(r.estimate[1]),
                num(r.error_m),
                phase.to_string(),
            ]);
        }
    }
    let p = out.join("localization.csv");
    csv.write(&p)?;
    finish("localize", cfg, out, vec![p])
}

/// `admap`: angle–delay energy map of the first held-out observation under
/// the nominal dictionaries and, when a checkpoint exists, the trained ones.
pub fn run_admap(cfg: &ExperimentConfig, data: &Path, checkpoint: Option<&Path>, out: &Path) -> Result<Vec<PathBuf>> {
    let (scenario, _) = read_scenario(data, cfg)?;
    ensure_dir(out)?;
    let sample = scenario
        .test
        .first()
        .ok_or_else(|| Error::Config("the held-out split is empty".into()))?;
    let model = &scenario.model;
    let nominal_dicts = model.dictionaries(&model.nominal_theta(), sample.ms_index)?;
    let nominal = angle_delay_map(&sample.y.view(), &nominal_dicts)?;
    let trained = match checkpoint {
        Some(p) => Some(angle_delay_map(
            &sample.y.view(),
            &model.dictionaries(&load_checkpoint(p, model)?, sample.ms_index)?,
        )?),
        None => None,
    };
    let mut csv = Csv::new(&["angle_index", "delay_index", "angle_rad", "delay_s", "energy_nominal", "energy_trained"]);
    for ((i, k), v) in nominal.indexed_iter() {
        csv.row(&[
            i.to_string(),
            k.to_string(),
            num(model.angle_grid_b[i]),
            num(model.delay_grid[k]),
            num(*v),
            trained.as_ref().map_or_else(String::new, |t| num(t[(i, k)])),
        ]);
    }
    let p = out.join("angle_delay_map.csv");
    csv.write(&p)?;
    finish("admap", cfg, out, vec![p])
}

/// `compare-mod`: NMSE of nominal, OMPnet and MOD dictionaries versus
/// training-set size at every comparison SNR. Unavailable MOD points are
/// written as `NA`.
pub fn run_compare(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    ensure_dir(out)?;
    let points = compare_mod(cfg)?;
    let mut csv = Csv::new(&["L", "snr_db", "nominal", "ompnet", "mod"]);
    for p in &points {
        csv.row(&[
            p.size.to_string(),
            num(p.snr_db),
            num(p.nominal),
            num(p.ompnet),
            p.mod_nmse.map_or_else(|| "NA".to_string(), num),
        ]);
    }
    let path = out.join("nmse_vs_L.csv");
    csv.write(&path)?;
    finish("compare-mod", cfg, out, vec![path])
}
