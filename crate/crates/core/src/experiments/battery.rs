use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::composition::{run_composition_pipeline, CompositionOutcome};
use super::config::ExperimentConfig;
use super::kernel_study::{run_kernel_learning_study, KernelStudy};
use super::probes::{
    run_boundary_regime, run_probe, train_baseline, BoundaryRegime, Classifier, Probe,
};
use super::report::{emit_report, ExperimentReport};
use crate::error::{Error, Result};
use crate::neuralnet::save_params;
use crate::par::Exec;

#[derive(Debug, Clone)]
pub struct BatteryOutcome {
    pub baseline: Classifier,
    pub probes: Vec<ExperimentReport>,
    pub boundary: BoundaryRegime,
    pub composition: CompositionOutcome,
    pub kernel_study: KernelStudy,
    pub files: Vec<PathBuf>,
}

#[derive(Serialize)]
struct Summary<'a> {
    seed: u64,
    config_hash: String,
    baseline_checkpoint: &'a str,
    baseline_holdout_accuracy: Option<f64>,
    boundary_checkpoint: &'a str,
    boundary_train_corr_count_edges: f64,
    erosion_pixel_accuracy: f64,
    reduction_pixel_accuracy: f64,
    counter_fixed_point_accuracy: f64,
    kernel_equivalence: String,
    random_init_oscillation: f64,
    near_solution_oscillation: f64,
    experiments: BTreeMap<String, (f64, f64)>,
}

fn write(path: PathBuf, text: &str, files: &mut Vec<PathBuf>) -> Result<()> {
    fs::write(&path, text).map_err(|e| Error::io_at(&path, e))?;
    files.push(path);
    Ok(())
}

/// Trains every model, runs every experiment and writes all artifacts under
/// `out`. Nothing time- or host-dependent is written, so two runs with the
/// same config and seed produce identical files.
pub fn run_battery(
    cfg: &ExperimentConfig,
    seed: u64,
    out: &Path,
    exec: Exec,
    log: &mut dyn FnMut(&str),
) -> Result<BatteryOutcome> {
    cfg.check()?;
    fs::create_dir_all(out).map_err(|e| Error::io_at(out, e))?;
    let mut files = Vec::new();
    let hash = cfg.hash();
    write(
        out.join("config.json"),
        &(serde_json::to_string_pretty(cfg)? + "\n"),
        &mut files,
    )?;

    log("training baseline network on circles");
    let baseline = train_baseline(cfg, seed, exec, log)?;
    let path = out.join("baseline.params");
    save_params(&baseline.net, &path)?;
    files.push(path);
    write(
        out.join("baseline_history.json"),
        &serde_json::to_string_pretty(&baseline.history)?,
        &mut files,
    )?;

    let mut probes = Vec::new();
    for probe in Probe::BATTERY {
        let r = run_probe(&baseline, probe, cfg, seed, exec)?;
        log(&format!(
            "  {}: accuracy {:.4}, signed mean error {:+.4}",
            r.id, r.mean_accuracy, r.signed_mean_error
        ));
        probes.push(r);
    }

    log("boundary regime");
    let boundary = run_boundary_regime(cfg, seed, exec, log)?;
    let path = out.join("boundary.params");
    save_params(&boundary.model.net, &path)?;
    files.push(path);
    for r in [&boundary.iid, &boundary.scaled_up, &boundary.scaled_down] {
        log(&format!(
            "  {}: accuracy {:.4}, signed mean error {:+.4}",
            r.id, r.mean_accuracy, r.signed_mean_error
        ));
    }

    log("composed pipeline");
    let composition = run_composition_pipeline(cfg, &baseline, seed, exec, log)?;

    log("kernel-learning study");
    let kernel_study = run_kernel_learning_study(cfg, seed, exec, log)?;
    let kdir = out.join("kernel_study");
    fs::create_dir_all(&kdir).map_err(|e| Error::io_at(&kdir, e))?;
    write(
        kdir.join("trajectories.csv"),
        &kernel_study.trajectories_csv(),
        &mut files,
    )?;
    write(
        kdir.join("study.json"),
        &(serde_json::to_string_pretty(&kernel_study)? + "\n"),
        &mut files,
    )?;

    let reports: Vec<&ExperimentReport> = probes
        .iter()
        .chain([&boundary.iid, &boundary.scaled_up, &boundary.scaled_down])
        .chain(&composition.pipeline)
        .chain(&composition.black_box)
        .collect();
    for r in &reports {
        files.extend(emit_report(r, out)?);
    }
    let summary = Summary {
        seed,
        config_hash: hash,
        baseline_checkpoint: &baseline.checkpoint,
        baseline_holdout_accuracy: baseline.holdout_accuracy(),
        boundary_checkpoint: &boundary.model.checkpoint,
        boundary_train_corr_count_edges: boundary.corr_count_edges,
        erosion_pixel_accuracy: composition.erosion.holdout_pixel_accuracy,
        reduction_pixel_accuracy: composition.reduction.holdout_pixel_accuracy,
        counter_fixed_point_accuracy: composition.counter_accuracy,
        kernel_equivalence: format!(
            "{}/{}",
            kernel_study.equivalence_matches, kernel_study.equivalence_total
        ),
        random_init_oscillation: kernel_study.random.oscillation(),
        near_solution_oscillation: kernel_study.near_solution.oscillation(),
        experiments: reports
            .iter()
            .map(|r| (r.id.clone(), (r.mean_accuracy, r.signed_mean_error)))
            .collect(),
    };
    write(
        out.join("summary.json"),
        &(serde_json::to_string_pretty(&summary)? + "\n"),
        &mut files,
    )?;
    Ok(BatteryOutcome {
        baseline,
        probes,
        boundary,
        composition,
        kernel_study,
        files,
    })
}
