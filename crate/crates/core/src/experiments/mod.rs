//! The experiment battery: baseline training, generalization probes, the
//! boundary regime, the composed pipeline and the kernel-learning study,
//! with confusion matrices and reports.

mod battery;
mod composition;
mod config;
mod confusion;
mod datasets;
mod kernel_study;
mod probes;
mod report;
mod verify;

pub use battery::{run_battery, BatteryOutcome};
pub use composition::{
    apply_atom, atom_samples, isolated_pixel_samples, recurrent_reduce, run_composition_pipeline,
    shifted_test_sets, train_atom, train_counter, AtomTask, CompositionOutcome, RecurrentCounter,
    TrainedAtom,
};
pub use config::{CompositionConfig, ExperimentConfig, KernelStudyConfig, TrainPlan};
pub use confusion::{evaluate, probs_from_csv, probs_to_csv, ConfusionMatrix, CLASSES};
pub use datasets::{build_dataset, DatasetKind};
pub use kernel_study::{equivalence_check, run_kernel_learning_study, study_images, KernelStudy};
pub use probes::{
    area_normalized, checkpoint_hash, normalized_mixed, render_all, report_for,
    run_boundary_regime, run_experiment_1, run_experiment_2, run_experiment_3, run_experiment_4,
    run_probe, scaled_set, to_samples, train_baseline, train_classifier, transform_set,
    BoundaryRegime, Classifier, Probe,
};
pub use report::{
    digest_images, emit_report, read_report, reference_ids, reference_table, DatasetRef,
    ExperimentReport,
};
pub use verify::{
    topology_preserved, verify_bank, verify_exhaustive, verify_randomized, BankVerification,
};
