//! Shared fixtures for the criterion benches.

use qamoe_core::degradation::{compute_reference_stats, ReferenceStats};
use qamoe_core::model::ModelParams;
use qamoe_core::synthdata::generate;
use qamoe_core::{Checkpoint, Dataset, DatasetSpec, ModelConfig, SeededRng};

pub struct Fixture {
    pub dataset: Dataset,
    pub stats: ReferenceStats,
    pub checkpoint: Checkpoint,
}

/// Default-shaped dataset with `n_test` test samples and an untrained model.
pub fn fixture(n_train: usize, n_test: usize) -> Fixture {
    let dataset = generate(&DatasetSpec {
        n_train,
        n_val: 8,
        n_test,
        ..DatasetSpec::default()
    })
    .expect("dataset");
    let stats = compute_reference_stats(&dataset.train).expect("reference stats");
    let cfg = ModelConfig::for_dataset(&dataset.spec);
    let params = ModelParams::init(&cfg, &mut SeededRng::new(7)).expect("init");
    let checkpoint = Checkpoint::new(cfg, params).expect("checkpoint");
    Fixture {
        dataset,
        stats,
        checkpoint,
    }
}
