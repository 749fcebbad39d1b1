//! Fixtures shared by the benchmarks.

use sampler_search::dataset::{generate_blobs, inject_label_noise};
use sampler_search::{extract_features, BlobSpec, Dataset, FeatureTable, ModelWeights, TrainHyper};

pub struct Fixture {
    pub train: Dataset,
    pub weights: ModelWeights,
    pub table: FeatureTable,
}

/// Noisy 10-class blobs with a briefly trained softmax model and its
/// feature table.
pub fn noisy_blobs(per_class: usize, seed: u64) -> Fixture {
    let ds = generate_blobs(&BlobSpec {
        num_classes: 10,
        dim: 16,
        per_class,
        separation: 4.0,
        spread: 1.0,
        seed,
    })
    .expect("valid blob spec");
    let train = inject_label_noise(&ds, 0.4, seed + 1).expect("valid noise rate");
    let w0 = ModelWeights::init(
        sampler_search::Architecture::SoftmaxRegression,
        16,
        10,
        seed,
    )
    .expect("valid shape");
    let hyper = TrainHyper {
        epochs: 3,
        seed,
        ..TrainHyper::default()
    };
    let weights = sampler_search::model::train(&w0, &train, None, &hyper).expect("training");
    let table = extract_features(&weights, &train).expect("features");
    Fixture {
        train,
        weights,
        table,
    }
}
