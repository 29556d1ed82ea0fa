//! Contrastive pretraining with adversarial feature perturbations.

pub mod adversary;
pub mod loss;
pub mod optim;
pub mod trainer;

pub use adversary::{
    clean_step, contrastive_pass, inner_maximize, perturbed_loss, AdversaryConfig, BatchPass, InnerOutcome, NormKind,
    PerturbationState,
};
pub use loss::{alignment_uniformity, contrastive_loss, squared_distance, ContrastiveBatch, ContrastiveOutput};
pub use optim::{AdamW, AdamWConfig};
pub use trainer::{pretrain, PretrainConfig, PretrainOutcome, StepMetrics, TrainingExample};
