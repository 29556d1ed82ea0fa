//! Adaptation of a pretrained encoder to target graphs: zero-shot node
//! classification, zero-shot link prediction and few-shot prompt tuning.

pub mod labels;
pub mod link;
pub mod prompt;
pub mod report;
pub mod zero_shot;

pub use labels::{dataset_template, render_template, LabelPrompt, LabelPromptSet, DATASET_TEMPLATES};
pub use link::{auc, evaluate_link_prediction, link_score, link_split, LinkEvalConfig};
pub use prompt::{prompt_objective, prompt_tune, scl_loss, FewShotSplit, PromptTuneConfig, PromptTuneOutcome};
pub use report::{EvalRecord, EvalReport};
pub use zero_shot::{
    accuracy, evaluate_node_classification, labeled_nodes, sample_subgraphs, seeded_sampler, zero_shot_classify,
    EvalConfig, Prediction, SeedSummary,
};
