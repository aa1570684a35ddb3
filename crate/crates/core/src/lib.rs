pub mod cli;
pub mod cohort;
pub mod error;
pub mod features;
pub mod isotonic;
pub mod labeler;
pub mod learners;
pub mod metrics;
pub mod pipeline;
pub mod reportnlp;
pub mod shap;
pub mod synth;
