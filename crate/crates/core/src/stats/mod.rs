//! Longitudinal statistics: vertex-wise mixed models, normative z-scores and
//! group separation.

mod auc;
mod dataset;
mod lme;
mod simulate;
mod vertexwise;
mod zscore;

pub use auc::auc;
pub use dataset::{group_by_subject, LmeDataset, LmeRow, VisitMeta};
pub use lme::{lme_fit, Criterion, LmeDesign, LmeFit, LmeSettings};
pub use simulate::LmeSimulation;
pub use vertexwise::{lme_vertexwise, VertexFailure, VertexwiseResult};
pub use zscore::{zscore, zscore_norms, AgeBrackets, BracketNorm, ZNorms, ZScore};
