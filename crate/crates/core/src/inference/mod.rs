//! Inference layers mapping concept distributions to labels, with analytic
//! gradients with respect to concept logits.

pub mod abduction;
pub mod dist;
pub mod extremality;
pub mod fuzzy;
pub mod pnsp;
pub mod semantic;

pub use abduction::{abduce, abduce_from, abl_loss_and_grad, Abduction, AbductionConfig, Distance, TieBreak};
pub use dist::{product_table, ConceptDistribution, ConceptLogits, LabelDistribution};
pub use extremality::{check_extremality, layer_output, Extremality, Layer};
pub use fuzzy::{fuzzy_satisfaction, ltn_inference, ltn_loss_and_grad};
pub use pnsp::{pnsp_from_joint, pnsp_label_dist, pnsp_nll_and_grad};
pub use semantic::{semantic_loss, sl_joint_objective, sl_label_dist, JointObjective};
