//! Model classes fitted at each partition node: affine subpolicies and
//! linear SVM gates.

mod subpolicy;
mod svm;

pub use subpolicy::LinearSubpolicy;
pub use svm::{fit_svm, primal_objective, Standardizer, SvmGate, SvmParams};

pub(crate) use subpolicy::SubpolicyDocument;
pub(crate) use svm::GateDocument;
