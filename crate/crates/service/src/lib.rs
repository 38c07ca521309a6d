//! Operational shell around `survwright_core`: persisted model bundles,
//! single-profile scoring with what-if overrides, an HTTP service and the
//! pipeline steps behind the `survwright` command.

pub mod bundle;
pub mod pipeline;
pub mod scoring;
pub mod server;

pub use bundle::{BundleError, BundleModel, ModelBundle, SexScope, Variant, BUNDLE_VERSION};
pub use scoring::{score, whatif, ScoreError, ScoreRequest, ScoreResponse, WhatIfRequest, WhatIfResponse};
