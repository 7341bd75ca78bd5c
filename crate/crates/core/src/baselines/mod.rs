//! Classical comparison models: lasso linear regression, autoregression with
//! exogenous inputs and a one-hidden-layer feedforward network.

mod ar;
mod ffnn;
mod lasso;

pub use ar::{
    ar_filter, ar_forecast, fit_ar, select_ar_order, ArEvalMode, ArModel, ArOrderSweep, AR_ORDER_TOLERANCE,
    MAX_AR_ORDER,
};
pub use ffnn::{ffnn_predict, fit_ffnn, FfnnModel, FfnnOptions, CONUS_HIDDEN, POINT_HIDDEN};
pub use lasso::{fit_lasso, LassoModel, LASSO_MAX_SWEEPS, LASSO_TOLERANCE};

/// Regularization weight shared by the lasso and the network.
pub const DEFAULT_LAMBDA: f64 = 0.002;
