//! Dense math, the LSTM cell and a finite-difference gradient checker.

pub mod gradcheck;
pub mod lstm;
pub mod matrix;
pub mod params;
pub mod rng;

pub use gradcheck::{gradient_check, relative_error, GradCheckReport, ZERO_FLOOR};
pub use lstm::{lstm_backward, lstm_step, LstmParams, LstmState, StepCache};
pub use matrix::{dot, project_softmax, sigmoid, softmax, Matrix};
pub use params::ParamSet;
