//! Dense layers, LSTM layers, dropout, optimizers and gradient checking,
//! all in double precision with hand-written reverse passes.

mod activation;
mod dense;
mod dropout;
mod gradcheck;
mod lstm;
pub(crate) mod mat;
mod optim;
mod params;
mod seqnet;

pub use activation::{activation, selu, sigmoid, Activation, SELU_ALPHA, SELU_LAMBDA};
pub use dense::{mlp_backward, mlp_forward, mlp_predict, Dense, Mlp, MlpCache};
pub use dropout::{dropout, Mode};
pub use gradcheck::{grad_check, relative_error, GradCheckReport};
pub use lstm::{
    bilstm_forward, bptt_backward, lstm_backward, lstm_cell_backward, lstm_cell_step, lstm_forward, BiLstm,
    BiLstmCache, CellCache, LstmCache, LstmParams, Seq,
};
pub use optim::{optimizer_step, OptimizerKind, OptimizerState};
pub use params::{fill_uniform, Params};
pub use seqnet::{joint_mse, DualHeadCache, DualHeadNet, DualHeadOutput};
