//! Tensor layers with hand-written backward passes.

pub mod activation;
pub mod adam;
pub mod conv;
pub mod dense;
pub mod dropout;
pub mod finite_diff;
pub mod loss;
pub mod lstm;
pub mod pool;

pub use activation::{hard_sigmoid, prelu_backward, prelu_forward};
pub use adam::{adam_update, AdamState};
pub use conv::{conv2d_backward, conv2d_backward_batch, conv2d_forward, conv2d_forward_batch, ConvCache, ConvGrads};
pub use dense::{dense_backward, dense_backward_batch, dense_forward, dense_forward_batch, DenseGrads};
pub use dropout::{dropout_backward, dropout_forward, DropoutMask, Mode};
pub use finite_diff::{finite_diff_grad, max_relative_error, relative_error};
pub use loss::mse_loss;
pub use lstm::{
    bilstm_backward, bilstm_forward, bilstm_forward_matrix, lstm_backward, lstm_cell_backward, lstm_cell_forward,
    lstm_cell_step, lstm_forward, BiLstmCache, Gate, LstmCache, LstmParams, LstmStep,
};
pub use pool::{maxpool2x2_backward, maxpool2x2_forward, PoolArgmax};
