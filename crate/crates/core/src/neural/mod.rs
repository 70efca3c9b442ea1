//! Siamese bidirectional-LSTM encoder, cosine contrastive loss, analytic
//! gradients, RMSprop and the training loop.

pub mod checkpoint;
pub mod grad;
pub mod loss;
pub mod lstm;
pub mod model;
pub mod rmsprop;
pub mod tensor;
pub mod train;

pub use checkpoint::Checkpoint;
pub use grad::{batch_energies, batch_loss, batch_loss_sum, compute_gradients, instance_loss, PairExample};
pub use loss::{bce_loss, contrastive_loss, cosine_energy, ExactSum, LossKind};
pub use lstm::{bilstm_encode, BiLstmLayer, LstmParams};
pub use model::{encode_product, init_model, Gradients, SiameseModel, DEFAULT_EMBED_DIM, DEFAULT_HIDDEN_DIM};
pub use rmsprop::{rmsprop_step, rmsprop_update, RmsPropConfig, RmsPropState};
pub use tensor::Tensor;
pub use train::{train, EarlyStopping, EpochRecord, StopDecision, TrainConfig, TrainHistory};
