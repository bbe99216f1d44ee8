//! Continuous video representation with a sine-activated coordinate
//! network, trained on sparse frames with an optical-flow constraint on
//! its input derivatives.

pub mod flow;
pub mod metrics;
pub mod objective;
pub mod optim;
pub mod par;
pub mod siren;
pub mod video;

pub use flow::{FlowGrid, FlowSequence};
pub use objective::{LossConfig, LossReport, SampleBatch};
pub use optim::{fit, TrainConfig};
pub use siren::{init_siren, SirenConfig, SirenModel};
pub use video::{Frame, VideoTensor};
