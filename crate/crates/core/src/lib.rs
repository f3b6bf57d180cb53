//! Photo score prediction with a small all-1x1-convolution network trained by
//! repetitively self-revised learning (RSRL), and selection of the best
//! re-trained model by combining F-measure with a disentanglement measure of
//! the final fully connected layer.
//!
//! Modules, bottom-up:
//!
//! * [`linalg`]: dense matrices, column z-scoring, correlation, Jacobi eigensolver.
//! * [`measures`]: D-measure, F-measures, FD aggregation, model selection, ensemble.
//! * [`nn`]: the network, its training loop and its file format.
//! * [`data`]: images (PPM), datasets, CSV index, stratified split, synthetic data.
//! * [`rsrl`]: the self-revised retraining loop.
//! * [`saliency`]: first-fixation-perspective and assessment-interest-region images.
//! * [`cli`]: the `photoscore` command line.

pub mod cli;
pub mod data;
pub mod linalg;
pub mod measures;
pub mod nn;
pub mod rsrl;
pub mod saliency;
pub mod score;

pub use score::ScoreClass;
