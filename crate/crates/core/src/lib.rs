//! Audio adversarial-example toolkit: input-transformation defenses, the
//! temporal-dependency consistency detector, optimization attacks (plain,
//! adaptive, segment, concatenation, combination) and the evaluation
//! harness, all driven against a small self-contained CTC recognizer.

pub mod attacks;
pub mod audio;
pub mod backend;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod matrix;
pub mod optim;
pub mod td;
pub mod text;
pub mod transforms;
pub mod toy_asr;

pub use error::{Error, Result, WavError};
