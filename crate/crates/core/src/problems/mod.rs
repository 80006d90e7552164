//! Concrete problem families: the cart-pole swing-up transcription and the
//! one-variable synthetic manifolds.

mod cartpole;
mod synthetic;

pub use cartpole::{
    cartpole_dynamics, cartpole_energy, simulate, CartPoleNlp, CartPoleParams,
    TrajectorySample, TranscriptionSettings, GRAVITY,
};
pub use synthetic::{OracleMinimum, Synthetic, SyntheticKind};
