//! Music-driven light shows for an 8×8 RGB button grid.
//!
//! Audio is cut into windows aligned one-to-one with video frames, turned
//! into MFCC text prompts, and paired with the frame's RGB-X tuple text. A
//! character-level causal transformer trained on those pairs completes new
//! prompts, and the completions are parsed back into frames.

pub mod audio;
pub mod grid;
pub mod corpus;
pub mod model;
pub mod eval;
pub mod pipeline;
