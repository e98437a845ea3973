//! Native-language accent identification toolkit.
//!
//! Two feature families feed an 11-way L1 classifier:
//!
//! - [`audio`]: frame-level low-level descriptors (energy, spectral shape,
//!   auditory spectrum, MFCCs, voicing, formants) collapsed into a static
//!   vector by statistical functionals. No speech recognition involved.
//! - [`text`]: word and character n-gram counts over transcripts.
//!
//! The rest of the crate is the experiment machinery: [`balance`] (SMOTE),
//! [`select`] (information gain, chi-square, ReliefF), [`learn`] (pairwise
//! SMO linear SVM and multinomial logistic regression) and [`eval`]
//! (stratified k-fold CV and the cross-prompt protocol).
//!
//! ```text
//! manifest -> features -> [standardize -> SMOTE -> select -> train] per fold -> report
//! ```

pub mod audio;
pub mod balance;
pub mod config;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod learn;
pub mod matrix;
pub mod seed;
pub mod select;
pub mod synth;
pub mod text;

pub use corpus::{CorpusManifest, Instance, L1Label, Prompt};
pub use error::{Error, Result};
