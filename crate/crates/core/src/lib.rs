//! Late fusion of paralinguistic (speech-encoder) and semantic (text-encoder)
//! embedding matrices for four-class emotion recognition.
//!
//! The crate covers the numeric kernels ([`numkit`]), frame-to-subword
//! [`alignment`], the fusion architectures with hand-written gradients
//! ([`fusion`]), the EMOB bundle format and speaker-disjoint folds
//! ([`dataio`]), the training/evaluation driver ([`train`]) and the [`cli`].

pub mod numkit;
pub mod alignment;
pub mod fusion;
pub mod dataio;
pub mod train;
pub mod cli;
