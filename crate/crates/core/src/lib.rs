//! Core algorithms for the techembed retrieval pipeline.
//!
//! Everything here is pure computation over in-memory data: tokenization and
//! chunking, synthetic query generation, a small dual-encoder trained with a
//! temperature-scaled contrastive objective (soft prompts included),
//! attention-based extractive summarization, exact top-k vector search, and
//! standard IR metrics. File and network IO live in the companion
//! `techembed` crate; this crate is `no_std` + `alloc` so the numeric core
//! stays portable and byte-deterministic.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod autodiff;
pub mod container;
pub mod corpus;
pub mod encoder;
pub mod eval;
pub mod index;
pub mod querygen;
pub mod rng;
pub mod summarizer;
pub mod tensor;
pub mod textgen;
pub mod train;
pub mod tokenizer;
