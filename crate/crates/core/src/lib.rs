//! Retrieve-and-edit toolkit for generating unit-test assertions.
//!
//! Given a focal test (the test method plus the method under test, without its
//! assertion), the pipeline produces a candidate assertion in three stages:
//!
//! 1. [`retrieval`] finds the most similar focal test in a corpus by
//!    bag-of-token overlap and proposes its assertion as a prototype.
//! 2. [`editseq`] aligns the retrieved focal test against the query into a
//!    token-level edit script describing what changed between the two.
//! 3. [`model`] encodes the prototype assertion together with the edit script
//!    and decodes an adapted assertion, copying tokens from either source when
//!    the vocabulary falls short.
//!
//! [`corpus`] and [`lexer`] handle data loading and tokenization, [`num`]
//! provides the tensor/autodiff core the model trains on, [`eval`] scores
//! generated assertions, and [`synth`] builds small synthetic corpora for
//! tests and benchmarks.

pub mod corpus;
pub mod editseq;
pub mod eval;
pub mod lexer;
pub mod model;
pub mod num;
pub mod retrieval;
pub mod synth;
