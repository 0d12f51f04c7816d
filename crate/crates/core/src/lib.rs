//! Compiler- and test-feedback machinery for back-to-back code translation
//! between two toy languages.
//!
//! A forward policy translates MiniJ into MiniP and a backward policy
//! translates the result back. Compiler feedback scores the forward output
//! by where it first fails to parse and how far its length strays; test
//! feedback runs symbolic-execution unit tests on the round trip. Training
//! interleaves supervised and clipped policy-gradient phases and keeps
//! whichever scores better on validation.

pub mod corpus;
pub mod feedback;
pub mod kwtok;
pub mod metrics;
pub mod minilang;
pub mod policy;
pub mod symexec;
pub mod training;

pub use corpus::{CorpusRecord, TrainExample};
pub use feedback::{Backends, CompileBackend, FeedbackConfig, RewardBreakdown};
pub use kwtok::{TokenSeq, Vocabulary};
pub use metrics::{CorpusReport, IoCase};
pub use minilang::{Diagnostic, Lang, Program};
pub use policy::{Direction, GrammarPolicy, ReferencePolicy};
pub use symexec::{TestCase, TestSuite};
pub use training::{TrainConfig, TrainEnv, TrainState};
