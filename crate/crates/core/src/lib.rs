//! Soft actor-critic with a switchable entropy reward, plus the toy tasks,
//! exact oracles and experiment harness used to compare the variants.

// `!(x > 0.0)` checks are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diffnn;
pub mod envs;
pub mod policy;
pub mod replay;
pub mod sac;
pub mod oracle;
pub mod harness;
