#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod canonical;
pub mod cli;
pub mod compare;
pub mod plot;
pub mod engine;
pub mod marketdata;
pub mod metrics;
pub mod strategy;
pub mod stage_is;
pub mod stage_wfa;
pub mod protocol;
