//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

pub mod extended;
pub mod gaussian;
pub mod instances;
pub mod panels;
pub mod underflow;
