#![allow(clippy::needless_range_loop)]

pub mod collision;
pub mod gradcheck;
pub mod models;
pub mod ops;
