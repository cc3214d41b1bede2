//! Check suites shared by the integration tests and the acceptance runner.
//! Each check returns a one-line summary on success.

#![allow(dead_code, clippy::neg_cmp_op_on_partial_ord)]

pub mod memory_suite;
pub mod mppi_suite;
pub mod quad_suite;

pub type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}
pub(crate) use ensure;
