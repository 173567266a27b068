//! The turn loop: selector, driver, replay.

mod driver;
mod replay;
mod select;
mod trace;

pub use driver::*;
pub use replay::*;
pub use select::*;
pub use trace::*;
