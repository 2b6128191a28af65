//! Constructive dilation theory for operator-valued maps on finite
//! *-semigroupoids.

pub mod algebroid;
pub mod ckt;
pub mod dilation;
pub mod free;
pub mod io;
pub mod leftreg;
pub mod linalg;
pub mod psd;
pub mod random;
pub mod table;
