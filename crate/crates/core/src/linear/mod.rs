//! Operators for sparse consistent systems `A x = b`: hyperplane
//! projections (Kaczmarz/ART) and DROP block operators.

pub mod blocks;
pub mod drop;
pub mod hyperplane;
pub mod spectral;

pub use blocks::{BlockPartition, BlockStrategy};
pub use drop::{drop_componentwise_reference, drop_operators, ColumnScope, DropBlockOperator, YSpace};
pub use hyperplane::{art_operators, Hyperplane};
pub use spectral::{power_iteration, SpectralCertificate, SpectralOptions};
