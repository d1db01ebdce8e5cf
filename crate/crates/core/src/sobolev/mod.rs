//! Dyadic partitions, weighted fractional Sobolev norms, and the
//! product-space inner products used by the energy monitors.

pub mod norms;
pub mod partition;
pub mod product;

pub use norms::{
    hypothesis_windows, norm_cmb, norm_hs, norm_hsd, norm_hsd_unchecked, norm_weighted_integer,
    NormParams,
};
pub use partition::{build_partition, verify_partition, DyadicPartition, PartitionReport};
pub use product::{
    inner_x_a0, inner_y_a33, norm_x, norm_x_a0, norm_x_unchecked, norm_y, norm_y_a33,
    ProductState, SymMat3Field,
};
