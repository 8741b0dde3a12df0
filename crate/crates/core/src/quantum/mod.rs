//! State and operator types plus the linear algebra every other module uses.
//!
//! Matrices are dense `nalgebra` matrices of `Complex64`. JSON dumps use the
//! row-major `[re, im]` pair layout from [`matrix_json`].

pub mod layout;
pub mod matrix_json;
pub mod random;
pub mod spectral;
pub mod state;

pub use layout::{Factor, Layout, Role, MAX_TOTAL_DIM};
pub use random::{gue_sample, haar_random_state, random_density, random_unitary, RngStream};
pub use spectral::{
    evolve, hermitian_eig, matrix_function_hermitian, Eigh, Hermitian, MatrixFunction, Propagator,
};
pub use state::{tensor_product, trace_distance, DensityOperator, HermitianOperator, StateVector};
