//! Characters, coefficient tables, finite-grid DFT and cylinder-function
//! Fourier analysis.

mod character;
mod dft;
mod grid;
mod rational_grid;
mod select;

pub use character::{Character, CoefficientTable, TableEntry};
pub use dft::{dft, dft_with, inverse_dft, inverse_dft_with, DftMethod, DIRECT_LIMIT};
pub use grid::GridFunction;
pub use rational_grid::{RationalGrid, MAX_DENOMINATOR};
pub use select::{
    annihilating_cylinder, cylinder_fourier, top_k_characters, top_k_filtered,
    translate_coefficient, uniformizing_cylinder, TopK, UniformizeReport,
};
