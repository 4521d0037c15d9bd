//! Energy models: Boltzmann machines, Ising problems, exact enumeration,
//! and benchmark graphs.

mod bm;
mod enumerate;
mod graph;
mod ising;

pub use bm::{from_upper_triangle, symmetrize, upper_triangle, BoltzmannMachine};
pub use enumerate::{
    enumerate_energies, exact_enumeration, log_partition, log_sum_exp_neg, state_bits, state_probabilities,
    Enumeration, ENUMERATION_CAP,
};
pub use graph::{brute_force_maxcut, cut_from_energy, cut_value, maxcut_to_ising, mobius_ladder, Graph};
pub use ising::{
    binary_to_spins, bm_to_spin_model, pack_ising, spin_model_to_bm, spins_to_binary, IsingProblem, PackedIsingMatrix,
};

pub(crate) use bm::join_f64;
