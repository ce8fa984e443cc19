//! Command-line front end of the scenario-reduction toolkit: instance
//! generation, reductions, evaluation reports and benchmark campaigns.

pub mod campaign;
pub mod methods;
pub mod store;
pub mod toy;
